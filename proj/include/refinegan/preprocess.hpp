#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "refinegan/core.hpp"

namespace refinegan {

// ---------------------------------------------------------------------------
// Intensity normalization
// ---------------------------------------------------------------------------

/// Per-channel z-score over the foreground mask (whole channel when absent).
/// Population std, matching the 1/m variance of the batch-norm recipe.
/// A constant channel has no usable statistics and is an error.
inline Volume zscore(const Volume& vol, const Tensor<std::uint8_t>* foreground_mask = nullptr) {
    if (foreground_mask) {
        const auto& m = *foreground_mask;
        if (m.dim(0) != vol.slices() || m.dim(1) != vol.rows() || m.dim(2) != vol.cols())
            throw DataError("zscore: mask shape mismatch");
    }
    Volume out = vol;
    const std::size_t ch = vol.channels();
    const std::size_t spatial = vol.slices() * vol.rows() * vol.cols();
    for (std::size_t c = 0; c < ch; ++c) {
        double sum = 0.0;
        std::size_t count = 0;
        for (std::size_t p = 0; p < spatial; ++p) {
            if (foreground_mask && (*foreground_mask)[p] == 0) continue;
            sum += vol.voxels[p * ch + c];
            ++count;
        }
        if (count == 0) throw DataError("zscore: empty foreground mask");
        const double mean = sum / static_cast<double>(count);
        double sq = 0.0;
        for (std::size_t p = 0; p < spatial; ++p) {
            if (foreground_mask && (*foreground_mask)[p] == 0) continue;
            const double d = vol.voxels[p * ch + c] - mean;
            sq += d * d;
        }
        const double var = sq / static_cast<double>(count);
        if (var <= 0.0)
            throw DataError("zscore: channel " + std::to_string(c) + " has degenerate statistics (constant)");
        const double inv_sd = 1.0 / std::sqrt(var);
        for (std::size_t p = 0; p < spatial; ++p)
            out.voxels[p * ch + c] = static_cast<float>((vol.voxels[p * ch + c] - mean) * inv_sd);
    }
    return out;
}

/// Hounsfield windowing: clamp to [lo, hi] then map linearly onto [0, 1].
inline Volume hu_window(const Volume& vol, double lo = -100.0, double hi = 400.0) {
    if (!(lo < hi)) throw DataError("hu_window: lo must be < hi");
    Volume out = vol;
    const double scale = 1.0 / (hi - lo);
    for (std::size_t i = 0; i < vol.voxels.size(); ++i) {
        double v = vol.voxels[i];
        v = v < lo ? lo : (v > hi ? hi : v);
        out.voxels[i] = static_cast<float>((v - lo) * scale);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Histogram equalization
// ---------------------------------------------------------------------------

/// Equalizes one slice already on the windowed [0,1] range. Classic
/// CDF-min normalization; a degenerate (constant) slice maps to 0.
/// The mapping is monotone non-decreasing in the input value.
inline Tensor<float> hist_equalize(const Tensor<float>& slice, int bins = 256) {
    if (bins < 2) throw DataError("hist_equalize: bins must be >= 2");
    for (float v : slice.flat())
        if (!std::isfinite(v)) throw DataError("hist_equalize: non-finite value");
    const std::size_t n = slice.size();
    std::vector<std::size_t> hist(static_cast<std::size_t>(bins), 0);
    auto bin_of = [&](float v) {
        double x = v < 0.0f ? 0.0 : (v > 1.0f ? 1.0 : v);
        int b = static_cast<int>(x * bins);
        return b >= bins ? bins - 1 : b;
    };
    for (float v : slice.flat()) ++hist[static_cast<std::size_t>(bin_of(v))];
    std::vector<std::size_t> cdf(static_cast<std::size_t>(bins), 0);
    std::size_t running = 0;
    for (int b = 0; b < bins; ++b) {
        running += hist[static_cast<std::size_t>(b)];
        cdf[static_cast<std::size_t>(b)] = running;
    }
    std::size_t cdf_min = 0;
    for (int b = 0; b < bins; ++b)
        if (hist[static_cast<std::size_t>(b)] > 0) {
            cdf_min = cdf[static_cast<std::size_t>(b)];
            break;
        }
    const double denom = static_cast<double>(n) - static_cast<double>(cdf_min);
    Tensor<float> out = Tensor<float>::like(slice);
    for (std::size_t i = 0; i < n; ++i) {
        if (denom <= 0.0) {
            out[i] = 0.0f;  // all mass in one bin
        } else {
            const std::size_t c = cdf[static_cast<std::size_t>(bin_of(slice[i]))];
            out[i] = static_cast<float>((static_cast<double>(c) - static_cast<double>(cdf_min)) / denom);
        }
    }
    return out;
}

/// Slice-wise equalization of a whole volume, per channel.
inline Volume hist_equalize_volume(const Volume& vol, int bins = 256) {
    Volume out = vol;
    const std::size_t s = vol.slices(), r = vol.rows(), c = vol.cols(), ch = vol.channels();
    for (std::size_t i = 0; i < s; ++i)
        for (std::size_t m = 0; m < ch; ++m) {
            Tensor<float> slice(1, r, c, 1);
            for (std::size_t j = 0; j < r; ++j)
                for (std::size_t k = 0; k < c; ++k) slice(0, j, k, 0) = vol.voxels(i, j, k, m);
            Tensor<float> eq = hist_equalize(slice, bins);
            for (std::size_t j = 0; j < r; ++j)
                for (std::size_t k = 0; k < c; ++k) out.voxels(i, j, k, m) = eq(0, j, k, 0);
        }
    return out;
}

// ---------------------------------------------------------------------------
// Augmentation
// ---------------------------------------------------------------------------

struct AugmentParams {
    bool enable_crop = false;
    double crop_fraction = 0.9;  // (0,1]: side fraction of the crop window
    bool enable_scale = false;
    double scale_lo = 0.8, scale_hi = 1.2;
    bool enable_rotation = false;
    double rotation_deg = 10.0;  // sampled in [-rotation_deg, +rotation_deg]
    bool enable_noise = false;
    double noise_sigma = 0.05;
};

inline void validate(const AugmentParams& p) {
    if (!(p.crop_fraction > 0.0 && p.crop_fraction <= 1.0))
        throw DataError("augment: crop_fraction must be in (0,1]");
    if (!(p.scale_lo >= 0.8 - 1e-12 && p.scale_hi <= 1.2 + 1e-12 && p.scale_lo <= p.scale_hi))
        throw DataError("augment: scale must stay within [0.8, 1.2]");
    if (!(p.rotation_deg >= 0.0 && p.rotation_deg <= 10.0))
        throw DataError("augment: rotation bounded by +-10 degrees");
    if (!(p.noise_sigma >= 0.0) || !std::isfinite(p.noise_sigma))
        throw DataError("augment: noise_sigma must be finite and >= 0");
}

namespace detail {

/// Inverse map from output pixel centres to input coordinates:
/// crop window resized back to full size, then rotation+scale about the
/// window centre. One shared map keeps image and mask geometry identical.
struct AffineMap {
    double m00 = 1, m01 = 0, m10 = 0, m11 = 1;  // output->input linear part
    double tr = 0, tc = 0;

    void apply(double r, double c, double& ir, double& ic) const {
        ir = m00 * r + m01 * c + tr;
        ic = m10 * r + m11 * c + tc;
    }
};

inline AffineMap sample_augment_map(const AugmentParams& p, std::size_t h, std::size_t w, Rng& rng) {
    double win_h = static_cast<double>(h), win_w = static_cast<double>(w);
    double r0 = 0.0, c0 = 0.0;
    if (p.enable_crop) {
        win_h = std::max(1.0, std::round(static_cast<double>(h) * p.crop_fraction));
        win_w = std::max(1.0, std::round(static_cast<double>(w) * p.crop_fraction));
        r0 = std::floor(rand_uniform(rng) * (static_cast<double>(h) - win_h + 1.0));
        c0 = std::floor(rand_uniform(rng) * (static_cast<double>(w) - win_w + 1.0));
    }
    double scale = 1.0;
    if (p.enable_scale) scale = rand_uniform(rng, p.scale_lo, p.scale_hi);
    double theta = 0.0;
    if (p.enable_rotation) theta = rand_uniform(rng, -p.rotation_deg, p.rotation_deg) * M_PI / 180.0;

    // Output (r,c) -> window-relative -> centred -> rotate(-theta)/scale
    // -> window-absolute input coordinates.
    const double sr = win_h / static_cast<double>(h);
    const double sc = win_w / static_cast<double>(w);
    const double ct = std::cos(theta), st = std::sin(theta);
    const double inv = 1.0 / scale;
    const double cr = r0 + (win_h - 1.0) / 2.0;
    const double cc = c0 + (win_w - 1.0) / 2.0;
    AffineMap m;
    // centred window coords: y = (r*sr + 0.5*sr - 0.5) - (win-1)/2 relative to window start
    // combine: input = centre + R(-theta)*inv * y
    const double a00 = ct * inv, a01 = st * inv;
    const double a10 = -st * inv, a11 = ct * inv;
    // y_r = sr*r + (0.5*sr - 0.5) + r0 - cr ; likewise for c
    const double br = 0.5 * sr - 0.5 + r0 - cr;
    const double bc = 0.5 * sc - 0.5 + c0 - cc;
    m.m00 = a00 * sr;
    m.m01 = a01 * sc;
    m.m10 = a10 * sr;
    m.m11 = a11 * sc;
    m.tr = a00 * br + a01 * bc + cr;
    m.tc = a10 * br + a11 * bc + cc;
    return m;
}

inline float bilinear_at(const Tensor<float>& img, double r, double c, std::size_t ch) {
    const double hmax = static_cast<double>(img.dim(1) - 1);
    const double wmax = static_cast<double>(img.dim(2) - 1);
    r = r < 0 ? 0 : (r > hmax ? hmax : r);
    c = c < 0 ? 0 : (c > wmax ? wmax : c);
    const std::size_t r1 = static_cast<std::size_t>(r);
    const std::size_t c1 = static_cast<std::size_t>(c);
    const std::size_t r2 = std::min(r1 + 1, img.dim(1) - 1);
    const std::size_t c2 = std::min(c1 + 1, img.dim(2) - 1);
    const double fr = r - static_cast<double>(r1);
    const double fc = c - static_cast<double>(c1);
    const double v11 = img(0, r1, c1, ch), v12 = img(0, r1, c2, ch);
    const double v21 = img(0, r2, c1, ch), v22 = img(0, r2, c2, ch);
    return static_cast<float>((1 - fr) * ((1 - fc) * v11 + fc * v12) + fr * ((1 - fc) * v21 + fc * v22));
}

inline std::uint8_t nearest_at(const Tensor<std::uint8_t>& m, double r, double c) {
    long ri = std::lround(r), ci = std::lround(c);
    ri = std::clamp<long>(ri, 0, static_cast<long>(m.dim(1)) - 1);
    ci = std::clamp<long>(ci, 0, static_cast<long>(m.dim(2)) - 1);
    return m(0, static_cast<std::size_t>(ri), static_cast<std::size_t>(ci), 0);
}

}  // namespace detail

struct AugmentedPair {
    Tensor<float> image;          // (1,h,w,ch), bilinear resampled
    Tensor<std::uint8_t> mask;    // (1,h,w,1), nearest-neighbour resampled
};

/// Applies one sampled geometric transform to image and mask alike
/// (bilinear vs nearest resampling), then Gaussian noise to the image only.
/// Output shape equals input shape; fully determined by (params, seed).
/// With every flag disabled this is the exact identity.
inline AugmentedPair augment(const Tensor<float>& image, const Tensor<std::uint8_t>& mask,
                             const AugmentParams& params, std::uint64_t seed) {
    validate(params);
    if (image.dim(1) != mask.dim(1) || image.dim(2) != mask.dim(2))
        throw DataError("augment: image/mask spatial shape mismatch");
    Rng rng(seed);
    AugmentedPair out{Tensor<float>::like(image), Tensor<std::uint8_t>::like(mask)};
    const bool geometric = params.enable_crop || params.enable_scale || params.enable_rotation;
    if (!geometric) {
        out.image = image;
        out.mask = mask;
    } else {
        const detail::AffineMap map = detail::sample_augment_map(params, image.dim(1), image.dim(2), rng);
        const std::size_t h = image.dim(1), w = image.dim(2), ch = image.dim(3);
        for (std::size_t r = 0; r < h; ++r)
            for (std::size_t c = 0; c < w; ++c) {
                double ir, ic;
                map.apply(static_cast<double>(r), static_cast<double>(c), ir, ic);
                for (std::size_t m = 0; m < ch; ++m)
                    out.image(0, r, c, m) = detail::bilinear_at(image, ir, ic, m);
                out.mask(0, r, c, 0) = detail::nearest_at(mask, ir, ic);
            }
    }
    if (params.enable_noise && params.noise_sigma > 0.0) {
        for (std::size_t i = 0; i < out.image.size(); ++i)
            out.image[i] = static_cast<float>(out.image[i] + params.noise_sigma * rand_normal(rng));
    }
    return out;
}

}  // namespace refinegan
