#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "refinegan/core.hpp"

namespace refinegan {

// ---------------------------------------------------------------------------
// Overlap metrics
// ---------------------------------------------------------------------------

struct ConfusionCounts {
    std::uint64_t tp = 0, fp = 0, tn = 0, fn = 0;
    std::uint64_t total() const { return tp + fp + tn + fn; }
};

/// One-vs-rest confusion counts for class c.
inline ConfusionCounts confusion(const Tensor<std::uint8_t>& pred, const Tensor<std::uint8_t>& truth, int c) {
    require_same_shape(pred, truth, "confusion");
    ConfusionCounts cc;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const bool p = pred[i] == c;
        const bool t = truth[i] == c;
        if (p && t) ++cc.tp;
        else if (p && !t) ++cc.fp;
        else if (!p && t) ++cc.fn;
        else ++cc.tn;
    }
    return cc;
}

// Empty-mask convention: both masks empty scores perfect overlap (dice 1,
// iou 1, voe 0); exactly one empty scores zero overlap. Matches common
// challenge tooling.
inline double dice(const ConfusionCounts& cc) {
    const std::uint64_t denom = 2 * cc.tp + cc.fp + cc.fn;
    if (denom == 0) return 1.0;
    return 2.0 * static_cast<double>(cc.tp) / static_cast<double>(denom);
}

inline double iou(const ConfusionCounts& cc) {
    const std::uint64_t denom = cc.tp + cc.fp + cc.fn;
    if (denom == 0) return 1.0;
    return static_cast<double>(cc.tp) / static_cast<double>(denom);
}

inline double voe(const ConfusionCounts& cc) { return 1.0 - iou(cc); }

/// Relative volume difference (|pred|-|truth|)/|truth|; undefined for an
/// empty truth with a non-empty prediction.
inline std::optional<double> rvd(std::uint64_t pred_volume, std::uint64_t truth_volume) {
    if (truth_volume == 0) {
        if (pred_volume == 0) return 0.0;
        return std::nullopt;
    }
    return (static_cast<double>(pred_volume) - static_cast<double>(truth_volume)) /
           static_cast<double>(truth_volume);
}

// Rates with an empty denominator default to a perfect score: with no
// positives there is nothing to miss, with no negatives nothing to false-alarm.
inline double sensitivity(const ConfusionCounts& cc) {
    const std::uint64_t denom = cc.tp + cc.fn;
    if (denom == 0) return 1.0;
    return static_cast<double>(cc.tp) / static_cast<double>(denom);
}

inline double specificity(const ConfusionCounts& cc) {
    const std::uint64_t denom = cc.tn + cc.fp;
    if (denom == 0) return 1.0;
    return static_cast<double>(cc.tn) / static_cast<double>(denom);
}

inline double fnr(const ConfusionCounts& cc) { return 1.0 - sensitivity(cc); }
inline double fpr(const ConfusionCounts& cc) { return 1.0 - specificity(cc); }

// ---------------------------------------------------------------------------
// Surface distances
// ---------------------------------------------------------------------------

struct SurfaceDistances {
    double assd = 0.0;  // pooled mean of all directed boundary distances
    double mssd = 0.0;  // max over all directed distances (= Hausdorff max)
    double hd_max = 0.0;
    double hd95 = 0.0;  // 95th percentile, linear interpolation
};

namespace metrics_detail {

/// Boundary voxels: mask minus its erosion under 6-connectivity (4 in-plane
/// for single-slice masks); outside the array counts as background.
inline Tensor<std::uint8_t> boundary_of(const Tensor<std::uint8_t>& mask) {
    const long s = static_cast<long>(mask.dim(0));
    const long r = static_cast<long>(mask.dim(1));
    const long c = static_cast<long>(mask.dim(2));
    Tensor<std::uint8_t> out(mask.dim(0), mask.dim(1), mask.dim(2), 1);
    auto inside = [&](long i, long j, long k) {
        if (i < 0 || i >= s || j < 0 || j >= r || k < 0 || k >= c) return false;
        return mask(static_cast<std::size_t>(i), static_cast<std::size_t>(j), static_cast<std::size_t>(k), 0) != 0;
    };
    for (long i = 0; i < s; ++i)
        for (long j = 0; j < r; ++j)
            for (long k = 0; k < c; ++k) {
                if (!inside(i, j, k)) continue;
                bool eroded = inside(i - 1, j, k) && inside(i + 1, j, k) && inside(i, j - 1, k) &&
                              inside(i, j + 1, k) && inside(i, j, k - 1) && inside(i, j, k + 1);
                if (s == 1)  // planar mask: 4-connectivity in-plane
                    eroded = inside(i, j - 1, k) && inside(i, j + 1, k) && inside(i, j, k - 1) &&
                             inside(i, j, k + 1);
                out(static_cast<std::size_t>(i), static_cast<std::size_t>(j), static_cast<std::size_t>(k), 0) =
                    eroded ? 0 : 1;
            }
    return out;
}

constexpr double kInf = std::numeric_limits<double>::infinity();

/// Felzenszwalb-Huttenlocher 1D squared-distance transform on arbitrary
/// sample positions (non-unit spacing).
inline void edt_1d(const std::vector<double>& f, const std::vector<double>& x, std::vector<double>& d) {
    const std::size_t n = f.size();
    d.assign(n, kInf);
    std::vector<int> v(n, 0);
    std::vector<double> z(n + 1, 0.0);
    int k = 0;
    v[0] = 0;
    z[0] = -kInf;
    z[1] = kInf;
    auto sect = [&](int p, int q) {
        return ((f[static_cast<std::size_t>(q)] + x[static_cast<std::size_t>(q)] * x[static_cast<std::size_t>(q)]) -
                (f[static_cast<std::size_t>(p)] + x[static_cast<std::size_t>(p)] * x[static_cast<std::size_t>(p)])) /
               (2.0 * x[static_cast<std::size_t>(q)] - 2.0 * x[static_cast<std::size_t>(p)]);
    };
    for (int q = 1; q < static_cast<int>(n); ++q) {
        if (f[static_cast<std::size_t>(q)] == kInf) continue;
        if (f[static_cast<std::size_t>(v[static_cast<std::size_t>(k)])] == kInf) {
            v[static_cast<std::size_t>(k)] = q;
            z[static_cast<std::size_t>(k)] = -kInf;
            z[static_cast<std::size_t>(k) + 1] = kInf;
            continue;
        }
        double sc = sect(v[static_cast<std::size_t>(k)], q);
        while (k > 0 && sc <= z[static_cast<std::size_t>(k)]) {
            --k;
            sc = sect(v[static_cast<std::size_t>(k)], q);
        }
        ++k;
        v[static_cast<std::size_t>(k)] = q;
        z[static_cast<std::size_t>(k)] = sc;
        z[static_cast<std::size_t>(k) + 1] = kInf;
    }
    if (f[static_cast<std::size_t>(v[0])] == kInf) return;  // no features anywhere on this line
    k = 0;
    for (std::size_t q = 0; q < n; ++q) {
        while (z[static_cast<std::size_t>(k) + 1] < x[q]) ++k;
        const double dx = x[q] - x[static_cast<std::size_t>(v[static_cast<std::size_t>(k)])];
        d[q] = dx * dx + f[static_cast<std::size_t>(v[static_cast<std::size_t>(k)])];
    }
}

/// Exact anisotropic squared EDT of the feature set (nonzero voxels).
inline std::vector<double> edt_sq(const Tensor<std::uint8_t>& features, const std::array<double, 3>& spacing) {
    const std::size_t s = features.dim(0), r = features.dim(1), c = features.dim(2);
    std::vector<double> g(s * r * c);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = features[i] ? 0.0 : kInf;

    std::vector<double> f, x, d;
    // pass along slices
    f.resize(s);
    x.resize(s);
    for (std::size_t i = 0; i < s; ++i) x[i] = static_cast<double>(i) * spacing[0];
    for (std::size_t j = 0; j < r; ++j)
        for (std::size_t k = 0; k < c; ++k) {
            for (std::size_t i = 0; i < s; ++i) f[i] = g[(i * r + j) * c + k];
            edt_1d(f, x, d);
            for (std::size_t i = 0; i < s; ++i) g[(i * r + j) * c + k] = d[i];
        }
    // pass along rows
    f.resize(r);
    x.resize(r);
    for (std::size_t j = 0; j < r; ++j) x[j] = static_cast<double>(j) * spacing[1];
    for (std::size_t i = 0; i < s; ++i)
        for (std::size_t k = 0; k < c; ++k) {
            for (std::size_t j = 0; j < r; ++j) f[j] = g[(i * r + j) * c + k];
            edt_1d(f, x, d);
            for (std::size_t j = 0; j < r; ++j) g[(i * r + j) * c + k] = d[j];
        }
    // pass along cols
    f.resize(c);
    x.resize(c);
    for (std::size_t k = 0; k < c; ++k) x[k] = static_cast<double>(k) * spacing[2];
    for (std::size_t i = 0; i < s; ++i)
        for (std::size_t j = 0; j < r; ++j) {
            for (std::size_t k = 0; k < c; ++k) f[k] = g[(i * r + j) * c + k];
            edt_1d(f, x, d);
            for (std::size_t k = 0; k < c; ++k) g[(i * r + j) * c + k] = d[k];
        }
    return g;
}

inline bool any_set(const Tensor<std::uint8_t>& m) {
    for (std::uint8_t v : m.flat())
        if (v) return true;
    return false;
}

}  // namespace metrics_detail

/// Linear-interpolation percentile between order statistics (values sorted
/// in place).
inline double percentile(std::vector<double>& values, double p) {
    if (values.empty()) throw DataError("percentile: empty sample");
    std::sort(values.begin(), values.end());
    if (values.size() == 1) return values[0];
    const double rank = p / 100.0 * static_cast<double>(values.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(rank);
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    const double frac = rank - static_cast<double>(lo);
    return values[lo] + (values[hi] - values[lo]) * frac;
}

/// Symmetric surface distances between two non-empty masks, in spacing
/// units (mm when the spacing is physical). Directed distances go from each
/// boundary voxel to the nearest boundary voxel of the other mask via an
/// exact anisotropic Euclidean distance transform.
inline SurfaceDistances surface_distances(const Tensor<std::uint8_t>& pred, const Tensor<std::uint8_t>& truth,
                                          const std::array<double, 3>& spacing = {1.0, 1.0, 1.0}) {
    using namespace metrics_detail;
    require_same_shape(pred, truth, "surface_distances");
    if (!any_set(pred) || !any_set(truth))
        throw DataError("surface_distances: undefined for an empty mask");
    const Tensor<std::uint8_t> bp = boundary_of(pred);
    const Tensor<std::uint8_t> bt = boundary_of(truth);
    const std::vector<double> dt_to_truth = edt_sq(bt, spacing);
    const std::vector<double> dt_to_pred = edt_sq(bp, spacing);

    std::vector<double> pooled;
    for (std::size_t i = 0; i < bp.size(); ++i)
        if (bp[i]) pooled.push_back(std::sqrt(dt_to_truth[i]));
    for (std::size_t i = 0; i < bt.size(); ++i)
        if (bt[i]) pooled.push_back(std::sqrt(dt_to_pred[i]));

    SurfaceDistances out;
    double sum = 0.0, mx = 0.0;
    for (double d : pooled) {
        sum += d;
        mx = std::max(mx, d);
    }
    out.assd = sum / static_cast<double>(pooled.size());
    out.mssd = mx;
    out.hd_max = mx;
    out.hd95 = percentile(pooled, 95.0);
    return out;
}

// ---------------------------------------------------------------------------
// Report assembly
// ---------------------------------------------------------------------------

/// A named evaluation region: one class label or a composite union of
/// labels (whole-tumour style) scored as a binary mask.
struct RegionSpec {
    std::string name;
    std::vector<int> labels;
};

/// Default regions: every non-background class on its own.
inline std::vector<RegionSpec> default_regions(int class_count, const std::vector<std::string>& names = {}) {
    std::vector<RegionSpec> out;
    for (int c = 1; c < class_count; ++c) {
        std::string name = c < static_cast<int>(names.size()) ? names[static_cast<std::size_t>(c)]
                                                              : "class" + std::to_string(c);
        out.push_back({name, {c}});
    }
    return out;
}

struct MetricRow {
    std::string region;
    double dice = 0, iou = 0, voe = 0;
    std::optional<double> rvd;
    double sensitivity = 0, specificity = 0, fnr = 0, fpr = 0;
    std::optional<double> hd_max, hd95, assd, mssd;
};

struct MetricReport {
    std::string patient_id;
    std::vector<MetricRow> rows;
};

namespace metrics_detail {
inline Tensor<std::uint8_t> region_mask(const Tensor<std::uint8_t>& labels, const RegionSpec& region) {
    Tensor<std::uint8_t> out(labels.dim(0), labels.dim(1), labels.dim(2), 1);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        bool in = false;
        for (int c : region.labels)
            if (labels[i] == c) { in = true; break; }
        out[i] = in ? 1 : 0;
    }
    return out;
}
}  // namespace metrics_detail

/// Scores every region of pred against truth. Composites are unioned into
/// binary masks first. Surface distances are absent when either mask is
/// empty, rvd is absent when only the truth is empty.
inline MetricReport evaluate(const SegMap& pred, const SegMap& truth, const std::array<double, 3>& spacing,
                             const std::vector<RegionSpec>& regions, const std::string& patient_id = "") {
    if (pred.is_probs() || truth.is_probs()) throw DataError("evaluate: expects hard label maps");
    require_same_shape(pred.labels, truth.labels, "evaluate");
    const int c_max = std::max(pred.class_count, truth.class_count);
    for (const auto& r : regions)
        for (int c : r.labels)
            if (c < 0 || c >= c_max)
                throw DataError("evaluate: region '" + r.name + "' references unknown class " + std::to_string(c));
    MetricReport report;
    report.patient_id = patient_id;
    for (const auto& spec : regions) {
        const Tensor<std::uint8_t> pm = metrics_detail::region_mask(pred.labels, spec);
        const Tensor<std::uint8_t> tm = metrics_detail::region_mask(truth.labels, spec);
        const ConfusionCounts cc = confusion(pm, tm, 1);
        MetricRow row;
        row.region = spec.name;
        row.dice = dice(cc);
        row.iou = iou(cc);
        row.voe = voe(cc);
        row.rvd = rvd(cc.tp + cc.fp, cc.tp + cc.fn);
        row.sensitivity = sensitivity(cc);
        row.specificity = specificity(cc);
        row.fnr = fnr(cc);
        row.fpr = fpr(cc);
        if (metrics_detail::any_set(pm) && metrics_detail::any_set(tm)) {
            const SurfaceDistances sd = surface_distances(pm, tm, spacing);
            row.hd_max = sd.hd_max;
            row.hd95 = sd.hd95;
            row.assd = sd.assd;
            row.mssd = sd.mssd;
        }
        report.rows.push_back(std::move(row));
    }
    return report;
}

namespace metrics_detail {
inline std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}
inline std::string fmt(const std::optional<double>& v) { return v ? fmt(*v) : std::string(); }
}  // namespace metrics_detail

/// One row per (patient, region); absent values are empty cells.
inline std::string metrics_csv(const std::vector<MetricReport>& reports) {
    std::string out =
        "patient,region,dice,iou,voe,rvd,sensitivity,specificity,fnr,fpr,hd_max,hd95,assd,mssd\n";
    using metrics_detail::fmt;
    for (const auto& rep : reports)
        for (const auto& r : rep.rows) {
            out += rep.patient_id + ',' + r.region + ',' + fmt(r.dice) + ',' + fmt(r.iou) + ',' + fmt(r.voe) +
                   ',' + fmt(r.rvd) + ',' + fmt(r.sensitivity) + ',' + fmt(r.specificity) + ',' + fmt(r.fnr) +
                   ',' + fmt(r.fpr) + ',' + fmt(r.hd_max) + ',' + fmt(r.hd95) + ',' + fmt(r.assd) + ',' +
                   fmt(r.mssd) + '\n';
        }
    return out;
}

}  // namespace refinegan
