#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "refinegan/tensor.hpp"

namespace refinegan {

enum class AcquisitionPlane { axial, coronal, sagittal };

inline const char* to_string(AcquisitionPlane p) {
    switch (p) {
        case AcquisitionPlane::axial: return "axial";
        case AcquisitionPlane::coronal: return "coronal";
        case AcquisitionPlane::sagittal: return "sagittal";
    }
    return "?";
}

inline AcquisitionPlane parse_plane(const std::string& s) {
    if (s == "axial") return AcquisitionPlane::axial;
    if (s == "coronal") return AcquisitionPlane::coronal;
    if (s == "sagittal") return AcquisitionPlane::sagittal;
    throw ConfigError("unknown acquisition plane: " + s);
}

/// One patient's multi-channel intensity data. Axes are
/// (slice, row, col, channel); immutable once validated.
struct Volume {
    Tensor<float> voxels;
    std::array<double, 3> spacing{1.0, 1.0, 1.0};
    std::vector<std::string> modality_names;
    std::string patient_id;

    std::size_t slices() const { return voxels.dim(0); }
    std::size_t rows() const { return voxels.dim(1); }
    std::size_t cols() const { return voxels.dim(2); }
    std::size_t channels() const { return voxels.dim(3); }
};

/// Validates the Volume invariants; corrupt data is an error, never a repair.
inline void validate(const Volume& v) {
    for (int i = 0; i < 4; ++i)
        if (v.voxels.dim(i) < 1) throw DataError("volume: all dimensions must be >= 1");
    for (double s : v.spacing)
        if (!(s > 0.0)) throw DataError("volume: spacing components must be > 0");
    if (v.modality_names.size() != v.channels())
        throw DataError("volume: channel count must equal number of modality names");
    for (float x : v.voxels.flat())
        if (!std::isfinite(x)) throw DataError("volume: NaN/Inf voxel rejected at ingestion");
}

/// Per-pixel class labels (hard) or per-class probabilities (soft).
struct SegMap {
    // Exactly one of labels/probs is populated.
    Tensor<std::uint8_t> labels;  // (slice,row,col,1)
    Tensor<float> probs;          // (slice,row,col,class)
    int class_count = 2;
    std::vector<std::string> class_names;

    bool is_probs() const { return !probs.empty(); }
};

inline void validate(const SegMap& m) {
    if (m.class_count < 2) throw DataError("segmap: class_count must be >= 2");
    if (m.is_probs()) {
        if (m.probs.dim(3) != static_cast<std::size_t>(m.class_count))
            throw DataError("segmap: prob channel count must equal class_count");
        const std::size_t pixels = m.probs.dim(0) * m.probs.dim(1) * m.probs.dim(2);
        const std::size_t c = m.probs.dim(3);
        for (std::size_t p = 0; p < pixels; ++p) {
            double sum = 0.0;
            for (std::size_t k = 0; k < c; ++k) {
                const float v = m.probs[p * c + k];
                if (v < 0.0f || v > 1.0f) throw DataError("segmap: probability outside [0,1]");
                sum += v;
            }
            if (std::abs(sum - 1.0) > 1e-6) throw DataError("segmap: per-pixel probabilities must sum to 1");
        }
    } else {
        if (m.labels.dim(3) != 1) throw DataError("segmap: label maps must have channel extent 1");
        for (std::uint8_t v : m.labels.flat())
            if (v >= m.class_count) throw DataError("segmap: label value >= class_count");
    }
}

/// Paired per-class false-positive / false-negative masks.
struct ErrorMasks {
    Tensor<float> fp;  // (slice,row,col,class)
    Tensor<float> fn;
};

inline void validate(const ErrorMasks& e) {
    require_same_shape(e.fp, e.fn, "error masks");
    for (std::size_t i = 0; i < e.fp.size(); ++i) {
        if (e.fp[i] < 0.0f || e.fp[i] > 1.0f || e.fn[i] < 0.0f || e.fn[i] > 1.0f)
            throw DataError("error masks: values outside [0,1]");
    }
}

struct PatientRecord {
    std::string patient_id;
    Volume volume;
    SegMap truth;      // optional at predict time
    bool has_truth = false;
};

inline void validate(const PatientRecord& r) {
    validate(r.volume);
    if (r.has_truth) {
        const auto& t = r.truth.is_probs() ? r.truth.probs.dims() : r.truth.labels.dims();
        const auto& v = r.volume.voxels.dims();
        if (t[0] != v[0] || t[1] != v[1] || t[2] != v[2])
            throw DataError("patient record: volume and truth spatial shapes must match");
    }
}

/// Ordered 2D slices along one acquisition plane; re-stacking is the
/// exact inverse of extraction.
struct SliceSequence {
    Tensor<float> slices;  // (index, h, w, channel)
    AcquisitionPlane plane = AcquisitionPlane::axial;
    std::array<std::size_t, 3> volume_dims{};  // original (slice,row,col)
};

namespace detail {
// Axis sliced per plane: axial -> 0, coronal -> 1, sagittal -> 2. The two
// remaining axes keep their original order as (h, w).
inline int plane_axis(AcquisitionPlane p) {
    switch (p) {
        case AcquisitionPlane::axial: return 0;
        case AcquisitionPlane::coronal: return 1;
        case AcquisitionPlane::sagittal: return 2;
    }
    return 0;
}
}  // namespace detail

inline SliceSequence extract_slices(const Volume& vol, AcquisitionPlane plane) {
    const std::size_t s = vol.slices(), r = vol.rows(), c = vol.cols(), ch = vol.channels();
    const int axis = detail::plane_axis(plane);
    SliceSequence out;
    out.plane = plane;
    out.volume_dims = {s, r, c};
    std::size_t n, h, w;
    if (axis == 0) { n = s; h = r; w = c; }
    else if (axis == 1) { n = r; h = s; w = c; }
    else { n = c; h = s; w = r; }
    out.slices = Tensor<float>(n, h, w, ch);
    for (std::size_t i = 0; i < s; ++i)
        for (std::size_t j = 0; j < r; ++j)
            for (std::size_t k = 0; k < c; ++k)
                for (std::size_t m = 0; m < ch; ++m) {
                    const float v = vol.voxels(i, j, k, m);
                    if (axis == 0) out.slices(i, j, k, m) = v;
                    else if (axis == 1) out.slices(j, i, k, m) = v;
                    else out.slices(k, i, j, m) = v;
                }
    return out;
}

/// Inverse of extract_slices; exact round trip.
inline Tensor<float> restack(const SliceSequence& seq) {
    const auto [s, r, c] = seq.volume_dims;
    const std::size_t ch = seq.slices.dim(3);
    const int axis = detail::plane_axis(seq.plane);
    Tensor<float> vox(s, r, c, ch);
    for (std::size_t i = 0; i < s; ++i)
        for (std::size_t j = 0; j < r; ++j)
            for (std::size_t k = 0; k < c; ++k)
                for (std::size_t m = 0; m < ch; ++m) {
                    if (axis == 0) vox(i, j, k, m) = seq.slices(i, j, k, m);
                    else if (axis == 1) vox(i, j, k, m) = seq.slices(j, i, k, m);
                    else vox(i, j, k, m) = seq.slices(k, i, j, m);
                }
    return vox;
}

/// Same slicing applied to a label map.
inline Tensor<std::uint8_t> extract_label_slices(const Tensor<std::uint8_t>& labels, AcquisitionPlane plane) {
    const std::size_t s = labels.dim(0), r = labels.dim(1), c = labels.dim(2);
    const int axis = detail::plane_axis(plane);
    std::size_t n, h, w;
    if (axis == 0) { n = s; h = r; w = c; }
    else if (axis == 1) { n = r; h = s; w = c; }
    else { n = c; h = s; w = r; }
    Tensor<std::uint8_t> out(n, h, w, 1);
    for (std::size_t i = 0; i < s; ++i)
        for (std::size_t j = 0; j < r; ++j)
            for (std::size_t k = 0; k < c; ++k) {
                const std::uint8_t v = labels(i, j, k, 0);
                if (axis == 0) out(i, j, k, 0) = v;
                else if (axis == 1) out(j, i, k, 0) = v;
                else out(k, i, j, 0) = v;
            }
    return out;
}

/// Inverse of extract_label_slices for the given plane and volume shape.
inline Tensor<std::uint8_t> restack_labels(const Tensor<std::uint8_t>& slices, AcquisitionPlane plane,
                                           const std::array<std::size_t, 3>& volume_dims) {
    const auto [s, r, c] = volume_dims;
    const int axis = detail::plane_axis(plane);
    Tensor<std::uint8_t> out(s, r, c, 1);
    for (std::size_t i = 0; i < s; ++i)
        for (std::size_t j = 0; j < r; ++j)
            for (std::size_t k = 0; k < c; ++k) {
                if (axis == 0) out(i, j, k, 0) = slices(i, j, k, 0);
                else if (axis == 1) out(i, j, k, 0) = slices(j, i, k, 0);
                else out(i, j, k, 0) = slices(k, i, j, 0);
            }
    return out;
}

/// Hard labels -> one-hot probability planes. Rejects labels >= class_count.
inline SegMap one_hot(const SegMap& in) {
    if (in.is_probs()) throw DataError("one_hot: input must be a hard label map");
    SegMap out;
    out.class_count = in.class_count;
    out.class_names = in.class_names;
    const auto& l = in.labels;
    out.probs = Tensor<float>(l.dim(0), l.dim(1), l.dim(2), static_cast<std::size_t>(in.class_count));
    for (std::size_t i = 0; i < l.size(); ++i) {
        const std::uint8_t v = l[i];
        if (v >= in.class_count) throw DataError("one_hot: label value >= class_count");
        out.probs[i * in.class_count + v] = 1.0f;
    }
    return out;
}

/// Per-pixel argmax with lowest-index tie break.
template <typename S>
inline Tensor<std::uint8_t> argmax_labels(const Tensor<S>& probs) {
    const std::size_t c = probs.dim(3);
    Tensor<std::uint8_t> out(probs.dim(0), probs.dim(1), probs.dim(2), 1);
    const std::size_t pixels = out.size();
    for (std::size_t p = 0; p < pixels; ++p) {
        std::size_t best = 0;
        S best_v = probs[p * c];
        for (std::size_t k = 1; k < c; ++k) {
            const S v = probs[p * c + k];
            if (v > best_v) { best_v = v; best = k; }
        }
        out[p] = static_cast<std::uint8_t>(best);
    }
    return out;
}

}  // namespace refinegan
