#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "refinegan/core.hpp"

namespace refinegan {

// ---------------------------------------------------------------------------
// Patient-wise mini-batch normalization: statistics are always computed over
// one patient's slices from one acquisition plane with modalities as
// channels. There are no running averages anywhere; inference recomputes
// whole-patient statistics.
// ---------------------------------------------------------------------------

/// Per-channel learned scale/shift plus the variance floor.
template <typename S>
struct BNParams {
    std::vector<S> gamma;
    std::vector<S> beta;
    S epsilon = static_cast<S>(1e-5);
};

/// Homogeneous batches: one patient, one plane, a contiguous strictly
/// increasing slice range, all modalities as channels.
struct BatchPlan {
    struct Batch {
        std::string patient_id;
        AcquisitionPlane plane = AcquisitionPlane::axial;
        std::size_t slice_begin = 0;
        std::size_t slice_end = 0;  // exclusive
    };
    std::vector<Batch> batches;
    std::size_t images_per_batch = 128;
    std::size_t slices_per_batch = 0;
};

/// Shape summary used to plan batches without holding voxel data.
struct PatientShape {
    std::string patient_id;
    std::array<std::size_t, 3> dims{};  // (slice,row,col)
    std::size_t channels = 0;

    std::size_t slices_along(AcquisitionPlane p) const {
        switch (p) {
            case AcquisitionPlane::axial: return dims[0];
            case AcquisitionPlane::coronal: return dims[1];
            case AcquisitionPlane::sagittal: return dims[2];
        }
        return dims[0];
    }
};

/// Chunks every (patient, plane) slice axis into contiguous batches.
/// "images" count slices x modalities, so 128 images with 4 modalities is
/// 32 slices per batch; the last batch per patient may be short.
inline BatchPlan build_batch_plan(const std::vector<PatientShape>& patients,
                                  const std::vector<AcquisitionPlane>& planes,
                                  std::size_t images_per_batch = 128) {
    if (patients.empty()) throw DataError("build_batch_plan: empty dataset");
    if (planes.empty()) throw DataError("build_batch_plan: no planes selected");
    BatchPlan plan;
    plan.images_per_batch = images_per_batch;
    for (const auto& p : patients) {
        if (p.channels == 0) throw DataError("build_batch_plan: patient without channels");
        const std::size_t per = std::max<std::size_t>(1, images_per_batch / p.channels);
        if (plan.slices_per_batch == 0) plan.slices_per_batch = per;
        for (AcquisitionPlane plane : planes) {
            const std::size_t n = p.slices_along(plane);
            if (n == 0) throw DataError("build_batch_plan: patient with zero slices");
            for (std::size_t b = 0; b < n; b += per)
                plan.batches.push_back({p.patient_id, plane, b, std::min(n, b + per)});
        }
    }
    return plan;
}

inline std::vector<PatientShape> shapes_of(const std::vector<PatientRecord>& records) {
    std::vector<PatientShape> out;
    out.reserve(records.size());
    for (const auto& r : records)
        out.push_back({r.patient_id,
                       {r.volume.slices(), r.volume.rows(), r.volume.cols()},
                       r.volume.channels()});
    return out;
}

/// Mini-batch moments per channel: arithmetic mean and population variance
/// over every pixel of every slice in the batch. Accumulation is at least
/// double precision regardless of the storage scalar.
template <typename S>
inline void bn_stats(const Tensor<S>& batch, std::vector<S>& mu, std::vector<S>& sigma2) {
    const std::size_t c = batch.dim(3);
    const std::size_t m = batch.dim(0) * batch.dim(1) * batch.dim(2);
    if (m < 2) throw DataError("bn_stats: degenerate batch (fewer than 2 elements per channel)");
    mu.assign(c, S(0));
    sigma2.assign(c, S(0));
    std::vector<acc_t<S>> sum(c, 0), sumsq(c, 0);
    const S* p = batch.data();
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t k = 0; k < c; ++k) {
            const acc_t<S> v = static_cast<acc_t<S>>(p[i * c + k]);
            sum[k] += v;
            sumsq[k] += v * v;
        }
    for (std::size_t k = 0; k < c; ++k) {
        const acc_t<S> mean = sum[k] / static_cast<acc_t<S>>(m);
        acc_t<S> var = sumsq[k] / static_cast<acc_t<S>>(m) - mean * mean;
        if (var < acc_t<S>(0)) var = 0;  // rounding guard
        mu[k] = static_cast<S>(mean);
        sigma2[k] = static_cast<S>(var);
    }
}

/// y = gamma * (x - mu) / sqrt(sigma2 + eps) + beta, per channel.
template <typename S>
inline Tensor<S> bn_forward(const Tensor<S>& batch, const BNParams<S>& params, const std::vector<S>& mu,
                            const std::vector<S>& sigma2) {
    const std::size_t c = batch.dim(3);
    if (params.gamma.size() != c || params.beta.size() != c || mu.size() != c || sigma2.size() != c)
        throw DataError("bn_forward: per-channel parameter size mismatch");
    Tensor<S> out = Tensor<S>::like(batch);
    std::vector<S> inv_sd(c);
    for (std::size_t k = 0; k < c; ++k) inv_sd[k] = S(1) / std::sqrt(sigma2[k] + params.epsilon);
    const std::size_t m = batch.dim(0) * batch.dim(1) * batch.dim(2);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t k = 0; k < c; ++k)
            out[i * c + k] = params.gamma[k] * (batch[i * c + k] - mu[k]) * inv_sd[k] + params.beta[k];
    return out;
}

/// Inference-time statistics: the whole patient along one plane stands in
/// for the mini-batch. Equals pooled moments of any batch segmentation.
inline void bn_inference_stats(const PatientRecord& patient, AcquisitionPlane plane, std::vector<float>& mu,
                               std::vector<float>& sigma2) {
    const SliceSequence seq = extract_slices(patient.volume, plane);
    bn_stats(seq.slices, mu, sigma2);
}

}  // namespace refinegan
