#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "refinegan/core.hpp"
#include "refinegan/mvol.hpp"

namespace refinegan {

/// Recipe for an imbalanced multi-modal volume set with exact ground truth:
/// smooth background noise plus a few bright ellipsoidal lesions whose
/// voxels are known analytically.
struct SynthSpec {
    std::size_t n_patients = 10;
    std::size_t slices = 16;
    std::size_t height = 32;
    std::size_t width = 32;
    std::size_t channels = 2;
    std::size_t class_count = 2;
    double lesion_fraction = 0.02;  // target foreground share of the voxels
    double contrast = 3.0;          // lesion offset in background-std units
    std::uint64_t seed = 0;

    void validate() const {
        if (!(lesion_fraction > 0.0 && lesion_fraction < 0.5))
            throw ConfigError("synth: lesion_fraction must lie in (0, 0.5)");
        if (!(contrast > 0.0)) throw ConfigError("synth: contrast must be positive");
        if (n_patients < 1) throw ConfigError("synth: need at least one patient");
        if (slices < 2 || height < 8 || width < 8) throw ConfigError("synth: volume too small");
        if (channels < 1) throw ConfigError("synth: need at least one channel");
        if (class_count < 2 || class_count > 255) throw ConfigError("synth: class_count must be in [2,255]");
    }
};

namespace synth_detail {

/// In-place radius-1 box blur along one axis of a (s,r,c) scalar field,
/// edges clamped.
inline void blur_axis(std::vector<float>& v, std::size_t s, std::size_t r, std::size_t c, int axis) {
    std::vector<float> out(v.size());
    auto at = [&](std::size_t i, std::size_t j, std::size_t k) -> float { return v[(i * r + j) * c + k]; };
    for (std::size_t i = 0; i < s; ++i)
        for (std::size_t j = 0; j < r; ++j)
            for (std::size_t k = 0; k < c; ++k) {
                std::size_t i0 = i, i1 = i, j0 = j, j1 = j, k0 = k, k1 = k;
                if (axis == 0) { i0 = i > 0 ? i - 1 : 0; i1 = i + 1 < s ? i + 1 : s - 1; }
                if (axis == 1) { j0 = j > 0 ? j - 1 : 0; j1 = j + 1 < r ? j + 1 : r - 1; }
                if (axis == 2) { k0 = k > 0 ? k - 1 : 0; k1 = k + 1 < c ? k + 1 : c - 1; }
                out[(i * r + j) * c + k] =
                    (at(i0, j0, k0) + at(i, j, k) + at(i1, j1, k1)) / 3.0f;
            }
    v.swap(out);
}

struct Ellipsoid {
    double ci, cj, ck, ai, aj, ak;
    int label;
};

}  // namespace synth_detail

/// Deterministic per (spec.seed, index). Background is a smoothed Gaussian
/// noise field per channel; lesions are 1 to 3 ellipsoids with a
/// contrast*std intensity offset on every channel; the truth mask is the
/// exact set of ellipsoid voxels.
inline PatientRecord gen_patient(const SynthSpec& spec, std::size_t index) {
    spec.validate();
    Rng rng(spec.seed ^ static_cast<std::uint64_t>(index));
    const std::size_t s = spec.slices, r = spec.height, c = spec.width;
    const double total = static_cast<double>(s * r * c);

    PatientRecord rec;
    {
        char buf[16];
        std::snprintf(buf, sizeof buf, "p%03zu", index);
        rec.patient_id = buf;
    }
    rec.volume.patient_id = rec.patient_id;
    rec.volume.spacing = {1.0f, 1.0f, 1.0f};
    rec.volume.voxels = Tensor<float>(s, r, c, spec.channels);

    std::vector<double> ch_std(spec.channels);
    for (std::size_t m = 0; m < spec.channels; ++m) {
        rec.volume.modality_names.push_back("ch" + std::to_string(m));
        std::vector<float> field(s * r * c);
        for (auto& v : field) v = static_cast<float>(rand_normal(rng));
        for (int axis = 0; axis < 3; ++axis) synth_detail::blur_axis(field, s, r, c, axis);
        double sum = 0.0, sumsq = 0.0;
        for (float v : field) {
            sum += v;
            sumsq += static_cast<double>(v) * v;
        }
        const double mean = sum / total;
        ch_std[m] = std::sqrt(std::max(sumsq / total - mean * mean, 1e-12));
        for (std::size_t i = 0; i < s; ++i)
            for (std::size_t j = 0; j < r; ++j)
                for (std::size_t k = 0; k < c; ++k)
                    rec.volume.voxels(i, j, k, m) = field[(i * r + j) * c + k];
    }

    Tensor<std::uint8_t> labels(s, r, c, 1);
    const double lo = 0.5 * spec.lesion_fraction, hi = 1.5 * spec.lesion_fraction;
    bool hit = false;
    std::vector<synth_detail::Ellipsoid> placed;
    for (int attempt = 0; attempt < 100 && !hit; ++attempt) {
        labels.fill(0);
        placed.clear();
        const std::size_t n_lesions = 1 + rand_index(rng, 3);
        const double per_target = spec.lesion_fraction * total / static_cast<double>(n_lesions);
        for (std::size_t li = 0; li < n_lesions; ++li) {
            const double u1 = rand_uniform(rng, 0.7, 1.3);
            const double u2 = rand_uniform(rng, 0.7, 1.3);
            const double u3 = rand_uniform(rng, 0.7, 1.3);
            const double base = std::cbrt(per_target * 3.0 / (4.0 * 3.141592653589793 * u1 * u2 * u3));
            synth_detail::Ellipsoid e;
            e.ai = std::max(base * u1, 1.0);
            e.aj = std::max(base * u2, 1.0);
            e.ak = std::max(base * u3, 1.0);
            const double mi = std::ceil(e.ai), mj = std::ceil(e.aj), mk = std::ceil(e.ak);
            if (2 * mi + 1 > static_cast<double>(s) || 2 * mj + 1 > static_cast<double>(r) ||
                2 * mk + 1 > static_cast<double>(c))
                throw DataError("synth: lesion cannot fit in the volume");
            e.ci = rand_uniform(rng, mi, static_cast<double>(s - 1) - mi);
            e.cj = rand_uniform(rng, mj, static_cast<double>(r - 1) - mj);
            e.ck = rand_uniform(rng, mk, static_cast<double>(c - 1) - mk);
            e.label = 1 + static_cast<int>(li % (spec.class_count - 1));
            placed.push_back(e);
            const long i0 = static_cast<long>(std::floor(e.ci - e.ai)), i1 = static_cast<long>(std::ceil(e.ci + e.ai));
            const long j0 = static_cast<long>(std::floor(e.cj - e.aj)), j1 = static_cast<long>(std::ceil(e.cj + e.aj));
            const long k0 = static_cast<long>(std::floor(e.ck - e.ak)), k1 = static_cast<long>(std::ceil(e.ck + e.ak));
            for (long i = std::max(i0, 0L); i <= std::min(i1, static_cast<long>(s) - 1); ++i)
                for (long j = std::max(j0, 0L); j <= std::min(j1, static_cast<long>(r) - 1); ++j)
                    for (long k = std::max(k0, 0L); k <= std::min(k1, static_cast<long>(c) - 1); ++k) {
                        const double di = (static_cast<double>(i) - e.ci) / e.ai;
                        const double dj = (static_cast<double>(j) - e.cj) / e.aj;
                        const double dk = (static_cast<double>(k) - e.ck) / e.ak;
                        if (di * di + dj * dj + dk * dk <= 1.0)
                            labels(static_cast<std::size_t>(i), static_cast<std::size_t>(j),
                                   static_cast<std::size_t>(k), 0) = static_cast<std::uint8_t>(e.label);
                    }
        }
        std::size_t fg = 0;
        for (std::uint8_t v : labels.flat())
            if (v) ++fg;
        const double frac = static_cast<double>(fg) / total;
        hit = frac >= lo && frac <= hi;
    }
    if (!hit) throw DataError("synth: could not reach the lesion fraction target");

    for (std::size_t i = 0; i < s; ++i)
        for (std::size_t j = 0; j < r; ++j)
            for (std::size_t k = 0; k < c; ++k) {
                const std::uint8_t l = labels(i, j, k, 0);
                if (!l) continue;
                for (std::size_t m = 0; m < spec.channels; ++m)
                    rec.volume.voxels(i, j, k, m) +=
                        static_cast<float>(spec.contrast * ch_std[m] * static_cast<double>(l));
            }

    rec.truth.labels = std::move(labels);
    rec.truth.class_count = static_cast<int>(spec.class_count);
    for (std::size_t l = 0; l < spec.class_count; ++l)
        rec.truth.class_names.push_back(l == 0 ? "background" : "lesion" + std::to_string(l));
    rec.has_truth = true;
    validate(rec.volume);
    validate(rec.truth);
    return rec;
}

struct SynthDataset {
    std::vector<PatientRecord> records;
    std::vector<bool> is_train;     // patient-level split, by index
    std::vector<double> fractions;  // achieved foreground share per patient
};

inline SynthDataset gen_dataset(const SynthSpec& spec) {
    spec.validate();
    SynthDataset ds;
    const std::size_t train_count =
        spec.n_patients == 1 ? 1 : std::max<std::size_t>(1, spec.n_patients * 8 / 10);
    for (std::size_t i = 0; i < spec.n_patients; ++i) {
        ds.records.push_back(gen_patient(spec, i));
        ds.is_train.push_back(i < train_count);
        std::size_t fg = 0;
        for (std::uint8_t v : ds.records.back().truth.labels.flat())
            if (v) ++fg;
        ds.fractions.push_back(static_cast<double>(fg) /
                               static_cast<double>(ds.records.back().truth.labels.size()));
    }
    return ds;
}

/// Writes <id>_img.mvol / <id>_seg.mvol per patient plus manifest.txt, one
/// line per patient: id, image file, label file, split, achieved fraction.
inline void write_dataset(const SynthDataset& ds, const std::string& dir) {
    std::filesystem::create_directories(dir);
    std::string manifest;
    for (std::size_t i = 0; i < ds.records.size(); ++i) {
        const PatientRecord& rec = ds.records[i];
        const std::string img = rec.patient_id + "_img.mvol";
        const std::string seg = rec.patient_id + "_seg.mvol";
        write_mvol(rec.volume, dir + "/" + img);
        write_mvol(rec.truth, dir + "/" + seg, rec.volume.spacing);
        char frac[32];
        std::snprintf(frac, sizeof frac, "%.17g", ds.fractions[i]);
        manifest += rec.patient_id + " " + img + " " + seg + " " + (ds.is_train[i] ? "train" : "val") + " " +
                    frac + "\n";
    }
    write_file_bytes(dir + "/manifest.txt", manifest);
}

}  // namespace refinegan
