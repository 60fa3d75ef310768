#pragma once

#include <cstdio>
#include <filesystem>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "refinegan/core.hpp"
#include "refinegan/losses.hpp"
#include "refinegan/mvol.hpp"
#include "refinegan/nets.hpp"
#include "refinegan/optim.hpp"
#include "refinegan/pbn.hpp"
#include "refinegan/preprocess.hpp"

namespace refinegan {

namespace train_detail {
/// splitmix-style stream separation so each consumer gets its own seed.
inline std::uint64_t mix_seed(std::uint64_t s, std::uint64_t k) {
    std::uint64_t z = s + 0x9e3779b97f4a7c15ULL * (k + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}
}  // namespace train_detail

/// One experiment: architecture, loss weights, per-network optimizers, and
/// the run bookkeeping. Everything that affects the numbers lives here.
struct RunConfig {
    NetConfig net;
    LossWeights weights;
    OptimizerSpec g_opt = adadelta_spec();
    OptimizerSpec d_opt = adadelta_spec();
    OptimizerSpec r_opt = rmsprop_spec();
    std::size_t epochs = 10;           // 0 trains nothing and checkpoints the initialization
    std::size_t max_steps = 0;         // 0 = no cap; otherwise stop after this many optimizer steps
    std::size_t images_per_batch = 128;
    std::uint64_t seed = 0;
    AcquisitionPlane plane = AcquisitionPlane::axial;
    std::string data_dir;
    std::string out_dir;

    void validate() const {
        net.validate();
        g_opt.validate();
        d_opt.validate();
        r_opt.validate();
        if (epochs > 100) throw ConfigError("run config: epochs must not exceed 100");
        if (images_per_batch < 1) throw ConfigError("run config: images_per_batch must be positive");
        if (!(weights.lambda_l1 >= 0.0)) throw ConfigError("run config: lambda_l1 must be non-negative");
    }

    NetConfig generator_cfg() const {
        NetConfig n = net;
        n.seed = train_detail::mix_seed(seed, 1);
        return n;
    }
    NetConfig discriminator_cfg() const {
        NetConfig n = net;
        n.noise_input = false;
        n.seed = train_detail::mix_seed(seed, 2);
        return n;
    }
    NetConfig refinement_cfg() const {
        NetConfig n = net;
        n.noise_input = false;
        n.seed = train_detail::mix_seed(seed, 3);
        return n;
    }
};

// ---------------------------------------------------------------------------
// Dataset loading (manifest written by the synthetic generator)
// ---------------------------------------------------------------------------

struct Dataset {
    std::vector<PatientRecord> train, val;
};

inline Dataset load_dataset(const std::string& dir) {
    const std::string manifest = read_file_bytes(dir + "/manifest.txt");
    Dataset ds;
    std::istringstream lines(manifest);
    std::string line;
    while (std::getline(lines, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string id, img, seg, split, fraction;
        if (!(ls >> id >> img >> seg >> split >> fraction))
            throw DataError("manifest: malformed line '" + line + "'");
        PatientRecord rec;
        rec.volume = read_volume(dir + "/" + img);
        rec.volume.patient_id = id;
        rec.patient_id = id;
        rec.truth = read_labels(dir + "/" + seg);
        rec.has_truth = true;
        validate(rec);
        if (split == "train")
            ds.train.push_back(std::move(rec));
        else if (split == "val")
            ds.val.push_back(std::move(rec));
        else
            throw DataError("manifest: unknown split '" + split + "'");
    }
    if (ds.train.empty() && ds.val.empty()) throw DataError("manifest: no patients listed");
    return ds;
}

// ---------------------------------------------------------------------------
// Batch assembly
// ---------------------------------------------------------------------------

namespace train_detail {

struct PatientTensors {
    Tensor<float> x;  // normalized image slices (n,h,w,ch)
    Tensor<float> y;  // one-hot truth (n,h,w,C)
};

inline Tensor<float> one_hot_slices(const Tensor<std::uint8_t>& ls, std::size_t class_count) {
    Tensor<float> y(ls.dim(0), ls.dim(1), ls.dim(2), class_count);
    for (std::size_t i = 0; i < ls.size(); ++i) {
        if (ls[i] >= class_count) throw DataError("labels exceed the configured class count");
        y[i * class_count + ls[i]] = 1.0f;
    }
    return y;
}

inline PatientTensors stack_patient(const PatientRecord& rec, AcquisitionPlane plane,
                                    std::size_t class_count) {
    PatientTensors out;
    const Volume norm = zscore(rec.volume);
    out.x = extract_slices(norm, plane).slices;
    out.y = one_hot_slices(extract_label_slices(rec.truth.labels, plane), class_count);
    return out;
}

inline Tensor<float> rows(const Tensor<float>& t, std::size_t begin, std::size_t end) {
    Tensor<float> out(end - begin, t.dim(1), t.dim(2), t.dim(3));
    const std::size_t stride = t.dim(1) * t.dim(2) * t.dim(3);
    std::copy(t.data() + begin * stride, t.data() + end * stride, out.data());
    return out;
}

inline Tensor<float> append_noise(const Tensor<float>& x, Rng& rng) {
    Tensor<float> out(x.dim(0), x.dim(1), x.dim(2), x.dim(3) + 1);
    const std::size_t ch = x.dim(3), rowsn = x.size() / ch;
    for (std::size_t r = 0; r < rowsn; ++r) {
        for (std::size_t c = 0; c < ch; ++c) out[r * (ch + 1) + c] = x[r * ch + c];
        out[r * (ch + 1) + ch] = static_cast<float>(rand_normal(rng));
    }
    return out;
}

inline void check_slice_shape(const Tensor<float>& x, const NetConfig& net) {
    if (x.dim(1) != net.height || x.dim(2) != net.width || x.dim(3) != net.in_channels)
        throw DataError("dataset slices do not match the configured network size");
}

inline void require_finite(double v, const char* what, std::size_t step) {
    if (!std::isfinite(v))
        throw DivergenceError(std::string(what) + " diverged at step " + std::to_string(step));
}

}  // namespace train_detail

// ---------------------------------------------------------------------------
// Loss traces
// ---------------------------------------------------------------------------

struct TraceRow {
    std::size_t step = 0;
    std::size_t epoch = 0;
    double d_loss = 0, g_adv = 0, l1 = 0, total = 0;
};

inline std::string trace_csv(const std::vector<TraceRow>& rows) {
    std::string out = "step,epoch,d_loss,g_adv,l1,total\n";
    char buf[160];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%zu,%zu,%.17g,%.17g,%.17g,%.17g\n", r.step, r.epoch, r.d_loss,
                      r.g_adv, r.l1, r.total);
        out += buf;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Stage one: adversarial training of the segmentation generator
// ---------------------------------------------------------------------------

struct CganArtifacts {
    std::vector<TraceRow> trace;
    std::string generator_path, discriminator_path, trace_path;
};

/// Alternating updates, one discriminator step then one generator step per
/// batch. Batches follow the patient-wise plan in order, so a run is a pure
/// function of the config and data. Checkpoints are rewritten every epoch;
/// a zero-epoch run leaves the seeded initialization on disk.
inline CganArtifacts train_cgan(const std::vector<PatientRecord>& train_set, const RunConfig& cfg) {
    using namespace train_detail;
    cfg.validate();
    if (train_set.empty()) throw DataError("train: no training patients");
    std::filesystem::create_directories(cfg.out_dir);

    Generator<float> G(cfg.generator_cfg());
    Discriminator<float> D(cfg.discriminator_cfg());
    auto gparams = G.params();
    auto dparams = D.params();
    Optimizer<float> gopt(cfg.g_opt, gparams);
    Optimizer<float> dopt(cfg.d_opt, dparams);

    const BatchPlan plan = build_batch_plan(shapes_of(train_set), {cfg.plane}, cfg.images_per_batch);
    std::map<std::string, PatientTensors> stacks;
    for (const auto& rec : train_set) {
        stacks[rec.patient_id] = stack_patient(rec, cfg.plane, cfg.net.class_count);
        check_slice_shape(stacks[rec.patient_id].x, cfg.net);
    }

    Rng noise_rng(mix_seed(cfg.seed, 0));
    CganArtifacts art;
    art.generator_path = cfg.out_dir + "/generator.ckpt";
    art.discriminator_path = cfg.out_dir + "/discriminator.ckpt";
    art.trace_path = cfg.out_dir + "/loss_trace.csv";
    save_net(art.generator_path, G, cfg.seed);
    save_net(art.discriminator_path, D, cfg.seed);

    std::size_t step = 0;
    bool stop = false;
    for (std::size_t epoch = 1; epoch <= cfg.epochs && !stop; ++epoch) {
        for (const auto& batch : plan.batches) {
            ++step;  // 1-based: the trace column counts completed steps
            const PatientTensors& st = stacks.at(batch.patient_id);
            Tensor<float> x = rows(st.x, batch.slice_begin, batch.slice_end);
            Tensor<float> y = rows(st.y, batch.slice_begin, batch.slice_end);
            Tensor<float> gx = cfg.net.noise_input ? append_noise(x, noise_rng) : x;

            typename Generator<float>::Cache gcache;
            Tensor<float> probs = G.forward(gx, &gcache);

            // discriminator step
            D.zero_grad();
            typename Discriminator<float>::Cache cr, cf;
            Tensor<float> d_real = D.forward(concat_channels(x, y), &cr);
            Tensor<float> d_fake = D.forward(concat_channels(x, probs), &cf);
            const double ld = d_loss(d_real, d_fake);
            require_finite(ld, "discriminator loss", step);
            Tensor<float> g_real, g_fake;
            d_loss_grads(d_real, d_fake, g_real, g_fake);
            D.backward(g_real, cr);
            D.backward(g_fake, cf);
            dopt.step(dparams);

            // generator step, through the updated discriminator
            G.zero_grad();
            D.zero_grad();
            typename Discriminator<float>::Cache cg;
            Tensor<float> d_fake2 = D.forward(concat_channels(x, probs), &cg);
            const double adv = g_adv_loss(d_fake2);
            const double l1 = l1_loss(probs, y);
            const double total = seg_loss(adv, l1, cfg.weights);
            require_finite(total, "generator loss", step);
            Tensor<float> dinput = D.backward(g_adv_grad(d_fake2), cg);
            Tensor<float> dimg, dprobs;
            split_channels_grad(dinput, x.dim(3), dimg, dprobs);
            const Tensor<float> dl1 = l1_grad(probs, y);
            const float lam = static_cast<float>(cfg.weights.lambda_l1);
            for (std::size_t i = 0; i < dprobs.size(); ++i) dprobs[i] += lam * dl1[i];
            G.backward(dprobs, gcache);
            gopt.step(gparams);

            art.trace.push_back({step, epoch, ld, adv, l1, total});
            if (cfg.max_steps && step >= cfg.max_steps) {
                stop = true;
                break;
            }
        }
        save_net(art.generator_path, G, cfg.seed);
        save_net(art.discriminator_path, D, cfg.seed);
    }
    write_file_bytes(art.trace_path, trace_csv(art.trace));
    return art;
}

// ---------------------------------------------------------------------------
// Stage two: refinement on the frozen generator's mistakes
// ---------------------------------------------------------------------------

struct RefineArtifacts {
    std::vector<TraceRow> trace;
    std::string refinement_path, trace_path;
};

namespace train_detail {
inline void check_compatible(const NetConfig& a, const NetConfig& b, const char* what) {
    if (a.height != b.height || a.width != b.width || a.in_channels != b.in_channels ||
        a.class_count != b.class_count)
        throw DataError(std::string(what) + ": checkpoint geometry does not match the run config");
}
}  // namespace train_detail

/// The generator is loaded from its checkpoint and never updated. Targets
/// are the per-class wrong-inclusion / wrong-omission masks of the
/// binarized generator output; the refinement net learns them with
/// per-pixel binary cross entropy. Trace rows carry the cross entropy in
/// the `total` column; the adversarial columns stay zero.
inline RefineArtifacts train_refinement(const std::string& generator_ckpt,
                                        const std::vector<PatientRecord>& train_set, const RunConfig& cfg) {
    using namespace train_detail;
    cfg.validate();
    if (train_set.empty()) throw DataError("refine: no training patients");
    std::filesystem::create_directories(cfg.out_dir);

    const CheckpointData gk = read_checkpoint(generator_ckpt);
    if (gk.kind != Generator<float>::kind) throw DataError("refine: checkpoint is not a generator");
    check_compatible(gk.cfg, cfg.net, "refine");
    Generator<float> G(gk.cfg);
    load_net(G, generator_ckpt);

    Refinement<float> R(cfg.refinement_cfg());
    auto rparams = R.params();
    Optimizer<float> ropt(cfg.r_opt, rparams);

    const BatchPlan plan = build_batch_plan(shapes_of(train_set), {cfg.plane}, cfg.images_per_batch);
    std::map<std::string, PatientTensors> stacks;
    for (const auto& rec : train_set) {
        stacks[rec.patient_id] = stack_patient(rec, cfg.plane, cfg.net.class_count);
        check_slice_shape(stacks[rec.patient_id].x, cfg.net);
    }

    Rng noise_rng(mix_seed(cfg.seed, 0));
    RefineArtifacts art;
    art.refinement_path = cfg.out_dir + "/refinement.ckpt";
    art.trace_path = cfg.out_dir + "/refine_trace.csv";
    save_net(art.refinement_path, R, cfg.seed);

    const std::size_t C = cfg.net.class_count;
    std::size_t step = 0;
    bool stop = false;
    for (std::size_t epoch = 1; epoch <= cfg.epochs && !stop; ++epoch) {
        for (const auto& batch : plan.batches) {
            ++step;  // 1-based, as in the adversarial loop
            const PatientTensors& st = stacks.at(batch.patient_id);
            Tensor<float> x = rows(st.x, batch.slice_begin, batch.slice_end);
            Tensor<float> y = rows(st.y, batch.slice_begin, batch.slice_end);
            Tensor<float> gx = gk.cfg.noise_input ? append_noise(x, noise_rng) : x;

            const Tensor<float> probs = G.forward(gx);
            const Tensor<float> pred = one_hot_slices(argmax_labels(probs), C);
            const Tensor<float> targets = concat_channels(fp_mask(y, pred), fn_mask(y, pred));

            typename Refinement<float>::Cache rc;
            Tensor<float> rout = R.forward(concat_channels(x, probs), &rc);
            const double bce = bce_loss(rout, targets);
            require_finite(bce, "refinement loss", step);
            R.zero_grad();
            R.backward(bce_grad(rout, targets), rc);
            ropt.step(rparams);

            art.trace.push_back({step, epoch, 0.0, 0.0, 0.0, bce});
            if (cfg.max_steps && step >= cfg.max_steps) {
                stop = true;
                break;
            }
        }
        save_net(art.refinement_path, R, cfg.seed);
    }
    write_file_bytes(art.trace_path, trace_csv(art.trace));
    return art;
}

// ---------------------------------------------------------------------------
// Inference
// ---------------------------------------------------------------------------

/// Whole-patient forward pass: every slice of the requested plane forms one
/// batch, so the normalization statistics are the patient's own. With a
/// refinement checkpoint, its outputs are binarized at one half and folded
/// in as final = clip(pred - fp + fn, 0, 1) before taking labels.
inline SegMap predict(const std::string& generator_ckpt, const std::string& refinement_ckpt,
                      const Volume& volume, AcquisitionPlane plane, std::uint64_t noise_seed = 0) {
    using namespace train_detail;
    const CheckpointData gk = read_checkpoint(generator_ckpt);
    if (gk.kind != Generator<float>::kind) throw DataError("predict: checkpoint is not a generator");
    Generator<float> G(gk.cfg);
    load_net(G, generator_ckpt);

    const Volume norm = zscore(volume);
    SliceSequence seq = extract_slices(norm, plane);
    if (seq.slices.dim(1) != gk.cfg.height || seq.slices.dim(2) != gk.cfg.width ||
        seq.slices.dim(3) != gk.cfg.in_channels)
        throw DataError("predict: volume slices do not match the network size");

    Tensor<float> gx;
    if (gk.cfg.noise_input) {
        Rng rng(noise_seed);
        gx = append_noise(seq.slices, rng);
    } else {
        gx = seq.slices;
    }
    const Tensor<float> probs = G.forward(gx);
    Tensor<std::uint8_t> lab = argmax_labels(probs);

    if (!refinement_ckpt.empty()) {
        const CheckpointData rk = read_checkpoint(refinement_ckpt);
        if (rk.kind != Refinement<float>::kind) throw DataError("predict: checkpoint is not a refinement net");
        check_compatible(rk.cfg, gk.cfg, "predict");
        Refinement<float> R(rk.cfg);
        load_net(R, refinement_ckpt);
        const Tensor<float> rout = R.forward(concat_channels(seq.slices, probs));
        const std::size_t C = gk.cfg.class_count;
        const Tensor<float> pred = one_hot_slices(lab, C);
        Tensor<float> fp = Tensor<float>::like(pred), fn = Tensor<float>::like(pred);
        const std::size_t rows_n = pred.size() / C;
        for (std::size_t r = 0; r < rows_n; ++r)
            for (std::size_t c = 0; c < C; ++c) {
                fp[r * C + c] = rout[r * 2 * C + c] > 0.5f ? 1.0f : 0.0f;
                fn[r * C + c] = rout[r * 2 * C + C + c] > 0.5f ? 1.0f : 0.0f;
            }
        lab = finalize_labels(compose(pred, fp, fn));
    }

    SegMap out;
    out.labels = restack_labels(lab, plane, seq.volume_dims);
    out.class_count = static_cast<int>(gk.cfg.class_count);
    return out;
}

}  // namespace refinegan
