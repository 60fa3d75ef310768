#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "refinegan/refinegan.hpp"

namespace rg = refinegan;

namespace {

std::string stem_of(const std::string& path) { return std::filesystem::path(path).stem().string(); }

std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void write_echo(const std::string& out_dir, const std::string& name, const std::string& body) {
    std::filesystem::create_directories(out_dir);
    rg::write_file_bytes(out_dir + "/" + name, body);
}

struct TrainFlags {
    std::string config, data, out, plane = "axial";
    std::uint64_t seed = 0;
    std::string checkpoint;  // refine only: the frozen generator
    CLI::Option *seed_opt = nullptr, *data_opt = nullptr, *out_opt = nullptr, *plane_opt = nullptr;
};

rg::RunConfig resolve_train_config(const TrainFlags& f) {
    std::map<std::string, std::string> kv;
    if (!f.config.empty()) kv = rg::parse_config_text(rg::read_file_bytes(f.config));
    if (f.seed_opt->count()) kv["seed"] = std::to_string(f.seed);
    if (f.data_opt->count()) kv["data"] = f.data;
    if (f.out_opt->count()) kv["out"] = f.out;
    if (f.plane_opt->count()) kv["plane"] = f.plane;
    rg::RunConfig cfg = rg::resolve_config(kv);
    if (cfg.data_dir.empty()) throw rg::ConfigError("a data directory is required (--data or data=)");
    if (cfg.out_dir.empty()) throw rg::ConfigError("an output directory is required (--out or out=)");
    return cfg;
}

void add_train_flags(CLI::App* cmd, TrainFlags& f) {
    cmd->add_option("--config", f.config, "flat key = value config file");
    f.seed_opt = cmd->add_option("--seed", f.seed, "run seed (overrides the config file)");
    f.data_opt = cmd->add_option("--data", f.data, "dataset directory with manifest.txt");
    f.out_opt = cmd->add_option("--out", f.out, "output directory");
    f.plane_opt = cmd->add_option("--plane", f.plane, "slicing plane")
                      ->check(CLI::IsMember({"axial", "coronal", "sagittal"}));
}

int run_train(const TrainFlags& f) {
    const rg::RunConfig cfg = resolve_train_config(f);
    write_echo(cfg.out_dir, "train_resolved.cfg", rg::echo_config(cfg));
    const rg::Dataset ds = rg::load_dataset(cfg.data_dir);
    const rg::CganArtifacts art = rg::train_cgan(ds.train, cfg);
    std::printf("trained %zu steps over %zu patients\n", art.trace.size(), ds.train.size());
    std::printf("wrote %s\nwrote %s\nwrote %s\n", art.generator_path.c_str(),
                art.discriminator_path.c_str(), art.trace_path.c_str());
    return 0;
}

int run_refine(const TrainFlags& f) {
    if (f.checkpoint.empty()) throw rg::ConfigError("refine: --checkpoint (generator) is required");
    const rg::RunConfig cfg = resolve_train_config(f);
    write_echo(cfg.out_dir, "refine_resolved.cfg",
               rg::echo_config(cfg) + "# checkpoint = " + f.checkpoint + "\n");
    const rg::Dataset ds = rg::load_dataset(cfg.data_dir);
    const rg::RefineArtifacts art = rg::train_refinement(f.checkpoint, ds.train, cfg);
    std::printf("refined %zu steps over %zu patients\n", art.trace.size(), ds.train.size());
    std::printf("wrote %s\nwrote %s\n", art.refinement_path.c_str(), art.trace_path.c_str());
    return 0;
}

struct SynthFlags {
    rg::SynthSpec spec;
    std::string out;
};

int run_synth(const SynthFlags& f) {
    f.spec.validate();
    const rg::SynthDataset ds = rg::gen_dataset(f.spec);
    rg::write_dataset(ds, f.out);
    std::string echo;
    echo += "patients = " + std::to_string(f.spec.n_patients) + "\n";
    echo += "slices = " + std::to_string(f.spec.slices) + "\n";
    echo += "height = " + std::to_string(f.spec.height) + "\n";
    echo += "width = " + std::to_string(f.spec.width) + "\n";
    echo += "channels = " + std::to_string(f.spec.channels) + "\n";
    echo += "classes = " + std::to_string(f.spec.class_count) + "\n";
    echo += "fraction = " + fmt17(f.spec.lesion_fraction) + "\n";
    echo += "contrast = " + fmt17(f.spec.contrast) + "\n";
    echo += "seed = " + std::to_string(f.spec.seed) + "\n";
    write_echo(f.out, "synth_resolved.cfg", echo);
    std::size_t train_n = 0;
    for (bool t : ds.is_train) train_n += t ? 1 : 0;
    std::printf("wrote %zu patients (%zu train / %zu val) to %s\n", ds.records.size(), train_n,
                ds.records.size() - train_n, f.out.c_str());
    return 0;
}

struct PredictFlags {
    std::string volume, checkpoint, refine_checkpoint, out, plane = "axial";
    std::uint64_t seed = 0;
};

int run_predict(const PredictFlags& f) {
    const rg::Volume vol = rg::read_volume(f.volume);
    const rg::AcquisitionPlane plane = rg::parse_plane(f.plane);
    const rg::SegMap seg = rg::predict(f.checkpoint, f.refine_checkpoint, vol, plane, f.seed);
    std::filesystem::create_directories(f.out);
    const std::string out_path = f.out + "/" + stem_of(f.volume) + "_pred.mvol";
    rg::write_mvol(seg, out_path, vol.spacing);
    std::string echo;
    echo += "volume = " + f.volume + "\n";
    echo += "checkpoint = " + f.checkpoint + "\n";
    echo += "refine_checkpoint = " + f.refine_checkpoint + "\n";
    echo += "plane = " + f.plane + "\n";
    echo += "seed = " + std::to_string(f.seed) + "\n";
    write_echo(f.out, "predict_resolved.cfg", echo);
    std::printf("wrote %s\n", out_path.c_str());
    return 0;
}

struct EvaluateFlags {
    std::vector<std::string> pred, truth;
    std::string out;
};

int run_evaluate(const EvaluateFlags& f) {
    if (f.pred.size() != f.truth.size() || f.pred.empty())
        throw rg::ConfigError("evaluate: --pred and --truth must pair up");
    std::vector<rg::MetricReport> reports;
    for (std::size_t i = 0; i < f.pred.size(); ++i) {
        const rg::MvolData traw = rg::read_mvol(f.truth[i]);
        const rg::SegMap pred = rg::read_labels(f.pred[i]);
        const rg::SegMap truth = rg::read_labels(f.truth[i]);
        const int classes = std::max(pred.class_count, truth.class_count);
        const auto regions = rg::default_regions(classes, truth.class_names);
        reports.push_back(rg::evaluate(pred, truth, traw.spacing, regions, stem_of(f.pred[i])));
    }
    std::filesystem::create_directories(f.out);
    const std::string csv_path = f.out + "/metrics.csv";
    rg::write_file_bytes(csv_path, rg::metrics_csv(reports));
    std::string echo;
    for (std::size_t i = 0; i < f.pred.size(); ++i) {
        echo += "pred." + std::to_string(i) + " = " + f.pred[i] + "\n";
        echo += "truth." + std::to_string(i) + " = " + f.truth[i] + "\n";
    }
    write_echo(f.out, "evaluate_resolved.cfg", echo);
    std::printf("wrote %s\n", csv_path.c_str());
    return 0;
}

struct ReportFlags {
    std::string loss_csv, metrics_csv, out;
};

int run_report(const ReportFlags& f) {
    if (f.loss_csv.empty() && f.metrics_csv.empty())
        throw rg::ConfigError("report: need --loss-csv and/or --metrics-csv");
    std::filesystem::create_directories(f.out);
    std::string echo;
    if (!f.loss_csv.empty()) {
        const rg::ParsedCsv csv = rg::parse_csv(rg::read_file_bytes(f.loss_csv));
        const std::string path = f.out + "/loss_curves.svg";
        rg::write_file_bytes(path, rg::render_loss_svg(csv));
        echo += "loss_csv = " + f.loss_csv + "\n";
        std::printf("wrote %s\n", path.c_str());
    }
    if (!f.metrics_csv.empty()) {
        const rg::ParsedCsv csv = rg::parse_csv(rg::read_file_bytes(f.metrics_csv));
        const std::string path = f.out + "/metrics_table.txt";
        rg::write_file_bytes(path, rg::render_metric_table(csv));
        echo += "metrics_csv = " + f.metrics_csv + "\n";
        std::printf("wrote %s\n", path.c_str());
    }
    write_echo(f.out, "report_resolved.cfg", echo);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"refinegan: adversarial segmentation with error-mask refinement"};
    app.require_subcommand(1);

    SynthFlags sf;
    CLI::App* synth = app.add_subcommand("synth", "generate a synthetic labelled dataset");
    synth->add_option("--patients", sf.spec.n_patients, "number of patients");
    synth->add_option("--slices", sf.spec.slices, "slices per volume");
    synth->add_option("--height", sf.spec.height, "slice rows");
    synth->add_option("--width", sf.spec.width, "slice columns");
    synth->add_option("--channels", sf.spec.channels, "modalities per voxel");
    synth->add_option("--classes", sf.spec.class_count, "label classes incl. background");
    synth->add_option("--fraction", sf.spec.lesion_fraction, "target foreground fraction");
    synth->add_option("--contrast", sf.spec.contrast, "lesion offset in channel std units");
    synth->add_option("--seed", sf.spec.seed, "dataset seed");
    synth->add_option("--out", sf.out, "output directory")->required();
    synth->callback([&sf] { run_synth(sf); });

    TrainFlags tf;
    CLI::App* train = app.add_subcommand("train", "train the adversarial segmentation stage");
    add_train_flags(train, tf);
    train->callback([&tf] { run_train(tf); });

    TrainFlags rf;
    CLI::App* refine = app.add_subcommand("refine", "train the refinement stage on a frozen generator");
    add_train_flags(refine, rf);
    refine->add_option("--checkpoint", rf.checkpoint, "generator checkpoint")->required();
    refine->callback([&rf] { run_refine(rf); });

    PredictFlags pf;
    CLI::App* predict = app.add_subcommand("predict", "segment one volume");
    predict->add_option("volume", pf.volume, "input volume (.mvol)")->required();
    predict->add_option("--checkpoint", pf.checkpoint, "generator checkpoint")->required();
    predict->add_option("--refine-checkpoint", pf.refine_checkpoint, "refinement checkpoint (optional)");
    predict->add_option("--plane", pf.plane, "slicing plane")
        ->check(CLI::IsMember({"axial", "coronal", "sagittal"}));
    predict->add_option("--seed", pf.seed, "noise seed (only used with a noise-input generator)");
    predict->add_option("--out", pf.out, "output directory")->required();
    predict->callback([&pf] { run_predict(pf); });

    EvaluateFlags ef;
    CLI::App* evaluate = app.add_subcommand("evaluate", "score predictions against ground truth");
    evaluate->add_option("--pred", ef.pred, "predicted label map (repeatable)")->required();
    evaluate->add_option("--truth", ef.truth, "ground-truth label map (repeatable)")->required();
    evaluate->add_option("--out", ef.out, "output directory")->required();
    evaluate->callback([&ef] { run_evaluate(ef); });

    ReportFlags gf;
    CLI::App* report = app.add_subcommand("report", "render loss curves and metric tables from CSVs");
    report->add_option("--loss-csv", gf.loss_csv, "loss trace CSV");
    report->add_option("--metrics-csv", gf.metrics_csv, "metric CSV");
    report->add_option("--out", gf.out, "output directory")->required();
    report->callback([&gf] { run_report(gf); });

    try {
        app.parse(argc, argv);
        return 0;
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    } catch (const rg::ConfigError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const rg::DivergenceError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    } catch (const rg::Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
}
