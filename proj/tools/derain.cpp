// derain: synth / train / infer / eval front end.

#include <cstdlib>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "derain/derain.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace derain;

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kDataError = 2, kNumericFailure = 3 };

int exit_code_for(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::ConfigInvalid:
        case ErrorKind::InvalidArgument:
            return kUsage;
        case ErrorKind::NonFiniteLoss:
            return kNumericFailure;
        default:
            return kDataError;
    }
}

constexpr const char* kDatasetManifest = "manifest.json";
constexpr const char* kRunConfigFile = "run_config.json";
constexpr const char* kBestEpochFile = "best_epoch.json";
constexpr const char* kPredictionsManifest = "predictions.json";
constexpr const char* kOverfitRule =
    "best = epoch with the lowest validation L1; onset = first epoch ending a run of `patience` consecutive "
    "validation increases during which training L1 kept falling (local operationalization)";

// ---------------------------------------------------------------------------
// Config layering: built-in defaults < JSON file < explicit flags.

class ConfigLayer {
public:
    ConfigLayer() : defaults_(RunConfig{}) {}

    /// Registers `--name` bound to the JSON field at `pointer`; help shows the built-in default.
    template <typename T>
    CLI::Option* bind(CLI::App* app, const std::string& name, const std::string& pointer, const std::string& help) {
        auto storage = std::make_shared<T>();
        const json::json_pointer ptr(pointer);
        CLI::Option* opt = app->add_option(name, *storage, help);
        const json& def = defaults_.at(ptr);
        opt->default_str(def.is_string() ? def.get<std::string>() : def.dump());
        overrides_.push_back([opt, storage, ptr](json& j) {
            if (opt->count() > 0) j[ptr] = *storage;
        });
        return opt;
    }

    CLI::Option* bind_dims(CLI::App* app) {
        auto storage = std::make_shared<std::string>();
        CLI::Option* opt = app->add_option("--dims", *storage, "image size WxH");
        const Dims d = RunConfig{}.synth.dims;
        opt->default_str(std::to_string(d.width) + "x" + std::to_string(d.height));
        overrides_.push_back([opt, storage](json& j) {
            if (opt->count() == 0) return;
            int w = 0, h = 0;
            char x = 0;
            std::istringstream in(*storage);
            if (!(in >> w >> x >> h) || (x != 'x' && x != 'X') || !in.eof()) {
                fail(ErrorKind::ConfigInvalid, "--dims expects WxH, got '" + *storage + "'");
            }
            j["synth"]["dims"] = Dims{w, h};
        });
        return opt;
    }

    void add_config_option(CLI::App* app) {
        app->add_option("--config", config_path_, "JSON config file (falls back to $DERAIN_CONFIG)");
    }

    void add_post_hook(std::function<void(json&)> hook) { overrides_.push_back(std::move(hook)); }

    [[nodiscard]] RunConfig resolve() const {
        json merged = defaults_;
        std::string path = config_path_;
        if (path.empty()) {
            if (const char* env = std::getenv("DERAIN_CONFIG")) path = env;
        }
        if (!path.empty()) {
            const json file = read_json_file(path);
            if (!file.is_object()) fail(ErrorKind::ConfigInvalid, path + ": config must be a JSON object");
            for (const auto& [key, _] : file.items()) {
                if (!defaults_.contains(key)) fail(ErrorKind::ConfigInvalid, path + ": unknown key '" + key + "'");
            }
            merged.merge_patch(file);
        }
        for (const auto& apply : overrides_) apply(merged);
        RunConfig cfg;
        try {
            cfg = merged.get<RunConfig>();
        } catch (const json::exception& e) {
            fail(ErrorKind::ConfigInvalid, std::string("config: ") + e.what());
        }
        cfg.resolve();
        return cfg;
    }

private:
    json defaults_;
    std::string config_path_;
    std::vector<std::function<void(json&)>> overrides_;
};

void bind_seed(ConfigLayer& layer, CLI::App* app) {
    layer.bind<std::uint64_t>(app, "--seed", "/seed", "root seed for every random stream");
}

void bind_synth(ConfigLayer& layer, CLI::App* app) {
    layer.bind_dims(app);
    layer.bind<double>(app, "--density", "/synth/density", "droplets per megapixel");
    layer.bind<int>(app, "--cars-min", "/synth/cars_min", "minimum cars per scene");
    layer.bind<int>(app, "--cars-max", "/synth/cars_max", "maximum cars per scene");
    layer.bind<int>(app, "--glyph-scale", "/synth/glyph_scale", "car glyph scale factor");
    layer.bind<double>(app, "--texture", "/synth/texture", "asphalt jitter half-width");
    layer.bind<std::string>(app, "--background", "/synth/background", "road | plain");
}

void bind_model(ConfigLayer& layer, CLI::App* app) {
    layer.bind<int>(app, "--base-channels", "/generator/base_channels", "generator base channel count");
    layer.bind<int>(app, "--depth", "/generator/depth", "generator encoder depth");
    layer.bind<int>(app, "--disc-base-channels", "/discriminator/base_channels", "discriminator base channel count");
    layer.bind<int>(app, "--disc-layers", "/discriminator/n_layers", "discriminator stride-2 layers");
}

void bind_training(ConfigLayer& layer, CLI::App* app) {
    layer.bind<int>(app, "--epochs", "/train/epochs", "training epochs");
    layer.bind<int>(app, "--batch-size", "/train/batch_size", "pairs per step");
    layer.bind<double>(app, "--lr", "/train/learning_rate", "Adam learning rate");
    layer.bind<double>(app, "--beta1", "/train/adam_beta1", "Adam beta1");
    layer.bind<double>(app, "--l1-weight", "/train/l1_weight", "weight of the L1 term");
    layer.bind<int>(app, "--patience", "/train/patience", "overfit patience in epochs");
    layer.bind<bool>(app, "--deterministic", "/train/deterministic", "bit-exact mode (false parallelizes validation)");
    layer.bind<std::size_t>(app, "--train-count", "/split/train", "training pairs");
    layer.bind<std::size_t>(app, "--val-count", "/split/validation", "validation pairs");
    layer.bind<std::size_t>(app, "--test-count", "/split/test", "test pairs");
}

void bind_detector(ConfigLayer& layer, CLI::App* app) {
    layer.bind<std::string>(app, "--detector", "/detector/kind", "oracle | external");
    auto command = std::make_shared<std::string>();
    auto* cmd_opt = app->add_option("--detector-command", *command, "external detector executable")->default_str("");
    auto threshold = std::make_shared<double>();
    auto* thr_opt = app->add_option("--threshold", *threshold, "oracle match threshold")
                        ->default_str(json(kOracleThreshold).dump());
    layer.add_post_hook([=](json& j) {
        if (cmd_opt->count() > 0) j["detector"]["parameters"]["command"] = *command;
        if (thr_opt->count() > 0) j["detector"]["parameters"]["threshold"] = *threshold;
    });
}

// ---------------------------------------------------------------------------
// Shared helpers

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) fail(ErrorKind::IoFailure, "cannot create " + dir.string() + ": " + ec.message());
}

json config_record(const RunConfig& cfg) {
    return {{"config_fingerprint", cfg.fingerprint()}, {"config", cfg}};
}

/// A checkpoint path, or a training output directory (resolved via its best-epoch pointer).
fs::path resolve_checkpoint(const fs::path& p) {
    if (!fs::is_directory(p)) return p;
    const json best = read_json_file(p / kBestEpochFile);
    return p / best.at("checkpoint").get<std::string>();
}

/// The run config saved next to a checkpoint, checked against the checkpoint's fingerprint.
std::optional<RunConfig> stored_run_config(const fs::path& checkpoint_path, const Checkpoint& ckpt, bool force) {
    const fs::path path = checkpoint_path.parent_path() / kRunConfigFile;
    if (!fs::exists(path)) return std::nullopt;
    RunConfig cfg;
    try {
        cfg = read_json_file(path).at("config").get<RunConfig>();
    } catch (const json::exception& e) {
        fail(ErrorKind::DecodeFailure, path.string() + ": " + e.what());
    }
    if (cfg.fingerprint() != ckpt.config_fingerprint && !force) {
        fail(ErrorKind::FingerprintMismatch, path.string() + " (" + cfg.fingerprint() +
                                                 ") does not match checkpoint config fingerprint " +
                                                 ckpt.config_fingerprint + "; pass --force to override");
    }
    return cfg;
}

void print_epoch(const EpochMetrics& m, int total) {
    std::printf("epoch %3d/%d  D %.4f  G_adv %.4f  L1 train %.5f", m.epoch + 1, total, m.discriminator_loss,
                m.generator_adversarial, m.l1_train);
    if (m.l1_validation) std::printf("  val %.5f", *m.l1_validation);
    std::printf("\n");
    std::fflush(stdout);
}

// ---------------------------------------------------------------------------
// Commands

struct SynthArgs {
    std::size_t pairs = RunConfig{}.split.total();
    fs::path out;
};

int cmd_synth(const RunConfig& cfg, const SynthArgs& args) {
    ensure_dir(args.out);
    std::vector<AlignedPair> pairs;
    json ids = json::array();
    for (std::size_t i = 0; i < args.pairs; ++i) {
        auto sample = synthesize_sample(i, cfg.synth, cfg.seed);
        const std::string& id = sample.pair.id();
        write_png(args.out / (id + "_rain.png"), sample.pair.distorted());
        write_png(args.out / (id + "_clear.png"), sample.pair.clear());
        write_boxes_sidecar(args.out, id, sample.truth);
        ids.push_back(id);
        pairs.emplace_back(id, quantize_8bit(sample.pair.distorted()), quantize_8bit(sample.pair.clear()));
    }
    json manifest = config_record(cfg);
    manifest["kind"] = "dataset";
    manifest["pairs"] = args.pairs;
    manifest["data_fingerprint"] = pair_set_fingerprint(pairs);
    manifest["ids"] = ids;
    write_json_file(args.out / kDatasetManifest, manifest);
    std::printf("wrote %zu pairs to %s (data %s, config %s)\n", args.pairs, args.out.string().c_str(),
                manifest["data_fingerprint"].get<std::string>().c_str(), cfg.fingerprint().c_str());
    return kOk;
}

struct TrainArgs {
    fs::path data;
    fs::path out;
    std::string resume;
    bool force = false;
};

int cmd_train(const RunConfig& cfg, const TrainArgs& args) {
    auto pairs = load_pair_directory(args.data);
    const std::string data_fp = pair_set_fingerprint(pairs);
    const DatasetSplit split = split_for_run(cfg, std::move(pairs));
    std::printf("data %s: %zu train / %zu val / %zu test\n", args.data.string().c_str(), split.train.size(),
                split.validation.size(), split.test.size());
    std::printf("schedule: %d epochs, batch size %d, lr %g, beta1 %g, l1 weight %g\n", cfg.train.epochs,
                cfg.train.batch_size, cfg.train.learning_rate, cfg.train.adam_beta1, cfg.train.l1_weight);

    auto start = [&]() -> Checkpoint {
        if (args.resume.empty()) {
            if (fs::exists(args.out / "metrics.jsonl") && !args.force) {
                fail(ErrorKind::IoFailure, args.out.string() + " already holds a run; use --resume or --force");
            }
            Checkpoint fresh = initial_checkpoint(cfg.train, cfg.generator, cfg.discriminator);
            fresh.config_fingerprint = cfg.fingerprint();
            fresh.data_fingerprint = data_fp;
            return fresh;
        }
        Checkpoint resumed = load_checkpoint(args.resume);
        if (resumed.config_fingerprint != cfg.fingerprint() || resumed.data_fingerprint != data_fp) {
            if (!args.force) {
                fail(ErrorKind::FingerprintMismatch, "checkpoint " + args.resume + " was trained under config " +
                                                         resumed.config_fingerprint + " on data " +
                                                         resumed.data_fingerprint + "; this run is config " +
                                                         cfg.fingerprint() + " on data " + data_fp +
                                                         " (pass --force to continue anyway)");
            }
            resumed.train = cfg.train;
            resumed.config_fingerprint = cfg.fingerprint();
            resumed.data_fingerprint = data_fp;
        }
        std::printf("resuming after epoch %d\n", resumed.epochs_completed);
        return resumed;
    };
    Checkpoint state = start();

    ensure_dir(args.out);
    json run = config_record(cfg);
    run["data_fingerprint"] = data_fp;
    write_json_file(args.out / kRunConfigFile, run);

    TrainOptions options;
    options.output_dir = args.out;
    options.callbacks.on_epoch = [&](const Checkpoint&, const EpochMetrics& m) { print_epoch(m, cfg.train.epochs); };
    state = train(std::move(state), split, options);

    const OverfitReport report = detect_overfit(state.history, cfg.train.patience);
    double identity_val = 0.0;
    for (const auto& p : split.validation) identity_val += mean_abs_diff(p.distorted(), p.clear());
    json best = {{"best_epoch", report.best_epoch},
                 {"checkpoint", checkpoint_filename(static_cast<int>(report.best_epoch) + 1)},
                 {"overfit_onset", report.onset ? json(*report.onset) : json(nullptr)},
                 {"patience", cfg.train.patience},
                 {"rule", kOverfitRule},
                 {"l1_validation", state.history[report.best_epoch].l1_validation
                                       ? json(*state.history[report.best_epoch].l1_validation)
                                       : json(nullptr)},
                 {"identity_l1_validation",
                  split.validation.empty() ? json(nullptr) : json(identity_val / split.validation.size())},
                 {"config_fingerprint", state.config_fingerprint},
                 {"data_fingerprint", state.data_fingerprint}};
    write_json_file(args.out / kBestEpochFile, best);
    std::printf("best epoch %zu (%s)", report.best_epoch + 1, best["checkpoint"].get<std::string>().c_str());
    if (report.onset) std::printf(", overfit onset at epoch %zu", *report.onset + 1);
    std::printf("\n");
    return kOk;
}

struct InferArgs {
    fs::path checkpoint;
    fs::path input;
    fs::path out;
};

/// Inputs are every image in the directory except clear references and earlier
/// predictions; a trailing `_rain` is dropped from the id.
std::optional<std::string> inference_id(const fs::path& file) {
    if (!is_image_extension(file)) return std::nullopt;
    std::string stem = file.stem().string();
    for (const std::string_view skip : {"_clear", "_pred"}) {
        if (stem.ends_with(skip)) return std::nullopt;
    }
    if (stem.ends_with("_rain") && stem.size() > 5) stem.resize(stem.size() - 5);
    return stem;
}

int cmd_infer(const InferArgs& args) {
    const fs::path ckpt_path = resolve_checkpoint(args.checkpoint);
    const Checkpoint ckpt = load_checkpoint(ckpt_path);
    if (!fs::is_directory(args.input)) fail(ErrorKind::IoFailure, "not a directory: " + args.input.string());

    std::vector<std::pair<std::string, fs::path>> inputs;
    for (const auto& entry : fs::directory_iterator(args.input)) {
        if (!entry.is_regular_file()) continue;
        if (auto id = inference_id(entry.path())) inputs.emplace_back(std::move(*id), entry.path());
    }
    std::sort(inputs.begin(), inputs.end());
    ensure_dir(args.out);
    if (inputs.empty()) std::fprintf(stderr, "warning: no input images in %s\n", args.input.string().c_str());

    json files = json::array();
    json failed = json::array();
    std::vector<RasterImage> kept;
    std::vector<std::string> kept_ids;
    for (const auto& [id, path] : inputs) {
        try {
            RasterImage img = read_image(path);
            const RasterImage pred = generator_forward(ckpt.generator, img);
            const std::string name = id + "_pred.png";
            write_png(args.out / name, pred);
            files.push_back({{"id", id}, {"source", path.filename().string()}, {"output", name}});
            kept.push_back(std::move(img));
            kept_ids.push_back(id);
        } catch (const Error& e) {
            std::fprintf(stderr, "%s: %s\n", path.string().c_str(), e.what());
            failed.push_back({{"source", path.filename().string()}, {"error", e.what()}});
        }
    }
    std::vector<std::pair<std::string, const RasterImage*>> named;
    for (std::size_t i = 0; i < kept.size(); ++i) named.emplace_back(kept_ids[i], &kept[i]);
    write_json_file(args.out / kPredictionsManifest, {{"kind", "predictions"},
                                                      {"checkpoint", ckpt_path.string()},
                                                      {"config_fingerprint", ckpt.config_fingerprint},
                                                      {"data_fingerprint", ckpt.data_fingerprint},
                                                      {"input_fingerprint", image_set_fingerprint(named)},
                                                      {"files", files},
                                                      {"failed", failed}});
    std::printf("predicted %zu image(s) into %s\n", files.size(), args.out.string().c_str());
    if (!failed.empty()) {
        std::fprintf(stderr, "%zu image(s) failed\n", failed.size());
        return kDataError;
    }
    return kOk;
}

struct EvalArgs {
    fs::path data;
    fs::path out;
    std::string checkpoint;
    std::string predicted_dir;
    std::string split = "test";
    bool force = false;
};

int cmd_eval(const RunConfig& cli_cfg, const EvalArgs& args) {
    auto pairs = load_pair_directory(args.data);
    const std::string data_fp = pair_set_fingerprint(pairs);
    json provenance = {{"data_dir", args.data.string()}, {"data_fingerprint", data_fp}, {"split", args.split}};
    EvaluationResult result;

    if (!args.checkpoint.empty()) {
        const fs::path ckpt_path = resolve_checkpoint(args.checkpoint);
        const Checkpoint ckpt = load_checkpoint(ckpt_path);
        const auto run_cfg = stored_run_config(ckpt_path, ckpt, args.force);
        std::vector<AlignedPair> selected;
        if (args.split == "test") {
            if (ckpt.data_fingerprint != data_fp && !args.force) {
                fail(ErrorKind::FingerprintMismatch, "checkpoint was trained on data " + ckpt.data_fingerprint +
                                                         " but " + args.data.string() + " is " + data_fp +
                                                         "; use --split all for a separate test set, or --force");
            }
            if (!run_cfg) std::fprintf(stderr, "warning: no %s next to the checkpoint; using this run's split\n", kRunConfigFile);
            selected = split_for_run(run_cfg ? *run_cfg : cli_cfg, std::move(pairs)).test;
        } else {
            selected = std::move(pairs);
        }
        if (selected.empty()) fail(ErrorKind::InsufficientPairs, "no test pairs to evaluate");
        result = evaluate_model(ckpt.generator, selected, cli_cfg.detector);
        provenance["checkpoint"] = ckpt_path.string();
        provenance["config_fingerprint"] = ckpt.config_fingerprint;
        provenance["trained_data_fingerprint"] = ckpt.data_fingerprint;
    } else {
        const fs::path dir = args.predicted_dir;
        std::map<std::string, RasterImage> predicted;
        std::vector<AlignedPair> selected;
        for (auto& p : pairs) {
            const fs::path file = dir / (p.id() + "_pred.png");
            if (!fs::exists(file)) continue;
            predicted.emplace(p.id(), read_image(file));
            selected.push_back(std::move(p));
        }
        if (selected.empty()) {
            fail(ErrorKind::MissingCounterpart, "no <id>_pred.png in " + dir.string() + " matches a pair in " +
                                                    args.data.string());
        }
        if (fs::exists(dir / kPredictionsManifest)) {
            const json manifest = read_json_file(dir / kPredictionsManifest);
            std::vector<std::pair<std::string, const RasterImage*>> named;
            for (const auto& p : selected) named.emplace_back(p.id(), &p.distorted());
            const std::string expected = manifest.value("input_fingerprint", std::string());
            if (expected != image_set_fingerprint(named) && !args.force) {
                fail(ErrorKind::FingerprintMismatch, "predictions in " + dir.string() +
                                                         " were made from different inputs than the matching pairs in " +
                                                         args.data.string() + "; pass --force to override");
            }
            provenance["config_fingerprint"] = manifest.value("config_fingerprint", std::string());
            provenance["checkpoint"] = manifest.value("checkpoint", std::string());
        }
        provenance["predicted_dir"] = dir.string();
        result = evaluate_predictions(
            selected, [&, i = std::size_t{0}](const RasterImage&) mutable { return predicted.at(selected[i++].id()); },
            cli_cfg.detector);
    }

    const ReportPaths paths = emit_report(result, args.out, provenance);
    std::printf("term1 %.4f  term2 %.4f  m_effective %zu  skipped %zu\n", result.scores.term1, result.scores.term2,
                result.scores.m_effective, result.scores.skipped);
    std::printf("mean L1 input %.5f  predicted %.5f\n", result.mean_l1_input, result.mean_l1_predicted);
    std::printf("detector %s (%s)\n", result.detector.to_json().dump().c_str(), result.detector.fingerprint().c_str());
    std::printf("report %s, plot %s\n", paths.json.string().c_str(), paths.plot.string().c_str());
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Rain removal with a conditional GAN: synthesize data, train, infer, evaluate."};
    app.require_subcommand(1);
    app.set_version_flag("--version", "derain 0.1.0");

    ConfigLayer synth_layer, train_layer, eval_layer;

    auto* synth = app.add_subcommand("synth", "render paired rainy/clear scenes");
    SynthArgs synth_args;
    synth_layer.add_config_option(synth);
    bind_seed(synth_layer, synth);
    bind_synth(synth_layer, synth);
    synth->add_option("--pairs", synth_args.pairs, "number of pairs")->capture_default_str();
    synth->add_option("--out", synth_args.out, "output directory")->required();

    auto* train_cmd = app.add_subcommand("train", "train generator and discriminator");
    TrainArgs train_args;
    train_layer.add_config_option(train_cmd);
    bind_seed(train_layer, train_cmd);
    bind_model(train_layer, train_cmd);
    bind_training(train_layer, train_cmd);
    train_cmd->add_option("--data", train_args.data, "dataset directory")->required()->check(CLI::ExistingDirectory);
    train_cmd->add_option("--out", train_args.out, "run directory for checkpoints and metrics")->required();
    train_cmd->add_option("--resume", train_args.resume, "checkpoint to continue from")->check(CLI::ExistingFile);
    train_cmd->add_flag("--force", train_args.force, "ignore fingerprint mismatches / overwrite a previous run");

    auto* infer = app.add_subcommand("infer", "run a trained generator over a directory");
    InferArgs infer_args;
    infer->add_option("--checkpoint", infer_args.checkpoint, "checkpoint file or run directory")
        ->required()
        ->check(CLI::ExistingPath);
    infer->add_option("--input", infer_args.input, "directory of distorted images")->required();
    infer->add_option("--out", infer_args.out, "output directory")->required();

    auto* eval = app.add_subcommand("eval", "score restoration by detection counts");
    EvalArgs eval_args;
    eval_layer.add_config_option(eval);
    bind_detector(eval_layer, eval);
    eval->add_option("--data", eval_args.data, "dataset directory")->required()->check(CLI::ExistingDirectory);
    eval->add_option("--out", eval_args.out, "report directory")->required();
    auto* ck = eval->add_option("--checkpoint", eval_args.checkpoint, "checkpoint file or run directory")
                   ->check(CLI::ExistingPath);
    auto* pd = eval->add_option("--predicted-dir", eval_args.predicted_dir, "directory of <id>_pred.png files")
                   ->check(CLI::ExistingDirectory);
    ck->excludes(pd);
    eval->add_option("--split", eval_args.split, "test (the run's held-out split) | all")
        ->capture_default_str()
        ->check(CLI::IsMember({"test", "all"}));
    eval->add_flag("--force", eval_args.force, "ignore fingerprint mismatches");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kOk : kUsage;
    }

    try {
        if (*synth) return cmd_synth(synth_layer.resolve(), synth_args);
        if (*train_cmd) return cmd_train(train_layer.resolve(), train_args);
        if (*infer) return cmd_infer(infer_args);
        if (*eval) {
            if (eval_args.checkpoint.empty() && eval_args.predicted_dir.empty()) {
                std::fprintf(stderr, "eval: one of --checkpoint or --predicted-dir is required\n");
                return kUsage;
            }
            return cmd_eval(eval_layer.resolve(), eval_args);
        }
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return exit_code_for(e.kind());
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kDataError;
    }
    return kUsage;
}
