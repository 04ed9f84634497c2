#include <gtest/gtest.h>

#include <array>
#include <cstdio>
#include <cstdlib>
#include <sys/wait.h>

#include "support.hpp"

using namespace derain;
using testing_support::TempDir;
namespace fs = std::filesystem;

namespace {

struct RunResult {
    int code = -1;
    std::string out;
};

RunResult run(const std::string& args, const std::string& env = "") {
    const std::string cmd = env + " '" + std::string(DERAIN_CLI_PATH) + "' " + args + " 2>&1";
    RunResult r;
    FILE* pipe = popen(cmd.c_str(), "r");
    if (!pipe) return r;
    std::array<char, 4096> buf{};
    while (const std::size_t n = std::fread(buf.data(), 1, buf.size(), pipe)) r.out.append(buf.data(), n);
    const int status = pclose(pipe);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

// Tiny runs: 16x16 images, micro networks, 10 pairs.
fs::path tiny_config(const fs::path& dir) {
    const fs::path p = dir / "tiny.json";
    write_json_file(p, {{"synth", {{"dims", {{"width", 16}, {"height", 16}}}, {"glyph_scale", 1}, {"cars_max", 1}}},
                        {"split", {{"train", 8}, {"validation", 1}, {"test", 1}}},
                        {"generator", {{"base_channels", 4}, {"depth", 2}}},
                        {"discriminator", {{"base_channels", 4}, {"n_layers", 1}}},
                        {"train", {{"epochs", 1}}}});
    return p;
}

std::map<std::string, std::string> tree(const fs::path& root) {
    std::map<std::string, std::string> files;
    for (const auto& e : fs::recursive_directory_iterator(root)) {
        if (e.is_regular_file()) files[fs::relative(e.path(), root).string()] = read_text_file(e.path());
    }
    return files;
}

}  // namespace

TEST(Cli, HelpListsDefaults) {
    const auto top = run("--help");
    EXPECT_EQ(top.code, 0);
    EXPECT_NE(top.out.find("synth"), std::string::npos);
    const auto train = run("train --help");
    EXPECT_EQ(train.code, 0);
    for (const char* s : {"--epochs", "34", "--batch-size", "--lr", "0.0002", "--beta1", "0.5", "--l1-weight", "100",
                          "--seed", "42", "--resume", "--force"}) {
        EXPECT_NE(train.out.find(s), std::string::npos) << s;
    }
    const auto synth = run("synth --help");
    for (const char* s : {"--density", "10000", "--dims", "64x64", "--pairs", "260"}) {
        EXPECT_NE(synth.out.find(s), std::string::npos) << s;
    }
    const auto eval = run("eval --help");
    for (const char* s : {"--detector", "oracle", "--threshold", "0.1", "--split", "test"}) {
        EXPECT_NE(eval.out.find(s), std::string::npos) << s;
    }
}

TEST(Cli, UsageErrors) {
    EXPECT_EQ(run("").code, 1);
    EXPECT_EQ(run("synth --bogus 3 --out /tmp/x").code, 1);
    EXPECT_EQ(run("synth --out /tmp/derain_never --dims 64by64").code, 1);
    EXPECT_EQ(run("synth --out /tmp/derain_never --epochs 3").code, 1);
}

TEST(Cli, SynthIsDeterministic) {
    TempDir dir("cli_synth");
    const auto a = run("synth --pairs 4 --dims 64x64 --seed 42 --out " + q(dir.path() / "a"));
    ASSERT_EQ(a.code, 0) << a.out;
    ASSERT_EQ(run("synth --pairs 4 --dims 64x64 --seed 42 --out " + q(dir.path() / "b")).code, 0);
    const auto ta = tree(dir.path() / "a");
    EXPECT_EQ(ta, tree(dir.path() / "b"));
    EXPECT_EQ(ta.size(), 4u * 3 + 1);
    const auto manifest = read_json_file(dir.path() / "a" / "manifest.json");
    EXPECT_EQ(manifest["ids"].size(), 4u);
    EXPECT_EQ(manifest["config"]["synth"]["dims"]["width"], 64);
    EXPECT_FALSE(manifest["config_fingerprint"].get<std::string>().empty());
    EXPECT_EQ(load_pair_directory(dir.path() / "a").size(), 4u);
    EXPECT_EQ(read_boxes_sidecar(dir.path() / "a", "pair_000000").boxes.size(),
              synthesize_sample(0, manifest["config"]["synth"].get<SynthParams>(), 42).truth.boxes.size());
}

TEST(Cli, SynthZeroPairs) {
    TempDir dir("cli_zero");
    const auto r = run("synth --pairs 0 --out " + q(dir.path()));
    EXPECT_EQ(r.code, 0) << r.out;
    EXPECT_TRUE(read_json_file(dir.path() / "manifest.json")["ids"].empty());
}

TEST(Cli, ConfigPrecedence) {
    TempDir dir("cli_cfg");
    const auto cfg = dir.path() / "c.json";
    write_json_file(cfg, {{"seed", 7}, {"synth", {{"density", 123.0}, {"cars_max", 2}}}});
    ASSERT_EQ(run("synth --pairs 0 --config " + q(cfg) + " --density 456 --out " + q(dir.path() / "a")).code, 0);
    auto m = read_json_file(dir.path() / "a" / "manifest.json")["config"];
    EXPECT_EQ(m["seed"], 7);
    EXPECT_EQ(m["synth"]["density"], 456.0);
    EXPECT_EQ(m["synth"]["cars_max"], 2);
    EXPECT_EQ(m["synth"]["cars_min"], 1);

    ASSERT_EQ(run("synth --pairs 0 --out " + q(dir.path() / "b"), "DERAIN_CONFIG=" + q(cfg)).code, 0);
    m = read_json_file(dir.path() / "b" / "manifest.json")["config"];
    EXPECT_EQ(m["synth"]["density"], 123.0);

    write_json_file(dir.path() / "bad.json", {{"sinth", 1}});
    EXPECT_EQ(run("synth --pairs 0 --config " + q(dir.path() / "bad.json") + " --out " + q(dir.path() / "c")).code, 1);
    EXPECT_EQ(run("synth --pairs 0 --config " + q(dir.path() / "missing.json") + " --out " + q(dir.path() / "c")).code, 2);
}

TEST(Cli, TrainInferEvalRoundTrip) {
    TempDir dir("cli_pipeline");
    const auto cfg = tiny_config(dir.path());
    const auto data = dir.path() / "data";
    ASSERT_EQ(run("synth --pairs 10 --config " + q(cfg) + " --out " + q(data)).code, 0);

    const auto train = run("train --config " + q(cfg) + " --data " + q(data) + " --out " + q(dir.path() / "run"));
    ASSERT_EQ(train.code, 0) << train.out;
    EXPECT_NE(train.out.find("epoch   1/1"), std::string::npos) << train.out;
    EXPECT_TRUE(fs::exists(dir.path() / "run" / "checkpoint_epoch_001.drn"));
    EXPECT_FALSE(fs::exists(dir.path() / "run" / "checkpoint_epoch_002.drn"));
    const auto metrics = read_text_file(dir.path() / "run" / "metrics.jsonl");
    EXPECT_EQ(std::count(metrics.begin(), metrics.end(), '\n'), 2);
    const auto best = read_json_file(dir.path() / "run" / "best_epoch.json");
    EXPECT_EQ(best["best_epoch"], 0);
    EXPECT_EQ(best["checkpoint"], "checkpoint_epoch_001.drn");
    const auto ckpt = load_checkpoint(dir.path() / "run" / "checkpoint_epoch_001.drn");
    EXPECT_EQ(ckpt.config_fingerprint, read_json_file(data / "manifest.json")["config_fingerprint"]);
    EXPECT_EQ(ckpt.data_fingerprint, read_json_file(data / "manifest.json")["data_fingerprint"]);

    // A second train into the same directory needs --resume or --force.
    EXPECT_EQ(run("train --config " + q(cfg) + " --data " + q(data) + " --out " + q(dir.path() / "run")).code, 2);

    const auto infer = run("infer --checkpoint " + q(dir.path() / "run") + " --input " + q(data) + " --out " +
                           q(dir.path() / "pred"));
    ASSERT_EQ(infer.code, 0) << infer.out;
    for (const auto& p : load_pair_directory(data)) {
        const auto pred = read_image(dir.path() / "pred" / (p.id() + "_pred.png"));
        EXPECT_TRUE(pred.same_dims(p.distorted()));
        EXPECT_NO_THROW(EvaluationTrio(p.id(), p.distorted(), pred, p.clear()));
    }
    EXPECT_EQ(read_json_file(dir.path() / "pred" / "predictions.json")["files"].size(), 10u);

    const auto eval = run("eval --config " + q(cfg) + " --checkpoint " + q(dir.path() / "run") + " --data " + q(data) +
                          " --out " + q(dir.path() / "report"));
    ASSERT_EQ(eval.code, 0) << eval.out;
    EXPECT_NE(eval.out.find("term1"), std::string::npos);
    const auto report = read_json_file(dir.path() / "report" / "report.json");
    EXPECT_EQ(report["rows"].size(), 1u);
    EXPECT_EQ(report["provenance"]["config_fingerprint"], ckpt.config_fingerprint);
    EXPECT_TRUE(fs::exists(dir.path() / "report" / "ratios.png"));

    const auto from_pred = run("eval --config " + q(cfg) + " --predicted-dir " + q(dir.path() / "pred") + " --data " +
                               q(data) + " --out " + q(dir.path() / "report2"));
    ASSERT_EQ(from_pred.code, 0) << from_pred.out;
    EXPECT_EQ(read_json_file(dir.path() / "report2" / "report.json")["rows"].size(), 10u);

    // Evaluating against a different dataset's held-out split is refused unless forced.
    const auto other = dir.path() / "other";
    ASSERT_EQ(run("synth --pairs 10 --seed 9 --config " + q(cfg) + " --out " + q(other)).code, 0);
    const std::string mixed = "eval --config " + q(cfg) + " --checkpoint " + q(dir.path() / "run") + " --data " +
                              q(other) + " --out " + q(dir.path() / "report3");
    EXPECT_EQ(run(mixed).code, 2);
    EXPECT_EQ(run(mixed + " --force").code, 0);
    EXPECT_EQ(run(mixed + " --split all").code, 0);
}

TEST(Cli, ResumeMatchesUninterruptedRun) {
    TempDir dir("cli_resume");
    const auto cfg = tiny_config(dir.path());
    const auto data = dir.path() / "data";
    ASSERT_EQ(run("synth --pairs 10 --config " + q(cfg) + " --out " + q(data)).code, 0);
    const std::string base = "train --config " + q(cfg) + " --epochs 2 --data " + q(data);
    ASSERT_EQ(run(base + " --out " + q(dir.path() / "full")).code, 0);
    fs::create_directories(dir.path() / "part");
    fs::copy_file(dir.path() / "full" / "checkpoint_epoch_001.drn", dir.path() / "part" / "ckpt1.drn");
    const auto resumed = run(base + " --out " + q(dir.path() / "resumed") + " --resume " + q(dir.path() / "part" / "ckpt1.drn"));
    ASSERT_EQ(resumed.code, 0) << resumed.out;
    EXPECT_FALSE(fs::exists(dir.path() / "resumed" / "checkpoint_epoch_001.drn"));
    EXPECT_EQ(read_text_file(dir.path() / "resumed" / "checkpoint_epoch_002.drn"),
              read_text_file(dir.path() / "full" / "checkpoint_epoch_002.drn"));
    EXPECT_EQ(read_text_file(dir.path() / "resumed" / "metrics.jsonl"), read_text_file(dir.path() / "full" / "metrics.jsonl"));

    // Resuming under a different config is refused.
    EXPECT_EQ(run(base + " --lr 0.001 --out " + q(dir.path() / "x") + " --resume " + q(dir.path() / "part" / "ckpt1.drn")).code, 2);
}

TEST(Cli, NonFiniteLossExitCode) {
    TempDir dir("cli_nan");
    const auto cfg = tiny_config(dir.path());
    ASSERT_EQ(run("synth --pairs 10 --config " + q(cfg) + " --out " + q(dir.path() / "d")).code, 0);
    const auto r = run("train --config " + q(cfg) + " --lr 1e308 --data " + q(dir.path() / "d") + " --out " +
                       q(dir.path() / "run"));
    EXPECT_EQ(r.code, 3) << r.out;
    EXPECT_NE(r.out.find("NonFiniteLoss"), std::string::npos);
    EXPECT_NE(r.out.find("step"), std::string::npos);
}

TEST(Cli, InferEdgeCases) {
    TempDir dir("cli_infer");
    const auto cfg = tiny_config(dir.path());
    const auto data = dir.path() / "data";
    ASSERT_EQ(run("synth --pairs 10 --config " + q(cfg) + " --out " + q(data)).code, 0);
    ASSERT_EQ(run("train --config " + q(cfg) + " --data " + q(data) + " --out " + q(dir.path() / "run")).code, 0);
    const std::string ckpt = " --checkpoint " + q(dir.path() / "run" / "checkpoint_epoch_001.drn");

    fs::create_directories(dir.path() / "empty");
    const auto empty = run("infer" + ckpt + " --input " + q(dir.path() / "empty") + " --out " + q(dir.path() / "o1"));
    EXPECT_EQ(empty.code, 0);
    EXPECT_NE(empty.out.find("warning"), std::string::npos);

    fs::create_directories(dir.path() / "mixed");
    write_png(dir.path() / "mixed" / "ok.png", RasterImage(16, 16, 0.3));
    write_png(dir.path() / "mixed" / "big.png", RasterImage(32, 16, 0.3));
    const auto mixed = run("infer" + ckpt + " --input " + q(dir.path() / "mixed") + " --out " + q(dir.path() / "o2"));
    EXPECT_EQ(mixed.code, 2);
    EXPECT_NE(mixed.out.find("ShapeMismatch"), std::string::npos);
    EXPECT_TRUE(fs::exists(dir.path() / "o2" / "ok_pred.png"));
}

namespace {

// Scene whose first `hidden` cars are covered by large lens droplets.
RasterImage occlude(const RenderedScene& s, std::size_t hidden) {
    DropletField f;
    for (std::size_t i = 0; i < hidden; ++i) {
        const Box& b = s.truth.boxes[i];
        Droplet d;
        d.center = {b.x + b.w / 2.0, b.y + b.h / 2.0};
        d.radius = std::hypot(b.w / 2.0, b.h / 2.0) + 1.0;
        d.magnification = 2.5;
        d.blur_sigma = 1.5;
        f.droplets.push_back(d);
    }
    return apply_corruption(s.image, f);
}

}  // namespace

TEST(Cli, TwoTrioFixtureAndPerfectPredictions) {
    TempDir dir("cli_fixture");
    const auto data = dir.path() / "data";
    const auto pred = dir.path() / "pred";
    fs::create_directories(data);
    fs::create_directories(pred);
    const std::array<std::pair<int, int>, 2> cars_hidden{{{4, 4}, {2, 1}}};
    for (std::size_t i = 0; i < 2; ++i) {
        const auto [cars, hidden] = cars_hidden[i];
        const auto s = render_scene({cars, "road", 100 + i, 1, 0.04}, {64, 64});
        const std::string id = i == 0 ? "a" : "b";
        write_png(data / (id + "_rain.png"), occlude(s, hidden));
        write_png(data / (id + "_clear.png"), s.image);
        write_png(pred / (id + "_pred.png"), s.image);
    }
    const auto cfg = dir.path() / "scale1.json";
    write_json_file(cfg, {{"synth", {{"glyph_scale", 1}}}});
    const auto r = run("eval --config " + q(cfg) + " --predicted-dir " + q(pred) + " --data " + q(data) + " --out " +
                       q(dir.path() / "report"));
    ASSERT_EQ(r.code, 0) << r.out;
    EXPECT_NE(r.out.find("term1 0.2500  term2 1.0000"), std::string::npos) << r.out;
    const auto report = read_json_file(dir.path() / "report" / "report.json");
    EXPECT_EQ(report["scores"]["term1"].get<double>(), 0.25);
    EXPECT_EQ(report["scores"]["term2"].get<double>(), 1.0);
}

TEST(Cli, EvalErrors) {
    TempDir dir("cli_eval_err");
    const auto data = dir.path() / "data";
    fs::create_directories(data);
    write_png(data / "a_rain.png", RasterImage(16, 16, 0.3));
    write_png(data / "a_clear.png", RasterImage(16, 16, 0.3));
    fs::create_directories(dir.path() / "pred");
    write_png(dir.path() / "pred" / "a_pred.png", RasterImage(16, 16, 0.3));
    const std::string base = "eval --predicted-dir " + q(dir.path() / "pred") + " --data " + q(data) + " --out " +
                             q(dir.path() / "r");
    const auto skipped = run(base);
    EXPECT_EQ(skipped.code, 2);
    EXPECT_NE(skipped.out.find("AllTriosSkipped"), std::string::npos);
    const auto unavailable = run(base + " --detector external");
    EXPECT_EQ(unavailable.code, 2);
    EXPECT_NE(unavailable.out.find("DetectorUnavailable"), std::string::npos);
    EXPECT_EQ(run("eval --data " + q(data) + " --out " + q(dir.path() / "r")).code, 1);
}
