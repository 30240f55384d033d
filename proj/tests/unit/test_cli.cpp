#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "cli.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  std::ostringstream out, err;
  int code = affect::cli::dispatch(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class CliTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    root_ = fs::temp_directory_path() / "affect_test_cli";
    fs::remove_all(root_);
    fs::create_directories(root_);
    std::ofstream cfg(root_ / "tiny.cfg");
    cfg << "model_dim=8\ntcn_channels=8\ntcn_dilations=1,2\nenc_depth=1\nenc_heads=2\n"
           "ffn_dim=16\nhead_hidden=8\nwindow=40\nstride=20\nbatch_size=4\nepochs=2\nlr=0.002\n";
    auto r = run({"gen-synthetic", "--out", (root_ / "data").string(), "--num-videos", "4", "--frames", "80",
                  "--feature-dim", "12", "--folds", "2"});
    ASSERT_EQ(r.code, 0) << r.err;
  }
  static fs::path root_;
};
fs::path CliTest::root_;

}  // namespace

TEST(Cli, HelpExitsZero) {
  auto r = run({"--help"});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("gen-synthetic"), std::string::npos);
  EXPECT_EQ(run({"train", "--help"}).code, 0);
}

TEST(Cli, UsageErrorsExitOne) {
  auto r = run({"train", "--task", "va", "--bogus"});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("--bogus"), std::string::npos);
  EXPECT_EQ(run({}).code, 1);
  EXPECT_EQ(run({"train"}).code, 1);
}

TEST_F(CliTest, GeneratedDatasetLayout) {
  auto data = root_ / "data";
  for (const char* p : {"annotations/VA", "annotations/EXPR", "annotations/AU", "features", "folds.txt",
                        "generator.json", "manifest.json"})
    EXPECT_TRUE(fs::exists(data / p)) << p;
  auto manifest = json::parse(slurp(data / "manifest.json"));
  EXPECT_EQ(manifest["command"], "gen-synthetic");
  EXPECT_EQ(manifest["seed"], 7);
  EXPECT_TRUE(manifest["versions"].contains("compiler"));
}

TEST_F(CliTest, GenerationIsBitExact) {
  auto again = root_ / "data_again";
  auto r = run({"gen-synthetic", "--out", again.string(), "--num-videos", "4", "--frames", "80", "--feature-dim",
                "12", "--folds", "2"});
  ASSERT_EQ(r.code, 0) << r.err;
  for (const auto& e : fs::recursive_directory_iterator(root_ / "data")) {
    if (!e.is_regular_file()) continue;
    auto rel = fs::relative(e.path(), root_ / "data");
    if (rel == "manifest.json") continue;
    EXPECT_EQ(slurp(e.path()), slurp(again / rel)) << rel;
  }
}

TEST_F(CliTest, TrainPredictEvaluate) {
  auto run_dir = root_ / "run_va";
  auto train = run({"train", "--task", "va", "--data", (root_ / "data").string(), "--config",
                    (root_ / "tiny.cfg").string(), "--out", run_dir.string(), "--seed", "3"});
  ASSERT_EQ(train.code, 0) << train.err;
  for (const char* p : {"checkpoint.ckpt", "train_log.csv", "metrics.json", "manifest.json"})
    EXPECT_TRUE(fs::exists(run_dir / p)) << p;
  auto manifest = json::parse(slurp(run_dir / "manifest.json"));
  EXPECT_EQ(manifest["seed"], 3);
  EXPECT_EQ(manifest["config"]["window"], "40");

  auto pred_dir = root_ / "pred_va";
  auto pred = run({"predict", "--checkpoint", (run_dir / "checkpoint.ckpt").string(), "--data",
                   (root_ / "data").string(), "--out", pred_dir.string()});
  ASSERT_EQ(pred.code, 0) << pred.err;
  EXPECT_TRUE(fs::exists(pred_dir / "VA" / "video00.txt"));

  auto eval = run({"evaluate", "--task", "va", "--pred", pred_dir.string(), "--gold", (root_ / "data").string()});
  ASSERT_EQ(eval.code, 0) << eval.err;
  auto j = json::parse(eval.out);
  EXPECT_TRUE(j.contains("ccc_v"));
  EXPECT_GE(j["ccc_v"].get<double>(), -1.0);
  EXPECT_LE(j["ccc_v"].get<double>(), 1.0);

  auto again_dir = root_ / "run_va_again";
  auto again = run({"train", "--task", "va", "--data", (root_ / "data").string(), "--config",
                    (root_ / "tiny.cfg").string(), "--out", again_dir.string(), "--seed", "3"});
  ASSERT_EQ(again.code, 0);
  EXPECT_EQ(slurp(run_dir / "checkpoint.ckpt"), slurp(again_dir / "checkpoint.ckpt"));
  EXPECT_EQ(slurp(run_dir / "train_log.csv"), slurp(again_dir / "train_log.csv"));
}

TEST_F(CliTest, EvaluatingGoldAgainstItselfIsPerfect) {
  auto gold = (root_ / "data").string();
  auto expr = run({"evaluate", "--task", "expr", "--pred", gold, "--gold", gold});
  ASSERT_EQ(expr.code, 0) << expr.err;
  auto j = json::parse(expr.out);
  double f1 = j["macro_f1"].get<double>();
  // Classes absent from the gold labels score 0.
  EXPECT_GT(f1, 0.0);
  for (double c : j["per_class"]) EXPECT_TRUE(c == 0.0 || c == 1.0);
  auto au = run({"evaluate", "--task", "au", "--pred", gold, "--gold", gold});
  ASSERT_EQ(au.code, 0) << au.err;
  for (double c : json::parse(au.out)["per_class"]) EXPECT_TRUE(c == 0.0 || c == 1.0);
  auto va = run({"evaluate", "--task", "va", "--pred", gold, "--gold", gold, "--per-video"});
  ASSERT_EQ(va.code, 0) << va.err;
  EXPECT_NEAR(json::parse(va.out)["ccc_v"].get<double>(), 1.0, 1e-12);
}

TEST_F(CliTest, ValidationErrorsExitOne) {
  auto bad = root_ / "bad.cfg";
  std::ofstream(bad) << "window=10\nstride=20\n";
  auto r = run({"train", "--task", "va", "--data", (root_ / "data").string(), "--config", bad.string(), "--out",
                (root_ / "bad_run").string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_EQ(run({"train", "--task", "valence", "--data", (root_ / "data").string()}).code, 1);
}

TEST_F(CliTest, MissingDataExitsTwo) {
  auto r = run({"train", "--task", "va", "--data", (root_ / "nowhere").string(), "--out", (root_ / "x").string()});
  EXPECT_EQ(r.code, 2);
}

TEST_F(CliTest, RunFoldsReport) {
  auto dir = root_ / "folds";
  auto r = run({"run-folds", "--data", (root_ / "data").string(), "--k", "2", "--tasks", "va", "--config",
                (root_ / "tiny.cfg").string(), "--epochs", "1", "--out", dir.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  auto j = json::parse(r.out);
  EXPECT_EQ(j["k"], 2);
  EXPECT_TRUE(fs::exists(dir / "folds_report.json"));
  EXPECT_TRUE(fs::exists(dir / "folds_table.txt"));
  EXPECT_EQ(json::parse(slurp(dir / "manifest.json"))["config"]["epochs"], "1");
}

TEST_F(CliTest, MaeCommands) {
  auto pre = root_ / "mae";
  auto r = run({"pretrain-mae", "--num-images", "8", "--batch-size", "4", "--steps", "3", "--lr", "0.001",
                "--out", pre.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  auto j = json::parse(r.out);
  EXPECT_EQ(j["steps"], 3);
  EXPECT_TRUE(fs::exists(pre / "mae.ckpt"));
  EXPECT_TRUE(fs::exists(pre / "pretrain_log.csv"));

  auto ft = root_ / "ft";
  r = run({"finetune-mae", "--checkpoint", (pre / "mae.ckpt").string(), "--num-images", "8", "--batch-size", "4",
           "--steps", "2", "--out", ft.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(json::parse(r.out).contains("train_accuracy"));

  auto frames = root_ / "frames";
  r = run({"gen-synthetic", "--out", frames.string(), "--num-videos", "2", "--frames", "3", "--folds", "2", "--render-frames"});
  ASSERT_EQ(r.code, 0) << r.err;
  auto feats = root_ / "feats";
  r = run({"extract-features", "--checkpoint", (ft / "classifier.ckpt").string(), "--frames",
           (frames / "frames").string(), "--out", feats.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(feats / "features" / "video00.bin"));
  EXPECT_TRUE(fs::exists(feats / "features" / "video01.bin"));
}
