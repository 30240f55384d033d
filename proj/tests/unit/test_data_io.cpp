#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "affect/data_io.hpp"
#include "affect/errors.hpp"
#include "affect/objectives.hpp"

using namespace affect;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / "affect_test_data_io" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

TaskLabels parse(const std::string& text, Task task) {
  std::istringstream in(text);
  return parse_annotation(in, task, "mem.txt");
}

SyntheticSpec small_spec(double noise = 0.1) {
  SyntheticSpec s;
  s.num_videos = 4;
  s.frames_per_video = 120;
  s.noise_std = noise;
  return s;
}

}  // namespace

TEST(Annotation, ValenceArousalLine) {
  auto l = parse(annotation_header(Task::VA) + "\n0.5,-0.3\n", Task::VA);
  ASSERT_EQ(l.frames(), 1u);
  EXPECT_EQ(l.at(0, 0), 0.5);
  EXPECT_EQ(l.at(0, 1), -0.3);
  EXPECT_TRUE(l.frame_valid(0));
}

TEST(Annotation, ExpressionSentinelMarksFrameInvalid) {
  auto l = parse("Neutral,Anger\n3\n-1\n\n7\n", Task::Expr);
  ASSERT_EQ(l.frames(), 3u);
  EXPECT_EQ(l.validity(), (std::vector<bool>{true, false, true}));
}

TEST(Annotation, VaSentinel) {
  auto l = parse("valence,arousal\n-5,-5\n-1,1\n", Task::VA);
  EXPECT_FALSE(l.frame_valid(0));
  EXPECT_TRUE(l.frame_valid(1));
}

TEST(Annotation, AuWithMissingFieldReportsLine) {
  std::string text = annotation_header(Task::AU) + "\n0,0,0,0,0,0,0,0,0,0,0,0\n1,0,0,0,0,0,0,0,0,0,0\n";
  try {
    parse(text, Task::AU);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
    EXPECT_EQ(e.file(), "mem.txt");
  }
}

TEST(Annotation, RejectsOutOfRangeValues) {
  EXPECT_THROW(parse("h\n1.5,0\n", Task::VA), ParseError);
  EXPECT_THROW(parse("h\n8\n", Task::Expr), ParseError);
  EXPECT_THROW(parse("h\n2,0,0,0,0,0,0,0,0,0,0,0\n", Task::AU), ParseError);
  EXPECT_THROW(parse("h\nabc,0\n", Task::VA), ParseError);
  EXPECT_THROW(parse("", Task::VA), ParseError);
}

TEST(Annotation, AnyAuSentinelInvalidatesFrame) {
  auto l = parse("h\n1,0,0,0,0,0,0,0,0,0,0,-1\n", Task::AU);
  EXPECT_FALSE(l.frame_valid(0));
}

TEST(Annotation, FileRoundTripForEveryTask) {
  auto dir = fresh_dir("roundtrip");
  TaskLabels va{Task::VA, {0.123456789, -1.0, 1.0, 0.0, -5.0, -5.0}};
  TaskLabels ex{Task::Expr, {0, 7, -1, 4}};
  TaskLabels au{Task::AU, std::vector<double>(24, 1.0)};
  au.values[5] = 0;
  au.values[13] = -1;
  for (const auto& l : {va, ex, au}) {
    auto path = dir / (task_name(l.task) + ".txt");
    write_annotation_file(path, l);
    auto back = read_annotation_file(path, l.task);
    ASSERT_EQ(back.values.size(), l.values.size());
    for (std::size_t i = 0; i < l.values.size(); ++i) EXPECT_NEAR(back.values[i], l.values[i], 1e-6);
    EXPECT_EQ(back.validity(), l.validity());
  }
}

TEST(Folds, PartitionIntoEqualParts) {
  std::vector<std::string> ids;
  for (int i = 0; i < 10; ++i) ids.push_back("v" + std::to_string(i));
  auto folds = assign_folds(ids, 5, 3);
  EXPECT_EQ(folds.size(), 10u);
  std::vector<int> counts(5, 0);
  for (auto& [id, f] : folds) {
    ASSERT_GE(f, 0);
    ASSERT_LT(f, 5);
    ++counts[f];
  }
  for (int c : counts) EXPECT_EQ(c, 2);
  EXPECT_EQ(assign_folds(ids, 5, 3), folds);
  std::vector<std::string> reversed(ids.rbegin(), ids.rend());
  EXPECT_EQ(assign_folds(reversed, 5, 3), folds);
}

TEST(Folds, TooFewVideos) {
  EXPECT_THROW(assign_folds({"a", "b", "c"}, 5, 0), ConfigError);
  EXPECT_THROW(assign_folds({"a"}, 0, 0), ConfigError);
}

TEST(Folds, FileRoundTrip) {
  auto dir = fresh_dir("folds");
  std::map<std::string, int> folds{{"a", 0}, {"b", 1}, {"c", 0}};
  write_folds(dir / "folds.txt", folds);
  EXPECT_EQ(read_folds(dir / "folds.txt"), folds);
}

TEST(Synthetic, ShapesAndLabelRanges) {
  auto ds = generate_synthetic(small_spec());
  ASSERT_EQ(ds.data.videos.size(), 4u);
  for (const auto& v : ds.data.videos) {
    EXPECT_EQ(v.features.shape(), (Shape{120, 32}));
    for (double x : v.labels(Task::VA).values) {
      EXPECT_GE(x, -1.0);
      EXPECT_LE(x, 1.0);
    }
    for (double x : v.labels(Task::Expr).values) EXPECT_TRUE(x >= 0 && x <= 7 && x == std::floor(x));
    for (double x : v.labels(Task::AU).values) EXPECT_TRUE(x == 0 || x == 1);
  }
  EXPECT_EQ(ds.truth.mixing.rows, 32u);
  EXPECT_EQ(ds.truth.mixing.cols, 4u);
  EXPECT_EQ(ds.data.folds.size(), 4u);
}

TEST(Synthetic, LabelsVarySmoothly) {
  auto ds = generate_synthetic(small_spec());
  for (const auto& v : ds.data.videos) {
    const auto& va = v.labels(Task::VA);
    for (std::size_t dim = 0; dim < 2; ++dim) {
      double sum = 0, sq = 0;
      std::size_t n = va.frames() - 1;
      for (std::size_t f = 0; f < n; ++f) {
        double d = va.at(f + 1, dim) - va.at(f, dim);
        sum += d;
        sq += d * d;
      }
      double sd = std::sqrt(sq / n - (sum / n) * (sum / n));
      EXPECT_LT(sd, 0.2);
    }
  }
}

TEST(Synthetic, ExpressionClassesAllOccur) {
  auto spec = small_spec();
  spec.num_videos = 10;
  spec.frames_per_video = 600;
  auto ds = generate_synthetic(spec);
  std::set<int> seen;
  for (const auto& v : ds.data.videos)
    for (double x : v.labels(Task::Expr).values) seen.insert(static_cast<int>(x));
  EXPECT_EQ(seen.size(), 8u);
}

TEST(Synthetic, OracleIsStrongAndExactWithoutNoise) {
  auto noisy = generate_synthetic(small_spec());
  EXPECT_GE(noisy.oracle.ccc_valence, 0.9);
  EXPECT_GE(noisy.oracle.ccc_arousal, 0.9);
  auto clean = generate_synthetic(small_spec(0.0));
  EXPECT_NEAR(clean.oracle.ccc_valence, 1.0, 1e-9);
  EXPECT_NEAR(clean.oracle.ccc_arousal, 1.0, 1e-9);
  EXPECT_NEAR(clean.oracle.expr_f1, 1.0, 1e-12);
  EXPECT_NEAR(clean.oracle.au_f1, 1.0, 1e-12);
}

TEST(Synthetic, OraclePredictionsMatchReportedScores) {
  auto ds = generate_synthetic(small_spec());
  ScoredFrames all;
  for (const auto& v : ds.data.videos) {
    auto out = oracle_predict(ds.truth, v.features, Task::VA);
    all.outputs.insert(all.outputs.end(), out.data().begin(), out.data().end());
    const auto& l = v.labels(Task::VA).values;
    all.labels.insert(all.labels.end(), l.begin(), l.end());
  }
  auto r = score_frames(Task::VA, all, false);
  EXPECT_NEAR(*r.ccc_valence, ds.oracle.ccc_valence, 1e-12);
}

TEST(Synthetic, SameSeedWritesIdenticalBytes) {
  auto a = fresh_dir("det_a"), b = fresh_dir("det_b");
  write_dataset(a, generate_synthetic(small_spec()).data);
  write_dataset(b, generate_synthetic(small_spec()).data);
  std::size_t files = 0;
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (!e.is_regular_file()) continue;
    auto rel = fs::relative(e.path(), a);
    ASSERT_TRUE(fs::exists(b / rel)) << rel;
    EXPECT_EQ(slurp(e.path()), slurp(b / rel)) << rel;
    ++files;
  }
  EXPECT_EQ(files, 4u * 4 + 1);
  auto other = small_spec();
  other.seed = 8;
  EXPECT_NE(generate_synthetic(other).data.videos[0].features.at(0),
            generate_synthetic(small_spec()).data.videos[0].features.at(0));
}

TEST(Synthetic, RejectsBadSpec) {
  auto s = small_spec();
  s.feature_dim = 2;
  EXPECT_THROW(generate_synthetic(s), ConfigError);
  s = small_spec(-1.0);
  EXPECT_THROW(generate_synthetic(s), ConfigError);
}

TEST(Dataset, WriteThenLoad) {
  auto dir = fresh_dir("dataset");
  auto ds = generate_synthetic(small_spec());
  write_dataset(dir, ds.data);
  auto back = load_dataset(dir);
  ASSERT_EQ(back.ids(), ds.data.ids());
  EXPECT_EQ(back.folds, ds.data.folds);
  const auto& v0 = back.videos[0];
  EXPECT_EQ(v0.features.shape(), ds.data.videos[0].features.shape());
  for (Task t : {Task::VA, Task::Expr, Task::AU}) EXPECT_TRUE(v0.has(t));
  auto seqs = load_annotations(dir, Task::AU);
  EXPECT_EQ(seqs.size(), 4u);
  EXPECT_EQ(seqs[0].labels.values, ds.data.videos[0].labels(Task::AU).values);
}

TEST(Dataset, FrameCountMismatchIsRejected) {
  auto dir = fresh_dir("mismatch");
  auto ds = generate_synthetic(small_spec());
  write_dataset(dir, ds.data);
  TaskLabels shorter{Task::Expr, {1, 2, 3}};
  write_annotation_file(dir / "annotations" / "EXPR" / (ds.data.videos[0].id + ".txt"), shorter);
  EXPECT_THROW(load_dataset(dir), ContractError);
}

TEST(Predictions, DecisionsAndProbabilities) {
  auto dir = fresh_dir("preds");
  std::vector<VideoPrediction> preds{
      {"vid", Task::Expr, Tensor::from_vector({2, 8}, {0, 0, 3, 0, 0, 0, 0, 0, 1, 0, 0, 0, 0, 0, 0, 0})},
      {"vid", Task::AU, Tensor::from_vector({1, 12}, {2, -2, 0, -0.1, 0, 0, 0, 0, 0, 0, 0, 0})},
      {"vid", Task::VA, Tensor::from_vector({1, 2}, {1.5, -0.25})},
  };
  write_predictions(preds, dir);
  EXPECT_EQ(read_annotation_file(dir / "EXPR" / "vid.txt", Task::Expr).values, (std::vector<double>{2, 0}));
  auto au = read_annotation_file(dir / "AU" / "vid.txt", Task::AU).values;
  EXPECT_EQ(au[0], 1);
  EXPECT_EQ(au[1], 0);
  EXPECT_EQ(au[2], 1);
  EXPECT_EQ(au[3], 0);
  auto va = read_annotation_file(dir / "VA" / "vid.txt", Task::VA).values;
  EXPECT_EQ(va, (std::vector<double>{1.0, -0.25}));
  std::ifstream prob(dir / "AU_prob" / "vid.txt");
  std::string header, row;
  std::getline(prob, header);
  std::getline(prob, row);
  EXPECT_NEAR(std::stod(row.substr(0, row.find(','))), 1.0 / (1.0 + std::exp(-2.0)), 1e-8);
}

TEST(ImageRenderer, PixelsInUnitRangeAndDeterministic) {
  SyntheticImageRenderer r(4, 16, 16, 5);
  std::vector<double> z{0.5, -1.0, 0.2, 0.0};
  auto a = r.render(z), b = r.render(z);
  EXPECT_EQ(a.pixels, b.pixels);
  for (double p : a.pixels) {
    EXPECT_GT(p, 0.0);
    EXPECT_LT(p, 1.0);
  }
}
