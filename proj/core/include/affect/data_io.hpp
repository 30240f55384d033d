#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "affect/image.hpp"
#include "affect/ops.hpp"
#include "affect/segmentation.hpp"
#include "affect/task.hpp"

namespace affect {

// One video: features plus whichever label tracks are available.
struct Video {
  std::string id;
  Tensor features;  // [frames x dim]
  std::optional<TaskLabels> va;
  std::optional<TaskLabels> expr;
  std::optional<TaskLabels> au;

  std::size_t frames() const { return features.dim(0); }
  bool has(Task task) const;
  const TaskLabels& labels(Task task) const;
  void set_labels(TaskLabels labels);
};

FrameSequence make_sequence(const Video& video, Task task);

struct Dataset {
  std::vector<Video> videos;
  std::map<std::string, int> folds;  // video id -> fold

  const Video& video(const std::string& id) const;
  std::vector<std::string> ids() const;
  // Sequences for task, restricted to ids when non-empty.
  std::vector<FrameSequence> sequences(Task task, const std::vector<std::string>& ids = {}) const;
};

// Annotation text files, one per video: a header line, then one
// comma-separated record per frame.
//   VA:   "valence,arousal" floats in [-1, 1], -5 marks an invalid frame
//   EXPR: one class id 0..7, -1 invalid
//   AU:   twelve 0/1 values, -1 invalid
TaskLabels parse_annotation(std::istream& in, Task task, const std::string& source);
TaskLabels read_annotation_file(const std::filesystem::path& path, Task task);
void write_annotation_file(const std::filesystem::path& path, const TaskLabels& labels);
std::string annotation_header(Task task);

// Reads <root>/<TASK>/<video>.txt for every video, sorted by id.
std::map<std::string, TaskLabels> load_annotation_dir(const std::filesystem::path& root, Task task);

// Reads <root>/annotations/<TASK>/*.txt with matching <root>/features/*.bin.
std::vector<FrameSequence> load_annotations(const std::filesystem::path& root, Task task);

// Full dataset root: annotations/{VA,EXPR,AU}/, features/, folds.txt.
void write_dataset(const std::filesystem::path& root, const Dataset& data);
Dataset load_dataset(const std::filesystem::path& root);

// folds.txt: "video_id,fold" per line.
void write_folds(const std::filesystem::path& path, const std::map<std::string, int>& folds);
std::map<std::string, int> read_folds(const std::filesystem::path& path);
// Shuffles the sorted ids with seed and deals them round-robin into k folds.
std::map<std::string, int> assign_folds(std::vector<std::string> ids, std::size_t k,
                                        std::uint64_t seed);

// Raw model outputs reassembled per frame: VA values, Expr logits or AU logits.
struct VideoPrediction {
  std::string video_id;
  Task task = Task::VA;
  Tensor values;  // [frames x task_output_dim]
};

// Writes <dir>/<TASK>/<video>.txt in annotation format (Expr as argmax ids,
// AU thresholded at 0.5) and, for AU, probabilities in <dir>/AU_prob/.
void write_predictions(std::span<const VideoPrediction> preds, const std::filesystem::path& dir,
                       bool au_probabilities = true);

struct SyntheticSpec {
  std::size_t num_videos = 10;
  std::size_t frames_per_video = 600;
  std::size_t latent_dim = 4;
  std::size_t feature_dim = 32;
  double noise_std = 0.1;  // 0 gives noiseless features
  std::uint64_t seed = 7;

  void validate() const;
};

struct Matrix {
  std::size_t rows = 0, cols = 0;
  std::vector<double> values;  // row-major

  double at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
  nlohmann::json to_json() const;
};

// Everything needed to recompute labels and the oracle predictor.
struct GeneratorTruth {
  Matrix mixing;      // features = mixing . z + noise   [feature_dim x latent]
  Matrix valence_arousal;  // VA = tanh(. z)             [2 x latent]
  Matrix expression;  // Expr = argmax(. z)              [8 x latent]
  Matrix action_units;  // AU = 1[. z > 0]               [12 x latent]
  Matrix unmixing;    // pseudo-inverse of mixing        [latent x feature_dim]
  std::vector<Matrix> latents;  // per video [frames x latent]
};

struct OracleScores {
  double ccc_valence = 0.0;
  double ccc_arousal = 0.0;
  double expr_f1 = 0.0;
  double au_f1 = 0.0;
  nlohmann::json to_json() const;
};

struct SyntheticDataset {
  SyntheticSpec spec;
  Dataset data;
  GeneratorTruth truth;
  OracleScores oracle;  // over all videos
};

// Latent z(t): z <- 0.95 z + 0.05 eta (eta scaled for unit stationary
// variance), then exponentially smoothed. Features are a fixed random linear
// mix of z plus Gaussian noise; labels are pointwise functions of z.
SyntheticDataset generate_synthetic(const SyntheticSpec& spec);

// Oracle outputs from features via the unmixing matrix, in the same form the
// model emits (VA values, Expr logits, AU logits).
Tensor oracle_predict(const GeneratorTruth& truth, const Tensor& features, Task task);
// Oracle scores over the listed videos (all when empty).
OracleScores oracle_scores(const SyntheticDataset& ds, const std::vector<std::string>& ids = {});

void write_generator_json(const std::filesystem::path& path, const SyntheticDataset& ds);

// Fixed smooth random basis images; render(z) = sigmoid(gain * sum z_j B_j).
class SyntheticImageRenderer {
 public:
  SyntheticImageRenderer(std::size_t latent_dim, std::size_t height, std::size_t width,
                         std::uint64_t seed);
  Image render(std::span<const double> z) const;
  Image render_random(Rng& rng) const;
  std::size_t latent_dim() const { return basis_.size(); }

 private:
  std::size_t height_, width_;
  std::vector<std::vector<double>> basis_;
};

}  // namespace affect
