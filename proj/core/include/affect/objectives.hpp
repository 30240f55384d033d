#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "affect/task.hpp"
#include "affect/tensor.hpp"

namespace affect {

// Concordance correlation coefficient with population (1/N) moments:
//   2 cov(x, y) / (var x + var y + (mean x - mean y)^2)
// Throws UndefinedStatisticError when the denominator is zero.
double ccc(std::span<const double> x, std::span<const double> y);

// Differentiable CCC over two length-N tensors (any shape, flattened).
Tensor ccc_tensor(const Tensor& x, const Tensor& y);

// pred, target: [N x 2]. Rows with mask false are excluded. Returns the mean
// of (1 - CCC) over valence and arousal.
Tensor va_loss(const Tensor& pred, const Tensor& target, const std::vector<bool>& mask);

// logits: [N x M]; class_ids in [0, M) or -1 (excluded). Mean negative log
// softmax probability of the true class over included rows.
Tensor expr_loss(const Tensor& logits, std::span<const int> class_ids,
                 const std::vector<bool>& mask);

// logits, targets: [N x U]. Entries with mask false on their row or a -1
// target are excluded from the mean. Uses the stable fused form
//   max(x, 0) - x y + log(1 + exp(-|x|)).
Tensor au_loss(const Tensor& logits, std::span<const int> targets, const std::vector<bool>& mask);

struct F1Result {
  double macro = 0.0;
  std::vector<double> per_class;
};

// Per-class F1 = 2PR / (P + R), 0 when P + R = 0; macro is the unweighted
// mean over all num_classes, absent classes included.
F1Result macro_f1(std::span<const int> predicted, std::span<const int> truth,
                  std::size_t num_classes);

// Binary F1 per unit on sigmoid(logit) >= threshold, macro over units.
// logits and targets are [N x units] row-major; -1 targets are skipped.
F1Result au_f1(std::span<const double> logits, std::span<const int> targets, std::size_t units,
               double threshold = 0.5);
// Same, from already-thresholded 0/1 decisions.
F1Result au_f1_decisions(std::span<const int> decisions, std::span<const int> targets,
                         std::size_t units);

struct MetricReport {
  Task task = Task::VA;
  int fold = -1;
  std::optional<double> ccc_valence;
  std::optional<double> ccc_arousal;
  std::optional<double> macro_f1;
  std::vector<double> per_class;

  // CCC mean for VA, macro F1 otherwise.
  double primary() const;
  nlohmann::json to_json() const;
  static MetricReport from_json(const nlohmann::json& j);
};

// Scores per-frame predictions (VA: values in [-1,1]; Expr: logits or
// class ids; AU: logits) against labels over the concatenation of all
// frames whose mask is true.
struct ScoredFrames {
  std::vector<double> outputs;  // [N x task_output_dim] or [N x 1] for decided ids
  std::vector<double> labels;   // [N x task_label_width]
};
MetricReport score_frames(Task task, const ScoredFrames& frames, bool outputs_are_decisions);

// VA only: mean of per-video CCC instead of CCC over the concatenation.
// Other tasks are pooled exactly as score_frames does.
MetricReport score_per_video(Task task, const std::vector<ScoredFrames>& videos,
                             bool outputs_are_decisions);

}  // namespace affect
