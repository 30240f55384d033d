#include "affect/objectives.hpp"

#include <algorithm>
#include <cmath>

#include "affect/errors.hpp"
#include "affect/ops.hpp"

namespace affect {

double ccc(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) {
    throw ContractError("ccc: series lengths differ (" + std::to_string(x.size()) + " vs " +
                        std::to_string(y.size()) + ")");
  }
  if (x.size() < 2) throw ContractError("ccc needs at least 2 paired values");
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  // The textbook form writes cov as an unnormalized sum; both cov and the
  // variances use 1/N here so that ccc(x, x) == 1.
  double cov = 0.0, vx = 0.0, vy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    cov += (x[i] - mx) * (y[i] - my);
    vx += (x[i] - mx) * (x[i] - mx);
    vy += (y[i] - my) * (y[i] - my);
  }
  cov /= n;
  vx /= n;
  vy /= n;
  double denom = vx + vy + (mx - my) * (mx - my);
  if (denom == 0.0) {
    throw UndefinedStatisticError("ccc undefined: both series constant with equal means");
  }
  return 2.0 * cov / denom;
}

Tensor ccc_tensor(const Tensor& x, const Tensor& y) {
  if (x.numel() != y.numel()) throw ShapeError("ccc_tensor: series lengths differ");
  if (x.numel() < 2) throw ContractError("ccc needs at least 2 paired values");
  Tensor xf = reshape(x, {x.numel()});
  Tensor yf = reshape(y, {y.numel()});
  Tensor mx = mean(xf);
  Tensor my = mean(yf);
  Tensor dx = sub(xf, mx);
  Tensor dy = sub(yf, my);
  Tensor cov = mean(mul(dx, dy));
  Tensor denom = add(add(mean(square(dx)), mean(square(dy))), square(sub(mx, my)));
  if (denom.item() == 0.0) {
    throw UndefinedStatisticError("ccc undefined: both series constant with equal means");
  }
  return div(scale(cov, 2.0), denom);
}

namespace {

std::vector<std::size_t> included_rows(std::size_t n, const std::vector<bool>& mask) {
  if (!mask.empty() && mask.size() != n) {
    throw ShapeError("mask has " + std::to_string(mask.size()) + " entries for " +
                     std::to_string(n) + " rows");
  }
  std::vector<std::size_t> rows;
  rows.reserve(n);
  for (std::size_t i = 0; i < n; ++i)
    if (mask.empty() || mask[i]) rows.push_back(i);
  return rows;
}

}  // namespace

Tensor va_loss(const Tensor& pred, const Tensor& target, const std::vector<bool>& mask) {
  if (pred.rank() != 2 || pred.dim(1) != kVaDims || pred.shape() != target.shape()) {
    throw ShapeError("va_loss expects matching [N x 2] tensors, got " + shape_str(pred.shape()) +
                     " and " + shape_str(target.shape()));
  }
  auto rows = included_rows(pred.dim(0), mask);
  if (rows.empty()) throw EmptyBatchError("va_loss: every frame is masked");
  Tensor p = gather_rows(pred, rows);
  Tensor t = gather_rows(target, rows);
  Tensor valence = ccc_tensor(narrow(p, 1, 0, 1), narrow(t, 1, 0, 1));
  Tensor arousal = ccc_tensor(narrow(p, 1, 1, 1), narrow(t, 1, 1, 1));
  // mean of (1 - ccc_v) and (1 - ccc_a)
  return add_scalar(scale(add(valence, arousal), -0.5), 1.0);
}

Tensor expr_loss(const Tensor& logits, std::span<const int> class_ids,
                 const std::vector<bool>& mask) {
  if (logits.rank() != 2 || logits.dim(0) != class_ids.size()) {
    throw ShapeError("expr_loss: logits " + shape_str(logits.shape()) + " for " +
                     std::to_string(class_ids.size()) + " labels");
  }
  const std::size_t classes = logits.dim(1);
  std::vector<std::size_t> rows;
  for (auto r : included_rows(logits.dim(0), mask)) {
    int id = class_ids[r];
    if (id == kInvalidLabel) continue;
    if (id < 0 || static_cast<std::size_t>(id) >= classes) {
      throw ContractError("expr_loss: class id " + std::to_string(id) + " outside [0, " +
                          std::to_string(classes) + ")");
    }
    rows.push_back(r);
  }
  if (rows.empty()) throw EmptyBatchError("expr_loss: every frame is masked");
  Tensor logp = log_softmax(gather_rows(logits, rows), -1);
  std::vector<double> onehot(rows.size() * classes, 0.0);
  for (std::size_t i = 0; i < rows.size(); ++i)
    onehot[i * classes + static_cast<std::size_t>(class_ids[rows[i]])] = 1.0;
  Tensor picked = mul(logp, Tensor::from_vector({rows.size(), classes}, std::move(onehot)));
  return scale(sum(picked), -1.0 / static_cast<double>(rows.size()));
}

Tensor au_loss(const Tensor& logits, std::span<const int> targets, const std::vector<bool>& mask) {
  if (logits.rank() != 2 || logits.numel() != targets.size()) {
    throw ShapeError("au_loss: logits " + shape_str(logits.shape()) + " for " +
                     std::to_string(targets.size()) + " targets");
  }
  const std::size_t units = logits.dim(1);
  auto rows = included_rows(logits.dim(0), mask);
  std::vector<std::size_t> entries;
  for (auto r : rows) {
    for (std::size_t u = 0; u < units; ++u) {
      int y = targets[r * units + u];
      if (y == kInvalidLabel) continue;
      if (y != 0 && y != 1) throw ContractError("au_loss: target " + std::to_string(y) + " not 0/1");
      entries.push_back(r * units + u);
    }
  }
  if (entries.empty()) throw EmptyBatchError("au_loss: every entry is masked");
  auto x = logits.data();
  const double inv_n = 1.0 / static_cast<double>(entries.size());
  double total = 0.0;
  std::vector<double> y_of(entries.size());
  for (std::size_t e = 0; e < entries.size(); ++e) {
    double xv = x[entries[e]];
    double yv = targets[entries[e]];
    y_of[e] = yv;
    total += std::max(xv, 0.0) - xv * yv + std::log1p(std::exp(-std::abs(xv)));
  }
  return detail::make_result(
      {1}, {total * inv_n}, {logits}, "au_loss",
      [entries = std::move(entries), y_of = std::move(y_of), inv_n](detail::Node& self) {
        auto& in = *self.inputs[0];
        if (!in.requires_grad) return;
        auto& g = in.grad_buffer();
        for (std::size_t e = 0; e < entries.size(); ++e) {
          double xv = in.data[entries[e]];
          double s = xv >= 0 ? 1.0 / (1.0 + std::exp(-xv)) : std::exp(xv) / (1.0 + std::exp(xv));
          g[entries[e]] += self.grad[0] * (s - y_of[e]) * inv_n;
        }
      });
}

namespace {

double f1_from_counts(double tp, double fp, double fn) {
  double precision = (tp + fp) > 0 ? tp / (tp + fp) : 0.0;
  double recall = (tp + fn) > 0 ? tp / (tp + fn) : 0.0;
  return (precision + recall) > 0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
}

F1Result finish(std::vector<double> per_class) {
  F1Result r;
  double total = 0.0;
  for (double f : per_class) total += f;
  r.macro = per_class.empty() ? 0.0 : total / static_cast<double>(per_class.size());
  r.per_class = std::move(per_class);
  return r;
}

}  // namespace

F1Result macro_f1(std::span<const int> predicted, std::span<const int> truth,
                  std::size_t num_classes) {
  if (predicted.size() != truth.size()) throw ContractError("macro_f1: length mismatch");
  std::vector<double> tp(num_classes, 0), fp(num_classes, 0), fn(num_classes, 0);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    int t = truth[i];
    int p = predicted[i];
    if (t == kInvalidLabel) continue;
    if (t < 0 || p < 0 || static_cast<std::size_t>(t) >= num_classes ||
        static_cast<std::size_t>(p) >= num_classes) {
      throw ContractError("macro_f1: label out of range");
    }
    if (p == t) {
      tp[static_cast<std::size_t>(t)] += 1;
    } else {
      fp[static_cast<std::size_t>(p)] += 1;
      fn[static_cast<std::size_t>(t)] += 1;
    }
  }
  std::vector<double> per(num_classes);
  for (std::size_t c = 0; c < num_classes; ++c) per[c] = f1_from_counts(tp[c], fp[c], fn[c]);
  return finish(std::move(per));
}

F1Result au_f1_decisions(std::span<const int> decisions, std::span<const int> targets,
                         std::size_t units) {
  if (decisions.size() != targets.size() || units == 0 || targets.size() % units != 0) {
    throw ContractError("au_f1: decisions/targets must both be [N x units]");
  }
  std::vector<double> tp(units, 0), fp(units, 0), fn(units, 0);
  for (std::size_t i = 0; i < targets.size(); ++i) {
    int y = targets[i];
    if (y == kInvalidLabel) continue;
    std::size_t u = i % units;
    bool pos = decisions[i] == 1;
    if (pos && y == 1) tp[u] += 1;
    if (pos && y == 0) fp[u] += 1;
    if (!pos && y == 1) fn[u] += 1;
  }
  std::vector<double> per(units);
  for (std::size_t u = 0; u < units; ++u) per[u] = f1_from_counts(tp[u], fp[u], fn[u]);
  return finish(std::move(per));
}

F1Result au_f1(std::span<const double> logits, std::span<const int> targets, std::size_t units,
               double threshold) {
  if (threshold <= 0.0 || threshold >= 1.0) throw ConfigError("au_f1 threshold must be in (0, 1)");
  std::vector<int> decisions(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    double p = 1.0 / (1.0 + std::exp(-logits[i]));
    decisions[i] = p >= threshold ? 1 : 0;
  }
  return au_f1_decisions(decisions, targets, units);
}

double MetricReport::primary() const {
  if (task == Task::VA) return 0.5 * (ccc_valence.value_or(0.0) + ccc_arousal.value_or(0.0));
  return macro_f1.value_or(0.0);
}

nlohmann::json MetricReport::to_json() const {
  auto opt = [](const std::optional<double>& v) -> nlohmann::json {
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
  };
  return {{"task", task_name(task)},       {"fold", fold},
          {"ccc_v", opt(ccc_valence)},     {"ccc_a", opt(ccc_arousal)},
          {"macro_f1", opt(macro_f1)},     {"per_class", per_class}};
}

MetricReport MetricReport::from_json(const nlohmann::json& j) {
  MetricReport r;
  r.task = parse_task(j.at("task").get<std::string>());
  r.fold = j.at("fold").get<int>();
  auto opt = [&](const char* key) -> std::optional<double> {
    if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
    return j.at(key).get<double>();
  };
  r.ccc_valence = opt("ccc_v");
  r.ccc_arousal = opt("ccc_a");
  r.macro_f1 = opt("macro_f1");
  r.per_class = j.value("per_class", std::vector<double>{});
  return r;
}

MetricReport score_frames(Task task, const ScoredFrames& frames, bool outputs_are_decisions) {
  MetricReport report;
  report.task = task;
  const std::size_t lw = task_label_width(task);
  const std::size_t n = frames.labels.size() / lw;
  const std::size_t ow = n ? frames.outputs.size() / n : 0;
  if (n == 0 || frames.outputs.size() != n * ow) {
    throw ContractError("score_frames: outputs and labels disagree on frame count");
  }
  switch (task) {
    case Task::VA: {
      std::vector<double> pv, pa, tv, ta;
      for (std::size_t i = 0; i < n; ++i) {
        double v = frames.labels[i * 2], a = frames.labels[i * 2 + 1];
        if (v < -1.0 || v > 1.0 || a < -1.0 || a > 1.0) continue;
        pv.push_back(frames.outputs[i * ow]);
        pa.push_back(frames.outputs[i * ow + 1]);
        tv.push_back(v);
        ta.push_back(a);
      }
      report.ccc_valence = ccc(pv, tv);
      report.ccc_arousal = ccc(pa, ta);
      report.per_class = {*report.ccc_valence, *report.ccc_arousal};
      break;
    }
    case Task::Expr: {
      std::vector<int> pred, truth;
      for (std::size_t i = 0; i < n; ++i) {
        int t = static_cast<int>(frames.labels[i]);
        if (t == kInvalidLabel) continue;
        int p = 0;
        if (outputs_are_decisions) {
          p = static_cast<int>(frames.outputs[i * ow]);
        } else {
          auto row = frames.outputs.begin() + static_cast<std::ptrdiff_t>(i * ow);
          p = static_cast<int>(std::max_element(row, row + static_cast<std::ptrdiff_t>(ow)) - row);
        }
        pred.push_back(p);
        truth.push_back(t);
      }
      auto f1 = macro_f1(pred, truth, kExprClasses);
      report.macro_f1 = f1.macro;
      report.per_class = f1.per_class;
      break;
    }
    case Task::AU: {
      std::vector<int> targets(frames.labels.size());
      for (std::size_t i = 0; i < targets.size(); ++i) targets[i] = static_cast<int>(frames.labels[i]);
      F1Result f1;
      if (outputs_are_decisions) {
        std::vector<int> dec(frames.outputs.size());
        for (std::size_t i = 0; i < dec.size(); ++i) dec[i] = frames.outputs[i] >= 0.5 ? 1 : 0;
        f1 = au_f1_decisions(dec, targets, kAuUnits);
      } else {
        f1 = au_f1(frames.outputs, targets, kAuUnits);
      }
      report.macro_f1 = f1.macro;
      report.per_class = f1.per_class;
      break;
    }
  }
  return report;
}

MetricReport score_per_video(Task task, const std::vector<ScoredFrames>& videos,
                             bool outputs_are_decisions) {
  if (videos.empty()) throw ContractError("score_per_video: no videos");
  if (task != Task::VA) {
    ScoredFrames all;
    for (const auto& v : videos) {
      all.outputs.insert(all.outputs.end(), v.outputs.begin(), v.outputs.end());
      all.labels.insert(all.labels.end(), v.labels.begin(), v.labels.end());
    }
    return score_frames(task, all, outputs_are_decisions);
  }
  double v_sum = 0.0, a_sum = 0.0;
  for (const auto& v : videos) {
    auto r = score_frames(task, v, outputs_are_decisions);
    v_sum += *r.ccc_valence;
    a_sum += *r.ccc_arousal;
  }
  MetricReport report;
  report.task = task;
  report.ccc_valence = v_sum / static_cast<double>(videos.size());
  report.ccc_arousal = a_sum / static_cast<double>(videos.size());
  report.per_class = {*report.ccc_valence, *report.ccc_arousal};
  return report;
}

}  // namespace affect
