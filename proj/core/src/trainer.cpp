#include "affect/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>

#include "affect/errors.hpp"
#include "affect/ops.hpp"

namespace affect {

void TrainConfig::validate() const {
  optim.validate();
  segmentation.validate();
  model.validate();
}

void TrainConfig::to_keyvalues(KeyValues& kv) const {
  kv.set("lr", optim.lr_peak);
  kv.set("weight_decay", optim.weight_decay);
  kv.set("beta1", optim.beta1);
  kv.set("beta2", optim.beta2);
  kv.set("eps", optim.eps);
  kv.set("batch_size", optim.batch_size);
  kv.set("epochs", optim.epochs);
  kv.set("dropout", optim.dropout);
  kv.set("grad_clip", optim.grad_clip);
  kv.set("window", segmentation.window);
  kv.set("stride", segmentation.stride);
  kv.set("seed", static_cast<std::size_t>(seed));
  model.to_keyvalues(kv);
}

TrainConfig TrainConfig::from_keyvalues(const KeyValues& kv) {
  TrainConfig cfg;
  auto& o = cfg.optim;
  o.lr_peak = kv.get_double("lr", o.lr_peak);
  o.weight_decay = kv.get_double("weight_decay", o.weight_decay);
  o.beta1 = kv.get_double("beta1", o.beta1);
  o.beta2 = kv.get_double("beta2", o.beta2);
  o.eps = kv.get_double("eps", o.eps);
  o.batch_size = kv.get_size("batch_size", o.batch_size);
  o.epochs = kv.get_size("epochs", o.epochs);
  o.dropout = kv.get_double("dropout", o.dropout);
  o.grad_clip = kv.get_double("grad_clip", o.grad_clip);
  cfg.segmentation.window = kv.get_size("window", cfg.segmentation.window);
  cfg.segmentation.stride = kv.get_size("stride", cfg.segmentation.stride);
  cfg.seed = kv.get_size("seed", 0);
  cfg.model = TemporalModelConfig::from_keyvalues(kv);
  cfg.validate();
  return cfg;
}

KeyValues TrainConfig::desk_keyvalues() {
  KeyValues kv;
  kv.set("lr", 2e-3);
  kv.set("weight_decay", 1e-5);
  kv.set("batch_size", std::size_t{8});
  kv.set("epochs", std::size_t{20});
  kv.set("dropout", 0.1);
  kv.set("window", std::size_t{100});
  kv.set("stride", std::size_t{50});
  kv.set("model_dim", std::size_t{32});
  kv.set("tcn_kernels", std::string("3"));
  kv.set("tcn_dilations", std::string("1,2,4,8"));
  kv.set("tcn_channels", std::string("32"));
  kv.set("enc_depth", std::size_t{2});
  kv.set("enc_heads", std::size_t{4});
  kv.set("ffn_dim", std::size_t{64});
  kv.set("head_hidden", std::size_t{32});
  return kv;
}

TrainConfig TrainConfig::desk(Task task, std::size_t feature_dim) {
  KeyValues kv = desk_keyvalues();
  kv.set("task", task_name(task));
  kv.set("feature_dim", feature_dim);
  return from_keyvalues(kv);
}

Tensor predict_sequence(const TemporalModel& model, const FrameSequence& seq,
                        const SegmentationConfig& seg) {
  NoGradGuard guard;
  auto segments = split(seq, seg);
  std::vector<SegmentPrediction> preds;
  preds.reserve(segments.size());
  for (const auto& s : segments)
    preds.push_back({&s, model.forward(s.frames, s.pad_mask, nn::RunMode::eval())});
  return reassemble(preds);
}

MetricReport evaluate(const TemporalModel& model, const std::vector<FrameSequence>& seqs,
                      const SegmentationConfig& seg, bool per_video_ccc) {
  if (seqs.empty()) throw ContractError("evaluate: no sequences");
  std::vector<ScoredFrames> videos;
  for (const auto& seq : seqs) {
    Tensor out = predict_sequence(model, seq, seg);
    ScoredFrames f;
    f.outputs.assign(out.data().begin(), out.data().end());
    f.labels = seq.labels.values;
    videos.push_back(std::move(f));
  }
  if (per_video_ccc) return score_per_video(model.config().task, videos, false);
  ScoredFrames all;
  for (auto& v : videos) {
    all.outputs.insert(all.outputs.end(), v.outputs.begin(), v.outputs.end());
    all.labels.insert(all.labels.end(), v.labels.begin(), v.labels.end());
  }
  return score_frames(model.config().task, all, false);
}

namespace {

// A training segment with its per-row labels and loss mask.
struct LabeledSegment {
  Segment segment;
  std::vector<double> labels;  // [window x label width]
  std::vector<bool> mask;      // real and valid
};

std::vector<LabeledSegment> labeled_segments(const std::vector<FrameSequence>& seqs,
                                             const SegmentationConfig& seg) {
  std::vector<LabeledSegment> out;
  for (const auto& seq : seqs) {
    const std::size_t lw = task_label_width(seq.labels.task);
    for (auto& s : split(seq, seg)) {
      LabeledSegment ls;
      ls.labels.assign(s.window() * lw, 0.0);
      ls.mask.assign(s.window(), false);
      for (std::size_t r = 0; r < s.window(); ++r) {
        if (!s.pad_mask[r]) continue;
        std::size_t f = s.frame_of(r);
        for (std::size_t c = 0; c < lw; ++c) ls.labels[r * lw + c] = seq.labels.at(f, c);
        ls.mask[r] = seq.valid[f];
      }
      ls.segment = std::move(s);
      out.push_back(std::move(ls));
    }
  }
  return out;
}

Tensor batch_loss(Task task, const Tensor& outputs, const std::vector<double>& labels,
                  const std::vector<bool>& mask) {
  switch (task) {
    case Task::VA:
      return va_loss(outputs, Tensor::from_vector(outputs.shape(), labels), mask);
    case Task::Expr: {
      std::vector<int> ids(labels.begin(), labels.end());
      return expr_loss(outputs, ids, mask);
    }
    case Task::AU: {
      std::vector<int> targets(labels.begin(), labels.end());
      return au_loss(outputs, targets, mask);
    }
  }
  throw ContractError("unknown task");
}

void check_disjoint(const std::vector<FrameSequence>& train, const std::vector<FrameSequence>& val) {
  std::set<std::string> ids;
  for (const auto& s : train) ids.insert(s.video_id);
  for (const auto& s : val) {
    if (ids.count(s.video_id)) {
      throw ContractError("video '" + s.video_id + "' is in both the training and validation sets");
    }
  }
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

}  // namespace

KeyValues checkpoint_header(const TemporalModel& model, const SegmentationConfig& seg) {
  KeyValues kv;
  model.config().to_keyvalues(kv);
  kv.set("window", seg.window);
  kv.set("stride", seg.stride);
  return kv;
}

TemporalModel load_model(const Checkpoint& ckpt) {
  Rng rng(0);
  TemporalModel model(TemporalModelConfig::from_keyvalues(ckpt.header), rng);
  ckpt.restore(model);
  return model;
}

SegmentationConfig checkpoint_segmentation(const Checkpoint& ckpt) {
  SegmentationConfig seg;
  seg.window = ckpt.header.get_size("window", seg.window);
  seg.stride = ckpt.header.get_size("stride", seg.stride);
  seg.validate();
  return seg;
}

TrainResult train_task(TemporalModel& model, const std::vector<FrameSequence>& train,
                       const std::vector<FrameSequence>& val, const TrainConfig& cfg,
                       const TrainHooks& hooks) {
  cfg.optim.validate();
  cfg.segmentation.validate();
  check_disjoint(train, val);
  const Task task = model.config().task;
  for (const auto& s : train) {
    if (s.labels.task != task) throw ContractError("training sequence '" + s.video_id + "' has the wrong task");
  }
  auto progress = [&](const std::string& msg) {
    if (hooks.progress) hooks.progress(msg);
  };

  auto segments = labeled_segments(train, cfg.segmentation);
  if (segments.empty()) throw ContractError("train_task: no training segments");
  const std::size_t batch = std::min(cfg.optim.batch_size, segments.size());
  const std::size_t per_epoch = (segments.size() + batch - 1) / batch;
  ScheduleState sched{0, per_epoch, per_epoch * cfg.optim.epochs};

  AdamW opt(model.parameters(), cfg.optim);
  Rng rng(cfg.seed);
  KeyValues header = checkpoint_header(model, cfg.segmentation);

  TrainResult result;
  result.checkpoint = Checkpoint::capture(model, header);
  if (hooks.csv_log) *hooks.csv_log << "step,epoch,lr,loss,val_metric\n";

  std::vector<std::size_t> order(segments.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t epoch = 1; epoch <= cfg.optim.epochs && !result.diverged; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::size_t loss_count = 0;
    for (std::size_t b = 0; b < per_epoch; ++b) {
      const std::size_t begin = b * batch, end = std::min(segments.size(), begin + batch);
      std::vector<Tensor> outs;
      std::vector<double> labels;
      std::vector<bool> mask;
      for (std::size_t i = begin; i < end; ++i) {
        const auto& ls = segments[order[i]];
        outs.push_back(model.forward(ls.segment.frames, ls.segment.pad_mask, nn::RunMode::train(rng)));
        labels.insert(labels.end(), ls.labels.begin(), ls.labels.end());
        mask.insert(mask.end(), ls.mask.begin(), ls.mask.end());
      }
      sched.step += 1;
      const double lr = lr_at(sched, cfg.optim);
      opt.zero_grad();
      double loss_value = 0.0;
      try {
        Tensor loss = batch_loss(task, concat(outs, 0), labels, mask);
        loss_value = loss.item();
        if (!std::isfinite(loss_value)) throw NumericalError("loss is " + fmt(loss_value));
        loss.backward();
        opt.step(lr);
      } catch (const EmptyBatchError&) {
        progress("step " + std::to_string(sched.step) + ": batch has no valid frames, skipped");
        continue;
      } catch (const UndefinedStatisticError& e) {
        progress("step " + std::to_string(sched.step) + ": " + e.what() + ", skipped");
        continue;
      } catch (const NumericalError& e) {
        result.diverged = true;
        result.divergence = "step " + std::to_string(sched.step) + ": " + e.what();
        progress("diverged at " + result.divergence + "; restoring last good checkpoint");
        break;
      }
      result.step_losses.push_back(loss_value);
      result.step_lrs.push_back(lr);
      loss_sum += loss_value;
      ++loss_count;
      if (hooks.csv_log) {
        *hooks.csv_log << sched.step << ',' << epoch << ',' << fmt(lr) << ',' << fmt(loss_value) << ",\n";
      }
    }
    if (result.diverged) break;

    EpochRecord rec;
    rec.epoch = epoch;
    rec.mean_loss = loss_count ? loss_sum / static_cast<double>(loss_count) : 0.0;
    std::string line = "epoch " + std::to_string(epoch) + " loss " + fmt(rec.mean_loss);
    if (!val.empty()) {
      rec.validation = evaluate(model, val, cfg.segmentation);
      const double metric = rec.validation->primary();
      line += " val " + fmt(metric);
      if (!result.best || metric > result.best->primary()) {
        result.best = rec.validation;
        result.best_epoch = epoch;
        KeyValues h = header;
        h.set("epoch", epoch);
        h.set("val_metric", metric);
        result.checkpoint = Checkpoint::capture(model, h);
      }
      if (hooks.csv_log) {
        *hooks.csv_log << sched.step << ',' << epoch << ",,," << fmt(metric) << '\n';
      }
    } else {
      KeyValues h = header;
      h.set("epoch", epoch);
      result.checkpoint = Checkpoint::capture(model, h);
      result.best_epoch = epoch;
    }
    progress(line);
    result.epochs.push_back(std::move(rec));
  }
  result.checkpoint.restore(model);
  return result;
}

const MetricReport& FoldTable::at(Task task, std::size_t fold) const {
  for (const auto& r : reports)
    if (r.task == task && r.fold == static_cast<int>(fold)) return r;
  throw ContractError("no report for " + task_name(task) + " fold " + std::to_string(fold));
}

nlohmann::json FoldTable::to_json() const {
  nlohmann::json j;
  j["k"] = k;
  j["folds"] = folds;
  j["reports"] = nlohmann::json::array();
  for (const auto& r : reports) j["reports"].push_back(r.to_json());
  nlohmann::json rows = nlohmann::json::array();
  auto row = [&](const std::string& name, const std::string& metric, auto value) {
    nlohmann::json values = nlohmann::json::array();
    for (std::size_t f = 0; f < k; ++f) values.push_back(value(f));
    rows.push_back({{"task", name}, {"metric", metric}, {"folds", values}});
  };
  for (Task t : tasks) {
    if (t == Task::VA) {
      row("Valence", "CCC", [&](std::size_t f) { return *at(t, f).ccc_valence; });
      row("Arousal", "CCC", [&](std::size_t f) { return *at(t, f).ccc_arousal; });
    } else {
      row(t == Task::Expr ? "Expr" : "AU", "F1-score", [&](std::size_t f) { return *at(t, f).macro_f1; });
    }
  }
  j["table"] = rows;
  return j;
}

std::string FoldTable::to_text() const {
  std::ostringstream out;
  char buf[64];
  std::snprintf(buf, sizeof buf, "%-8s  %-9s", "Task", "Metric");
  out << buf;
  for (std::size_t f = 0; f < k; ++f) {
    std::snprintf(buf, sizeof buf, "  %7s", ("Fold " + std::to_string(f)).c_str());
    out << buf;
  }
  out << '\n';
  auto row = [&](const char* name, const char* metric, auto value) {
    std::snprintf(buf, sizeof buf, "%-8s  %-9s", name, metric);
    out << buf;
    for (std::size_t f = 0; f < k; ++f) {
      std::snprintf(buf, sizeof buf, "  %7.4f", value(f));
      out << buf;
    }
    out << '\n';
  };
  for (Task t : tasks) {
    if (t == Task::VA) {
      row("Valence", "CCC", [&](std::size_t f) { return *at(t, f).ccc_valence; });
      row("Arousal", "CCC", [&](std::size_t f) { return *at(t, f).ccc_arousal; });
    } else {
      row(t == Task::Expr ? "Expr" : "AU", "F1-score", [&](std::size_t f) { return *at(t, f).macro_f1; });
    }
  }
  return out.str();
}

FoldTable run_folds(const Dataset& data, std::size_t k, const std::vector<Task>& tasks,
                    const TrainConfig& cfg, const TrainHooks& hooks) {
  if (k < 2) throw ConfigError("run_folds needs k >= 2");
  if (tasks.empty()) throw ConfigError("run_folds needs at least one task");
  FoldTable table;
  table.k = k;
  table.tasks = tasks;

  bool reuse = data.folds.size() == data.videos.size();
  std::set<int> seen;
  for (const auto& v : data.videos) {
    auto it = data.folds.find(v.id);
    if (it == data.folds.end() || it->second >= static_cast<int>(k)) {
      reuse = false;
      break;
    }
    seen.insert(it->second);
  }
  reuse = reuse && seen.size() == k;
  table.folds = reuse ? data.folds : assign_folds(data.ids(), k, cfg.seed);

  // Partition check: every video in exactly one fold, none empty.
  std::vector<std::size_t> sizes(k, 0);
  for (const auto& v : data.videos) {
    auto it = table.folds.find(v.id);
    if (it == table.folds.end()) throw ContractError("video '" + v.id + "' has no fold");
    ++sizes[static_cast<std::size_t>(it->second)];
  }
  for (std::size_t f = 0; f < k; ++f) {
    if (sizes[f] == 0) throw ConfigError("fold " + std::to_string(f) + " is empty");
  }

  for (Task task : tasks) {
    for (std::size_t f = 0; f < k; ++f) {
      std::vector<std::string> train_ids, val_ids;
      for (const auto& v : data.videos)
        (table.folds.at(v.id) == static_cast<int>(f) ? val_ids : train_ids).push_back(v.id);
      auto train = data.sequences(task, train_ids);
      auto val = data.sequences(task, val_ids);

      TrainConfig fc = cfg;
      fc.model.task = task;
      fc.seed = cfg.seed + 1000 * f + static_cast<std::uint64_t>(task);
      Rng init(fc.seed);
      TemporalModel model(fc.model, init);
      if (hooks.progress) hooks.progress(task_name(task) + " fold " + std::to_string(f));
      TrainHooks inner;
      inner.progress = hooks.progress;
      auto result = train_task(model, train, val, fc, inner);
      if (result.diverged) throw NumericalError(task_name(task) + " fold " + std::to_string(f) + " diverged: " + result.divergence);
      MetricReport report = result.best ? *result.best : evaluate(model, val, fc.segmentation);
      report.fold = static_cast<int>(f);
      table.reports.push_back(std::move(report));
    }
  }
  return table;
}

}  // namespace affect
