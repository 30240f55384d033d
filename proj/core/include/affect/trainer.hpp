#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "affect/data_io.hpp"
#include "affect/objectives.hpp"
#include "affect/optim.hpp"
#include "affect/segmentation.hpp"
#include "affect/serialize.hpp"
#include "affect/temporal_model.hpp"

namespace affect {

struct TrainConfig {
  OptimConfig optim;
  SegmentationConfig segmentation;
  TemporalModelConfig model;
  std::uint64_t seed = 0;

  void validate() const;
  // Keys: lr, weight_decay, beta1, beta2, eps, batch_size, epochs, dropout,
  // grad_clip, window, stride, seed, plus the model keys.
  void to_keyvalues(KeyValues& kv) const;
  static TrainConfig from_keyvalues(const KeyValues& kv);

  // Small model and short windows sized for the synthetic dataset on a CPU.
  static TrainConfig desk(Task task, std::size_t feature_dim);
  static KeyValues desk_keyvalues();
};

// Runs every segment of seq through the model in eval mode and averages the
// overlapping outputs per frame: [frames x task_output_dim].
Tensor predict_sequence(const TemporalModel& model, const FrameSequence& seq,
                        const SegmentationConfig& seg);

// VA CCC is computed over all frames concatenated unless per_video_ccc.
MetricReport evaluate(const TemporalModel& model, const std::vector<FrameSequence>& seqs,
                      const SegmentationConfig& seg, bool per_video_ccc = false);

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double mean_loss = 0.0;
  std::optional<MetricReport> validation;
};

struct TrainResult {
  std::vector<double> step_losses;
  std::vector<double> step_lrs;
  std::vector<EpochRecord> epochs;
  std::optional<MetricReport> best;  // validation report of the kept epoch
  std::size_t best_epoch = 0;        // 0 when no epoch completed
  Checkpoint checkpoint;             // weights the model holds on return
  bool diverged = false;
  std::string divergence;
};

struct TrainHooks {
  std::ostream* csv_log = nullptr;  // step,epoch,lr,loss,val_metric
  std::function<void(const std::string&)> progress;
};

// Trains model on shuffled segment batches of train, scoring val after every
// epoch. On return the model holds the best validation checkpoint (the final
// weights when val is empty). A non-finite loss or gradient stops training
// and restores the last good checkpoint.
TrainResult train_task(TemporalModel& model, const std::vector<FrameSequence>& train,
                       const std::vector<FrameSequence>& val, const TrainConfig& cfg,
                       const TrainHooks& hooks = {});

// Header keys describing the model, enough to rebuild it from a checkpoint.
KeyValues checkpoint_header(const TemporalModel& model, const SegmentationConfig& seg);
TemporalModel load_model(const Checkpoint& ckpt);
SegmentationConfig checkpoint_segmentation(const Checkpoint& ckpt);

struct FoldTable {
  std::size_t k = 0;
  std::vector<Task> tasks;
  std::vector<MetricReport> reports;  // one per (task, fold)
  std::map<std::string, int> folds;

  const MetricReport& at(Task task, std::size_t fold) const;
  nlohmann::json to_json() const;
  // Rows: Valence/Arousal CCC, Expr F1, AU F1. Columns: Fold 0..k-1.
  std::string to_text() const;
};

// Video-disjoint k-fold cross validation. Uses data.folds when it already
// holds k folds covering every video, otherwise assigns folds from cfg.seed.
FoldTable run_folds(const Dataset& data, std::size_t k, const std::vector<Task>& tasks,
                    const TrainConfig& cfg, const TrainHooks& hooks = {});

}  // namespace affect
