#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "affect/tensor.hpp"

namespace affect {

// Defaults are the task-training settings: AdamW at lr 3e-5, weight decay
// 1e-5, dropout 0.3, batch 32.
struct OptimConfig {
  double lr_peak = 3e-5;
  double weight_decay = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t batch_size = 32;
  double dropout = 0.3;
  std::size_t epochs = 20;
  double grad_clip = 1.0;  // global-norm clip; <= 0 disables

  void validate() const;
};

struct ScheduleState {
  std::size_t step = 0;
  std::size_t warmup_steps = 0;  // steps in the first epoch
  std::size_t total_steps = 0;
};

// Linear ramp 0 -> lr_peak over warmup, then half-cosine decay to 0.
double lr_at(const ScheduleState& state, const OptimConfig& cfg);

struct AdamWMoments {
  std::vector<std::vector<double>> first;
  std::vector<std::vector<double>> second;
  std::size_t step = 0;
};

// One AdamW update with bias-corrected moments and decoupled decay:
//   p <- p - lr * wd * p - lr * mhat / (sqrt(vhat) + eps)
// Parameters without a grad buffer are treated as having zero gradient.
// Throws NumericalError on a non-finite gradient.
void adamw_step(std::span<Tensor> params, AdamWMoments& moments, const OptimConfig& cfg,
                double lr);

// Plain Adam (L2 folded into the gradient when wd > 0). Reference for the
// wd = 0 equivalence check.
void adam_step(std::span<Tensor> params, AdamWMoments& moments, const OptimConfig& cfg, double lr);

// Scales grads so their global L2 norm is at most max_norm. Returns the
// norm before clipping.
double clip_grad_norm(std::span<Tensor> params, double max_norm);

class AdamW {
 public:
  AdamW(std::vector<Tensor> params, OptimConfig cfg);

  void step(double lr);
  void zero_grad();
  const OptimConfig& config() const { return cfg_; }
  std::vector<Tensor>& params() { return params_; }

 private:
  std::vector<Tensor> params_;
  OptimConfig cfg_;
  AdamWMoments moments_;
};

}  // namespace affect
