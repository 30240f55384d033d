#include "affect/optim.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "affect/errors.hpp"

namespace affect {

void OptimConfig::validate() const {
  if (lr_peak < 0.0) throw ConfigError("learning rate must be >= 0");
  if (weight_decay < 0.0) throw ConfigError("weight decay must be >= 0");
  if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0) {
    throw ConfigError("betas must be in [0, 1)");
  }
  if (eps <= 0.0) throw ConfigError("eps must be > 0");
  if (batch_size < 1) throw ConfigError("batch size must be >= 1");
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout must be in [0, 1)");
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
}

double lr_at(const ScheduleState& s, const OptimConfig& cfg) {
  if (s.warmup_steps > s.total_steps) throw ContractError("warmup exceeds total steps");
  if (s.step <= s.warmup_steps) {
    if (s.warmup_steps == 0) return cfg.lr_peak;
    return cfg.lr_peak * static_cast<double>(s.step) / static_cast<double>(s.warmup_steps);
  }
  if (s.total_steps == s.warmup_steps) return cfg.lr_peak;
  double progress = static_cast<double>(std::min(s.step, s.total_steps) - s.warmup_steps) /
                    static_cast<double>(s.total_steps - s.warmup_steps);
  return cfg.lr_peak * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

namespace {

void ensure_moments(std::span<Tensor> params, AdamWMoments& m) {
  if (m.first.size() == params.size()) return;
  m.first.clear();
  m.second.clear();
  for (const auto& p : params) {
    m.first.emplace_back(p.numel(), 0.0);
    m.second.emplace_back(p.numel(), 0.0);
  }
}

void check_finite(std::span<Tensor> params) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i].has_grad()) continue;
    auto g = params[i].grad();
    for (std::size_t j = 0; j < g.size(); ++j) {
      if (!std::isfinite(g[j])) {
        std::ostringstream os;
        os << "non-finite gradient " << g[j] << " in parameter #" << i << " "
           << shape_str(params[i].shape()) << " at element " << j;
        throw NumericalError(os.str());
      }
    }
  }
}

template <bool Decoupled>
void adam_impl(std::span<Tensor> params, AdamWMoments& m, const OptimConfig& cfg, double lr) {
  check_finite(params);
  ensure_moments(params, m);
  ++m.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(m.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(m.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i].mutable_data();
    auto g = params[i].has_grad() ? params[i].grad() : std::span<const double>{};
    auto& m1 = m.first[i];
    auto& m2 = m.second[i];
    for (std::size_t j = 0; j < p.size(); ++j) {
      double gj = g.empty() ? 0.0 : g[j];
      if (!Decoupled) gj += cfg.weight_decay * p[j];
      m1[j] = cfg.beta1 * m1[j] + (1.0 - cfg.beta1) * gj;
      m2[j] = cfg.beta2 * m2[j] + (1.0 - cfg.beta2) * gj * gj;
      double mhat = m1[j] / bc1;
      double vhat = m2[j] / bc2;
      if (Decoupled) p[j] -= lr * cfg.weight_decay * p[j];
      p[j] -= lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
}

}  // namespace

void adamw_step(std::span<Tensor> params, AdamWMoments& moments, const OptimConfig& cfg,
                double lr) {
  adam_impl<true>(params, moments, cfg, lr);
}

void adam_step(std::span<Tensor> params, AdamWMoments& moments, const OptimConfig& cfg,
               double lr) {
  adam_impl<false>(params, moments, cfg, lr);
}

double clip_grad_norm(std::span<Tensor> params, double max_norm) {
  double sq = 0.0;
  for (const auto& p : params) {
    if (!p.has_grad()) continue;
    for (double g : p.grad()) sq += g * g;
  }
  double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    double factor = max_norm / norm;
    for (auto& p : params) {
      if (!p.has_grad()) continue;
      for (auto& g : p.mutable_grad()) g *= factor;
    }
  }
  return norm;
}

AdamW::AdamW(std::vector<Tensor> params, OptimConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {
  cfg_.validate();
}

void AdamW::step(double lr) {
  if (cfg_.grad_clip > 0.0) clip_grad_norm(params_, cfg_.grad_clip);
  adamw_step(params_, moments_, cfg_, lr);
}

void AdamW::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

}  // namespace affect
