#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "affect/ops.hpp"
#include "affect/tensor.hpp"

namespace affect::nn {

using NamedTensor = std::pair<std::string, Tensor>;

// Forward-pass mode. Dropout draws from rng only when training.
struct RunMode {
  bool training = false;
  Rng* rng = nullptr;

  static RunMode eval() { return {}; }
  static RunMode train(Rng& rng) { return {true, &rng}; }
};

class Module {
 public:
  virtual ~Module() = default;

  // Parameters in declaration order; checkpoints rely on this order.
  std::vector<NamedTensor> named_parameters() const;
  std::vector<Tensor> parameters() const;
  std::size_t parameter_count() const;
  void zero_grad() const;

  virtual void collect_parameters(std::vector<NamedTensor>& out,
                                  const std::string& prefix) const = 0;
};

Tensor xavier_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng);

// y = x W + b with W: [in x out].
class Linear : public Module {
 public:
  Linear() = default;
  Linear(std::size_t in_features, std::size_t out_features, Rng& rng);

  Tensor forward(const Tensor& x) const;
  std::size_t in_features() const { return weight_.dim(0); }
  std::size_t out_features() const { return weight_.dim(1); }
  Tensor& weight() { return weight_; }
  Tensor& bias() { return bias_; }

  void collect_parameters(std::vector<NamedTensor>& out, const std::string& prefix) const override;

 private:
  Tensor weight_;
  Tensor bias_;
};

class LayerNorm : public Module {
 public:
  LayerNorm() = default;
  explicit LayerNorm(std::size_t dim, double eps = 1e-5);

  Tensor forward(const Tensor& x) const;
  void collect_parameters(std::vector<NamedTensor>& out, const std::string& prefix) const override;

 private:
  Tensor gain_;
  Tensor bias_;
  double eps_ = 1e-5;
};

// Fixed sinusoidal table [length x dim]: sin on even columns, cos on odd.
Tensor sinusoidal_positions(std::size_t length, std::size_t dim);

// Additive attention bias [len]: 0 where key_mask is true, -inf elsewhere.
Tensor key_padding_bias(const std::vector<bool>& key_mask);

class MultiHeadSelfAttention : public Module {
 public:
  MultiHeadSelfAttention() = default;
  MultiHeadSelfAttention(std::size_t model_dim, std::size_t heads, Rng& rng);

  // x: [len x model_dim]; key_mask (may be empty) marks keys that can be
  // attended to. When attention is non-null it receives one [len x len]
  // weight matrix per head.
  Tensor forward(const Tensor& x, const std::vector<bool>& key_mask,
                 std::vector<Tensor>* attention = nullptr) const;

  std::size_t heads() const { return heads_; }
  void collect_parameters(std::vector<NamedTensor>& out, const std::string& prefix) const override;

 private:
  std::size_t heads_ = 1;
  Linear query_, key_, value_, output_;
};

struct EncoderConfig {
  std::size_t depth = 4;
  std::size_t heads = 4;
  std::size_t model_dim = 64;
  std::size_t ffn_dim = 256;
  double dropout = 0.3;

  void validate() const;
};

// Pre-norm block: x + drop(attn(ln(x))), then x + drop(ffn(ln(x))).
class EncoderLayer : public Module {
 public:
  EncoderLayer() = default;
  EncoderLayer(const EncoderConfig& cfg, Rng& rng);

  Tensor forward(const Tensor& x, const std::vector<bool>& key_mask, RunMode mode,
                 std::vector<Tensor>* attention = nullptr) const;
  void collect_parameters(std::vector<NamedTensor>& out, const std::string& prefix) const override;

 private:
  double dropout_ = 0.0;
  LayerNorm norm1_, norm2_;
  MultiHeadSelfAttention attn_;
  Linear ffn_in_, ffn_out_;
};

class TransformerEncoder : public Module {
 public:
  TransformerEncoder() = default;
  TransformerEncoder(const EncoderConfig& cfg, Rng& rng);

  Tensor forward(const Tensor& x, const std::vector<bool>& key_mask, RunMode mode,
                 std::vector<Tensor>* attention = nullptr) const;
  const EncoderConfig& config() const { return cfg_; }
  void collect_parameters(std::vector<NamedTensor>& out, const std::string& prefix) const override;

 private:
  EncoderConfig cfg_;
  std::vector<EncoderLayer> layers_;
  LayerNorm final_norm_;
};

}  // namespace affect::nn
