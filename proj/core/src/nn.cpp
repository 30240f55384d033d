#include "affect/nn.hpp"

#include <cmath>
#include <limits>

#include "affect/errors.hpp"

namespace affect::nn {

std::vector<NamedTensor> Module::named_parameters() const {
  std::vector<NamedTensor> out;
  collect_parameters(out, "");
  return out;
}

std::vector<Tensor> Module::parameters() const {
  std::vector<Tensor> out;
  for (auto& [name, t] : named_parameters()) out.push_back(t);
  return out;
}

std::size_t Module::parameter_count() const {
  std::size_t n = 0;
  for (const auto& t : parameters()) n += t.numel();
  return n;
}

void Module::zero_grad() const {
  for (auto t : parameters()) t.zero_grad();
}

Tensor xavier_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  std::vector<double> values(shape_numel(shape));
  for (auto& v : values) v = dist(rng);
  return Tensor::from_vector(std::move(shape), std::move(values), true);
}

Linear::Linear(std::size_t in_features, std::size_t out_features, Rng& rng)
    : weight_(xavier_uniform({in_features, out_features}, in_features, out_features, rng)),
      bias_(Tensor::zeros({out_features}, true)) {}

Tensor Linear::forward(const Tensor& x) const { return add(matmul(x, weight_), bias_); }

void Linear::collect_parameters(std::vector<NamedTensor>& out, const std::string& prefix) const {
  out.emplace_back(prefix + "weight", weight_);
  out.emplace_back(prefix + "bias", bias_);
}

LayerNorm::LayerNorm(std::size_t dim, double eps)
    : gain_(Tensor::full({dim}, 1.0, true)), bias_(Tensor::zeros({dim}, true)), eps_(eps) {}

Tensor LayerNorm::forward(const Tensor& x) const { return layer_norm(x, gain_, bias_, eps_); }

void LayerNorm::collect_parameters(std::vector<NamedTensor>& out,
                                   const std::string& prefix) const {
  out.emplace_back(prefix + "gain", gain_);
  out.emplace_back(prefix + "bias", bias_);
}

Tensor sinusoidal_positions(std::size_t length, std::size_t dim) {
  std::vector<double> table(length * dim);
  for (std::size_t pos = 0; pos < length; ++pos) {
    for (std::size_t i = 0; i < dim; ++i) {
      double freq = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(dim));
      double angle = static_cast<double>(pos) * freq;
      table[pos * dim + i] = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  }
  return Tensor::from_vector({length, dim}, std::move(table));
}

Tensor key_padding_bias(const std::vector<bool>& key_mask) {
  std::vector<double> bias(key_mask.size());
  for (std::size_t i = 0; i < key_mask.size(); ++i)
    bias[i] = key_mask[i] ? 0.0 : -std::numeric_limits<double>::infinity();
  return Tensor::from_vector({key_mask.size()}, std::move(bias));
}

MultiHeadSelfAttention::MultiHeadSelfAttention(std::size_t model_dim, std::size_t heads, Rng& rng)
    : heads_(heads),
      query_(model_dim, model_dim, rng),
      key_(model_dim, model_dim, rng),
      value_(model_dim, model_dim, rng),
      output_(model_dim, model_dim, rng) {
  if (heads == 0 || model_dim % heads != 0) {
    throw ConfigError("model_dim " + std::to_string(model_dim) + " is not divisible by " +
                      std::to_string(heads) + " heads");
  }
}

Tensor MultiHeadSelfAttention::forward(const Tensor& x, const std::vector<bool>& key_mask,
                                       std::vector<Tensor>* attention) const {
  const std::size_t len = x.dim(0);
  const std::size_t dim = x.dim(1);
  const std::size_t head_dim = dim / heads_;
  if (!key_mask.empty() && key_mask.size() != len) {
    throw ShapeError("key mask has " + std::to_string(key_mask.size()) + " entries for " +
                     std::to_string(len) + " positions");
  }
  Tensor q = query_.forward(x);
  Tensor k = key_.forward(x);
  Tensor v = value_.forward(x);
  std::optional<Tensor> bias;
  if (!key_mask.empty()) bias = key_padding_bias(key_mask);
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(head_dim));
  std::vector<Tensor> contexts;
  contexts.reserve(heads_);
  for (std::size_t h = 0; h < heads_; ++h) {
    Tensor qh = narrow(q, 1, h * head_dim, head_dim);
    Tensor kh = narrow(k, 1, h * head_dim, head_dim);
    Tensor vh = narrow(v, 1, h * head_dim, head_dim);
    Tensor scores = scale(matmul(qh, transpose(kh)), inv_sqrt);
    if (bias) scores = add(scores, *bias);
    Tensor weights = softmax(scores, -1);
    if (attention) attention->push_back(weights);
    contexts.push_back(matmul(weights, vh));
  }
  Tensor merged = heads_ == 1 ? contexts.front() : concat(contexts, 1);
  return output_.forward(merged);
}

void MultiHeadSelfAttention::collect_parameters(std::vector<NamedTensor>& out,
                                                const std::string& prefix) const {
  query_.collect_parameters(out, prefix + "query.");
  key_.collect_parameters(out, prefix + "key.");
  value_.collect_parameters(out, prefix + "value.");
  output_.collect_parameters(out, prefix + "output.");
}

void EncoderConfig::validate() const {
  if (depth == 0) throw ConfigError("encoder depth must be >= 1");
  if (heads == 0 || model_dim == 0 || model_dim % heads != 0) {
    throw ConfigError("encoder model_dim " + std::to_string(model_dim) +
                      " must be a positive multiple of heads " + std::to_string(heads));
  }
  if (ffn_dim == 0) throw ConfigError("encoder ffn_dim must be >= 1");
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("encoder dropout must be in [0, 1)");
}

EncoderLayer::EncoderLayer(const EncoderConfig& cfg, Rng& rng)
    : dropout_(cfg.dropout),
      norm1_(cfg.model_dim),
      norm2_(cfg.model_dim),
      attn_(cfg.model_dim, cfg.heads, rng),
      ffn_in_(cfg.model_dim, cfg.ffn_dim, rng),
      ffn_out_(cfg.ffn_dim, cfg.model_dim, rng) {}

Tensor EncoderLayer::forward(const Tensor& x, const std::vector<bool>& key_mask, RunMode mode,
                             std::vector<Tensor>* attention) const {
  Tensor a = attn_.forward(norm1_.forward(x), key_mask, attention);
  Tensor h = add(x, dropout(a, dropout_, mode.training, mode.rng));
  Tensor f = ffn_out_.forward(gelu(ffn_in_.forward(norm2_.forward(h))));
  return add(h, dropout(f, dropout_, mode.training, mode.rng));
}

void EncoderLayer::collect_parameters(std::vector<NamedTensor>& out,
                                      const std::string& prefix) const {
  norm1_.collect_parameters(out, prefix + "norm1.");
  attn_.collect_parameters(out, prefix + "attn.");
  norm2_.collect_parameters(out, prefix + "norm2.");
  ffn_in_.collect_parameters(out, prefix + "ffn_in.");
  ffn_out_.collect_parameters(out, prefix + "ffn_out.");
}

TransformerEncoder::TransformerEncoder(const EncoderConfig& cfg, Rng& rng)
    : cfg_(cfg), final_norm_(cfg.model_dim) {
  cfg.validate();
  layers_.reserve(cfg.depth);
  for (std::size_t i = 0; i < cfg.depth; ++i) layers_.emplace_back(cfg, rng);
}

Tensor TransformerEncoder::forward(const Tensor& x, const std::vector<bool>& key_mask,
                                   RunMode mode, std::vector<Tensor>* attention) const {
  if (x.rank() != 2 || x.dim(1) != cfg_.model_dim) {
    throw ShapeError("encoder expects [len x " + std::to_string(cfg_.model_dim) + "], got " +
                     shape_str(x.shape()));
  }
  Tensor h = x;
  for (const auto& layer : layers_) h = layer.forward(h, key_mask, mode, attention);
  return final_norm_.forward(h);
}

void TransformerEncoder::collect_parameters(std::vector<NamedTensor>& out,
                                            const std::string& prefix) const {
  for (std::size_t i = 0; i < layers_.size(); ++i)
    layers_[i].collect_parameters(out, prefix + "layers." + std::to_string(i) + ".");
  final_norm_.collect_parameters(out, prefix + "final_norm.");
}

}  // namespace affect::nn
