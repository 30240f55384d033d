#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "affect/nn.hpp"
#include "affect/serialize.hpp"
#include "affect/task.hpp"

namespace affect {

struct TcnLayerSpec {
  std::size_t kernel = 3;
  std::size_t dilation = 1;
  std::size_t channels = 64;
};

struct TcnConfig {
  std::vector<TcnLayerSpec> layers;
  double dropout = 0.3;
  bool residual = true;
  // Insert a 1x1 conv on the skip path when channel counts differ. Without
  // it a mismatch is a configuration error.
  bool project_on_mismatch = true;

  // 1 + sum over layers of (kernel - 1) * dilation.
  std::size_t receptive_field() const;
  void validate(std::size_t input_channels) const;

  // One layer per dilation, all with the same kernel and width.
  static TcnConfig dilated_stack(std::size_t channels, std::size_t kernel,
                                 const std::vector<std::size_t>& dilations, double dropout);
};

// Stack of dilated non-causal conv layers over a [len x dim] sequence; each
// layer is skip(x) + dropout(relu(conv(x))).
class Tcn : public nn::Module {
 public:
  Tcn() = default;
  Tcn(std::size_t input_dim, const TcnConfig& cfg, Rng& rng);

  // seq: [len x input_dim] -> [len x channels of last layer]. Rows where
  // row_mask is false are zeroed after every layer, so they read as the
  // conv's zero padding.
  Tensor forward(const Tensor& seq, nn::RunMode mode, const std::vector<bool>& row_mask = {}) const;
  std::size_t output_dim() const;
  const TcnConfig& config() const { return cfg_; }

  // Direct access for tests that pin weights.
  struct Layer {
    Tensor weight;  // [c_out x c_in x k]
    Tensor bias;    // [c_out]
    std::optional<Tensor> skip;  // [c_out x c_in x 1] when projecting
    std::size_t dilation = 1;
  };
  std::vector<Layer>& layers() { return layers_; }

  void collect_parameters(std::vector<nn::NamedTensor>& out,
                          const std::string& prefix) const override;

 private:
  TcnConfig cfg_;
  std::size_t input_dim_ = 0;
  std::vector<Layer> layers_;
};

// Per-frame MLP: hidden layer + relu + dropout + output layer. VA outputs
// pass through tanh; Expr and AU emit raw logits.
class TaskHead : public nn::Module {
 public:
  TaskHead() = default;
  TaskHead(Task task, std::size_t input_dim, std::size_t hidden_dim, double dropout, Rng& rng);

  Tensor forward(const Tensor& h, nn::RunMode mode) const;
  Task task() const { return task_; }
  std::size_t out_dim() const { return output_.out_features(); }

  void collect_parameters(std::vector<nn::NamedTensor>& out,
                          const std::string& prefix) const override;

 private:
  Task task_ = Task::VA;
  double dropout_ = 0.0;
  nn::Linear hidden_, output_;
};

struct TemporalModelConfig {
  Task task = Task::VA;
  std::size_t feature_dim = 768;
  TcnConfig tcn = TcnConfig::dilated_stack(256, 3, {1, 2, 4, 8}, 0.3);
  nn::EncoderConfig encoder{4, 4, 256, 1024, 0.3};
  std::size_t head_hidden = 256;
  double head_dropout = 0.3;

  void validate() const;
  void to_keyvalues(KeyValues& kv) const;
  static TemporalModelConfig from_keyvalues(const KeyValues& kv);
};

// features -> TCN -> (+ positions) -> transformer encoder -> task head.
class TemporalModel : public nn::Module {
 public:
  TemporalModel(const TemporalModelConfig& cfg, Rng& rng);

  // frames: [window x feature_dim]; pad_mask marks real rows (may be empty).
  Tensor forward(const Tensor& frames, const std::vector<bool>& pad_mask, nn::RunMode mode) const;

  const TemporalModelConfig& config() const { return cfg_; }
  Tcn& tcn() { return tcn_; }
  const nn::TransformerEncoder& encoder() const { return encoder_; }
  const TaskHead& head() const { return head_; }

  void collect_parameters(std::vector<nn::NamedTensor>& out,
                          const std::string& prefix) const override;

 private:
  TemporalModelConfig cfg_;
  Tcn tcn_;
  std::optional<nn::Linear> bridge_;  // when TCN width != encoder width
  nn::TransformerEncoder encoder_;
  TaskHead head_;
};

}  // namespace affect
