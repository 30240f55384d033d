#include "affect/temporal_model.hpp"

#include <algorithm>

#include "affect/errors.hpp"

namespace affect {

std::size_t TcnConfig::receptive_field() const {
  std::size_t rf = 1;
  for (const auto& l : layers) rf += (l.kernel - 1) * l.dilation;
  return rf;
}

void TcnConfig::validate(std::size_t input_channels) const {
  if (layers.empty()) throw ConfigError("TCN needs at least one layer");
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("TCN dropout must be in [0, 1)");
  std::size_t c = input_channels;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    if (l.kernel % 2 == 0) {
      throw ConfigError("TCN layer " + std::to_string(i) + ": kernel " + std::to_string(l.kernel) +
                        " must be odd");
    }
    if (l.dilation < 1) throw ConfigError("TCN layer " + std::to_string(i) + ": dilation must be >= 1");
    if (l.channels < 1) throw ConfigError("TCN layer " + std::to_string(i) + ": channels must be >= 1");
    if (residual && l.channels != c && !project_on_mismatch) {
      throw ConfigError("TCN layer " + std::to_string(i) + ": residual from " + std::to_string(c) +
                        " to " + std::to_string(l.channels) + " channels needs a projection");
    }
    c = l.channels;
  }
}

TcnConfig TcnConfig::dilated_stack(std::size_t channels, std::size_t kernel,
                                   const std::vector<std::size_t>& dilations, double dropout) {
  TcnConfig cfg;
  cfg.dropout = dropout;
  for (auto d : dilations) cfg.layers.push_back({kernel, d, channels});
  return cfg;
}

Tcn::Tcn(std::size_t input_dim, const TcnConfig& cfg, Rng& rng) : cfg_(cfg), input_dim_(input_dim) {
  cfg.validate(input_dim);
  std::size_t c_in = input_dim;
  for (const auto& spec : cfg.layers) {
    Layer layer;
    std::size_t fan_in = c_in * spec.kernel;
    layer.weight = nn::xavier_uniform({spec.channels, c_in, spec.kernel}, fan_in,
                                      spec.channels * spec.kernel, rng);
    layer.bias = Tensor::zeros({spec.channels}, true);
    if (cfg.residual && spec.channels != c_in) {
      layer.skip = nn::xavier_uniform({spec.channels, c_in, 1}, c_in, spec.channels, rng);
    }
    layer.dilation = spec.dilation;
    layers_.push_back(std::move(layer));
    c_in = spec.channels;
  }
}

std::size_t Tcn::output_dim() const { return cfg_.layers.back().channels; }

Tensor Tcn::forward(const Tensor& seq, nn::RunMode mode, const std::vector<bool>& row_mask) const {
  if (seq.rank() != 2 || seq.dim(1) != input_dim_) {
    throw ShapeError("TCN expects [len x " + std::to_string(input_dim_) + "], got " +
                     shape_str(seq.shape()));
  }
  const std::size_t len = seq.dim(0);
  std::optional<Tensor> keep;
  if (!row_mask.empty()) {
    if (row_mask.size() != len) throw ShapeError("TCN row mask length differs from sequence length");
    if (std::find(row_mask.begin(), row_mask.end(), false) != row_mask.end()) {
      std::vector<double> m(len);
      for (std::size_t i = 0; i < len; ++i) m[i] = row_mask[i] ? 1.0 : 0.0;
      keep = Tensor::from_vector({len}, std::move(m));
    }
  }
  Tensor x = transpose(seq);  // channels-first
  if (keep) x = mul(x, *keep);
  for (const auto& layer : layers_) {
    Tensor y = relu(conv1d_dilated(x, layer.weight, layer.bias, layer.dilation));
    y = dropout(y, cfg_.dropout, mode.training, mode.rng);
    if (cfg_.residual) {
      Tensor skip = layer.skip ? conv1d_dilated(x, *layer.skip, std::nullopt, 1) : x;
      x = add(skip, y);
    } else {
      x = y;
    }
    if (keep) x = mul(x, *keep);
  }
  return transpose(x);
}

void Tcn::collect_parameters(std::vector<nn::NamedTensor>& out, const std::string& prefix) const {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    std::string p = prefix + "layers." + std::to_string(i) + ".";
    out.emplace_back(p + "weight", layers_[i].weight);
    out.emplace_back(p + "bias", layers_[i].bias);
    if (layers_[i].skip) out.emplace_back(p + "skip", *layers_[i].skip);
  }
}

TaskHead::TaskHead(Task task, std::size_t input_dim, std::size_t hidden_dim, double dropout,
                   Rng& rng)
    : task_(task),
      dropout_(dropout),
      hidden_(input_dim, hidden_dim, rng),
      output_(hidden_dim, task_output_dim(task), rng) {}

Tensor TaskHead::forward(const Tensor& h, nn::RunMode mode) const {
  Tensor z = dropout(relu(hidden_.forward(h)), dropout_, mode.training, mode.rng);
  Tensor y = output_.forward(z);
  return task_ == Task::VA ? tanh(y) : y;
}

void TaskHead::collect_parameters(std::vector<nn::NamedTensor>& out,
                                  const std::string& prefix) const {
  hidden_.collect_parameters(out, prefix + "hidden.");
  output_.collect_parameters(out, prefix + "output.");
}

void TemporalModelConfig::validate() const {
  if (feature_dim < 1) throw ConfigError("feature_dim must be >= 1");
  tcn.validate(feature_dim);
  encoder.validate();
  if (head_hidden < 1) throw ConfigError("head_hidden must be >= 1");
  if (head_dropout < 0.0 || head_dropout >= 1.0) throw ConfigError("head dropout must be in [0, 1)");
}

namespace {

std::string join(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

}  // namespace

void TemporalModelConfig::to_keyvalues(KeyValues& kv) const {
  std::vector<std::size_t> kernels, dilations, channels;
  for (const auto& l : tcn.layers) {
    kernels.push_back(l.kernel);
    dilations.push_back(l.dilation);
    channels.push_back(l.channels);
  }
  kv.set("task", task_name(task));
  kv.set("feature_dim", feature_dim);
  kv.set("tcn_kernels", join(kernels));
  kv.set("tcn_dilations", join(dilations));
  kv.set("tcn_channels", join(channels));
  kv.set("tcn_dropout", tcn.dropout);
  kv.set("tcn_residual", std::string(tcn.residual ? "true" : "false"));
  kv.set("enc_depth", encoder.depth);
  kv.set("enc_heads", encoder.heads);
  kv.set("model_dim", encoder.model_dim);
  kv.set("ffn_dim", encoder.ffn_dim);
  kv.set("enc_dropout", encoder.dropout);
  kv.set("head_hidden", head_hidden);
  kv.set("head_dropout", head_dropout);
}

TemporalModelConfig TemporalModelConfig::from_keyvalues(const KeyValues& kv) {
  TemporalModelConfig cfg;
  if (kv.contains("task")) cfg.task = parse_task(kv.get("task"));
  cfg.feature_dim = kv.get_size("feature_dim", cfg.feature_dim);
  double shared_dropout = kv.get_double("dropout", cfg.head_dropout);

  std::vector<std::size_t> dilations = kv.get_size_list("tcn_dilations", {1, 2, 4, 8});
  auto broadcast = [&](const char* key, std::size_t fallback) {
    auto v = kv.get_size_list(key, {fallback});
    if (v.size() == 1) v.assign(dilations.size(), v[0]);
    if (v.size() != dilations.size()) {
      throw ConfigError(std::string("config key '") + key + "' needs 1 or " +
                        std::to_string(dilations.size()) + " entries");
    }
    return v;
  };
  std::size_t model_dim = kv.get_size("model_dim", cfg.encoder.model_dim);
  auto kernels = broadcast("tcn_kernels", 3);
  auto channels = broadcast("tcn_channels", model_dim);
  cfg.tcn.layers.clear();
  for (std::size_t i = 0; i < dilations.size(); ++i)
    cfg.tcn.layers.push_back({kernels[i], dilations[i], channels[i]});
  cfg.tcn.dropout = kv.get_double("tcn_dropout", shared_dropout);
  cfg.tcn.residual = kv.get_bool("tcn_residual", true);

  cfg.encoder.depth = kv.get_size("enc_depth", cfg.encoder.depth);
  cfg.encoder.heads = kv.get_size("enc_heads", cfg.encoder.heads);
  cfg.encoder.model_dim = model_dim;
  cfg.encoder.ffn_dim = kv.get_size("ffn_dim", 4 * model_dim);
  cfg.encoder.dropout = kv.get_double("enc_dropout", shared_dropout);
  cfg.head_hidden = kv.get_size("head_hidden", model_dim);
  cfg.head_dropout = kv.get_double("head_dropout", shared_dropout);
  cfg.validate();
  return cfg;
}

TemporalModel::TemporalModel(const TemporalModelConfig& cfg, Rng& rng)
    : cfg_(cfg), tcn_(cfg.feature_dim, cfg.tcn, rng) {
  cfg.validate();
  if (tcn_.output_dim() != cfg.encoder.model_dim) {
    bridge_.emplace(tcn_.output_dim(), cfg.encoder.model_dim, rng);
  }
  encoder_ = nn::TransformerEncoder(cfg.encoder, rng);
  head_ = TaskHead(cfg.task, cfg.encoder.model_dim, cfg.head_hidden, cfg.head_dropout, rng);
}

Tensor TemporalModel::forward(const Tensor& frames, const std::vector<bool>& pad_mask,
                              nn::RunMode mode) const {
  Tensor g = tcn_.forward(frames, mode, pad_mask);
  if (bridge_) g = bridge_->forward(g);
  g = add(g, nn::sinusoidal_positions(g.dim(0), g.dim(1)));
  Tensor h = encoder_.forward(g, pad_mask, mode);
  return head_.forward(h, mode);
}

void TemporalModel::collect_parameters(std::vector<nn::NamedTensor>& out,
                                       const std::string& prefix) const {
  tcn_.collect_parameters(out, prefix + "tcn.");
  if (bridge_) bridge_->collect_parameters(out, prefix + "bridge.");
  encoder_.collect_parameters(out, prefix + "encoder.");
  head_.collect_parameters(out, prefix + "head.");
}

}  // namespace affect
