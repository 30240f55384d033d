#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "affect/nn.hpp"
#include "affect/optim.hpp"
#include "affect/serialize.hpp"

namespace affect {

struct PatchGrid {
  Tensor image;  // [height x width x channels]
  std::size_t patch_size = 16;
  std::size_t grid_rows = 0;
  std::size_t grid_cols = 0;
  Tensor patches;  // [grid_rows*grid_cols x patch_size^2*channels], raster order

  std::size_t count() const { return grid_rows * grid_cols; }
};

// Cuts an image into non-overlapping square patches; each patch row is
// flattened (y, x, channel). Height and width must be multiples of patch.
PatchGrid patchify(const Tensor& image, std::size_t patch_size = 16);
// Rebuilds the image from grid.patches.
Tensor unpatchify(const PatchGrid& grid);
Tensor unpatchify(const Tensor& patches, std::size_t height, std::size_t width,
                  std::size_t channels, std::size_t patch_size);

struct MaskPlan {
  std::vector<std::size_t> masked;   // sorted
  std::vector<std::size_t> visible;  // sorted
  double ratio = 0.75;

  std::size_t patch_count() const { return masked.size() + visible.size(); }
};

// Draws round(ratio * patches) patches uniformly without replacement.
MaskPlan sample_mask(std::size_t patches, double ratio, std::uint64_t seed);

struct MaeConfig {
  std::size_t image_height = 32;
  std::size_t image_width = 32;
  std::size_t channels = 1;
  std::size_t patch_size = 16;
  nn::EncoderConfig encoder{4, 4, 64, 256, 0.0};
  nn::EncoderConfig decoder{2, 4, 32, 128, 0.0};
  double mask_ratio = 0.75;

  std::size_t patch_count() const;
  std::size_t patch_values() const { return patch_size * patch_size * channels; }
  void validate() const;
  void to_keyvalues(KeyValues& kv) const;
  static MaeConfig from_keyvalues(const KeyValues& kv);
};

// Patch embedding + positions + transformer over the tokens it is given.
class MaeEncoder : public nn::Module {
 public:
  MaeEncoder() = default;
  MaeEncoder(const MaeConfig& cfg, Rng& rng);

  // patches: [p x patch_values]; returns [|indices| x width] for those
  // patch positions only.
  Tensor forward(const Tensor& patches, const std::vector<std::size_t>& indices,
                 nn::RunMode mode) const;
  std::size_t width() const { return cfg_.encoder.model_dim; }
  const MaeConfig& config() const { return cfg_; }

  void collect_parameters(std::vector<nn::NamedTensor>& out,
                          const std::string& prefix) const override;

 private:
  MaeConfig cfg_;
  nn::Linear embed_;
  nn::TransformerEncoder blocks_;
};

class MaeModel : public nn::Module {
 public:
  MaeModel(const MaeConfig& cfg, Rng& rng);

  // Encodes the visible patches of plan, fills masked positions with the
  // mask token, decodes the full grid. Returns [p x patch_values].
  Tensor forward(const Tensor& patches, const MaskPlan& plan, nn::RunMode mode) const;

  const MaeEncoder& encoder() const { return encoder_; }
  const MaeConfig& config() const { return encoder_.config(); }

  void collect_parameters(std::vector<nn::NamedTensor>& out,
                          const std::string& prefix) const override;

 private:
  MaeEncoder encoder_;
  nn::Linear decoder_embed_;
  Tensor mask_token_;  // [1 x decoder width]
  nn::TransformerEncoder decoder_;
  nn::Linear head_;
};

// Mean squared error over the masked patches only, averaged over pixels.
Tensor reconstruction_loss(const Tensor& reconstruction, const Tensor& target,
                           const MaskPlan& plan);

struct ClassifierHeadConfig {
  std::size_t hidden = 64;
  std::size_t classes = 8;
  double dropout = 0.0;
};

// Encoder over all patches, mean-pooled, then hidden FC + relu + output FC.
class MaeClassifier : public nn::Module {
 public:
  MaeClassifier(MaeEncoder encoder, const ClassifierHeadConfig& head, Rng& rng);
  MaeClassifier(const MaeConfig& cfg, const ClassifierHeadConfig& head, Rng& rng);

  Tensor pooled(const Tensor& patches, nn::RunMode mode) const;  // [1 x width]
  // images: each [h x w x c]. Returns [batch x classes] logits.
  Tensor forward(const std::vector<Tensor>& images, nn::RunMode mode) const;

  const MaeEncoder& encoder() const { return encoder_; }
  const ClassifierHeadConfig& head_config() const { return head_cfg_; }

  void collect_parameters(std::vector<nn::NamedTensor>& out,
                          const std::string& prefix) const override;

 private:
  MaeEncoder encoder_;
  ClassifierHeadConfig head_cfg_;
  nn::Linear fc1_, fc2_;
};

// Drops the decoder, deep-copies the encoder and attaches a fresh
// classification head.
MaeClassifier finetune_head_swap(const MaeModel& model, const ClassifierHeadConfig& head, Rng& rng);

// Pooled eval-mode encoder representation per frame: [n x encoder width].
Tensor extract_features(const MaeClassifier& classifier, const std::vector<Tensor>& frames);

struct MaeTrainConfig {
  OptimConfig optim;  // lr_peak, batch_size, epochs, weight_decay used
  std::size_t max_steps = 0;  // stop early after this many steps (0: no cap)
  std::uint64_t seed = 0;

  // Pre-training defaults: AdamW, lr 5e-4, batch 1024, 500 epochs.
  static MaeTrainConfig pretraining();
  // Fine-tuning defaults: AdamW, lr 1e-4, batch 256.
  static MaeTrainConfig finetuning();
};

// Returns the loss of every optimizer step.
std::vector<double> pretrain_mae(MaeModel& model, const std::vector<Tensor>& images,
                                 const MaeTrainConfig& cfg);
std::vector<double> finetune_classifier(MaeClassifier& classifier, const std::vector<Tensor>& images,
                                        const std::vector<int>& labels, const MaeTrainConfig& cfg);

}  // namespace affect
