#include "affect/mae.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "affect/errors.hpp"
#include "affect/objectives.hpp"

namespace affect {

PatchGrid patchify(const Tensor& image, std::size_t patch_size) {
  if (image.rank() != 3) throw ShapeError("patchify expects [h x w x c], got " + shape_str(image.shape()));
  const std::size_t h = image.dim(0), w = image.dim(1), c = image.dim(2);
  if (patch_size == 0 || h % patch_size != 0 || w % patch_size != 0) {
    throw ConfigError("image " + std::to_string(h) + "x" + std::to_string(w) +
                      " is not divisible into " + std::to_string(patch_size) + "x" +
                      std::to_string(patch_size) + " patches");
  }
  PatchGrid grid;
  grid.image = image;
  grid.patch_size = patch_size;
  grid.grid_rows = h / patch_size;
  grid.grid_cols = w / patch_size;
  const std::size_t per = patch_size * patch_size * c;
  auto src = image.data();
  std::vector<double> out(grid.count() * per);
  for (std::size_t gr = 0; gr < grid.grid_rows; ++gr) {
    for (std::size_t gc = 0; gc < grid.grid_cols; ++gc) {
      double* dst = out.data() + (gr * grid.grid_cols + gc) * per;
      for (std::size_t y = 0; y < patch_size; ++y) {
        const double* row = src.data() + ((gr * patch_size + y) * w + gc * patch_size) * c;
        std::copy_n(row, patch_size * c, dst + y * patch_size * c);
      }
    }
  }
  grid.patches = Tensor::from_vector({grid.count(), per}, std::move(out));
  return grid;
}

Tensor unpatchify(const Tensor& patches, std::size_t height, std::size_t width,
                  std::size_t channels, std::size_t patch_size) {
  if (patch_size == 0 || height % patch_size != 0 || width % patch_size != 0) {
    throw ConfigError("unpatchify: dimensions not divisible by patch size");
  }
  const std::size_t rows = height / patch_size, cols = width / patch_size;
  const std::size_t per = patch_size * patch_size * channels;
  if (patches.rank() != 2 || patches.dim(0) != rows * cols || patches.dim(1) != per) {
    throw ShapeError("unpatchify: patches " + shape_str(patches.shape()) + " do not tile " +
                     std::to_string(height) + "x" + std::to_string(width));
  }
  auto src = patches.data();
  std::vector<double> out(height * width * channels);
  for (std::size_t gr = 0; gr < rows; ++gr) {
    for (std::size_t gc = 0; gc < cols; ++gc) {
      const double* p = src.data() + (gr * cols + gc) * per;
      for (std::size_t y = 0; y < patch_size; ++y) {
        double* row = out.data() + ((gr * patch_size + y) * width + gc * patch_size) * channels;
        std::copy_n(p + y * patch_size * channels, patch_size * channels, row);
      }
    }
  }
  return Tensor::from_vector({height, width, channels}, std::move(out));
}

Tensor unpatchify(const PatchGrid& grid) {
  return unpatchify(grid.patches, grid.grid_rows * grid.patch_size,
                    grid.grid_cols * grid.patch_size, grid.image.dim(2), grid.patch_size);
}

MaskPlan sample_mask(std::size_t patches, double ratio, std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio < 1.0)) throw ConfigError("mask ratio must be in (0, 1)");
  auto count = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(patches)));
  if (count == 0 || count >= patches) {
    throw ConfigError("degenerate mask: ratio " + std::to_string(ratio) + " over " +
                      std::to_string(patches) + " patches masks " + std::to_string(count));
  }
  std::vector<std::size_t> order(patches);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  MaskPlan plan;
  plan.ratio = ratio;
  plan.masked.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(count));
  plan.visible.assign(order.begin() + static_cast<std::ptrdiff_t>(count), order.end());
  std::sort(plan.masked.begin(), plan.masked.end());
  std::sort(plan.visible.begin(), plan.visible.end());
  return plan;
}

std::size_t MaeConfig::patch_count() const {
  return (image_height / patch_size) * (image_width / patch_size);
}

void MaeConfig::validate() const {
  if (patch_size == 0 || image_height % patch_size != 0 || image_width % patch_size != 0) {
    throw ConfigError("MAE image size must be a multiple of the patch size");
  }
  if (channels != 1 && channels != 3) throw ConfigError("MAE images need 1 or 3 channels");
  encoder.validate();
  decoder.validate();
  if (!(mask_ratio > 0.0 && mask_ratio < 1.0)) throw ConfigError("mask ratio must be in (0, 1)");
}

void MaeConfig::to_keyvalues(KeyValues& kv) const {
  kv.set("mae_image_height", image_height);
  kv.set("mae_image_width", image_width);
  kv.set("mae_channels", channels);
  kv.set("mae_patch", patch_size);
  kv.set("mae_enc_depth", encoder.depth);
  kv.set("mae_enc_heads", encoder.heads);
  kv.set("mae_enc_dim", encoder.model_dim);
  kv.set("mae_enc_ffn", encoder.ffn_dim);
  kv.set("mae_dec_depth", decoder.depth);
  kv.set("mae_dec_heads", decoder.heads);
  kv.set("mae_dec_dim", decoder.model_dim);
  kv.set("mae_dec_ffn", decoder.ffn_dim);
  kv.set("mae_mask_ratio", mask_ratio);
}

MaeConfig MaeConfig::from_keyvalues(const KeyValues& kv) {
  MaeConfig c;
  c.image_height = kv.get_size("mae_image_height", c.image_height);
  c.image_width = kv.get_size("mae_image_width", c.image_width);
  c.channels = kv.get_size("mae_channels", c.channels);
  c.patch_size = kv.get_size("mae_patch", c.patch_size);
  c.encoder.depth = kv.get_size("mae_enc_depth", c.encoder.depth);
  c.encoder.heads = kv.get_size("mae_enc_heads", c.encoder.heads);
  c.encoder.model_dim = kv.get_size("mae_enc_dim", c.encoder.model_dim);
  c.encoder.ffn_dim = kv.get_size("mae_enc_ffn", 4 * c.encoder.model_dim);
  c.decoder.depth = kv.get_size("mae_dec_depth", c.decoder.depth);
  c.decoder.heads = kv.get_size("mae_dec_heads", c.decoder.heads);
  c.decoder.model_dim = kv.get_size("mae_dec_dim", c.decoder.model_dim);
  c.decoder.ffn_dim = kv.get_size("mae_dec_ffn", 4 * c.decoder.model_dim);
  c.mask_ratio = kv.get_double("mae_mask_ratio", c.mask_ratio);
  c.validate();
  return c;
}

MaeEncoder::MaeEncoder(const MaeConfig& cfg, Rng& rng)
    : cfg_(cfg), embed_(cfg.patch_values(), cfg.encoder.model_dim, rng), blocks_(cfg.encoder, rng) {
  cfg.validate();
}

Tensor MaeEncoder::forward(const Tensor& patches, const std::vector<std::size_t>& indices,
                           nn::RunMode mode) const {
  if (patches.rank() != 2 || patches.dim(1) != cfg_.patch_values()) {
    throw ShapeError("MAE encoder expects [p x " + std::to_string(cfg_.patch_values()) +
                     "] patches, got " + shape_str(patches.shape()));
  }
  Tensor positions = nn::sinusoidal_positions(patches.dim(0), width());
  Tensor tokens = add(embed_.forward(gather_rows(patches, indices)), gather_rows(positions, indices));
  return blocks_.forward(tokens, {}, mode);
}

void MaeEncoder::collect_parameters(std::vector<nn::NamedTensor>& out,
                                    const std::string& prefix) const {
  embed_.collect_parameters(out, prefix + "embed.");
  blocks_.collect_parameters(out, prefix + "blocks.");
}

MaeModel::MaeModel(const MaeConfig& cfg, Rng& rng)
    : encoder_(cfg, rng),
      decoder_embed_(cfg.encoder.model_dim, cfg.decoder.model_dim, rng),
      mask_token_(Tensor::zeros({1, cfg.decoder.model_dim}, true)),
      decoder_(cfg.decoder, rng),
      head_(cfg.decoder.model_dim, cfg.patch_values(), rng) {}

Tensor MaeModel::forward(const Tensor& patches, const MaskPlan& plan, nn::RunMode mode) const {
  const std::size_t p = patches.dim(0);
  if (plan.patch_count() != p) {
    throw ShapeError("mask plan covers " + std::to_string(plan.patch_count()) + " patches, image has " +
                     std::to_string(p));
  }
  Tensor encoded = encoder_.forward(patches, plan.visible, mode);
  Tensor pool = concat({decoder_embed_.forward(encoded), mask_token_}, 0);
  // Row v of pool is the mask token; visible patches map to their own row.
  std::vector<std::size_t> order(p, plan.visible.size());
  for (std::size_t i = 0; i < plan.visible.size(); ++i) order[plan.visible[i]] = i;
  Tensor tokens = add(gather_rows(pool, order), nn::sinusoidal_positions(p, config().decoder.model_dim));
  return head_.forward(decoder_.forward(tokens, {}, mode));
}

void MaeModel::collect_parameters(std::vector<nn::NamedTensor>& out,
                                  const std::string& prefix) const {
  encoder_.collect_parameters(out, prefix + "encoder.");
  decoder_embed_.collect_parameters(out, prefix + "decoder_embed.");
  out.emplace_back(prefix + "mask_token", mask_token_);
  decoder_.collect_parameters(out, prefix + "decoder.");
  head_.collect_parameters(out, prefix + "head.");
}

Tensor reconstruction_loss(const Tensor& reconstruction, const Tensor& target,
                           const MaskPlan& plan) {
  if (reconstruction.shape() != target.shape()) {
    throw ShapeError("reconstruction " + shape_str(reconstruction.shape()) + " vs target " +
                     shape_str(target.shape()));
  }
  if (plan.masked.empty()) throw ContractError("reconstruction loss with no masked patches");
  return mean(square(sub(gather_rows(reconstruction, plan.masked), gather_rows(target, plan.masked))));
}

MaeClassifier::MaeClassifier(MaeEncoder encoder, const ClassifierHeadConfig& head, Rng& rng)
    : encoder_(std::move(encoder)),
      head_cfg_(head),
      fc1_(encoder_.width(), head.hidden, rng),
      fc2_(head.hidden, head.classes, rng) {}

MaeClassifier::MaeClassifier(const MaeConfig& cfg, const ClassifierHeadConfig& head, Rng& rng)
    : MaeClassifier(MaeEncoder(cfg, rng), head, rng) {}

Tensor MaeClassifier::pooled(const Tensor& patches, nn::RunMode mode) const {
  std::vector<std::size_t> all(patches.dim(0));
  std::iota(all.begin(), all.end(), 0);
  Tensor tokens = encoder_.forward(patches, all, mode);
  return reshape(mean_axis(tokens, 0), {1, encoder_.width()});
}

Tensor MaeClassifier::forward(const std::vector<Tensor>& images, nn::RunMode mode) const {
  if (images.empty()) throw ContractError("classifier forward on an empty batch");
  std::vector<Tensor> rows;
  rows.reserve(images.size());
  for (const auto& img : images) {
    rows.push_back(pooled(patchify(img, encoder_.config().patch_size).patches, mode));
  }
  Tensor features = rows.size() == 1 ? rows.front() : concat(rows, 0);
  Tensor hidden = dropout(relu(fc1_.forward(features)), head_cfg_.dropout, mode.training, mode.rng);
  return fc2_.forward(hidden);
}

void MaeClassifier::collect_parameters(std::vector<nn::NamedTensor>& out,
                                       const std::string& prefix) const {
  encoder_.collect_parameters(out, prefix + "encoder.");
  fc1_.collect_parameters(out, prefix + "fc1.");
  fc2_.collect_parameters(out, prefix + "fc2.");
}

MaeClassifier finetune_head_swap(const MaeModel& model, const ClassifierHeadConfig& head, Rng& rng) {
  Rng scratch(0);
  MaeEncoder copy(model.config(), scratch);
  auto src = model.encoder().parameters();
  auto dst = copy.parameters();
  for (std::size_t i = 0; i < src.size(); ++i) {
    std::copy(src[i].data().begin(), src[i].data().end(), dst[i].mutable_data().begin());
  }
  return MaeClassifier(std::move(copy), head, rng);
}

Tensor extract_features(const MaeClassifier& classifier, const std::vector<Tensor>& frames) {
  if (frames.empty()) throw ContractError("extract_features needs at least one frame");
  NoGradGuard no_grad;
  const std::size_t width = classifier.encoder().width();
  const std::size_t patch = classifier.encoder().config().patch_size;
  std::vector<double> out;
  out.reserve(frames.size() * width);
  for (const auto& f : frames) {
    Tensor row = classifier.pooled(patchify(f, patch).patches, nn::RunMode::eval());
    out.insert(out.end(), row.data().begin(), row.data().end());
  }
  return Tensor::from_vector({frames.size(), width}, std::move(out));
}

MaeTrainConfig MaeTrainConfig::pretraining() {
  MaeTrainConfig c;
  c.optim.lr_peak = 5e-4;
  c.optim.batch_size = 1024;
  c.optim.epochs = 500;
  c.optim.dropout = 0.0;
  return c;
}

MaeTrainConfig MaeTrainConfig::finetuning() {
  MaeTrainConfig c;
  c.optim.lr_peak = 1e-4;
  c.optim.batch_size = 256;
  c.optim.epochs = 20;
  c.optim.dropout = 0.0;
  return c;
}

namespace {

// Shared minibatch loop: shuffles per epoch, warms up over the first epoch,
// then cosine-decays. batch_loss builds the mean loss of one batch.
template <class BatchLoss>
std::vector<double> run_minibatches(const nn::Module& model, std::size_t examples,
                                    const MaeTrainConfig& cfg, BatchLoss batch_loss) {
  if (examples == 0) throw ContractError("training set is empty");
  cfg.optim.validate();
  const std::size_t batch = std::min(cfg.optim.batch_size, examples);
  const std::size_t per_epoch = (examples + batch - 1) / batch;
  std::size_t total = per_epoch * cfg.optim.epochs;
  if (cfg.max_steps > 0) total = std::min(total, cfg.max_steps);
  ScheduleState sched{0, std::min(per_epoch, total), total};

  AdamW opt(model.parameters(), cfg.optim);
  Rng rng(cfg.seed);
  std::vector<std::size_t> order(examples);
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> losses;
  losses.reserve(total);
  while (losses.size() < total) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t b = 0; b < per_epoch && losses.size() < total; ++b) {
      std::size_t begin = b * batch;
      std::size_t end = std::min(examples, begin + batch);
      std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(begin),
                                   order.begin() + static_cast<std::ptrdiff_t>(end));
      opt.zero_grad();
      Tensor loss = batch_loss(idx, rng);
      if (!std::isfinite(loss.item())) throw NumericalError("training loss became non-finite");
      loss.backward();
      sched.step = losses.size() + 1;
      opt.step(lr_at(sched, cfg.optim));
      losses.push_back(loss.item());
    }
  }
  return losses;
}

}  // namespace

std::vector<double> pretrain_mae(MaeModel& model, const std::vector<Tensor>& images,
                                 const MaeTrainConfig& cfg) {
  const auto& mc = model.config();
  std::vector<Tensor> patches;
  patches.reserve(images.size());
  for (const auto& img : images) patches.push_back(patchify(img, mc.patch_size).patches);
  return run_minibatches(model, images.size(), cfg, [&](const std::vector<std::size_t>& idx, Rng& rng) {
    std::vector<Tensor> losses;
    for (auto i : idx) {
      MaskPlan plan = sample_mask(mc.patch_count(), mc.mask_ratio, rng());
      Tensor recon = model.forward(patches[i], plan, nn::RunMode::train(rng));
      losses.push_back(reconstruction_loss(recon, patches[i], plan));
    }
    return scale(sum(concat(losses, 0)), 1.0 / static_cast<double>(idx.size()));
  });
}

std::vector<double> finetune_classifier(MaeClassifier& classifier, const std::vector<Tensor>& images,
                                        const std::vector<int>& labels, const MaeTrainConfig& cfg) {
  if (images.size() != labels.size()) throw ContractError("one label per image required");
  return run_minibatches(classifier, images.size(), cfg,
                         [&](const std::vector<std::size_t>& idx, Rng& rng) {
                           std::vector<Tensor> batch;
                           std::vector<int> ids;
                           for (auto i : idx) {
                             batch.push_back(images[i]);
                             ids.push_back(labels[i]);
                           }
                           Tensor logits = classifier.forward(batch, nn::RunMode::train(rng));
                           return expr_loss(logits, ids, {});
                         });
}

}  // namespace affect
