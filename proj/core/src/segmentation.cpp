#include "affect/segmentation.hpp"

#include <algorithm>

#include "affect/errors.hpp"

namespace affect {

void FrameSequence::validate() const {
  if (!features.defined() || features.rank() != 2) {
    throw ContractError("sequence '" + video_id + "' needs a [frames x dim] feature matrix");
  }
  const std::size_t n = frames();
  if (labels.frames() != n || valid.size() != n) {
    throw ContractError("sequence '" + video_id + "': " + std::to_string(n) + " frames but " +
                        std::to_string(labels.frames()) + " labels and " +
                        std::to_string(valid.size()) + " validity flags");
  }
}

void SegmentationConfig::validate() const {
  if (window < 1 || stride < 1) throw ConfigError("segment window and stride must be >= 1");
  if (stride > window) {
    throw ConfigError("segment stride " + std::to_string(stride) + " exceeds window " +
                      std::to_string(window) + "; consecutive segments must overlap or touch");
  }
}

std::size_t Segment::real_frames() const {
  return static_cast<std::size_t>(std::count(pad_mask.begin(), pad_mask.end(), true));
}

std::size_t nominal_segment_count(std::size_t frames, const SegmentationConfig& cfg) {
  return frames / cfg.stride + 1;
}

std::vector<Segment> split(const FrameSequence& seq, const SegmentationConfig& cfg) {
  cfg.validate();
  const std::size_t n = seq.frames();
  if (n == 0) throw ContractError("cannot segment an empty sequence '" + seq.video_id + "'");
  const std::size_t d = seq.feature_dim();
  const std::size_t w = cfg.window;
  auto src = seq.features.data();

  std::vector<Segment> out;
  const std::size_t nominal = nominal_segment_count(n, cfg);
  for (std::size_t i = 1; i <= nominal; ++i) {
    const std::size_t start = (i - 1) * cfg.stride + 1;
    if (start > n) break;  // would hold no frames
    Segment seg;
    seg.video_id = seq.video_id;
    seg.index = i;
    seg.start = start;
    seg.source_frames = n;
    seg.pad_mask.assign(w, false);
    std::vector<double> rows(w * d, 0.0);
    for (std::size_t r = 0; r < w; ++r) {
      std::size_t f = start - 1 + r;
      if (f >= n) break;
      seg.pad_mask[r] = true;
      std::copy_n(src.data() + f * d, d, rows.data() + r * d);
    }
    seg.frames = Tensor::from_vector({w, d}, std::move(rows));
    out.push_back(std::move(seg));
  }
  return out;
}

Tensor reassemble(std::span<const SegmentPrediction> preds) {
  if (preds.empty()) throw CoverageError("no segment predictions to reassemble");
  const std::size_t n = preds.front().segment->source_frames;
  const std::size_t out_dim = preds.front().values.dim(1);
  std::vector<double> total(n * out_dim, 0.0);
  std::vector<std::size_t> count(n, 0);
  for (const auto& p : preds) {
    const Segment& seg = *p.segment;
    if (seg.source_frames != n) {
      throw ContractError("reassemble mixes segments from videos of different lengths");
    }
    if (p.values.dim(0) != seg.window() || p.values.dim(1) != out_dim) {
      throw ShapeError("segment prediction " + shape_str(p.values.shape()) +
                       " does not match window " + std::to_string(seg.window()));
    }
    auto v = p.values.data();
    for (std::size_t r = 0; r < seg.window(); ++r) {
      if (!seg.pad_mask[r]) continue;
      std::size_t f = seg.frame_of(r);
      for (std::size_t c = 0; c < out_dim; ++c) total[f * out_dim + c] += v[r * out_dim + c];
      ++count[f];
    }
  }
  for (std::size_t f = 0; f < n; ++f) {
    if (count[f] == 0) {
      throw CoverageError("frame " + std::to_string(f + 1) + " of " + std::to_string(n) +
                          " is not covered by any segment");
    }
    for (std::size_t c = 0; c < out_dim; ++c) total[f * out_dim + c] /= static_cast<double>(count[f]);
  }
  return Tensor::from_vector({n, out_dim}, std::move(total));
}

}  // namespace affect
