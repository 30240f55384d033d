#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "affect/task.hpp"
#include "affect/tensor.hpp"

namespace affect {

// One video's frame features [n x d] with labels and per-frame validity.
struct FrameSequence {
  std::string video_id;
  Tensor features;
  TaskLabels labels;
  std::vector<bool> valid;

  std::size_t frames() const { return features.defined() ? features.dim(0) : 0; }
  std::size_t feature_dim() const { return features.dim(1); }
  void validate() const;
};

struct SegmentationConfig {
  std::size_t window = 300;
  std::size_t stride = 200;

  // window >= 1, stride >= 1, stride <= window.
  void validate() const;
};

// A window of `window` rows starting at 1-based frame `start`. Rows past the
// end of the video are zero and have pad_mask false.
struct Segment {
  std::string video_id;
  std::size_t index = 1;  // 1-based
  std::size_t start = 1;  // 1-based: (index - 1) * stride + 1
  std::size_t source_frames = 0;
  Tensor frames;
  std::vector<bool> pad_mask;  // true = real frame

  std::size_t window() const { return pad_mask.size(); }
  std::size_t real_frames() const;
  // 0-based source frame of window row `row`.
  std::size_t frame_of(std::size_t row) const { return start - 1 + row; }
};

// floor(n / stride) + 1, before dropping segments that start past the end.
std::size_t nominal_segment_count(std::size_t frames, const SegmentationConfig& cfg);

std::vector<Segment> split(const FrameSequence& seq, const SegmentationConfig& cfg);

struct SegmentPrediction {
  const Segment* segment;
  Tensor values;  // [window x out_dim]
};

// Averages every real-row prediction that covers a frame. Throws
// CoverageError when some frame of the video is not covered.
Tensor reassemble(std::span<const SegmentPrediction> preds);

}  // namespace affect
