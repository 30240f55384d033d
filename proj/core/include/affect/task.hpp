#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace affect {

enum class Task { VA, Expr, AU };

inline constexpr std::size_t kVaDims = 2;
inline constexpr std::size_t kExprClasses = 8;
inline constexpr std::size_t kAuUnits = 12;

inline constexpr std::array<std::string_view, kExprClasses> kExprNames = {
    "Neutral", "Anger", "Disgust", "Fear", "Happiness", "Sadness", "Surprise", "Other"};
inline constexpr std::array<std::string_view, kAuUnits> kAuNames = {
    "AU1", "AU2", "AU4", "AU6", "AU7", "AU10", "AU12", "AU15", "AU23", "AU24", "AU25", "AU26"};

// Invalid-frame sentinels in annotation files.
inline constexpr double kInvalidVa = -5.0;
inline constexpr int kInvalidLabel = -1;

// Model output width per task: 2, 8 or 12.
std::size_t task_output_dim(Task task);
// Label values stored per frame: 2 for VA, 1 class id for Expr, 12 for AU.
std::size_t task_label_width(Task task);
std::string task_name(Task task);      // "va" / "expr" / "au"
std::string task_dir_name(Task task);  // "VA" / "EXPR" / "AU"
Task parse_task(std::string_view name);

// Per-frame labels for one task, row-major [frames x task_label_width].
// Expr stores class ids, AU stores 0/1; invalid entries hold the sentinels.
struct TaskLabels {
  Task task = Task::VA;
  std::vector<double> values;

  std::size_t frames() const { return values.size() / task_label_width(task); }
  double at(std::size_t frame, std::size_t col = 0) const {
    return values[frame * task_label_width(task) + col];
  }
  // A frame is valid when none of its entries carry the invalid sentinel.
  bool frame_valid(std::size_t frame) const;
  std::vector<bool> validity() const;
};

}  // namespace affect
