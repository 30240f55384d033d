#include "affect/task.hpp"

#include <algorithm>
#include <cctype>

#include "affect/errors.hpp"

namespace affect {

std::size_t task_output_dim(Task task) {
  switch (task) {
    case Task::VA: return kVaDims;
    case Task::Expr: return kExprClasses;
    case Task::AU: return kAuUnits;
  }
  return 0;
}

std::size_t task_label_width(Task task) {
  switch (task) {
    case Task::VA: return kVaDims;
    case Task::Expr: return 1;
    case Task::AU: return kAuUnits;
  }
  return 0;
}

std::string task_name(Task task) {
  switch (task) {
    case Task::VA: return "va";
    case Task::Expr: return "expr";
    case Task::AU: return "au";
  }
  return "?";
}

std::string task_dir_name(Task task) {
  switch (task) {
    case Task::VA: return "VA";
    case Task::Expr: return "EXPR";
    case Task::AU: return "AU";
  }
  return "?";
}

Task parse_task(std::string_view name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (lower == "va") return Task::VA;
  if (lower == "expr") return Task::Expr;
  if (lower == "au") return Task::AU;
  throw ConfigError("unknown task '" + std::string(name) + "' (expected va, expr or au)");
}

bool TaskLabels::frame_valid(std::size_t frame) const {
  const std::size_t width = task_label_width(task);
  for (std::size_t c = 0; c < width; ++c) {
    double v = values[frame * width + c];
    if (task == Task::VA) {
      if (v < -1.0 || v > 1.0) return false;
    } else if (v < 0.0) {
      return false;
    }
  }
  return true;
}

std::vector<bool> TaskLabels::validity() const {
  std::vector<bool> out(frames());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = frame_valid(i);
  return out;
}

}  // namespace affect
