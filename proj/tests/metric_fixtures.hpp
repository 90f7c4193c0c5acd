#pragma once

#include <vector>

namespace fixture {

/// Label/prediction sets with accuracy and F1 worked out by hand from their confusion matrices.
struct MetricCase {
  const char* name;
  std::size_t classes;
  std::vector<int> labels;
  std::vector<int> preds;
  double acc;
  double f1;
};

inline std::vector<MetricCase> metric_cases() {
  return {
      // tp=4 fn=2 fp=1 tn=3
      {"binary", 2, {1, 0, 1, 1, 0, 0, 1, 0, 1, 1}, {1, 0, 0, 1, 1, 0, 1, 0, 0, 1}, 0.7, 8.0 / 11.0},
      // per-class f1: 2/4, 4/5, 2/3
      {"three_class", 3, {0, 0, 1, 1, 2, 2}, {0, 1, 1, 1, 2, 0}, 4.0 / 6.0, 59.0 / 90.0},
      // no positive predicted: f1 is taken as 0
      {"all_negative", 2, {1, 1, 0, 0}, {0, 0, 0, 0}, 0.5, 0.0},
  };
}

}  // namespace fixture
