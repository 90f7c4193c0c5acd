#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gdvig/tensor.hpp"

namespace gdvig {

struct ClassMetrics {
  double precision = 0;
  double recall = 0;
  double f1 = 0;
  std::size_t support = 0;
};

struct MetricsReport {
  std::size_t n_samples = 0;
  std::size_t num_classes = 0;
  double acc = 0;
  std::optional<double> auc;  // empty when a class is missing from the split
  std::string auc_error;
  double f1 = 0;  // positive-class F1 for two classes, macro F1 otherwise
  std::vector<std::vector<std::size_t>> confusion;  // [true][predicted]
  std::vector<ClassMetrics> per_class;
};

/// Index of the largest entry per row; ties go to the lower index.
std::vector<int> argmax_rows(const Tensor& scores);
/// Row-wise softmax of B x c logits.
Tensor softmax_rows(const Tensor& logits);

std::vector<std::vector<std::size_t>> confusion_matrix(std::span<const int> labels, std::span<const int> preds,
                                                       std::size_t num_classes);
double accuracy(std::span<const int> labels, std::span<const int> preds);

/// Probability that a random positive outscores a random negative, ties
/// counted one half. Throws MetricError unless both groups are non-empty.
double auc_binary(std::span<const double> scores, std::span<const bool> positive);
/// Two classes: AUC of the class-1 column. More: one-vs-rest macro average.
double auc(const Tensor& probs, std::span<const int> labels);

/// F1 of one class from a confusion matrix (0 when undefined).
ClassMetrics class_metrics(const std::vector<std::vector<std::size_t>>& confusion, std::size_t cls);
double f1_score(std::span<const int> labels, std::span<const int> preds, std::size_t num_classes);

/// probs is B x c (rows sum to 1).
MetricsReport evaluate_scores(const Tensor& probs, std::span<const int> labels);

std::string to_json(const MetricsReport& r);

}  // namespace gdvig
