#include "gdvig/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <memory>
#include <numeric>

#include "gdvig/error.hpp"

namespace gdvig {

std::vector<int> argmax_rows(const Tensor& scores) {
  if (scores.rank() != 2) throw DimensionError("argmax_rows: expected B x c, got " + shape_str(scores.shape()));
  const std::size_t b = scores.dim(0), c = scores.dim(1);
  std::vector<int> out(b);
  for (std::size_t i = 0; i < b; ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < c; ++j)
      if (scores[i * c + j] > scores[i * c + best]) best = j;
    out[i] = static_cast<int>(best);
  }
  return out;
}

Tensor softmax_rows(const Tensor& logits) {
  if (logits.rank() != 2) throw DimensionError("softmax_rows: expected B x c, got " + shape_str(logits.shape()));
  const std::size_t b = logits.dim(0), c = logits.dim(1);
  Tensor out(logits.shape());
  for (std::size_t i = 0; i < b; ++i) {
    double top = logits[i * c];
    for (std::size_t j = 1; j < c; ++j) top = std::max(top, logits[i * c + j]);
    double total = 0;
    for (std::size_t j = 0; j < c; ++j) total += out[i * c + j] = std::exp(logits[i * c + j] - top);
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] /= total;
  }
  return out;
}

std::vector<std::vector<std::size_t>> confusion_matrix(std::span<const int> labels, std::span<const int> preds,
                                                       std::size_t num_classes) {
  if (labels.size() != preds.size()) throw DimensionError("confusion_matrix: label/prediction count mismatch");
  std::vector<std::vector<std::size_t>> m(num_classes, std::vector<std::size_t>(num_classes, 0));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || preds[i] < 0 || static_cast<std::size_t>(labels[i]) >= num_classes ||
        static_cast<std::size_t>(preds[i]) >= num_classes) {
      throw std::out_of_range("confusion_matrix: class index out of range");
    }
    ++m[labels[i]][preds[i]];
  }
  return m;
}

double accuracy(std::span<const int> labels, std::span<const int> preds) {
  if (labels.size() != preds.size()) throw DimensionError("accuracy: label/prediction count mismatch");
  if (labels.empty()) throw MetricError("accuracy: empty split");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hit += labels[i] == preds[i];
  return static_cast<double>(hit) / static_cast<double>(labels.size());
}

double auc_binary(std::span<const double> scores, std::span<const bool> positive) {
  if (scores.size() != positive.size()) throw DimensionError("auc: score/label count mismatch");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Twice the positive rank sum, with tied groups sharing their mean rank.
  std::uint64_t twice_rank_sum = 0, n_pos = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const std::uint64_t twice_mean_rank = (i + 1) + j;  // ranks i+1 .. j
    for (std::size_t t = i; t < j; ++t)
      if (positive[order[t]]) {
        twice_rank_sum += twice_mean_rank;
        ++n_pos;
      }
    i = j;
  }
  const std::uint64_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) throw MetricError("auc undefined: split contains a single class");
  const std::uint64_t twice_u = twice_rank_sum - n_pos * (n_pos + 1);
  return static_cast<double>(twice_u) / static_cast<double>(2 * n_pos * n_neg);
}

double auc(const Tensor& probs, std::span<const int> labels) {
  if (probs.rank() != 2 || probs.dim(0) != labels.size()) throw DimensionError("auc: probs must be B x c");
  const std::size_t b = probs.dim(0), c = probs.dim(1);
  auto column = [&](std::size_t cls) {
    std::vector<double> s(b);
    std::unique_ptr<bool[]> pos(new bool[b]);  // vector<bool> has no contiguous storage
    for (std::size_t i = 0; i < b; ++i) {
      s[i] = probs[i * c + cls];
      pos[i] = labels[i] == static_cast<int>(cls);
    }
    return auc_binary(s, std::span<const bool>(pos.get(), b));
  };
  if (c == 2) return column(1);
  double total = 0;
  for (std::size_t cls = 0; cls < c; ++cls) total += column(cls);
  return total / static_cast<double>(c);
}

ClassMetrics class_metrics(const std::vector<std::vector<std::size_t>>& m, std::size_t cls) {
  std::size_t tp = m[cls][cls], predicted = 0, actual = 0;
  for (std::size_t i = 0; i < m.size(); ++i) {
    predicted += m[i][cls];
    actual += m[cls][i];
  }
  ClassMetrics r;
  r.support = actual;
  r.precision = predicted ? static_cast<double>(tp) / static_cast<double>(predicted) : 0.0;
  r.recall = actual ? static_cast<double>(tp) / static_cast<double>(actual) : 0.0;
  // 2tp / (2tp + fp + fn), exact on integer counts.
  const std::size_t denom = predicted + actual;
  r.f1 = denom ? static_cast<double>(2 * tp) / static_cast<double>(denom) : 0.0;
  return r;
}

double f1_score(std::span<const int> labels, std::span<const int> preds, std::size_t num_classes) {
  const auto m = confusion_matrix(labels, preds, num_classes);
  if (num_classes == 2) return class_metrics(m, 1).f1;
  double total = 0;
  for (std::size_t c = 0; c < num_classes; ++c) total += class_metrics(m, c).f1;
  return total / static_cast<double>(num_classes);
}

MetricsReport evaluate_scores(const Tensor& probs, std::span<const int> labels) {
  if (probs.rank() != 2 || probs.dim(0) != labels.size()) throw DimensionError("evaluate: probs must be B x c");
  MetricsReport r;
  r.n_samples = labels.size();
  r.num_classes = probs.dim(1);
  const std::vector<int> preds = argmax_rows(probs);
  r.acc = accuracy(labels, preds);
  r.confusion = confusion_matrix(labels, preds, r.num_classes);
  for (std::size_t c = 0; c < r.num_classes; ++c) r.per_class.push_back(class_metrics(r.confusion, c));
  r.f1 = f1_score(labels, preds, r.num_classes);
  try {
    r.auc = auc(probs, labels);
  } catch (const MetricError& e) {
    r.auc_error = e.what();
  }
  return r;
}

std::string to_json(const MetricsReport& r) {
  nlohmann::json j;
  j["n_samples"] = r.n_samples;
  j["acc"] = r.acc;
  j["f1"] = r.f1;
  if (r.auc) {
    j["auc"] = *r.auc;
  } else {
    j["auc"] = nullptr;
    j["auc_error"] = r.auc_error;
  }
  j["confusion"] = r.confusion;
  auto& per = j["per_class"] = nlohmann::json::array();
  for (const auto& c : r.per_class) {
    per.push_back({{"precision", c.precision}, {"recall", c.recall}, {"f1", c.f1}, {"support", c.support}});
  }
  return j.dump();
}

}  // namespace gdvig
