#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "gdvig/gaze_data.hpp"
#include "gdvig/metrics.hpp"
#include "gdvig/model.hpp"

namespace gdvig {

struct Batch {
  Tensor images;               // B x 1 x H x W
  std::optional<Tensor> gaze;  // B x 1 x H x W
  std::vector<int> labels;
};

/// Gaze map of a record: the stored map, else one rebuilt from its fixations.
Tensor record_gaze(const SampleRecord& r);
Batch make_batch(std::span<const SampleRecord* const> records, bool with_gaze);

struct EpochLog {
  std::size_t epoch = 0;  // 1-based
  std::optional<double> l_gmg;
  double l_gdc = 0;
  double l_total = 0;
  double train_acc = 0;  // on the training batches as they were fitted
  std::optional<double> val_acc;
};

/// One deterministic log line (no timings).
std::string format_epoch(const EpochLog& e);

struct TrainResult {
  GdVig model;  // state after the last epoch
  std::vector<EpochLog> epochs;
  std::size_t best_epoch = 0;
  std::vector<std::string> val_ids;
};

using ProgressFn = std::function<void(const EpochLog&)>;

/// Seeded shuffle, joint objective, Adam. When out_dir is set it receives
/// train.log, split.txt, best/ (by validation accuracy, training accuracy
/// without a validation split) and last/ checkpoints.
/// A non-finite loss aborts with NumericError naming epoch and batch.
TrainResult train(const Corpus& corpus, const RunConfig& cfg, const std::optional<std::filesystem::path>& out_dir,
                  const ProgressFn& progress = {});

/// Inference-mode logits (B x c) for records, in order.
Tensor predict_logits(GdVig& model, const TrainConfig& tc, std::span<const SampleRecord* const> records,
                      std::size_t batch_size);

struct EvalResult {
  MetricsReport report;
  std::vector<std::string> ids;
  std::vector<int> labels;
  Tensor logits;
  Tensor probs;
};

EvalResult evaluate(GdVig& model, const TrainConfig& tc, const std::vector<SampleRecord>& records);
EvalResult evaluate_checkpoint(const std::filesystem::path& checkpoint, const Corpus& corpus, const std::string& split);

/// One JSON object per line: id, logits, label, pred.
std::string predictions_jsonl(const EvalResult& r);

std::vector<const SampleRecord*> pointers(const std::vector<SampleRecord>& records);

}  // namespace gdvig
