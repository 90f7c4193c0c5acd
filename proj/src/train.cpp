#include "gdvig/train.hpp"

#include <fstream>
#include <json.hpp>
#include <numeric>
#include <sstream>

#include "gdvig/adam.hpp"
#include "gdvig/error.hpp"
#include "gdvig/rng.hpp"

namespace gdvig {

std::vector<const SampleRecord*> pointers(const std::vector<SampleRecord>& records) {
  std::vector<const SampleRecord*> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(&r);
  return out;
}

Tensor record_gaze(const SampleRecord& r) {
  if (r.gaze_map) return *r.gaze_map;
  if (r.fixations.empty()) throw ConfigError(r.id + ": no gaze map and no fixations");
  const std::size_t h = r.image.dim(1), w = r.image.dim(2);
  return fixations_to_gaze_map(r.fixations, h, w, static_cast<double>(h) / 32.0);
}

Batch make_batch(std::span<const SampleRecord* const> records, bool with_gaze) {
  if (records.empty()) throw ConfigError("make_batch: empty batch");
  const std::size_t h = records[0]->image.dim(1), w = records[0]->image.dim(2), hw = h * w;
  Batch b;
  b.images = Tensor({records.size(), 1, h, w});
  if (with_gaze) b.gaze = Tensor({records.size(), 1, h, w});
  for (std::size_t i = 0; i < records.size(); ++i) {
    const SampleRecord& r = *records[i];
    if (r.image.shape() != Shape{1, h, w}) throw DimensionError(r.id + ": image size differs within batch");
    std::copy(r.image.data().begin(), r.image.data().end(), b.images.data().begin() + i * hw);
    if (with_gaze) {
      const Tensor g = record_gaze(r);
      std::copy(g.data().begin(), g.data().end(), b.gaze->data().begin() + i * hw);
    }
    b.labels.push_back(r.label);
  }
  return b;
}

std::string format_epoch(const EpochLog& e) {
  std::ostringstream out;
  out << "epoch=" << e.epoch << " l_gmg=" << (e.l_gmg ? format_double(*e.l_gmg) : "na")
      << " l_gdc=" << format_double(e.l_gdc) << " l=" << format_double(e.l_total)
      << " train_acc=" << format_double(e.train_acc)
      << " val_acc=" << (e.val_acc ? format_double(*e.val_acc) : "na");
  return out.str();
}

namespace {

void check_corpus(const Corpus& corpus, const RunConfig& cfg) {
  if (corpus.train.empty()) throw ConfigError("train: corpus has no training records");
  for (const auto& r : corpus.train) {
    validate_record(r, cfg.model.num_classes);
    if (r.image.dim(1) != cfg.model.image_size || r.image.dim(2) != cfg.model.image_size) {
      throw ConfigError(r.id + ": image is " + shape_str(r.image.shape()) + " but image_size=" +
                        std::to_string(cfg.model.image_size));
    }
  }
}

ForwardOptions forward_options(const TrainConfig& tc) {
  ForwardOptions o;
  o.use_gmg = tc.use_gmg;
  o.detach_gmg = tc.detach_gmg;
  return o;
}

}  // namespace

Tensor predict_logits(GdVig& model, const TrainConfig& tc, std::span<const SampleRecord* const> records,
                      std::size_t batch_size) {
  const std::size_t c = model.cfg.num_classes;
  Tensor out({records.size(), c});
  for (std::size_t start = 0; start < records.size(); start += batch_size) {
    const std::size_t end = std::min(records.size(), start + batch_size);
    const Batch b = make_batch(records.subspan(start, end - start), false);
    Tape tape;
    Context ctx{tape, model.params, BnMode::kInfer,
                BatchNormOptions{model.cfg.bn_momentum, model.cfg.bn_eps}};
    const ForwardResult f = forward(ctx, model, tape.constant(b.images), forward_options(tc));
    const Tensor& logits = f.gdc.logits.value();
    std::copy(logits.data().begin(), logits.data().end(), out.data().begin() + start * c);
  }
  return out;
}

TrainResult train(const Corpus& corpus, const RunConfig& cfg, const std::optional<std::filesystem::path>& out_dir,
                  const ProgressFn& progress) {
  validate(cfg.model);
  validate(cfg.train);
  check_corpus(corpus, cfg);
  const TrainConfig& tc = cfg.train;

  // Seeded validation split.
  std::vector<const SampleRecord*> pool = pointers(corpus.train);
  Rng split_rng(derive_seed(tc.seed, 0x73706c6974ULL));
  split_rng.shuffle(pool.begin(), pool.end());
  const auto n_val = static_cast<std::size_t>(tc.val_fraction * static_cast<double>(pool.size()));
  if (n_val >= pool.size()) throw ConfigError("train: validation split leaves no training records");
  std::vector<const SampleRecord*> val(pool.begin(), pool.begin() + static_cast<long>(n_val));
  std::vector<const SampleRecord*> fit(pool.begin() + static_cast<long>(n_val), pool.end());
  // Restore corpus order inside each part so the shuffle stream alone decides batches.
  auto by_position = [&](const SampleRecord* a, const SampleRecord* b) { return a < b; };
  std::sort(val.begin(), val.end(), by_position);
  std::sort(fit.begin(), fit.end(), by_position);

  TrainResult result{GdVig::create(cfg.model, tc.seed), {}, 0, {}};
  for (const auto* r : val) result.val_ids.push_back(r->id);
  GdVig& model = result.model;

  std::ofstream log;
  if (out_dir) {
    std::filesystem::create_directories(*out_dir);
    std::ofstream split(*out_dir / "split.txt", std::ios::trunc);
    for (const auto& id : result.val_ids) split << "val " << id << "\n";
    log.open(*out_dir / "train.log", std::ios::trunc);
  }

  const AdamConfig adam{tc.lr, tc.beta1, tc.beta2, tc.adam_eps};
  AdamState state;
  Rng shuffle_rng(derive_seed(tc.seed, 0x73687566ULL));
  std::vector<std::size_t> order(fit.size());
  double best_score = -1.0;

  for (std::size_t epoch = 1; epoch <= tc.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    shuffle_rng.shuffle(order.begin(), order.end());
    EpochLog e;
    e.epoch = epoch;
    double sum_gmg = 0, sum_gdc = 0, sum_total = 0;
    std::size_t correct = 0, batch_index = 0;

    for (std::size_t start = 0; start < order.size(); start += tc.batch_size, ++batch_index) {
      const std::size_t end = std::min(order.size(), start + tc.batch_size);
      std::vector<const SampleRecord*> recs;
      for (std::size_t i = start; i < end; ++i) recs.push_back(fit[order[i]]);
      const Batch b = make_batch(recs, tc.use_gmg);
      const double weight = static_cast<double>(recs.size());

      try {
        Tape tape;
        Context ctx{tape, model.params, BnMode::kTrain,
                    BatchNormOptions{cfg.model.bn_momentum, cfg.model.bn_eps}};
        ForwardOptions fo = forward_options(tc);
        if (tc.use_gmg && tc.oracle_gaze) fo.steer_gaze = b.gaze;
        const ForwardResult f = forward(ctx, model, tape.constant(b.images), fo);
        const JointLoss loss = tc.use_gmg ? joint_loss(tape.constant(*b.gaze), *f.gaze, f.gdc.logits, b.labels,
                                                       tc.lambda_c)
                                          : classifier_loss(f.gdc.logits, b.labels, tc.lambda_c);
        const double total = loss.total.value().item();
        if (!std::isfinite(total)) throw NumericError("loss is " + std::to_string(total));
        model.params.zero_grad();
        tape.backward(loss.total);
        adam_step(model.params.trainable(), state, adam);

        if (loss.gmg) sum_gmg += weight * loss.gmg->value().item();
        sum_gdc += weight * loss.gdc.value().item();
        sum_total += weight * total;
        const std::vector<int> preds = argmax_rows(f.gdc.logits.value());
        for (std::size_t i = 0; i < preds.size(); ++i) correct += preds[i] == b.labels[i];
      } catch (const NumericError& err) {
        throw NumericError("non-finite value at epoch " + std::to_string(epoch) + " batch " +
                           std::to_string(batch_index) + ": " + err.what());
      }
    }

    const double n = static_cast<double>(fit.size());
    if (tc.use_gmg) e.l_gmg = sum_gmg / n;
    e.l_gdc = sum_gdc / n;
    e.l_total = sum_total / n;
    e.train_acc = static_cast<double>(correct) / n;
    if (!val.empty()) {
      const Tensor logits = predict_logits(model, tc, val, tc.batch_size);
      std::vector<int> labels;
      for (const auto* r : val) labels.push_back(r->label);
      e.val_acc = accuracy(labels, argmax_rows(logits));
    }
    result.epochs.push_back(e);
    if (log) log << format_epoch(e) << "\n" << std::flush;
    if (progress) progress(e);

    // Later epochs win ties: on small validation sets many epochs share the top score.
    const double score = e.val_acc ? *e.val_acc : e.train_acc;
    if (score >= best_score) {
      best_score = score;
      result.best_epoch = epoch;
      if (out_dir) save_checkpoint(*out_dir / "best", model, cfg);
    }
  }
  if (out_dir) {
    save_checkpoint(*out_dir / "last", model, cfg);
    log << "best_epoch=" << result.best_epoch << "\n";
  }
  return result;
}

EvalResult evaluate(GdVig& model, const TrainConfig& tc, const std::vector<SampleRecord>& records) {
  if (records.empty()) throw ConfigError("evaluate: empty split");
  EvalResult r;
  for (const auto& rec : records) {
    validate_record(rec, model.cfg.num_classes);
    r.ids.push_back(rec.id);
    r.labels.push_back(rec.label);
  }
  const auto ptrs = pointers(records);
  r.logits = predict_logits(model, tc, ptrs, std::max<std::size_t>(tc.batch_size, 1));
  r.probs = softmax_rows(r.logits);
  r.report = evaluate_scores(r.probs, r.labels);
  return r;
}

EvalResult evaluate_checkpoint(const std::filesystem::path& checkpoint, const Corpus& corpus, const std::string& split) {
  LoadedCheckpoint ck = load_checkpoint(checkpoint);
  return evaluate(ck.model, ck.cfg.train, corpus.split(split));
}

std::string predictions_jsonl(const EvalResult& r) {
  std::ostringstream out;
  const std::size_t c = r.logits.dim(1);
  const std::vector<int> preds = argmax_rows(r.logits);
  for (std::size_t i = 0; i < r.ids.size(); ++i) {
    std::vector<double> z(r.logits.data().begin() + i * c, r.logits.data().begin() + (i + 1) * c);
    out << nlohmann::json{{"id", r.ids[i]}, {"logits", z}, {"label", r.labels[i]}, {"pred", preds[i]}}.dump() << "\n";
  }
  return out.str();
}

}  // namespace gdvig
