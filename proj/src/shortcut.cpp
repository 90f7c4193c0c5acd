#include "gdvig/shortcut.hpp"

#include <algorithm>
#include <json.hpp>

#include "gdvig/attention.hpp"
#include "gdvig/error.hpp"

namespace gdvig {

ShortcutSetup parse_shortcut_setup(const std::string& text) {
  KeyValues kv = parse_key_values(text);
  ShortcutSetup s;
  apply_corpus_keys(s.corpus, kv);
  apply_model_keys(s.run.model, kv);
  apply_train_keys(s.run.train, kv);
  reject_unknown(kv, "shortcut experiment");
  // The corpus keys also fix the model's input size and class count.
  s.run.model.image_size = s.corpus.image_size;
  s.run.model.num_classes = s.corpus.classes;
  validate(s.corpus);
  validate(s.run.model);
  validate(s.run.train);
  return s;
}

double median(std::vector<double> v) {
  if (v.empty()) throw ConfigError("median of an empty list");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double lesion_hit_rate(GdVig& model, const TrainConfig& tc, const std::vector<SampleRecord>& records) {
  std::vector<const SampleRecord*> lesioned;
  for (const auto& r : records)
    if (r.lesion_mask) lesioned.push_back(&r);
  if (lesioned.empty()) throw ConfigError("lesion_hit_rate: no record carries a lesion mask");
  std::size_t hits = 0;
  const std::size_t step = std::max<std::size_t>(tc.batch_size, 1);
  for (std::size_t start = 0; start < lesioned.size(); start += step) {
    const std::size_t end = std::min(lesioned.size(), start + step);
    std::span<const SampleRecord* const> part(lesioned.data() + start, end - start);
    const AttentionResult a = attention_maps(model, tc, part);
    const std::size_t h = a.heatmaps.dim(1), w = a.heatmaps.dim(2);
    for (std::size_t i = 0; i < part.size(); ++i) {
      const auto plane = a.heatmaps.data().subspan(i * h * w, h * w);
      hits += argmax_inside(Tensor({h, w}, std::vector<double>(plane.begin(), plane.end())), *part[i]->lesion_mask);
    }
  }
  return static_cast<double>(hits) / static_cast<double>(lesioned.size());
}

ShortcutReport shortcut_experiment(const ShortcutSetup& setup, std::span<const std::uint64_t> seeds,
                                   const ArmProgressFn& progress) {
  const CorpusSpec& cs = setup.corpus;
  if (!cs.shortcut || cs.train_correlation != 1.0 || cs.test_correlation != -1.0) {
    throw ConfigError("shortcut experiment needs shortcut=true, train_correlation=1 and test_correlation=-1");
  }
  if (seeds.empty()) throw ConfigError("shortcut experiment needs at least one seed");

  ShortcutReport report;
  report.seeds.assign(seeds.begin(), seeds.end());
  report.no_gaze.name = "no_gaze";
  report.no_gaze.use_gmg = false;
  report.no_gaze.lambda_g = 0.0;
  report.gd_vig.name = "gd_vig";
  report.gd_vig.use_gmg = true;
  report.gd_vig.lambda_g = setup.run.model.lambda_g;
  if (!(report.gd_vig.lambda_g > 0)) throw ConfigError("shortcut experiment: the gaze arm needs lambda_g > 0");

  for (std::uint64_t seed : seeds) {
    CorpusSpec spec = cs;
    spec.seed = seed;
    const Corpus corpus = generate_corpus(spec);
    for (ArmResult* arm : {&report.no_gaze, &report.gd_vig}) {
      RunConfig cfg = setup.run;
      cfg.train.seed = seed;
      cfg.train.use_gmg = arm->use_gmg;
      cfg.model.lambda_g = arm->lambda_g;
      ProgressFn cb;
      if (progress) cb = [&](const EpochLog& e) { progress(seed, arm->name, e); };
      TrainResult t = train(corpus, cfg, std::nullopt, cb);
      arm->test_acc.push_back(evaluate(t.model, cfg.train, corpus.test).report.acc);
      arm->lesion_hit_rate.push_back(lesion_hit_rate(t.model, cfg.train, corpus.test));
    }
  }
  for (ArmResult* arm : {&report.no_gaze, &report.gd_vig}) {
    arm->median_acc = median(arm->test_acc);
    arm->median_hit_rate = median(arm->lesion_hit_rate);
  }
  return report;
}

namespace {

nlohmann::json arm_json(const ArmResult& a) {
  return {{"use_gmg", a.use_gmg},       {"lambda_g", a.lambda_g},
          {"test_acc", a.test_acc},     {"lesion_hit_rate", a.lesion_hit_rate},
          {"median_acc", a.median_acc}, {"median_hit_rate", a.median_hit_rate}};
}

ArmResult parse_arm(const nlohmann::json& arms, const std::string& name, std::size_t n_seeds) {
  if (!arms.contains(name)) throw FormatError("shortcut report: missing arm '" + name + "'");
  const auto& j = arms.at(name);
  ArmResult a;
  a.name = name;
  a.use_gmg = j.at("use_gmg").get<bool>();
  a.lambda_g = j.at("lambda_g").get<double>();
  a.test_acc = j.at("test_acc").get<std::vector<double>>();
  a.lesion_hit_rate = j.at("lesion_hit_rate").get<std::vector<double>>();
  a.median_acc = j.at("median_acc").get<double>();
  a.median_hit_rate = j.at("median_hit_rate").get<double>();
  if (a.test_acc.size() != n_seeds || a.lesion_hit_rate.size() != n_seeds) {
    throw FormatError("shortcut report: arm '" + name + "' does not have one entry per seed");
  }
  if (a.median_acc != median(a.test_acc) || a.median_hit_rate != median(a.lesion_hit_rate)) {
    throw FormatError("shortcut report: arm '" + name + "' medians disagree with its per-seed values");
  }
  return a;
}

}  // namespace

std::string to_json(const ShortcutReport& r) {
  nlohmann::json j;
  j["format"] = "gdvig-shortcut-report";
  j["seeds"] = r.seeds;
  j["arms"] = {{r.no_gaze.name, arm_json(r.no_gaze)}, {r.gd_vig.name, arm_json(r.gd_vig)}};
  j["median_acc_gap"] = r.gd_vig.median_acc - r.no_gaze.median_acc;
  return j.dump(1);
}

ShortcutReport parse_shortcut_report(const std::string& json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("shortcut report: " + std::string(e.what()));
  }
  if (j.value("format", "") != "gdvig-shortcut-report") throw FormatError("shortcut report: wrong format tag");
  ShortcutReport r;
  try {
    r.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    const auto& arms = j.at("arms");
    if (arms.size() != 2) throw FormatError("shortcut report: expected exactly two arms");
    r.no_gaze = parse_arm(arms, "no_gaze", r.seeds.size());
    r.gd_vig = parse_arm(arms, "gd_vig", r.seeds.size());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("shortcut report: " + std::string(e.what()));
  }
  if (r.no_gaze.use_gmg || r.no_gaze.lambda_g != 0.0) {
    throw FormatError("shortcut report: arm 'no_gaze' records gaze settings");
  }
  if (!r.gd_vig.use_gmg || !(r.gd_vig.lambda_g > 0.0)) {
    throw FormatError("shortcut report: arm 'gd_vig' records no gaze settings");
  }
  return r;
}

}  // namespace gdvig
