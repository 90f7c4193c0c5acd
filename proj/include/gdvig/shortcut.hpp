#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "gdvig/train.hpp"

namespace gdvig {

struct ArmResult {
  std::string name;  // "no_gaze" or "gd_vig"
  bool use_gmg = false;
  double lambda_g = 0;
  std::vector<double> test_acc;        // per seed
  std::vector<double> lesion_hit_rate; // attention argmax inside the lesion, over lesion-bearing test images
  double median_acc = 0;
  double median_hit_rate = 0;
};

struct ShortcutReport {
  std::vector<std::uint64_t> seeds;
  ArmResult no_gaze;
  ArmResult gd_vig;
};

/// Experiment settings: corpus keys plus any model/train keys, one file.
struct ShortcutSetup {
  CorpusSpec corpus;
  RunConfig run;
};
ShortcutSetup parse_shortcut_setup(const std::string& text);

double median(std::vector<double> v);

/// Fraction of records with a lesion mask whose heatmap argmax hits the mask.
double lesion_hit_rate(GdVig& model, const TrainConfig& tc, const std::vector<SampleRecord>& records);

using ArmProgressFn = std::function<void(std::uint64_t seed, const std::string& arm, const EpochLog&)>;

/// Per seed: one corpus, then the no-gaze arm (lambda_g=0, classifier loss
/// only, no generator) and the full model, both from the same run settings.
ShortcutReport shortcut_experiment(const ShortcutSetup& setup, std::span<const std::uint64_t> seeds,
                                   const ArmProgressFn& progress = {});

std::string to_json(const ShortcutReport& r);
/// Parses and checks a report: arms are looked up by name and each arm's
/// recorded settings must match what its name promises.
ShortcutReport parse_shortcut_report(const std::string& json_text);

}  // namespace gdvig
