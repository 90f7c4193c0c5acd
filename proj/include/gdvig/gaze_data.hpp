#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "gdvig/config.hpp"
#include "gdvig/tensor.hpp"

namespace gdvig {

struct Fixation {
  double x = 0;         // pixel column
  double y = 0;         // pixel row
  double duration = 0;  // seconds

  bool operator==(const Fixation&) const = default;
};

enum class Corner { kTopLeft = 0, kTopRight = 1, kBottomLeft = 2, kBottomRight = 3 };
std::string to_string(Corner c);
Corner parse_corner(const std::string& s);

struct ShortcutCue {
  Corner corner = Corner::kTopLeft;
  double intensity = 1.0;
  std::size_t size = 4;
  bool correlated_with_label = true;  // token sits on a positive (label != 0) image

  bool operator==(const ShortcutCue&) const = default;
};

struct SampleRecord {
  std::string id;
  Tensor image;  // 1 x H x W in [0,1]
  std::vector<Fixation> fixations;
  std::optional<Tensor> gaze_map;  // H x W in [0,1], max 1
  int label = 0;
  std::optional<ShortcutCue> shortcut;
  std::optional<Tensor> lesion_mask;  // H x W, 0/1

  bool operator==(const SampleRecord&) const = default;
};

struct CorpusSpec {
  std::size_t n_train = 200;
  std::size_t n_test = 100;
  std::size_t image_size = 32;
  std::size_t classes = 2;
  double lesion_min_fraction = 0.01;  // of image pixels
  double lesion_max_fraction = 0.04;
  double contrast_min = 0.15;
  double contrast_max = 0.3;
  bool shortcut = false;
  double train_correlation = 1.0;
  double test_correlation = -1.0;
  std::size_t token_size = 4;
  double token_intensity = 1.0;
  double noise_sigma = 0.05;
  double blur_sigma = 0;  // 0: image_size / 32
  std::uint64_t seed = 0;

  double effective_blur_sigma() const { return blur_sigma > 0 ? blur_sigma : image_size / 32.0; }
};

void apply_corpus_keys(CorpusSpec& spec, KeyValues& kv);
CorpusSpec parse_corpus_spec(const std::string& text);
std::string to_text(const CorpusSpec& spec);
void validate(const CorpusSpec& spec);

struct Corpus {
  std::vector<SampleRecord> train;
  std::vector<SampleRecord> test;

  const std::vector<SampleRecord>& split(const std::string& name) const;
  const SampleRecord& find(const std::string& id) const;
};

/// Duration-weighted impulses at rounded fixation coordinates, Gaussian blur,
/// then scaled so the maximum is 1.
Tensor fixations_to_gaze_map(const std::vector<Fixation>& fixations, std::size_t h, std::size_t w, double sigma);

/// Deterministic synthetic corpus with planted low-contrast lesions, oracle
/// gaze and an optional label-correlated corner token.
Corpus generate_corpus(const CorpusSpec& spec);

/// manifest.json plus one GDVT file per record tensor, checksummed.
void save_corpus(const Corpus& corpus, const std::filesystem::path& dir);
Corpus load_corpus(const std::filesystem::path& dir);

/// Throws unless the record satisfies the SampleRecord and GazeMap invariants.
void validate_record(const SampleRecord& r, std::size_t classes);

}  // namespace gdvig
