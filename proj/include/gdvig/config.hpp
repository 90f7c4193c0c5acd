#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "gdvig/gmg.hpp"

namespace gdvig {

struct ModelConfig {
  std::size_t image_size = 224;
  std::size_t num_classes = 2;
  std::size_t base_channels = 48;
  GmgVariant gmg_variant = GmgVariant::kGnnPlusCnn;
  std::size_t encoder_depth = 2;
  std::vector<std::size_t> gdc_depths{2, 2};  // stage s has base_channels * 2^s channels
  std::size_t k = 9;
  double lambda_g = 3.0;
  bool share_stem = true;
  bool knn_normalize = false;
  double bn_momentum = 0.1;
  double bn_eps = 1e-5;
};

struct TrainConfig {
  double lr = 1e-4;
  std::size_t epochs = 100;
  std::size_t batch_size = 8;
  std::uint64_t seed = 0;
  double lambda_c = 1.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double val_fraction = 0.1;
  bool use_gmg = true;      // false: plain ViG path, no gaze anywhere, L = lambda_c * L_GDC
  bool detach_gmg = false;  // stop L_GDC gradients at the shared stem
  bool oracle_gaze = false; // steer GDC graphs with ground-truth gaze while training
};

struct RunConfig {
  ModelConfig model;
  TrainConfig train;
};

/// Flat `key=value` lines; `#` starts a comment. Unknown keys are rejected.
using KeyValues = std::map<std::string, std::string>;
KeyValues parse_key_values(const std::string& text);
KeyValues read_key_values(const std::filesystem::path& path);

/// Consumes the keys it knows from kv (erasing them); returns true if any matched.
void apply_model_keys(ModelConfig& m, KeyValues& kv);
void apply_train_keys(TrainConfig& t, KeyValues& kv);
/// Throws ConfigError naming the first leftover key.
void reject_unknown(const KeyValues& kv, const std::string& what);

RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::filesystem::path& path);
std::string to_text(const RunConfig& cfg);

void validate(const ModelConfig& m);
void validate(const TrainConfig& t);

/// Shortest decimal that round-trips the double.
std::string format_double(double v);
double parse_double(const std::string& key, const std::string& v);
std::uint64_t parse_uint(const std::string& key, const std::string& v);
bool parse_bool(const std::string& key, const std::string& v);
std::vector<std::uint64_t> parse_uint_list(const std::string& key, const std::string& v);

}  // namespace gdvig
