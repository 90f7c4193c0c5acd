#include "gdvig/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "gdvig/error.hpp"

namespace gdvig {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename F>
void take(KeyValues& kv, const std::string& key, F&& apply) {
  auto it = kv.find(key);
  if (it == kv.end()) return;
  apply(it->second);
  kv.erase(it);
}

std::string join(const std::vector<std::size_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

}  // namespace

KeyValues parse_key_values(const std::string& text) {
  KeyValues kv;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected key=value");
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError("line " + std::to_string(lineno) + ": empty key");
    if (!kv.emplace(key, trim(line.substr(eq + 1))).second) throw ConfigError("duplicate key '" + key + "'");
  }
  return kv;
}

KeyValues read_key_values(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_key_values(ss.str());
}

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& key, const std::string& v) {
  double out = 0;
  auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size()) {
    throw ConfigError("key '" + key + "': not a number: '" + v + "'");
  }
  return out;
}

std::uint64_t parse_uint(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size()) {
    throw ConfigError("key '" + key + "': not a non-negative integer: '" + v + "'");
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("key '" + key + "': expected true/false, got '" + v + "'");
}

std::vector<std::uint64_t> parse_uint_list(const std::string& key, const std::string& v) {
  std::vector<std::uint64_t> out;
  std::istringstream in(v);
  std::string item;
  while (std::getline(in, item, ',')) out.push_back(parse_uint(key, trim(item)));
  if (out.empty()) throw ConfigError("key '" + key + "': empty list");
  return out;
}

void apply_model_keys(ModelConfig& m, KeyValues& kv) {
  take(kv, "image_size", [&](const std::string& v) { m.image_size = parse_uint("image_size", v); });
  take(kv, "num_classes", [&](const std::string& v) { m.num_classes = parse_uint("num_classes", v); });
  take(kv, "base_channels", [&](const std::string& v) { m.base_channels = parse_uint("base_channels", v); });
  take(kv, "gmg_variant", [&](const std::string& v) { m.gmg_variant = parse_gmg_variant(v); });
  take(kv, "encoder_depth", [&](const std::string& v) { m.encoder_depth = parse_uint("encoder_depth", v); });
  take(kv, "gdc_depths", [&](const std::string& v) {
    m.gdc_depths.clear();
    for (auto d : parse_uint_list("gdc_depths", v)) m.gdc_depths.push_back(d);
  });
  take(kv, "k", [&](const std::string& v) { m.k = parse_uint("k", v); });
  take(kv, "lambda_g", [&](const std::string& v) { m.lambda_g = parse_double("lambda_g", v); });
  take(kv, "share_stem", [&](const std::string& v) { m.share_stem = parse_bool("share_stem", v); });
  take(kv, "knn_normalize", [&](const std::string& v) { m.knn_normalize = parse_bool("knn_normalize", v); });
  take(kv, "bn_momentum", [&](const std::string& v) { m.bn_momentum = parse_double("bn_momentum", v); });
  take(kv, "bn_eps", [&](const std::string& v) { m.bn_eps = parse_double("bn_eps", v); });
}

void apply_train_keys(TrainConfig& t, KeyValues& kv) {
  take(kv, "lr", [&](const std::string& v) { t.lr = parse_double("lr", v); });
  take(kv, "epochs", [&](const std::string& v) { t.epochs = parse_uint("epochs", v); });
  take(kv, "batch_size", [&](const std::string& v) { t.batch_size = parse_uint("batch_size", v); });
  take(kv, "seed", [&](const std::string& v) { t.seed = parse_uint("seed", v); });
  take(kv, "lambda_c", [&](const std::string& v) { t.lambda_c = parse_double("lambda_c", v); });
  take(kv, "beta1", [&](const std::string& v) { t.beta1 = parse_double("beta1", v); });
  take(kv, "beta2", [&](const std::string& v) { t.beta2 = parse_double("beta2", v); });
  take(kv, "adam_eps", [&](const std::string& v) { t.adam_eps = parse_double("adam_eps", v); });
  take(kv, "val_fraction", [&](const std::string& v) { t.val_fraction = parse_double("val_fraction", v); });
  take(kv, "use_gmg", [&](const std::string& v) { t.use_gmg = parse_bool("use_gmg", v); });
  take(kv, "detach_gmg", [&](const std::string& v) { t.detach_gmg = parse_bool("detach_gmg", v); });
  take(kv, "oracle_gaze", [&](const std::string& v) { t.oracle_gaze = parse_bool("oracle_gaze", v); });
}

void reject_unknown(const KeyValues& kv, const std::string& what) {
  if (!kv.empty()) throw ConfigError(what + ": unknown key '" + kv.begin()->first + "'");
}

void validate(const ModelConfig& m) {
  if (m.image_size == 0 || m.image_size % 16 != 0) throw ConfigError("image_size must be a positive multiple of 16");
  if (m.num_classes < 2) throw ConfigError("num_classes must be >= 2");
  if (m.base_channels < 4 || m.base_channels % 4 != 0) throw ConfigError("base_channels must be a multiple of 4");
  if (m.encoder_depth == 0) throw ConfigError("encoder_depth must be >= 1");
  if (m.gdc_depths.empty()) throw ConfigError("gdc_depths must name at least one stage");
  for (auto d : m.gdc_depths)
    if (d == 0) throw ConfigError("gdc_depths entries must be >= 1");
  if (m.k == 0) throw ConfigError("k must be >= 1");
  if (!(m.lambda_g >= 0)) throw ConfigError("lambda_g must be >= 0");
  if (!(m.bn_eps > 0)) throw ConfigError("bn_eps must be > 0");
  if (!(m.bn_momentum >= 0 && m.bn_momentum <= 1)) throw ConfigError("bn_momentum must lie in [0,1]");
  // The coarsest GDC grid must still hold more than k nodes.
  const std::size_t last = m.image_size / (4u << (m.gdc_depths.size() - 1));
  if (last == 0 || last * last <= m.k) throw ConfigError("k too large for the coarsest graph grid");
  const std::size_t gmg_last = m.image_size / 8;
  if (gmg_last * gmg_last <= m.k) throw ConfigError("k too large for the generator's H/8 grid");
}

void validate(const TrainConfig& t) {
  if (!(t.lr > 0)) throw ConfigError("lr must be > 0");
  if (t.epochs == 0) throw ConfigError("epochs must be > 0");
  if (t.batch_size == 0) throw ConfigError("batch_size must be > 0");
  if (!(t.lambda_c >= 0) || !std::isfinite(t.lambda_c)) throw ConfigError("lambda_c must be finite and >= 0");
  if (!(t.val_fraction >= 0 && t.val_fraction < 1)) throw ConfigError("val_fraction must lie in [0,1)");
}

RunConfig parse_run_config(const std::string& text) {
  KeyValues kv = parse_key_values(text);
  RunConfig cfg;
  apply_model_keys(cfg.model, kv);
  apply_train_keys(cfg.train, kv);
  reject_unknown(kv, "config");
  validate(cfg.model);
  validate(cfg.train);
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str());
}

std::string to_text(const RunConfig& cfg) {
  const auto& m = cfg.model;
  const auto& t = cfg.train;
  std::ostringstream out;
  auto b = [](bool v) { return v ? "true" : "false"; };
  out << "image_size=" << m.image_size << "\n"
      << "num_classes=" << m.num_classes << "\n"
      << "base_channels=" << m.base_channels << "\n"
      << "gmg_variant=" << to_string(m.gmg_variant) << "\n"
      << "encoder_depth=" << m.encoder_depth << "\n"
      << "gdc_depths=" << join(m.gdc_depths) << "\n"
      << "k=" << m.k << "\n"
      << "lambda_g=" << format_double(m.lambda_g) << "\n"
      << "share_stem=" << b(m.share_stem) << "\n"
      << "knn_normalize=" << b(m.knn_normalize) << "\n"
      << "bn_momentum=" << format_double(m.bn_momentum) << "\n"
      << "bn_eps=" << format_double(m.bn_eps) << "\n"
      << "lr=" << format_double(t.lr) << "\n"
      << "epochs=" << t.epochs << "\n"
      << "batch_size=" << t.batch_size << "\n"
      << "seed=" << t.seed << "\n"
      << "lambda_c=" << format_double(t.lambda_c) << "\n"
      << "beta1=" << format_double(t.beta1) << "\n"
      << "beta2=" << format_double(t.beta2) << "\n"
      << "adam_eps=" << format_double(t.adam_eps) << "\n"
      << "val_fraction=" << format_double(t.val_fraction) << "\n"
      << "use_gmg=" << b(t.use_gmg) << "\n"
      << "detach_gmg=" << b(t.detach_gmg) << "\n"
      << "oracle_gaze=" << b(t.oracle_gaze) << "\n";
  return out.str();
}

}  // namespace gdvig
