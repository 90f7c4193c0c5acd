#include "gdvig/gaze_data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <set>
#include <sstream>

#include "gdvig/error.hpp"
#include "gdvig/image.hpp"
#include "gdvig/rng.hpp"
#include "gdvig/tensor_io.hpp"

namespace gdvig {

std::string to_string(Corner c) {
  switch (c) {
    case Corner::kTopLeft:
      return "top_left";
    case Corner::kTopRight:
      return "top_right";
    case Corner::kBottomLeft:
      return "bottom_left";
    case Corner::kBottomRight:
      return "bottom_right";
  }
  return "?";
}

Corner parse_corner(const std::string& s) {
  for (int i = 0; i < 4; ++i)
    if (to_string(static_cast<Corner>(i)) == s) return static_cast<Corner>(i);
  throw FormatError("unknown corner '" + s + "'");
}

void apply_corpus_keys(CorpusSpec& s, KeyValues& kv) {
  auto take = [&](const std::string& key, auto&& apply) {
    auto it = kv.find(key);
    if (it == kv.end()) return;
    apply(key, it->second);
    kv.erase(it);
  };
  take("n_train", [&](auto& k, auto& v) { s.n_train = parse_uint(k, v); });
  take("n_test", [&](auto& k, auto& v) { s.n_test = parse_uint(k, v); });
  take("image_size", [&](auto& k, auto& v) { s.image_size = parse_uint(k, v); });
  take("classes", [&](auto& k, auto& v) { s.classes = parse_uint(k, v); });
  take("lesion_min_fraction", [&](auto& k, auto& v) { s.lesion_min_fraction = parse_double(k, v); });
  take("lesion_max_fraction", [&](auto& k, auto& v) { s.lesion_max_fraction = parse_double(k, v); });
  take("contrast_min", [&](auto& k, auto& v) { s.contrast_min = parse_double(k, v); });
  take("contrast_max", [&](auto& k, auto& v) { s.contrast_max = parse_double(k, v); });
  take("shortcut", [&](auto& k, auto& v) { s.shortcut = parse_bool(k, v); });
  take("train_correlation", [&](auto& k, auto& v) { s.train_correlation = parse_double(k, v); });
  take("test_correlation", [&](auto& k, auto& v) { s.test_correlation = parse_double(k, v); });
  take("token_size", [&](auto& k, auto& v) { s.token_size = parse_uint(k, v); });
  take("token_intensity", [&](auto& k, auto& v) { s.token_intensity = parse_double(k, v); });
  take("noise_sigma", [&](auto& k, auto& v) { s.noise_sigma = parse_double(k, v); });
  take("blur_sigma", [&](auto& k, auto& v) { s.blur_sigma = parse_double(k, v); });
  take("corpus_seed", [&](auto& k, auto& v) { s.seed = parse_uint(k, v); });
}

CorpusSpec parse_corpus_spec(const std::string& text) {
  KeyValues kv = parse_key_values(text);
  CorpusSpec s;
  apply_corpus_keys(s, kv);
  reject_unknown(kv, "corpus spec");
  validate(s);
  return s;
}

std::string to_text(const CorpusSpec& s) {
  std::ostringstream out;
  out << "n_train=" << s.n_train << "\nn_test=" << s.n_test << "\nimage_size=" << s.image_size
      << "\nclasses=" << s.classes << "\nlesion_min_fraction=" << format_double(s.lesion_min_fraction)
      << "\nlesion_max_fraction=" << format_double(s.lesion_max_fraction)
      << "\ncontrast_min=" << format_double(s.contrast_min) << "\ncontrast_max=" << format_double(s.contrast_max)
      << "\nshortcut=" << (s.shortcut ? "true" : "false")
      << "\ntrain_correlation=" << format_double(s.train_correlation)
      << "\ntest_correlation=" << format_double(s.test_correlation) << "\ntoken_size=" << s.token_size
      << "\ntoken_intensity=" << format_double(s.token_intensity) << "\nnoise_sigma=" << format_double(s.noise_sigma)
      << "\nblur_sigma=" << format_double(s.blur_sigma) << "\ncorpus_seed=" << s.seed << "\n";
  return out.str();
}

void validate(const CorpusSpec& s) {
  if (s.n_train == 0 || s.n_test == 0) throw ConfigError("corpus: n_train and n_test must be positive");
  if (s.image_size == 0) throw ConfigError("corpus: image_size must be positive");
  if (s.classes < 2) throw ConfigError("corpus: classes must be >= 2");
  if (!(s.lesion_min_fraction > 0 && s.lesion_min_fraction <= s.lesion_max_fraction)) {
    throw ConfigError("corpus: need 0 < lesion_min_fraction <= lesion_max_fraction");
  }
  if (!(s.contrast_min <= s.contrast_max)) throw ConfigError("corpus: contrast_min > contrast_max");
  for (double c : {s.train_correlation, s.test_correlation})
    if (!(c >= -1.0 && c <= 1.0)) throw ConfigError("corpus: correlations must lie in [-1,1]");
  if (!(s.noise_sigma >= 0)) throw ConfigError("corpus: noise_sigma must be >= 0");
  if (!(s.blur_sigma >= 0)) throw ConfigError("corpus: blur_sigma must be >= 0");
  if (s.shortcut && (s.token_size == 0 || 2 * (s.token_size + 1) > s.image_size)) {
    throw ConfigError("corpus: token does not fit in a corner");
  }
  // Largest lesion must fit inside the image away from the corner tokens.
  const double area = static_cast<double>(s.image_size * s.image_size);
  const double r_max = std::sqrt(s.lesion_max_fraction * area / M_PI);
  if (s.lesion_max_fraction >= 1.0 || 2.0 * r_max + 2.0 > static_cast<double>(s.image_size)) {
    throw ConfigError("corpus: infeasible geometry, lesion larger than image");
  }
}

const std::vector<SampleRecord>& Corpus::split(const std::string& name) const {
  if (name == "train") return train;
  if (name == "test") return test;
  throw ConfigError("unknown split '" + name + "' (expected train or test)");
}

const SampleRecord& Corpus::find(const std::string& id) const {
  for (const auto* v : {&train, &test})
    for (const auto& r : *v)
      if (r.id == id) return r;
  throw ConfigError("no sample with id '" + id + "'");
}

Tensor fixations_to_gaze_map(const std::vector<Fixation>& fixations, std::size_t h, std::size_t w, double sigma) {
  if (fixations.empty()) throw ConfigError("fixations_to_gaze_map: empty fixation list");
  Tensor impulses({h, w});
  for (const auto& f : fixations) {
    if (!(f.duration >= 0)) throw ConfigError("fixation duration must be >= 0");
    if (!(f.x >= 0 && f.y >= 0 && f.x <= static_cast<double>(w - 1) && f.y <= static_cast<double>(h - 1))) {
      throw ConfigError("fixation outside image bounds");
    }
    const auto col = static_cast<std::size_t>(std::lround(f.x));
    const auto row = static_cast<std::size_t>(std::lround(f.y));
    impulses[row * w + col] += f.duration;
  }
  Tensor map = gaussian_blur2d(impulses, sigma);
  const double peak = map.max();
  if (!(peak > 0)) throw ConfigError("fixations_to_gaze_map: fixations carry zero total duration");
  for (double& v : map.data()) v /= peak;
  return map;
}

namespace {

struct TokenBox {
  std::size_t y0, x0, size;
};

TokenBox token_box(Corner c, std::size_t image, std::size_t size) {
  const std::size_t margin = 1;
  const std::size_t far = image - margin - size;
  switch (c) {
    case Corner::kTopLeft:
      return {margin, margin, size};
    case Corner::kTopRight:
      return {margin, far, size};
    case Corner::kBottomLeft:
      return {far, margin, size};
    case Corner::kBottomRight:
      return {far, far, size};
  }
  return {margin, margin, size};
}

// Corner squares (plus one pixel) are kept free of lesion pixels.
bool near_corner(std::size_t y, std::size_t x, std::size_t image, std::size_t token) {
  const std::size_t reach = token + 2;
  const bool top = y < reach, bottom = y + reach >= image;
  const bool left = x < reach, right = x + reach >= image;
  return (top || bottom) && (left || right);
}

Tensor normalize_max(Tensor t) {
  const double peak = t.max();
  for (double& v : t.data()) v /= peak;
  return t;
}

SampleRecord make_record(const CorpusSpec& spec, bool train, std::size_t index) {
  const std::size_t n = spec.image_size;
  const double area = static_cast<double>(n * n);
  Rng rng(derive_seed(spec.seed, (train ? 0ULL : 1ULL) << 40 | index));

  SampleRecord r;
  r.id = std::string(train ? "train-" : "test-") + std::to_string(100000 + index).substr(1);
  r.label = static_cast<int>(index % spec.classes);

  // Background: flat level, a few broad bumps, pixel noise.
  Tensor img({n, n}, 0.45);
  for (int b = 0; b < 3; ++b) {
    const double cy = rng.uniform(0, n), cx = rng.uniform(0, n);
    const double amp = rng.uniform(-0.1, 0.1), s = n / 4.0;
    for (std::size_t y = 0; y < n; ++y)
      for (std::size_t x = 0; x < n; ++x) {
        const double d2 = (y - cy) * (y - cy) + (x - cx) * (x - cx);
        img[y * n + x] += amp * std::exp(-d2 / (2 * s * s));
      }
  }
  for (double& v : img.data()) v += spec.noise_sigma * rng.normal();

  const double sigma = spec.effective_blur_sigma();
  if (r.label != 0) {
    // Contrast band by class: the range is split evenly across lesion classes.
    const double band = (spec.contrast_max - spec.contrast_min) / static_cast<double>(spec.classes - 1);
    const double c_lo = spec.contrast_min + band * (r.label - 1);
    const double contrast = rng.uniform(c_lo, c_lo + band);
    Tensor mask({n, n});
    double cx = 0, cy = 0, radius = 0;
    bool placed = false;
    for (int attempt = 0; attempt < 10000 && !placed; ++attempt) {
      const double frac = rng.uniform(spec.lesion_min_fraction, spec.lesion_max_fraction);
      radius = std::sqrt(frac * area / M_PI);
      cx = rng.uniform(radius, n - 1 - radius);
      cy = rng.uniform(radius, n - 1 - radius);
      mask.fill(0.0);
      std::size_t count = 0;
      bool clash = false;
      for (std::size_t y = 0; y < n && !clash; ++y)
        for (std::size_t x = 0; x < n; ++x) {
          if ((y - cy) * (y - cy) + (x - cx) * (x - cx) > radius * radius) continue;
          if (spec.shortcut && near_corner(y, x, n, spec.token_size)) {
            clash = true;
            break;
          }
          mask[y * n + x] = 1.0;
          ++count;
        }
      const double got = static_cast<double>(count) / area;
      placed = !clash && got >= spec.lesion_min_fraction && got <= spec.lesion_max_fraction;
    }
    if (!placed) throw ConfigError("corpus: could not place a lesion within the area limits");
    const double s = radius / 2.0;
    for (std::size_t y = 0; y < n; ++y)
      for (std::size_t x = 0; x < n; ++x) {
        const double d2 = (y - cy) * (y - cy) + (x - cx) * (x - cx);
        img[y * n + x] += contrast * std::exp(-d2 / (2 * s * s));
      }
    r.gaze_map = normalize_max(gaussian_blur2d(mask, sigma));
    r.lesion_mask = std::move(mask);
  } else {
    const std::size_t count = 1 + rng.below(3);
    for (std::size_t i = 0; i < count; ++i) {
      const double margin = n / 8.0;
      r.fixations.push_back(Fixation{rng.uniform(margin, n - 1 - margin), rng.uniform(margin, n - 1 - margin),
                                     rng.uniform(0.2, 1.0)});
    }
    r.gaze_map = fixations_to_gaze_map(r.fixations, n, n, sigma);
  }

  if (spec.shortcut) {
    const bool positive = r.label != 0;
    const double rho = train ? spec.train_correlation : spec.test_correlation;
    const double p_token = positive ? (1.0 + rho) / 2.0 : (1.0 - rho) / 2.0;
    const Corner corner = static_cast<Corner>(rng.below(4));
    if (rng.uniform() < p_token) {
      const TokenBox box = token_box(corner, n, spec.token_size);
      for (std::size_t y = box.y0; y < box.y0 + box.size; ++y)
        for (std::size_t x = box.x0; x < box.x0 + box.size; ++x) img[y * n + x] = spec.token_intensity;
      r.shortcut = ShortcutCue{corner, spec.token_intensity, spec.token_size, positive};
    }
  }

  for (double& v : img.data()) v = std::clamp(v, 0.0, 1.0);
  r.image = narrow_to_float(img.reshaped({1, n, n}));
  r.gaze_map = narrow_to_float(*r.gaze_map);
  for (auto& f : r.fixations) {
    f.x = static_cast<float>(f.x);
    f.y = static_cast<float>(f.y);
    f.duration = static_cast<float>(f.duration);
  }
  return r;
}

}  // namespace

Corpus generate_corpus(const CorpusSpec& spec) {
  validate(spec);
  Corpus c;
  c.train.resize(spec.n_train);
  c.test.resize(spec.n_test);
  const long total = static_cast<long>(spec.n_train + spec.n_test);
  std::string error;
#pragma omp parallel for schedule(dynamic)
  for (long i = 0; i < total; ++i) {
    const bool train = static_cast<std::size_t>(i) < spec.n_train;
    const std::size_t idx = train ? static_cast<std::size_t>(i) : static_cast<std::size_t>(i) - spec.n_train;
    try {
      (train ? c.train : c.test)[idx] = make_record(spec, train, idx);
    } catch (const std::exception& e) {
#pragma omp critical
      error = e.what();
    }
  }
  if (!error.empty()) throw ConfigError(error);
  return c;
}

void validate_record(const SampleRecord& r, std::size_t classes) {
  if (r.label < 0 || static_cast<std::size_t>(r.label) >= classes) {
    throw ConfigError(r.id + ": label " + std::to_string(r.label) + " out of range");
  }
  if (r.image.rank() != 3 || r.image.dim(0) != 1) throw DimensionError(r.id + ": image must be 1 x H x W");
  if (r.image.min() < 0.0 || r.image.max() > 1.0) throw ConfigError(r.id + ": image values outside [0,1]");
  if (!r.gaze_map && r.fixations.empty()) throw ConfigError(r.id + ": needs fixations or a gaze map");
  if (r.gaze_map) {
    const Tensor& g = *r.gaze_map;
    if (g.shape() != Shape{r.image.dim(1), r.image.dim(2)}) throw DimensionError(r.id + ": gaze map shape");
    if (g.min() < 0.0 || g.max() != 1.0) throw ConfigError(r.id + ": gaze map must lie in [0,1] with max 1");
  }
}

// ---------------------------------------------------------------------------
// On-disk corpus

namespace {

using nlohmann::json;

const std::set<std::string> kRecordFields = {"id",          "split",    "label",    "image",
                                             "gaze_map",    "fixations", "shortcut", "lesion_mask"};
const std::set<std::string> kFileFields = {"file", "checksum", "shape"};
const std::set<std::string> kFixationFields = {"x", "y", "duration"};
const std::set<std::string> kShortcutFields = {"corner", "intensity", "size", "correlated_with_label"};
const std::set<std::string> kTopFields = {"format", "version", "records"};

void check_fields(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
  if (!obj.is_object()) throw FormatError("manifest: " + where + " must be an object");
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (!allowed.count(it.key())) throw FormatError("manifest: unknown field '" + it.key() + "' in " + where);
  }
}

std::string hex64(std::uint64_t v) {
  std::ostringstream out;
  out << std::hex;
  out.width(16);
  out.fill('0');
  out << v;
  return out.str();
}

json store_tensor(const std::filesystem::path& dir, const std::string& file, const Tensor& t) {
  auto bytes = encode_tensor(t);
  write_bytes(dir / file, bytes);
  return json{{"file", file}, {"checksum", "fnv1a64:" + hex64(fnv1a64(bytes))}, {"shape", t.shape()}};
}

Tensor fetch_tensor(const std::filesystem::path& dir, const json& ref, const std::string& where) {
  check_fields(ref, kFileFields, where);
  const std::string file = ref.at("file").get<std::string>();
  if (file.find('/') != std::string::npos || file.find("..") != std::string::npos) {
    throw FormatError("manifest: suspicious file name '" + file + "'");
  }
  std::vector<std::uint8_t> bytes;
  try {
    bytes = read_bytes(dir / file);
  } catch (const FormatError&) {
    throw FormatError("missing tensor file " + file);
  }
  if ("fnv1a64:" + hex64(fnv1a64(bytes)) != ref.at("checksum").get<std::string>()) {
    throw FormatError("checksum mismatch in " + file);
  }
  Tensor t = decode_tensor(bytes);
  if (t.shape() != ref.at("shape").get<Shape>()) throw FormatError("shape mismatch in " + file);
  return t;
}

}  // namespace

void save_corpus(const Corpus& corpus, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  json records = json::array();
  for (const auto* split : {&corpus.train, &corpus.test}) {
    const std::string name = split == &corpus.train ? "train" : "test";
    for (const auto& r : *split) {
      json j;
      j["id"] = r.id;
      j["split"] = name;
      j["label"] = r.label;
      j["image"] = store_tensor(dir, r.id + ".image.gdvt", r.image);
      if (r.gaze_map) j["gaze_map"] = store_tensor(dir, r.id + ".gaze.gdvt", *r.gaze_map);
      if (r.lesion_mask) j["lesion_mask"] = store_tensor(dir, r.id + ".lesion.gdvt", *r.lesion_mask);
      json fix = json::array();
      for (const auto& f : r.fixations) fix.push_back({{"x", f.x}, {"y", f.y}, {"duration", f.duration}});
      j["fixations"] = fix;
      if (r.shortcut) {
        j["shortcut"] = {{"corner", to_string(r.shortcut->corner)},
                         {"intensity", r.shortcut->intensity},
                         {"size", r.shortcut->size},
                         {"correlated_with_label", r.shortcut->correlated_with_label}};
      }
      records.push_back(std::move(j));
    }
  }
  json manifest = {{"format", "gdvt-corpus"}, {"version", 1}, {"records", records}};
  std::ofstream out(dir / "manifest.json", std::ios::trunc);
  out << manifest.dump(1) << "\n";
}

Corpus load_corpus(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw FormatError("missing " + (dir / "manifest.json").string());
  json manifest;
  try {
    manifest = json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError("malformed manifest: " + std::string(e.what()));
  }
  check_fields(manifest, kTopFields, "manifest");
  if (manifest.value("format", "") != "gdvt-corpus" || manifest.value("version", 0) != 1) {
    throw FormatError("manifest: unsupported format/version");
  }
  Corpus c;
  try {
    for (const auto& j : manifest.at("records")) {
      check_fields(j, kRecordFields, "record");
      SampleRecord r;
      r.id = j.at("id").get<std::string>();
      r.label = j.at("label").get<int>();
      r.image = fetch_tensor(dir, j.at("image"), r.id + ".image");
      if (j.contains("gaze_map")) r.gaze_map = fetch_tensor(dir, j.at("gaze_map"), r.id + ".gaze_map");
      if (j.contains("lesion_mask")) r.lesion_mask = fetch_tensor(dir, j.at("lesion_mask"), r.id + ".lesion_mask");
      if (j.contains("fixations")) {
        for (const auto& f : j.at("fixations")) {
          check_fields(f, kFixationFields, r.id + ".fixation");
          r.fixations.push_back(Fixation{f.at("x").get<double>(), f.at("y").get<double>(), f.at("duration").get<double>()});
        }
      }
      if (j.contains("shortcut")) {
        const auto& s = j.at("shortcut");
        check_fields(s, kShortcutFields, r.id + ".shortcut");
        r.shortcut = ShortcutCue{parse_corner(s.at("corner").get<std::string>()), s.at("intensity").get<double>(),
                                 s.at("size").get<std::size_t>(), s.at("correlated_with_label").get<bool>()};
      }
      const std::string split = j.at("split").get<std::string>();
      if (split == "train") {
        c.train.push_back(std::move(r));
      } else if (split == "test") {
        c.test.push_back(std::move(r));
      } else {
        throw FormatError("manifest: unknown split '" + split + "'");
      }
    }
  } catch (const json::exception& e) {
    throw FormatError("malformed manifest: " + std::string(e.what()));
  }
  return c;
}

}  // namespace gdvig
