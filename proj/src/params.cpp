#include "gdvig/params.hpp"

#include <cmath>
#include <fstream>
#include <json.hpp>

#include "gdvig/error.hpp"
#include "gdvig/tensor_io.hpp"

namespace gdvig {

ParamStore::Handle ParamStore::add(const std::string& name, Tensor init, bool trainable) {
  if (index_.count(name)) throw ConfigError("duplicate parameter name " + name);
  params_.push_back(Parameter{name, std::move(init), Tensor(), trainable});
  index_[name] = params_.size() - 1;
  return params_.size() - 1;
}

Parameter& ParamStore::find(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("unknown parameter " + name);
  return params_[it->second];
}

const Parameter& ParamStore::find(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("unknown parameter " + name);
  return params_[it->second];
}

std::vector<Parameter*> ParamStore::trainable() { return trainable_with_prefix(""); }

std::vector<Parameter*> ParamStore::trainable_with_prefix(const std::string& prefix) {
  std::vector<Parameter*> out;
  for (auto& p : params_)
    if (p.trainable && p.name.rfind(prefix, 0) == 0) out.push_back(&p);
  return out;
}

void ParamStore::zero_grad() {
  for (auto& p : params_) p.grad = Tensor();
}

void ParamStore::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  nlohmann::json tensors = nlohmann::json::array();
  for (const auto& p : params_) {
    const std::string file = p.name + ".gdvt";
    write_tensor(dir / file, p.value);
    tensors.push_back({{"name", p.name}, {"file", file}, {"shape", p.value.shape()}, {"trainable", p.trainable}});
  }
  nlohmann::json manifest = {{"format", "gdvt-params"}, {"version", 1}, {"tensors", tensors}};
  std::ofstream out(dir / "manifest.json", std::ios::trunc);
  out << manifest.dump(1) << "\n";
}

void ParamStore::load(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw FormatError("missing " + (dir / "manifest.json").string());
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("checkpoint manifest: " + std::string(e.what()));
  }
  if (manifest.value("format", "") != "gdvt-params") throw FormatError("checkpoint manifest: wrong format tag");
  const auto& tensors = manifest.at("tensors");
  if (tensors.size() != params_.size()) {
    throw FormatError("checkpoint has " + std::to_string(tensors.size()) + " tensors, model expects " +
                      std::to_string(params_.size()));
  }
  for (const auto& entry : tensors) {
    Parameter& p = find(entry.at("name").get<std::string>());
    Tensor t = read_tensor(dir / entry.at("file").get<std::string>());
    if (t.shape() != entry.at("shape").get<Shape>() || t.shape() != p.value.shape()) {
      throw FormatError("checkpoint tensor " + p.name + " has shape " + shape_str(t.shape()) + ", expected " +
                        shape_str(p.value.shape()));
    }
    p.value = std::move(t);
  }
}

Tensor init_uniform(Rng& rng, const Shape& shape, std::size_t fan_in, double gain) {
  Tensor t(shape);
  const double bound = gain / std::sqrt(static_cast<double>(fan_in));
  for (double& v : t.data()) v = rng.uniform(-bound, bound);
  return t;
}

}  // namespace gdvig
