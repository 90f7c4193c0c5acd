#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "gdvig/autograd.hpp"
#include "gdvig/rng.hpp"

namespace gdvig {

/// Named parameters and buffers, in creation order. Handles stay valid when
/// the store is copied, so models holding handles are plain values.
class ParamStore {
 public:
  using Handle = std::size_t;

  Handle add(const std::string& name, Tensor init, bool trainable = true);

  Parameter& at(Handle h) { return params_.at(h); }
  const Parameter& at(Handle h) const { return params_.at(h); }
  Parameter& find(const std::string& name);
  const Parameter& find(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  std::vector<Parameter*> trainable();
  /// Trainable parameters whose names start with prefix.
  std::vector<Parameter*> trainable_with_prefix(const std::string& prefix);
  void zero_grad();

  std::size_t size() const { return params_.size(); }
  const std::vector<Parameter>& all() const { return params_; }

  /// Directory of GDVT files plus manifest.json (name -> file -> shape).
  void save(const std::filesystem::path& dir) const;
  /// Loads values for every parameter already in the store; names and shapes must match exactly.
  void load(const std::filesystem::path& dir);

 private:
  std::vector<Parameter> params_;
  std::map<std::string, Handle> index_;
};

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) * gain.
Tensor init_uniform(Rng& rng, const Shape& shape, std::size_t fan_in, double gain = 1.0);

}  // namespace gdvig
