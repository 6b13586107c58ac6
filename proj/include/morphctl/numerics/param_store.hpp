#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "morphctl/numerics/rng.hpp"
#include "morphctl/numerics/tensor.hpp"

namespace morphctl {

// Initialization-distribution descriptor attached to every parameter.
struct InitSpec {
  enum class Kind { kZeros, kConstant, kUniform };
  Kind kind = Kind::kZeros;
  double value = 0.0;  // constant value, or half-width for kUniform

  static InitSpec zeros() { return {Kind::kZeros, 0.0}; }
  static InitSpec constant(double v) { return {Kind::kConstant, v}; }
  static InitSpec uniform(double bound) { return {Kind::kUniform, bound}; }
  // U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
  static InitSpec fan_in(std::size_t fan_in);

  void sample(Rng& rng, std::span<double> out) const;
};

struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
  InitSpec init;
};

using ParamId = std::size_t;

// Named parameters in registration order. Registration order is also the
// order of initialization draws and of checkpoint serialization.
class ParamStore {
 public:
  ParamId add(std::string name, std::vector<std::size_t> shape, InitSpec init);

  bool contains(const std::string& name) const { return index_.contains(name); }
  ParamId id(const std::string& name) const;
  Parameter& operator[](ParamId id) { return params_[id]; }
  const Parameter& operator[](ParamId id) const { return params_[id]; }
  Parameter& get(const std::string& name) { return params_[id(name)]; }
  const Parameter& get(const std::string& name) const { return params_[id(name)]; }

  std::size_t size() const { return params_.size(); }
  std::vector<Parameter>::iterator begin() { return params_.begin(); }
  std::vector<Parameter>::iterator end() { return params_.end(); }
  std::vector<Parameter>::const_iterator begin() const { return params_.begin(); }
  std::vector<Parameter>::const_iterator end() const { return params_.end(); }

  // Draws every parameter from its InitSpec, in registration order.
  void initialize(Rng& rng);
  void zero_grad();
  // Total number of scalar learnable values.
  std::size_t scalar_count() const;
  double grad_norm() const;
  void scale_grads(double factor);

 private:
  std::vector<Parameter> params_;
  std::unordered_map<std::string, ParamId> index_;
};

}  // namespace morphctl
