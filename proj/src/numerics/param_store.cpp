#include "morphctl/numerics/param_store.hpp"

#include <cmath>

namespace morphctl {

InitSpec InitSpec::fan_in(std::size_t fan_in) {
  return uniform(1.0 / std::sqrt(static_cast<double>(fan_in == 0 ? 1 : fan_in)));
}

void InitSpec::sample(Rng& rng, std::span<double> out) const {
  switch (kind) {
    case Kind::kZeros:
      for (double& v : out) v = 0.0;
      break;
    case Kind::kConstant:
      for (double& v : out) v = value;
      break;
    case Kind::kUniform:
      for (double& v : out) v = rng.uniform(-value, value);
      break;
  }
}

ParamId ParamStore::add(std::string name, std::vector<std::size_t> shape, InitSpec init) {
  if (index_.contains(name)) {
    throw std::invalid_argument("duplicate parameter name '" + name + "'");
  }
  const ParamId id = params_.size();
  index_.emplace(name, id);
  Tensor value(shape);
  Tensor grad(std::move(shape));
  params_.push_back(Parameter{std::move(name), std::move(value), std::move(grad), init});
  return id;
}

ParamId ParamStore::id(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("unknown parameter '" + name + "'");
  return it->second;
}

void ParamStore::initialize(Rng& rng) {
  for (auto& p : params_) p.init.sample(rng, p.value.values());
}

void ParamStore::zero_grad() {
  for (auto& p : params_) p.grad.fill(0.0);
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

double ParamStore::grad_norm() const {
  double s = 0.0;
  for (const auto& p : params_) {
    for (double g : p.grad.values()) s += g * g;
  }
  return std::sqrt(s);
}

void ParamStore::scale_grads(double factor) {
  for (auto& p : params_) {
    for (double& g : p.grad.values()) g *= factor;
  }
}

}  // namespace morphctl
