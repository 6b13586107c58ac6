#include "morphctl/ppo/adam.hpp"

#include <cmath>
#include <stdexcept>

namespace morphctl {

Adam::Adam(const ParamStore& store, AdamConfig config) : config_(config) {
  for (const Parameter& p : store) {
    names_.push_back(p.name);
    m_.emplace_back(p.value.shape());
    v_.emplace_back(p.value.shape());
  }
}

double Adam::step(ParamStore& store) {
  if (store.size() != names_.size()) throw std::invalid_argument("Adam: parameter store changed");
  const double norm = store.grad_norm();
  if (!std::isfinite(norm)) throw std::runtime_error("Adam: non-finite gradient norm");
  if (config_.max_grad_norm > 0.0 && norm > config_.max_grad_norm) {
    store.scale_grads(config_.max_grad_norm / norm);
  }
  ++t_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  const double lr = config_.learning_rate;
  for (std::size_t i = 0; i < store.size(); ++i) {
    Parameter& p = store[i];
    double* m = m_[i].data();
    double* v = v_[i].data();
    for (std::size_t k = 0; k < p.value.size(); ++k) {
      const double g = p.grad[k];
      m[k] = b1 * m[k] + (1.0 - b1) * g;
      v[k] = b2 * v[k] + (1.0 - b2) * g * g;
      p.value[k] -= lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + config_.eps);
    }
  }
  return norm;
}

std::vector<NamedTensor> Adam::save() const {
  std::vector<NamedTensor> out;
  out.push_back({"adam.t", Tensor::scalar(static_cast<double>(t_))});
  for (std::size_t i = 0; i < names_.size(); ++i) {
    out.push_back({"adam.m." + names_[i], m_[i]});
    out.push_back({"adam.v." + names_[i], v_[i]});
  }
  return out;
}

void Adam::restore(const std::vector<NamedTensor>& state) {
  if (state.size() != 1 + 2 * names_.size() || state[0].name != "adam.t") {
    throw CheckpointError("optimizer state does not match the controller");
  }
  for (std::size_t i = 0; i < names_.size(); ++i) {
    const NamedTensor& m = state[1 + 2 * i];
    const NamedTensor& v = state[2 + 2 * i];
    if (m.name != "adam.m." + names_[i] || v.name != "adam.v." + names_[i] ||
        m.value.shape() != m_[i].shape() || v.value.shape() != v_[i].shape()) {
      throw CheckpointError("optimizer state for " + names_[i] + " does not match");
    }
  }
  t_ = static_cast<std::size_t>(state[0].value[0]);
  for (std::size_t i = 0; i < names_.size(); ++i) {
    m_[i] = state[1 + 2 * i].value;
    v_[i] = state[2 + 2 * i].value;
  }
}

}  // namespace morphctl
