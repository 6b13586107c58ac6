#pragma once

#include <vector>

#include "morphctl/controller/checkpoint.hpp"
#include "morphctl/numerics/param_store.hpp"

namespace morphctl {

struct AdamConfig {
  double learning_rate = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double max_grad_norm = 0.5;  // <= 0 disables clipping
};

// Adam over every parameter of a store, with global-norm gradient clipping.
class Adam {
 public:
  Adam(const ParamStore& store, AdamConfig config);

  // Clips, applies one update from the accumulated grads, returns the
  // pre-clip gradient norm. Grads are left untouched except for clipping.
  double step(ParamStore& store);
  std::size_t steps() const { return t_; }
  const AdamConfig& config() const { return config_; }
  void set_learning_rate(double lr) { config_.learning_rate = lr; }

  std::vector<NamedTensor> save() const;
  // Rejects state whose names or shapes do not match the store.
  void restore(const std::vector<NamedTensor>& state);

 private:
  AdamConfig config_;
  std::vector<std::string> names_;
  std::vector<Tensor> m_, v_;
  std::size_t t_ = 0;
};

}  // namespace morphctl
