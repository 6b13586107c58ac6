#include "morphctl/ppo/gae.hpp"

#include <cmath>
#include <stdexcept>

namespace morphctl {

GaeResult compute_gae(std::span<const double> rewards, std::span<const double> values,
                      std::span<const bool> dones, double bootstrap, double gamma,
                      double lambda) {
  const std::size_t n = rewards.size();
  if (values.size() != n || dones.size() != n) {
    throw std::invalid_argument("compute_gae: rewards, values and dones differ in length");
  }
  GaeResult out;
  out.advantages.resize(n);
  out.returns.resize(n);
  double gae = 0.0;
  for (std::size_t k = n; k-- > 0;) {
    const double live = dones[k] ? 0.0 : 1.0;
    const double next = k + 1 < n ? values[k + 1] : bootstrap;
    const double delta = rewards[k] + gamma * next * live - values[k];
    gae = delta + gamma * lambda * live * gae;
    out.advantages[k] = gae;
    out.returns[k] = gae + values[k];
  }
  return out;
}

void normalize_advantages(std::vector<double>& adv) {
  if (adv.empty()) return;
  double mean = 0.0;
  for (double a : adv) mean += a;
  mean /= static_cast<double>(adv.size());
  double var = 0.0;
  for (double a : adv) var += (a - mean) * (a - mean);
  const double sd = std::sqrt(var / static_cast<double>(adv.size()));
  for (double& a : adv) a = sd > 1e-12 ? (a - mean) / sd : 0.0;
}

}  // namespace morphctl
