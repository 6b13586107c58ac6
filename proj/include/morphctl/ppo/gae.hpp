#pragma once

#include <span>
#include <vector>

namespace morphctl {

struct GaeResult {
  std::vector<double> advantages;
  std::vector<double> returns;  // advantages + values
};

// Generalized advantage estimation over one worker's step sequence.
// values[t] = V(s_t); dones[t] marks that the episode ended after step t
// (time-limit endings included); bootstrap = V(s_T) for an unfinished tail.
GaeResult compute_gae(std::span<const double> rewards, std::span<const double> values,
                      std::span<const bool> dones, double bootstrap, double gamma,
                      double lambda);

// In place: mean 0, std 1 (population). A constant vector becomes all zeros.
void normalize_advantages(std::vector<double>& adv);

}  // namespace morphctl
