#pragma once

#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "morphctl/controller/controller.hpp"
#include "morphctl/ppo/trainer.hpp"

namespace morphctl {

class EvalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct EvalSettings {
  EnvSettings env;
  std::size_t rollouts = 64;
  std::uint64_t seed = 0;
};

struct RobotEval {
  std::string robot;
  std::string parameter;  // empty outside a variant sweep
  int variant = -1;
  std::vector<double> returns;  // one per rollout
  double mean = 0.0;
  double std = 0.0;  // sample std over rollouts
};

struct EvalReport {
  std::string environment;
  std::uint64_t seed = 0;
  std::size_t rollouts = 0;
  std::vector<RobotEval> rows;
  double mean = 0.0;  // over rows
};

// Rollout k of every robot starts from episode seed mix(seed, k), so robots
// and variants are compared on common initial states. The policy acts with
// its mean action. The controller is copied; the caller's is never touched.
EvalReport evaluate(const Controller& controller, const ContextNormalizer& normalizer,
                    const std::vector<MorphologyTree>& robots, const EvalSettings& settings);

// Same protocol with every action fixed at zero.
EvalReport evaluate_zero_action(const std::vector<MorphologyTree>& robots,
                                const EvalSettings& settings);

struct SweepOptions {
  std::vector<VariationParam> parameters;
  std::size_t variants_per_robot = 4;
  double relative_range = 0.2;
  std::uint64_t seed = 0;
};

// For each parameter, perturbs every limb of every corpus robot
// variants_per_robot times and evaluates each variant. Rows are ordered
// parameter-major, then robot, then variant.
EvalReport variant_sweep(const Controller& controller, const ContextNormalizer& normalizer,
                         const std::vector<MorphologyTree>& corpus, const SweepOptions& options,
                         const EvalSettings& settings);

// The perturbed trees variant_sweep evaluates, in row order.
std::vector<MorphologyTree> sweep_variants(const std::vector<MorphologyTree>& corpus,
                                           const SweepOptions& options);

// Tab-separated: environment, robot, parameter, variant, seed, rollouts, mean, std.
void write_report_table(std::ostream& out, const EvalReport& report);

std::string format_double(double v);

}  // namespace morphctl
