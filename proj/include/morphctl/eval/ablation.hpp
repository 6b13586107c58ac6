#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "morphctl/eval/evaluate.hpp"

namespace morphctl {

struct AblationConfig {
  std::vector<std::string> variants;
  std::vector<std::uint64_t> seeds;
  std::size_t steps = 200000;
  // One run per robot, trained on that robot alone (needed by the per-node
  // and MLP variants).
  bool single_robot = false;
  EvalSettings eval;  // protocol for the final return
};

struct AblationRun {
  std::string variant;
  std::uint64_t seed = 0;
  std::string robot;  // "*" when trained on the whole robot set
  double final_return = 0.0;  // deterministic evaluation after training
  double last_train_return = 0.0;  // mean return of the last iteration with finished episodes
  std::size_t env_steps = 0;
  std::size_t iterations = 0;
};

struct AblationSummary {
  std::string variant;
  std::size_t runs = 0;
  double mean = 0.0;
  double std = 0.0;  // sample std over runs
};

struct AblationResult {
  std::vector<AblationRun> runs;  // variant-major, then seed, then robot
  std::vector<AblationSummary> summary;
  double zero_action = 0.0;  // same evaluation protocol, zero torque
};

struct AblationHooks {
  std::function<void(const AblationRun& run, const IterationMetrics& m, const Trainer& t)> on_iteration;
  std::function<void(const AblationRun& run, const Trainer& t)> on_run_done;
  // Returns a stored result for a run finished earlier, so an interrupted
  // suite can pick up where it stopped.
  std::function<std::optional<AblationRun>(const AblationRun& key)> lookup;
};

// Trains every variant under identical seeds and budget.
AblationResult ablation_suite(const std::vector<MorphologyTree>& robots,
                              const ContextNormalizer& normalizer, const ControllerSpec& base,
                              const PpoConfig& ppo, const AblationConfig& config,
                              const AblationHooks& hooks = {});

std::vector<AblationSummary> summarize_runs(const std::vector<std::string>& variants,
                                            const std::vector<AblationRun>& runs);

void write_ablation_runs(std::ostream& out, const std::vector<AblationRun>& runs);
void write_ablation_summary(std::ostream& out, const AblationResult& result);

}  // namespace morphctl
