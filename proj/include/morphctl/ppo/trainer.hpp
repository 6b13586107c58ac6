#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "morphctl/controller/checkpoint.hpp"
#include "morphctl/envsim/env.hpp"
#include "morphctl/envsim/terrain.hpp"
#include "morphctl/ppo/ppo.hpp"

namespace morphctl {

// Builds the environment for one episode of a robot.
using EnvFactory = std::function<Env(const MorphologyTree&, std::uint64_t episode_seed)>;

struct EnvSettings {
  TerrainKind terrain = TerrainKind::kFlat;
  EnvConfig config;
};

// Flat terrain ignores the seed; variable terrain is regenerated from it.
EnvFactory make_env_factory(const EnvSettings& settings);

struct RobotReturn {
  double mean = 0.0;
  std::size_t episodes = 0;
};

struct IterationMetrics {
  std::size_t iteration = 0;  // 1-based count of completed iterations
  std::size_t env_steps = 0;  // cumulative
  std::size_t episodes = 0;   // finished during this iteration
  double mean_return = 0.0;   // over those episodes; NaN when none finished
  std::vector<RobotReturn> robot_returns;
  IterationStats update;
};

// One JSON object per line; NaN becomes null.
std::string metrics_to_json(const IterationMetrics& m, const std::vector<RobotInfo>& robots);

// Alternates rollout collection on config.workers workers (one batched
// forward per control step) with train_iteration. Robots are drawn
// uniformly per episode. Everything derives from the seed.
class Trainer {
 public:
  Trainer(std::vector<MorphologyTree> robots, const ContextNormalizer& normalizer,
          EnvFactory env_factory, ControllerSpec spec, PpoConfig config, std::uint64_t seed);

  IterationMetrics iterate();
  // Iterates until at least total_steps environment steps have been taken.
  void run(std::size_t total_steps,
           const std::function<void(const IterationMetrics&)>& on_iteration = {});

  std::size_t env_steps() const { return env_steps_; }
  std::size_t iteration() const { return iteration_; }
  Controller& controller() { return controller_; }
  const Controller& controller() const { return controller_; }
  const std::vector<RobotInfo>& robots() const { return robot_info_; }
  const std::vector<MorphologyTree>& trees() const { return trees_; }
  const PpoConfig& config() const { return config_; }
  const ContextNormalizer& normalizer() const { return normalizer_; }

  // Parameters, optimizer state and the full trainer state (workers
  // mid-episode included), so a resumed run continues bit-identically.
  Checkpoint checkpoint(std::uint64_t manifest_hash) const;
  // Rejects a checkpoint from a different spec, config, seed or corpus.
  void resume(const Checkpoint& checkpoint);

 private:
  struct Worker {
    std::size_t robot = 0;
    std::uint64_t episode_seed = 0;
    std::optional<Env> env;
    Tensor obs, ext;
    double episode_return = 0.0;
    Rng rng;
  };

  void start_episode(Worker& w);
  RolloutBuffer collect(IterationMetrics& metrics);

  std::vector<MorphologyTree> trees_;
  ContextNormalizer normalizer_;
  std::vector<RobotInfo> robot_info_;
  EnvFactory env_factory_;
  PpoConfig config_;
  std::uint64_t seed_;
  Controller controller_;
  Adam adam_;
  Rng update_rng_, rollout_rng_;
  std::vector<Worker> workers_;
  std::size_t env_steps_ = 0, iteration_ = 0;
};

}  // namespace morphctl
