#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "morphctl/controller/spec.hpp"
#include "morphctl/eval/evaluate.hpp"
#include "morphctl/morphology/io.hpp"
#include "morphctl/ppo/ppo.hpp"
#include "morphctl/ppo/trainer.hpp"

namespace morphctl {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainSection {
  std::string variant = "fa+hn";
  std::uint64_t seed = 1;
  std::size_t steps = 2000000;
  std::string split = "train";
  std::size_t robots = 0;  // first k robots of the split; 0 = all
  std::size_t checkpoint_every = 10;  // iterations
};

struct EvalSection {
  std::size_t rollouts = 64;
  std::uint64_t seed = 0;
  std::string split = "test";
};

struct SweepSection {
  std::vector<std::string> parameters = {"length", "mass", "gear", "joint_limits"};
  std::size_t variants_per_robot = 4;
  double relative_range = 0.2;
  std::uint64_t seed = 0;
  std::size_t rollouts = 64;
  std::string split = "train";
};

struct DiagnoseSection {
  std::uint64_t seed = 0;
  std::string split = "train";
  double pe_tolerance = 1e-6;
  // ratio drift
  std::vector<std::string> dropout_modes = {"off", "consistent", "inconsistent"};
  double dropout = 0.1;
  std::size_t iterations = 1;
  // correlation and trajectory
  std::size_t episodes = 4;
  std::string robot;  // empty = every robot of the split
};

struct AblateSection {
  std::vector<std::string> variants = {"baseline", "fa", "hn", "fa+hn"};
  std::vector<std::uint64_t> seeds = {1, 2, 3};
  std::size_t steps = 200000;
  bool single_robot = false;
  std::string split = "train";
  std::size_t robots = 0;
  std::size_t rollouts = 64;
  std::uint64_t eval_seed = 0;
};

// Everything a command needs; every stochastic component has its own seed.
struct RunConfig {
  std::filesystem::path corpus_dir = "corpus";
  // Used by eval, sweep and the policy diagnostics: a checkpoint file, or a
  // training run directory (its final, else latest, checkpoint).
  std::filesystem::path checkpoint;
  CorpusOptions corpus;
  EnvSettings env;
  ControllerSpec controller;
  PpoConfig ppo;
  TrainSection train;
  EvalSection eval;
  SweepSection sweep;
  DiagnoseSection diagnose;
  AblateSection ablate;
};

// Missing keys take their defaults; unknown keys are rejected.
RunConfig run_config_from_json(const std::string& text);
std::string run_config_to_json(const RunConfig& config);
RunConfig load_run_config(const std::filesystem::path& path);

std::string env_settings_to_json(const EnvSettings& env);
EnvSettings env_settings_from_json(const std::string& text);

}  // namespace morphctl
