#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "morphctl/controller/controller.hpp"
#include "morphctl/ppo/adam.hpp"

namespace morphctl {

// How dropout masks relate between data collection and policy updates:
// off never applies dropout, consistent replays the collection-time mask,
// inconsistent draws a fresh mask on every update pass.
enum class DropoutMode { kOff, kConsistent, kInconsistent };

std::string_view dropout_mode_name(DropoutMode m);
DropoutMode parse_dropout_mode(std::string_view name);

struct PpoConfig {
  double clip = 0.2;
  double kl_threshold = 0.03;  // infinity disables early stopping
  std::size_t epochs = 4;
  std::size_t minibatches = 4;
  double gamma = 0.99;
  double lambda = 0.95;
  double learning_rate = 3e-4;
  double value_coef = 0.5;
  double entropy_coef = 0.0;
  double max_grad_norm = 0.5;
  DropoutMode dropout_mode = DropoutMode::kOff;
  std::size_t workers = 8;
  std::size_t steps_per_worker = 512;
  std::size_t histogram_bins = 41;  // over [0, 2]; odd so 1.0 sits mid-bin
  bool normalize_advantages = true;

  void validate() const;
  AdamConfig adam() const;
  friend bool operator==(const PpoConfig&, const PpoConfig&) = default;
};

std::string ppo_config_to_json(const PpoConfig& c);
PpoConfig ppo_config_from_json(const std::string& text);

struct Transition {
  std::size_t robot = 0;  // index into the trainer's robot table
  Tensor obs;             // [n, obs_dim]
  Tensor ext;             // [ext_dim], empty without exteroception
  Tensor action;          // [n, act_dim]; the root row is unused
  Mask dropout_mask;      // [n * d_model] when dropout was applied at collection
  double logp = 0.0;      // behavior log-probability
  double value = 0.0;
  double reward = 0.0;
  bool done = false;
  double advantage = 0.0;
  double ret = 0.0;
};

// Worker-major storage: index = worker * steps + t.
class RolloutBuffer {
 public:
  RolloutBuffer(std::size_t workers, std::size_t steps);

  std::size_t workers() const { return workers_; }
  std::size_t steps() const { return steps_; }
  std::size_t size() const { return data_.size(); }
  Transition& at(std::size_t worker, std::size_t t);
  const Transition& operator[](std::size_t i) const { return data_[i]; }
  void set_bootstrap(std::size_t worker, double value);

  // Computes advantages and returns per worker sequence; afterwards the
  // buffer is read-only.
  void finalize(const PpoConfig& config);
  bool finalized() const { return finalized_; }

 private:
  std::size_t workers_, steps_;
  std::vector<Transition> data_;
  std::vector<double> bootstrap_;
  bool finalized_ = false;
};

struct LossStats {
  double loss = 0.0;
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double approx_kl = 0.0;  // mean of (behavior logp - current logp)
  double clip_fraction = 0.0;
  double mean_ratio = 0.0;
  std::vector<double> ratios;  // in index order
};

struct MinibatchLoss {
  Var loss;
  LossStats stats;
};

// loss = -mean min(r A, clip(r) A) + c_v mean (V - R)^2 - c_e mean entropy.
// Samples are grouped by node count so no forward pass carries padding.
MinibatchLoss ppo_loss(Tape& tape, Controller& controller, std::span<const RobotInfo> robots,
                       const RolloutBuffer& buffer, std::span<const std::size_t> indices,
                       const PpoConfig& config, Rng& dropout_rng);

// Mean (behavior logp - current logp) over the indexed samples, no gradient.
double approx_kl(Controller& controller, std::span<const RobotInfo> robots,
                 const RolloutBuffer& buffer, std::span<const std::size_t> indices,
                 const PpoConfig& config, Rng& dropout_rng);

// Ratios clipped into [0, 2] and binned.
std::vector<std::size_t> ratio_histogram(std::span<const double> ratios, std::size_t bins);

struct IterationStats {
  std::size_t updates = 0;
  std::size_t planned_updates = 0;  // epochs * minibatches
  int early_stop_epoch = -1;        // epoch whose KL check ended the iteration
  double last_kl = 0.0;             // most recent KL check
  std::vector<double> kl_checks;
  double policy_loss = 0.0;  // means over executed updates
  double value_loss = 0.0;
  double entropy = 0.0;
  double clip_fraction = 0.0;
  double grad_norm = 0.0;
  std::vector<std::vector<std::size_t>> ratio_histograms;  // per epoch reached
  std::vector<double> first_ratios;                        // epoch 0, minibatch 0
};

// Up to epochs * minibatches updates. Before each one the KL of that
// minibatch under the current parameters is compared against the threshold;
// exceeding it ends the iteration without applying the update.
IterationStats train_iteration(const RolloutBuffer& buffer, Controller& controller, Adam& adam,
                               std::span<const RobotInfo> robots, const PpoConfig& config,
                               Rng& rng);

}  // namespace morphctl
