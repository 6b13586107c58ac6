#pragma once

#include <cmath>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "morphctl/controller/controller.hpp"
#include "morphctl/ppo/ppo.hpp"
#include "morphctl/ppo/trainer.hpp"

namespace morphctl {

// ---- action correlation ----

struct CorrelationMatrix {
  std::size_t dim = 0;
  std::vector<std::string> labels;
  std::vector<double> values;  // row-major dim x dim; NaN where undefined
  std::size_t samples = 0;
  // Mean |r| over defined off-diagonal pairs; NaN when there are none.
  double mean_abs_offdiag = 0.0;

  double at(std::size_t i, std::size_t j) const { return values[i * dim + j]; }
  bool defined(std::size_t i, std::size_t j) const { return !std::isnan(at(i, j)); }
};

// Pearson correlation between equally long series. A constant series has no
// defined correlation with anything, itself included.
CorrelationMatrix pearson_matrix(const std::vector<std::vector<double>>& series,
                                 std::vector<std::string> labels = {});

// Joint action sequences of the mean-action policy, concatenated over
// episodes; one series per actuated limb.
CorrelationMatrix action_correlation(const Controller& controller,
                                     const ContextNormalizer& normalizer,
                                     const MorphologyTree& robot, const EnvSettings& env,
                                     std::size_t episodes, std::uint64_t seed);

void write_correlation_table(std::ostream& out, const CorrelationMatrix& m);

// One mean-action episode from episode seed mix(seed, 0), written as
// trajectory rows. Returns the episode return.
double record_trajectory(const Controller& controller, const ContextNormalizer& normalizer,
                         const MorphologyTree& robot, const EnvSettings& env,
                         std::uint64_t seed, std::ostream& out);

// ---- positional-encoding consistency ----

struct PeTreeChurn {
  std::string robot;
  std::size_t non_root = 0;
  std::size_t changed = 0;  // non-root limbs whose DFS index moves under reversed child order
};

// Two limbs of different trees that share a DFS index but differ in depth or
// in some normalized context feature by more than the tolerance.
struct PeCollision {
  std::size_t tree_a = 0, limb_a = 0, tree_b = 0, limb_b = 0, index = 0;
};

struct PeReport {
  std::vector<PeTreeChurn> trees;
  double churn_fraction = 0.0;  // pooled over every non-root limb
  std::size_t compared_pairs = 0;
  std::vector<PeCollision> collisions;
};

PeReport pe_diagnostic(const std::vector<MorphologyTree>& corpus,
                       const ContextNormalizer& normalizer, double tolerance = 1e-6);

void write_pe_table(std::ostream& out, const PeReport& report);

// ---- ratio drift under dropout ----

struct RatioDriftReport {
  DropoutMode mode = DropoutMode::kOff;
  std::size_t bins = 0;
  // [iteration][epoch][bin], ratios clipped into [0, 2].
  std::vector<std::vector<std::vector<std::size_t>>> epochs;
  // [iteration][bin] for epoch 0, minibatch 0 alone.
  std::vector<std::vector<std::size_t>> first_minibatch;
};

// Trains with the given dropout mode, recording ratio histograms. The two
// dropout modes need spec.dropout > 0.
RatioDriftReport ratio_drift_diagnostic(const std::vector<MorphologyTree>& robots,
                                        const ContextNormalizer& normalizer,
                                        const EnvSettings& env, const ControllerSpec& spec,
                                        PpoConfig config, DropoutMode mode,
                                        std::size_t iterations, std::uint64_t seed);

// Fraction of a histogram's mass in the bin holding 1.0.
double mass_at_one(const std::vector<std::size_t>& histogram);

void write_ratio_table(std::ostream& out, const RatioDriftReport& report);

}  // namespace morphctl
