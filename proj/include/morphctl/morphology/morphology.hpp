#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "morphctl/numerics/tensor.hpp"

namespace morphctl {

inline constexpr std::size_t kMaxLimbs = 12;

class MorphologyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Per-limb morphology context. Angles in radians, lengths in meters.
struct LimbContext {
  double length = 0.3;
  double mass = 1.0;
  double attach_offset = 1.0;  // fraction of the parent's length
  double rest_angle = 0.0;     // relative to the parent
  double joint_limit_lo = -0.5;
  double joint_limit_hi = 0.5;
  double gear = 0.0;  // N*m per unit action; the root is unactuated
  int depth = 0;

  friend bool operator==(const LimbContext&, const LimbContext&) = default;
};

struct MorphologyTree {
  std::string id;
  std::vector<LimbContext> limbs;
  std::vector<int> parent;                    // -1 for the root (always index 0)
  std::vector<std::vector<int>> child_order;  // per limb, in expansion order

  std::size_t size() const { return limbs.size(); }
  friend bool operator==(const MorphologyTree&, const MorphologyTree&) = default;
};

// Throws MorphologyError naming the offending limb and field.
void validate(const MorphologyTree& tree);

// Pre-order traversal following child_order.
std::vector<int> dfs_order(const MorphologyTree& tree);
// position[limb] = index of limb within dfs_order.
std::vector<int> dfs_positions(const MorphologyTree& tree);

// Hash of the unordered rooted topology (invariant to child_order and to
// limb numbering).
std::uint64_t topology_hash(const MorphologyTree& tree);
// Stable content hash over every field.
std::uint64_t content_hash(const MorphologyTree& tree);

MorphologyTree with_reversed_child_order(const MorphologyTree& tree);
// Mirror image about the vertical axis: relative rest angles and joint ranges
// negate. The image's torso points the opposite way, so a simulator state for
// it must reverse the torso as well.
MorphologyTree mirrored(const MorphologyTree& tree);
// new_index[old] gives every limb's new index; the root must stay at 0.
MorphologyTree relabeled(const MorphologyTree& tree, const std::vector<int>& new_index);

// ---- context features ----

inline constexpr std::size_t kContextDim = 9;
inline constexpr std::array<std::string_view, kContextDim> kContextFeatures = {
    "length", "mass", "attach_offset", "rest_angle", "joint_limit_lo",
    "joint_limit_hi", "gear", "depth", "is_root"};

std::array<double, kContextDim> raw_context(const LimbContext& limb, bool is_root);

// Per-feature affine normalization fitted on a training corpus.
struct ContextNormalizer {
  std::array<double, kContextDim> mean{};
  std::array<double, kContextDim> std{};

  static ContextNormalizer identity();
  // Population statistics over every limb of every tree; features with zero
  // spread keep a unit scale.
  static ContextNormalizer fit(const std::vector<MorphologyTree>& corpus);

  friend bool operator==(const ContextNormalizer&, const ContextNormalizer&) = default;
};

// [N, kContextDim]; row i depends only on limb i.
Tensor context_matrix(const MorphologyTree& tree, const ContextNormalizer& normalizer);

// ---- generation ----

struct GenerationRules {
  double root_length_lo = 0.4, root_length_hi = 0.7;
  double length_lo = 0.2, length_hi = 0.45;
  double density_lo = 2.0, density_hi = 4.0;  // kg per meter
  double limit_lo_min = -1.0, limit_lo_max = -0.4;
  double limit_hi_min = 0.4, limit_hi_max = 1.0;
  double gear_lo = 15.0, gear_hi = 30.0;
  int max_depth = 4;
};

enum class TreeShape { kChain, kStar, kMixed };

MorphologyTree sample_morphology(std::uint64_t seed, std::size_t min_limbs,
                                 std::size_t max_limbs, const GenerationRules& rules = {});

// ---- parametric variation ----

enum class VariationParam { kLength, kMass, kGear, kRestAngle, kJointLimits, kAttachOffset };

std::string_view variation_name(VariationParam p);
VariationParam parse_variation(std::string_view name);
const std::vector<VariationParam>& all_variation_params();

struct VariationSpec {
  VariationParam param = VariationParam::kMass;
  double relative_range = 0.2;
  std::uint64_t seed = 0;
};

// Multiplies the named parameter of every limb by 1 + U(-r, r), then clamps
// into the LimbContext validity bounds. Topology is untouched.
MorphologyTree perturb(const MorphologyTree& tree, const VariationSpec& spec);

}  // namespace morphctl
