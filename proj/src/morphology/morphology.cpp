#include "morphctl/morphology/morphology.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <sstream>

#include "morphctl/morphology/io.hpp"
#include "morphctl/numerics/rng.hpp"

namespace morphctl {

namespace {

[[noreturn]] void fail(std::size_t limb, const std::string& what) {
  throw MorphologyError("limb " + std::to_string(limb) + ": " + what);
}

std::string num(double v) {
  std::ostringstream s;
  s << v;
  return s.str();
}

}  // namespace

void validate(const MorphologyTree& tree) {
  const std::size_t n = tree.limbs.size();
  if (n < 2 || n > kMaxLimbs) {
    throw MorphologyError("tree '" + tree.id + "' has " + std::to_string(n) +
                          " limbs; expected 2.." + std::to_string(kMaxLimbs));
  }
  if (tree.parent.size() != n || tree.child_order.size() != n) {
    throw MorphologyError("tree '" + tree.id + "': parent/child_order length differs from limbs");
  }
  if (tree.parent[0] != -1) fail(0, "the root (index 0) must have parent -1");
  for (std::size_t i = 1; i < n; ++i) {
    const int p = tree.parent[i];
    if (p < 0 || static_cast<std::size_t>(p) >= n || static_cast<std::size_t>(p) == i) {
      fail(i, "parent index " + std::to_string(p) + " is invalid");
    }
  }
  // Every chain of parents must reach the root within n steps.
  for (std::size_t i = 0; i < n; ++i) {
    int cur = static_cast<int>(i);
    std::size_t steps = 0;
    while (cur != 0) {
      cur = tree.parent[cur];
      if (++steps > n) fail(i, "parent links form a cycle");
    }
  }
  for (std::size_t p = 0; p < n; ++p) {
    std::vector<int> expected;
    for (std::size_t i = 1; i < n; ++i) {
      if (tree.parent[i] == static_cast<int>(p)) expected.push_back(static_cast<int>(i));
    }
    std::vector<int> given = tree.child_order[p];
    std::sort(given.begin(), given.end());
    if (given != expected) fail(p, "child_order is not a permutation of the limb's children");
  }
  for (std::size_t i = 0; i < n; ++i) {
    const LimbContext& l = tree.limbs[i];
    for (double v : {l.length, l.mass, l.attach_offset, l.rest_angle, l.joint_limit_lo,
                     l.joint_limit_hi, l.gear}) {
      if (!std::isfinite(v)) fail(i, "non-finite field");
    }
    if (!(l.length > 0.0)) fail(i, "length must be > 0 (got " + num(l.length) + ")");
    if (!(l.mass > 0.0)) fail(i, "mass must be > 0 (got " + num(l.mass) + ")");
    if (!(l.joint_limit_lo < l.joint_limit_hi)) {
      fail(i, "joint_limit_lo must be < joint_limit_hi (got " + num(l.joint_limit_lo) + ", " +
                  num(l.joint_limit_hi) + ")");
    }
    if (l.attach_offset < 0.0 || l.attach_offset > 1.0) {
      fail(i, "attach_offset must lie in [0, 1] (got " + num(l.attach_offset) + ")");
    }
    const int expected_depth = i == 0 ? 0 : tree.limbs[tree.parent[i]].depth + 1;
    if (i != 0 && tree.limbs[tree.parent[i]].depth >= static_cast<int>(n)) {
      fail(i, "depth out of range");
    }
    if (l.depth != expected_depth) {
      fail(i, "depth " + std::to_string(l.depth) + " does not match tree depth " +
                  std::to_string(expected_depth));
    }
  }
}

std::vector<int> dfs_order(const MorphologyTree& tree) {
  validate(tree);
  std::vector<int> order;
  order.reserve(tree.size());
  std::vector<int> stack{0};
  while (!stack.empty()) {
    const int v = stack.back();
    stack.pop_back();
    order.push_back(v);
    const auto& kids = tree.child_order[v];
    for (auto it = kids.rbegin(); it != kids.rend(); ++it) stack.push_back(*it);
  }
  return order;
}

std::vector<int> dfs_positions(const MorphologyTree& tree) {
  const std::vector<int> order = dfs_order(tree);
  std::vector<int> pos(order.size());
  for (std::size_t k = 0; k < order.size(); ++k) pos[order[k]] = static_cast<int>(k);
  return pos;
}

std::uint64_t topology_hash(const MorphologyTree& tree) {
  validate(tree);
  std::function<std::string(int)> canon = [&](int v) {
    std::vector<std::string> parts;
    for (int c : tree.child_order[v]) parts.push_back(canon(c));
    std::sort(parts.begin(), parts.end());
    std::string s = "(";
    for (const auto& p : parts) s += p;
    return s + ")";
  };
  return fnv1a(canon(0));
}

std::uint64_t content_hash(const MorphologyTree& tree) { return fnv1a(morphology_to_text(tree)); }

MorphologyTree with_reversed_child_order(const MorphologyTree& tree) {
  MorphologyTree out = tree;
  for (auto& kids : out.child_order) std::reverse(kids.begin(), kids.end());
  return out;
}

MorphologyTree mirrored(const MorphologyTree& tree) {
  MorphologyTree out = tree;
  for (auto& l : out.limbs) {
    l.rest_angle = -l.rest_angle;
    const double lo = l.joint_limit_lo;
    l.joint_limit_lo = -l.joint_limit_hi;
    l.joint_limit_hi = -lo;
  }
  return out;
}

MorphologyTree relabeled(const MorphologyTree& tree, const std::vector<int>& new_index) {
  const std::size_t n = tree.size();
  if (new_index.size() != n || new_index[0] != 0) {
    throw MorphologyError("relabel: permutation must cover every limb and keep the root at 0");
  }
  std::vector<bool> seen(n, false);
  for (int v : new_index) {
    if (v < 0 || static_cast<std::size_t>(v) >= n || seen[v]) {
      throw MorphologyError("relabel: not a permutation");
    }
    seen[v] = true;
  }
  MorphologyTree out;
  out.id = tree.id;
  out.limbs.resize(n);
  out.parent.resize(n);
  out.child_order.resize(n);
  for (std::size_t old = 0; old < n; ++old) {
    const int ni = new_index[old];
    out.limbs[ni] = tree.limbs[old];
    out.parent[ni] = tree.parent[old] < 0 ? -1 : new_index[tree.parent[old]];
    for (int c : tree.child_order[old]) out.child_order[ni].push_back(new_index[c]);
  }
  return out;
}

// ---------------------------------------------------------------- context

std::array<double, kContextDim> raw_context(const LimbContext& l, bool is_root) {
  return {l.length,         l.mass,
          l.attach_offset,  l.rest_angle,
          l.joint_limit_lo, l.joint_limit_hi,
          l.gear,           static_cast<double>(l.depth),
          is_root ? 1.0 : 0.0};
}

ContextNormalizer ContextNormalizer::identity() {
  ContextNormalizer n;
  n.mean.fill(0.0);
  n.std.fill(1.0);
  return n;
}

ContextNormalizer ContextNormalizer::fit(const std::vector<MorphologyTree>& corpus) {
  ContextNormalizer n = identity();
  std::size_t count = 0;
  std::array<double, kContextDim> sum{};
  for (const auto& t : corpus) {
    for (std::size_t i = 0; i < t.size(); ++i) {
      const auto f = raw_context(t.limbs[i], i == 0);
      for (std::size_t k = 0; k < kContextDim; ++k) sum[k] += f[k];
      ++count;
    }
  }
  if (count == 0) return n;
  for (std::size_t k = 0; k < kContextDim; ++k) n.mean[k] = sum[k] / count;
  std::array<double, kContextDim> sq{};
  for (const auto& t : corpus) {
    for (std::size_t i = 0; i < t.size(); ++i) {
      const auto f = raw_context(t.limbs[i], i == 0);
      for (std::size_t k = 0; k < kContextDim; ++k) sq[k] += (f[k] - n.mean[k]) * (f[k] - n.mean[k]);
    }
  }
  for (std::size_t k = 0; k < kContextDim; ++k) {
    const double s = std::sqrt(sq[k] / count);
    n.std[k] = s > 1e-12 ? s : 1.0;
  }
  return n;
}

Tensor context_matrix(const MorphologyTree& tree, const ContextNormalizer& normalizer) {
  Tensor out({tree.size(), kContextDim});
  for (std::size_t i = 0; i < tree.size(); ++i) {
    const auto f = raw_context(tree.limbs[i], i == 0);
    for (std::size_t k = 0; k < kContextDim; ++k) {
      out.at(i, k) = (f[k] - normalizer.mean[k]) / normalizer.std[k];
    }
  }
  return out;
}

// ---------------------------------------------------------------- generation

MorphologyTree sample_morphology(std::uint64_t seed, std::size_t min_limbs, std::size_t max_limbs,
                                 const GenerationRules& rules) {
  if (min_limbs < 2 || max_limbs > kMaxLimbs || min_limbs > max_limbs) {
    throw MorphologyError("limb count range must lie within [2, " + std::to_string(kMaxLimbs) +
                          "]");
  }
  Rng rng(seed);
  const auto n = static_cast<std::size_t>(
      rng.uniform_int(static_cast<std::int64_t>(min_limbs), static_cast<std::int64_t>(max_limbs)));
  const auto shape = static_cast<TreeShape>(rng.uniform_int(0, 2));

  MorphologyTree tree;
  tree.limbs.resize(n);
  tree.parent.assign(n, -1);
  tree.child_order.assign(n, {});
  for (std::size_t i = 1; i < n; ++i) {
    int p = 0;
    switch (shape) {
      case TreeShape::kChain:
        p = static_cast<int>(i) - 1;
        break;
      case TreeShape::kStar:
        p = 0;
        break;
      case TreeShape::kMixed: {
        std::vector<int> candidates;
        for (std::size_t j = 0; j < i; ++j) {
          if (tree.limbs[j].depth < rules.max_depth) candidates.push_back(static_cast<int>(j));
        }
        p = candidates[rng.uniform_int(0, static_cast<std::int64_t>(candidates.size()) - 1)];
        break;
      }
    }
    tree.parent[i] = p;
    tree.child_order[p].push_back(static_cast<int>(i));
    tree.limbs[i].depth = tree.limbs[p].depth + 1;
  }

  for (std::size_t i = 0; i < n; ++i) {
    LimbContext& l = tree.limbs[i];
    if (i == 0) {
      l.length = rng.uniform(rules.root_length_lo, rules.root_length_hi);
      l.attach_offset = 0.0;
      l.rest_angle = 0.0;
      l.joint_limit_lo = -0.5;
      l.joint_limit_hi = 0.5;
      l.gear = 0.0;
    } else {
      l.length = rng.uniform(rules.length_lo, rules.length_hi);
      const bool on_root = tree.parent[i] == 0;
      l.attach_offset = on_root ? rng.uniform(0.0, 1.0) : rng.uniform(0.6, 1.0);
      // Limbs on the torso start out pointing roughly downward.
      l.rest_angle = on_root ? -std::numbers::pi / 2 + rng.uniform(-0.7, 0.7)
                             : rng.uniform(-0.8, 0.8);
      l.joint_limit_lo = rng.uniform(rules.limit_lo_min, rules.limit_lo_max);
      l.joint_limit_hi = rng.uniform(rules.limit_hi_min, rules.limit_hi_max);
      l.gear = rng.uniform(rules.gear_lo, rules.gear_hi);
    }
    l.mass = l.length * rng.uniform(rules.density_lo, rules.density_hi);
  }
  tree.id = "m" + hex64(seed).substr(8);
  validate(tree);
  return tree;
}

// ---------------------------------------------------------------- variation

std::string_view variation_name(VariationParam p) {
  switch (p) {
    case VariationParam::kLength: return "length";
    case VariationParam::kMass: return "mass";
    case VariationParam::kGear: return "gear";
    case VariationParam::kRestAngle: return "rest_angle";
    case VariationParam::kJointLimits: return "joint_limits";
    case VariationParam::kAttachOffset: return "attach_offset";
  }
  return "?";
}

VariationParam parse_variation(std::string_view name) {
  for (VariationParam p : all_variation_params()) {
    if (variation_name(p) == name) return p;
  }
  throw MorphologyError("unknown variation parameter '" + std::string(name) + "'");
}

const std::vector<VariationParam>& all_variation_params() {
  static const std::vector<VariationParam> all = {
      VariationParam::kLength,    VariationParam::kMass,        VariationParam::kGear,
      VariationParam::kRestAngle, VariationParam::kJointLimits, VariationParam::kAttachOffset};
  return all;
}

MorphologyTree perturb(const MorphologyTree& tree, const VariationSpec& spec) {
  validate(tree);
  if (spec.relative_range < 0.0 || spec.relative_range >= 1.0) {
    throw MorphologyError("relative_range must lie in [0, 1)");
  }
  Rng rng(spec.seed);
  const double r = spec.relative_range;
  auto factor = [&] { return 1.0 + r * (2.0 * rng.uniform() - 1.0); };
  constexpr double kMinJointRange = 0.05;

  MorphologyTree out = tree;
  for (auto& l : out.limbs) {
    switch (spec.param) {
      case VariationParam::kLength:
        l.length = std::max(l.length * factor(), 0.02);
        break;
      case VariationParam::kMass:
        l.mass = std::max(l.mass * factor(), 0.01);
        break;
      case VariationParam::kGear:
        l.gear = std::max(l.gear * factor(), 0.0);
        break;
      case VariationParam::kRestAngle:
        l.rest_angle *= factor();
        break;
      case VariationParam::kJointLimits: {
        double lo = l.joint_limit_lo * factor();
        double hi = l.joint_limit_hi * factor();
        if (hi - lo < kMinJointRange) {
          const double mid = 0.5 * (lo + hi);
          lo = mid - 0.5 * kMinJointRange;
          hi = mid + 0.5 * kMinJointRange;
        }
        l.joint_limit_lo = lo;
        l.joint_limit_hi = hi;
        break;
      }
      case VariationParam::kAttachOffset:
        l.attach_offset = std::clamp(l.attach_offset * factor(), 0.0, 1.0);
        break;
    }
  }
  validate(out);
  return out;
}

}  // namespace morphctl
