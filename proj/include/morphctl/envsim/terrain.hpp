#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace morphctl {

enum class TerrainKind { kFlat, kVariable };

std::string_view terrain_kind_name(TerrainKind kind);
TerrainKind parse_terrain_kind(std::string_view name);

// Piecewise-linear height profile h(x). Outside the sampled range the end
// heights extend flat. Two consecutive knots may share an x to form a step;
// the height at that x is the right-hand value.
class Terrain {
 public:
  static Terrain flat();
  // Flat run-up, then random flat / ramp / hurdle segments, each followed by
  // a flat stretch.
  static Terrain variable(std::uint64_t seed, double length = 60.0);
  static Terrain from_profile(std::vector<double> xs, std::vector<double> hs);

  TerrainKind kind() const { return kind_; }
  std::uint64_t seed() const { return seed_; }
  const std::vector<double>& xs() const { return xs_; }
  const std::vector<double>& hs() const { return hs_; }

  double height(double x) const;
  // The profile shifted right by dx.
  Terrain translated(double dx) const;

 private:
  TerrainKind kind_ = TerrainKind::kFlat;
  std::uint64_t seed_ = 0;
  std::vector<double> xs_{0.0};
  std::vector<double> hs_{0.0};
};

}  // namespace morphctl
