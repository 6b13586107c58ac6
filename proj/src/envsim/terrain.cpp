#include "morphctl/envsim/terrain.hpp"

#include <algorithm>
#include <stdexcept>

#include "morphctl/numerics/rng.hpp"

namespace morphctl {

std::string_view terrain_kind_name(TerrainKind kind) {
  return kind == TerrainKind::kFlat ? "flat" : "variable";
}

TerrainKind parse_terrain_kind(std::string_view name) {
  if (name == "flat") return TerrainKind::kFlat;
  if (name == "variable") return TerrainKind::kVariable;
  throw std::invalid_argument("unknown terrain kind '" + std::string(name) + "'");
}

Terrain Terrain::flat() { return Terrain{}; }

Terrain Terrain::from_profile(std::vector<double> xs, std::vector<double> hs) {
  if (xs.empty() || xs.size() != hs.size()) {
    throw std::invalid_argument("terrain profile needs matching, non-empty x and h lists");
  }
  for (std::size_t i = 1; i < xs.size(); ++i) {
    if (xs[i] < xs[i - 1]) throw std::invalid_argument("terrain profile x must be non-decreasing");
  }
  Terrain t;
  t.kind_ = TerrainKind::kVariable;
  t.xs_ = std::move(xs);
  t.hs_ = std::move(hs);
  return t;
}

Terrain Terrain::variable(std::uint64_t seed, double length) {
  Rng rng(seed);
  std::vector<double> xs{-5.0, 2.0};
  std::vector<double> hs{0.0, 0.0};
  double x = 2.0, h = 0.0;
  auto knot = [&](double dx, double dh) {
    x += dx;
    h += dh;
    xs.push_back(x);
    hs.push_back(h);
  };
  while (x < length) {
    switch (rng.uniform_int(0, 2)) {
      case 0:
        knot(rng.uniform(0.5, 2.0), 0.0);
        break;
      case 1: {
        double rise = rng.uniform(-0.25, 0.25);
        rise = std::clamp(h + rise, -0.5, 1.0) - h;
        knot(rng.uniform(1.0, 2.0), rise);
        break;
      }
      default: {
        const double height = rng.uniform(0.05, 0.15);
        knot(0.05, height);
        knot(rng.uniform(0.1, 0.3), 0.0);
        knot(0.05, -height);
        break;
      }
    }
    knot(rng.uniform(0.5, 1.5), 0.0);
  }
  Terrain t;
  t.kind_ = TerrainKind::kVariable;
  t.seed_ = seed;
  t.xs_ = std::move(xs);
  t.hs_ = std::move(hs);
  return t;
}

double Terrain::height(double x) const {
  if (x < xs_.front()) return hs_.front();
  if (x >= xs_.back()) return hs_.back();
  const std::size_t k = std::upper_bound(xs_.begin(), xs_.end(), x) - xs_.begin() - 1;
  const double t = (x - xs_[k]) / (xs_[k + 1] - xs_[k]);
  return hs_[k] + (hs_[k + 1] - hs_[k]) * t;
}

Terrain Terrain::translated(double dx) const {
  Terrain t = *this;
  for (double& x : t.xs_) x += dx;
  return t;
}

}  // namespace morphctl
