#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "morphctl/envsim/env.hpp"
#include "morphctl/numerics/rng.hpp"

namespace morphctl {
namespace {

std::vector<double> random_action(Rng& rng, std::size_t n) {
  std::vector<double> a(n);
  for (double& v : a) v = rng.uniform(-1.0, 1.0);
  return a;
}

SimState mirror_state(const SimState& s) {
  SimState m = s;
  for (std::size_t k = 0; k < s.q.size(); ++k) {
    if (k == 1) continue;
    m.q[k] = -s.q[k];
    m.qd[k] = -s.qd[k];
  }
  return m;
}

TEST(Terrain, FlatIsZero) {
  const Terrain t = Terrain::flat();
  for (double x : {-100.0, -1.0, 0.0, 0.3, 55.0}) EXPECT_EQ(t.height(x), 0.0);
}

TEST(Terrain, VariableIsSeededAndContinuous) {
  const Terrain a = Terrain::variable(4), b = Terrain::variable(4), c = Terrain::variable(5);
  EXPECT_EQ(a.xs(), b.xs());
  EXPECT_EQ(a.hs(), b.hs());
  EXPECT_NE(a.hs(), c.hs());
  // Steepest designed slope is 0.15 / 0.05 = 3.
  for (double x = -3.0; x < 62.0; x += 0.001) {
    ASSERT_LE(std::abs(a.height(x + 1e-4) - a.height(x)), 3.0 * 1e-4 + 1e-12) << x;
  }
  EXPECT_EQ(a.height(0.0), 0.0);
  bool hill = false;
  for (double h : a.hs()) hill = hill || h != 0.0;
  EXPECT_TRUE(hill);
}

TEST(Terrain, StepProfileTakesRightValue) {
  const Terrain t = Terrain::from_profile({-10.0, 0.5, 0.5, 10.0}, {0.0, 0.0, 0.2, 0.2});
  EXPECT_EQ(t.height(0.4999), 0.0);
  EXPECT_EQ(t.height(0.5), 0.2);
  EXPECT_EQ(t.height(20.0), 0.2);
  EXPECT_EQ(t.height(-20.0), 0.0);
  EXPECT_THROW(Terrain::from_profile({1.0, 0.0}, {0.0, 0.0}), std::invalid_argument);
}

TEST(EnvReset, Deterministic) {
  const MorphologyTree t = sample_morphology(3, 3, 8);
  Env a(t, Terrain::flat()), b(t, Terrain::flat());
  const StepResult ra = a.reset(11), rb = b.reset(11);
  EXPECT_EQ(ra.obs, rb.obs);
  EXPECT_EQ(ra.ext, rb.ext);
  EXPECT_EQ(a.state(), b.state());
}

TEST(EnvReset, SeedsDifferWithinLimits) {
  const MorphologyTree t = sample_morphology(4, 4, 8);
  Env env(t, Terrain::flat());
  const Tensor first = env.reset(1).obs;
  for (std::uint64_t seed = 2; seed < 40; ++seed) {
    const StepResult r = env.reset(seed);
    EXPECT_NE(r.obs, first);
    for (std::size_t i = 1; i < t.size(); ++i) {
      const double th = env.state().q[2 + i];
      EXPECT_GE(th, t.limbs[i].joint_limit_lo);
      EXPECT_LE(th, t.limbs[i].joint_limit_hi);
      EXPECT_LE(std::abs(th), 0.05);
    }
  }
}

TEST(EnvReset, ObservationShape) {
  for (std::size_t n : {2u, 6u, 12u}) {
    Env env(sample_morphology(n, n, n), Terrain::flat());
    const StepResult r = env.reset(0);
    EXPECT_EQ(r.obs.shape(), (std::vector<std::size_t>{n, kObsDim}));
    EXPECT_EQ(r.ext.shape(), (std::vector<std::size_t>{kHeightMapDim}));
    EXPECT_TRUE(r.obs.all_finite());
  }
}

TEST(HeightMap, FlatReadsMinusRootHeight) {
  Env env(sample_morphology(5, 3, 8), Terrain::flat());
  env.reset(2);
  Rng rng(1);
  for (int k = 0; k < 30; ++k) {
    const StepResult r = env.step(random_action(rng, env.num_limbs()));
    for (std::size_t j = 0; j < kHeightMapDim; ++j) EXPECT_EQ(r.ext[j], -env.state().root_y());
  }
}

TEST(HeightMap, StepObstacle) {
  const Terrain step = Terrain::from_profile({-10.0, 0.5, 0.5, 10.0}, {0.0, 0.0, 0.2, 0.2});
  Env env(sample_morphology(5, 3, 8), step);
  env.reset(0);
  SimState s = env.state();
  s.q[0] = 0.13;
  env.set_state(s);
  const Tensor h = env.height_map();
  for (std::size_t j = 0; j < kHeightMapDim; ++j) {
    const double offset = kHeightMapSpacing * static_cast<double>(j + 1);
    const double expected = (offset >= 0.5 - 0.13 ? 0.2 : 0.0) - s.q[1];
    EXPECT_EQ(h[j], expected) << "offset " << offset;
  }
}

TEST(HeightMap, TranslationInvariance) {
  const MorphologyTree tree = sample_morphology(6, 3, 8);
  const Terrain base =
      Terrain::from_profile({-4.0, 0.5, 0.75, 1.25, 1.5, 8.0}, {0.0, 0.0, 0.25, 0.25, 0.125, 0.5});
  Env a(tree, base), b(tree, base.translated(4.0));
  a.reset(0);
  b.reset(0);
  SimState s = a.state();
  s.q[0] = 0.25;
  s.q[1] = 0.5;
  a.set_state(s);
  s.q[0] += 4.0;
  b.set_state(s);
  EXPECT_LE(max_abs_diff(a.height_map(), b.height_map()), 1e-12);

  const Terrain rough = Terrain::variable(9);
  Env c(tree, rough), d(tree, rough.translated(3.3));
  c.reset(0);
  d.reset(0);
  s = c.state();
  s.q[0] = 7.1;
  c.set_state(s);
  s.q[0] += 3.3;
  d.set_state(s);
  EXPECT_LE(max_abs_diff(c.height_map(), d.height_map()), 1e-12);
}

TEST(EnvStep, ZeroActionSettling) {
  // Regression bound measured on this simulator: settling under gravity moves
  // the torso by at most ~2.4 cm per control step on sampled robots.
  constexpr double kSettlingBound = 0.05;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const MorphologyTree t = sample_morphology(seed, 3, 8);
    Env env(t, Terrain::flat());
    env.reset(seed);
    const std::vector<double> zero(t.size(), 0.0);
    int steps = 0;
    double worst = 0.0;
    while (!env.done() && steps < 100) {
      worst = std::max(worst, std::abs(env.step(zero).reward));
      ++steps;
    }
    EXPECT_GE(steps, 10) << t.id;
    EXPECT_LE(worst, kSettlingBound) << t.id;
  }
}

TEST(EnvStep, EnergyDriftWithoutContactOrDamping) {
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    MorphologyTree t = sample_morphology(seed, 3, 8);
    for (auto& l : t.limbs) {
      l.joint_limit_lo = -50.0;
      l.joint_limit_hi = 50.0;
    }
    EnvConfig c;
    c.physics.contact = false;
    c.physics.joint_damping = 0.0;
    c.physics.substeps = 1;
    c.physics.max_joint_speed = 1e9;
    c.physics.max_root_speed = 1e9;
    c.horizon = 1000;
    Env env(t, Terrain::flat(), c);
    env.reset(seed);
    SimState s = env.state();
    s.q[1] = 10.0;
    for (std::size_t k = 0; k < s.qd.size(); ++k) s.qd[k] = 2.0 * std::sin(3.0 * k + 1.0);
    env.set_state(s);
    const double e0 = env.kinetic_energy() + env.potential_energy();
    const std::vector<double> zero(t.size(), 0.0);
    double worst = 0.0;
    for (int k = 0; k < 1000; ++k) {
      env.step(zero);
      const double e = env.kinetic_energy() + env.potential_energy();
      worst = std::max(worst, std::abs(e - e0) / std::abs(e0));
    }
    EXPECT_LT(worst, 0.01) << t.id;
  }
}

TEST(EnvStep, EnergyDriftWithoutGravity) {
  MorphologyTree t = sample_morphology(21, 6, 8);
  for (auto& l : t.limbs) {
    l.joint_limit_lo = -50.0;
    l.joint_limit_hi = 50.0;
  }
  EnvConfig c;
  c.physics.contact = false;
  c.physics.gravity = 0.0;
  c.physics.joint_damping = 0.0;
  c.physics.substeps = 1;
  c.physics.max_joint_speed = 1e9;
  c.physics.max_root_speed = 1e9;
  c.horizon = 1000;
  Env env(t, Terrain::flat(), c);
  env.reset(0);
  SimState s = env.state();
  s.q[1] = 10.0;
  for (std::size_t k = 0; k < s.qd.size(); ++k) s.qd[k] = 3.0 * std::cos(2.0 * k);
  env.set_state(s);
  const double e0 = env.kinetic_energy();
  const std::vector<double> zero(t.size(), 0.0);
  for (int k = 0; k < 1000; ++k) env.step(zero);
  EXPECT_LT(std::abs(env.kinetic_energy() - e0) / e0, 0.01);
}

TEST(EnvStep, MirrorSymmetry) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const MorphologyTree t = sample_morphology(seed + 100, 3, 8);
    Env a(t, Terrain::flat()), b(mirrored(t), Terrain::flat());
    a.reset(seed);
    b.reset(seed);
    b.set_state(mirror_state(a.state()));
    Rng rng(seed);
    while (!a.done()) {
      std::vector<double> act = random_action(rng, t.size());
      std::vector<double> neg(act.size());
      std::transform(act.begin(), act.end(), neg.begin(), [](double v) { return -v; });
      const StepResult ra = a.step(act);
      const StepResult rb = b.step(neg);
      const SimState expect = mirror_state(a.state());
      for (std::size_t j = 0; j < expect.q.size(); ++j) {
        ASSERT_NEAR(b.state().q[j], expect.q[j], 1e-9) << t.id << " step " << a.state().step << " q" << j;
        ASSERT_NEAR(b.state().qd[j], expect.qd[j], 1e-9) << t.id << " step " << a.state().step << " qd" << j;
      }
      ASSERT_EQ(ra.done, rb.done);
    }
  }
}

TEST(EnvStep, JointLimitsHoldUnderRandomTorques) {
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    const MorphologyTree t = sample_morphology(seed + 40, 3, 8);
    Env env(t, Terrain::variable(seed));
    env.reset(seed);
    Rng rng(seed);
    while (!env.done()) {
      env.step(random_action(rng, t.size()));
      for (std::size_t i = 1; i < t.size(); ++i) {
        const double th = env.state().q[2 + i];
        ASSERT_GE(th, t.limbs[i].joint_limit_lo);
        ASSERT_LE(th, t.limbs[i].joint_limit_hi);
      }
      for (double v : env.state().qd) ASSERT_TRUE(std::isfinite(v));
    }
  }
}

TEST(EnvStep, FullDeterminism) {
  const MorphologyTree t = sample_morphology(77, 3, 8);
  auto run = [&] {
    Env env(t, Terrain::variable(3));
    env.reset(5);
    Rng rng(8);
    std::vector<SimState> states;
    while (!env.done()) {
      env.step(random_action(rng, t.size()));
      states.push_back(env.state());
    }
    return states;
  };
  EXPECT_EQ(run(), run());
}

TEST(EnvStep, ReturnBounded) {
  const EnvConfig cfg;
  const double control_dt = cfg.physics.dt * cfg.physics.substeps;
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    const MorphologyTree t = sample_morphology(seed + 7, 3, 8);
    Env env(t, Terrain::flat(), cfg);
    env.reset(seed);
    Rng rng(seed);
    double ret = 0.0;
    while (!env.done()) ret += env.step(random_action(rng, t.size())).reward;
    const double bound = cfg.horizon * (cfg.physics.max_root_speed * control_dt +
                                        cfg.action_penalty * static_cast<double>(t.size() - 1));
    EXPECT_TRUE(std::isfinite(ret));
    EXPECT_LE(std::abs(ret), bound);
  }
}

TEST(EnvStep, ActionPenalty) {
  const MorphologyTree t = sample_morphology(12, 3, 8);
  EnvConfig no_gravity;
  no_gravity.physics.gravity = 0.0;
  no_gravity.physics.contact = false;
  Env env(t, Terrain::flat(), no_gravity);
  env.reset(0);
  SimState s = env.state();
  s.q[1] = 5.0;
  env.set_state(s);
  // Out-of-range actions are clamped before both torque and penalty.
  std::vector<double> a(t.size(), 3.0);
  a[0] = 100.0;  // root entry is ignored
  const double x0 = env.state().root_x();
  const StepResult r = env.step(a);
  EXPECT_DOUBLE_EQ(r.reward, env.state().root_x() - x0 - 1e-3 * static_cast<double>(t.size() - 1));
}

TEST(EnvStep, RejectsFinishedEpisodeAndBadAction) {
  const MorphologyTree t = sample_morphology(13, 3, 8);
  EnvConfig cfg;
  cfg.horizon = 3;
  Env env(t, Terrain::flat(), cfg);
  EXPECT_THROW(env.step(std::vector<double>(t.size(), 0.0)), EnvError);
  env.reset(0);
  EXPECT_THROW(env.step(std::vector<double>(t.size() + 1, 0.0)), EnvError);
  for (int k = 0; k < 3; ++k) env.step(std::vector<double>(t.size(), 0.0));
  EXPECT_TRUE(env.done());
  EXPECT_THROW(env.step(std::vector<double>(t.size(), 0.0)), EnvError);
}

TEST(EnvStep, FallingBelowTerrainEndsEpisode) {
  const MorphologyTree t = sample_morphology(14, 3, 8);
  Env env(t, Terrain::flat());
  env.reset(0);
  SimState s = env.state();
  s.q[1] = -0.5;
  env.set_state(s);
  EXPECT_TRUE(env.step(std::vector<double>(t.size(), 0.0)).done);
}

TEST(Observation, RowsPermuteWithLimbLabels) {
  const MorphologyTree t = sample_morphology(31, 6, 8);
  std::vector<int> perm(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) perm[i] = static_cast<int>(i);
  std::reverse(perm.begin() + 1, perm.end());
  const MorphologyTree r = relabeled(t, perm);
  EnvConfig cfg;
  cfg.init_noise = 0.0;
  Env a(t, Terrain::flat(), cfg), b(r, Terrain::flat(), cfg);
  StepResult oa = a.reset(0), ob = b.reset(0);
  Rng rng(4);
  for (int step = 0; step < 20; ++step) {
    for (std::size_t i = 0; i < t.size(); ++i) {
      for (std::size_t k = 0; k < kObsDim; ++k) {
        ASSERT_NEAR(oa.obs.at(i, k), ob.obs.at(perm[i], k), 1e-8) << "limb " << i << " col " << k;
      }
    }
    const std::vector<double> act = random_action(rng, t.size());
    std::vector<double> permuted(act.size());
    for (std::size_t i = 0; i < act.size(); ++i) permuted[perm[i]] = act[i];
    oa = a.step(act);
    ob = b.step(permuted);
  }
}

TEST(Observation, RowDependsOnItsLimbAndRoot) {
  const MorphologyTree t = sample_morphology(32, 5, 8);
  Env env(t, Terrain::flat());
  env.reset(3);
  const Tensor before = env.observe().obs;
  // Moving only the last leaf's joint changes only that leaf's row.
  std::size_t leaf = 0;
  for (std::size_t i = 1; i < t.size(); ++i) {
    if (t.child_order[i].empty()) leaf = i;
  }
  SimState s = env.state();
  s.q[2 + leaf] = 0.5 * (t.limbs[leaf].joint_limit_lo + t.limbs[leaf].joint_limit_hi) + 0.01;
  s.q[1] += 1.0;  // lift so contact flags stay off
  SimState lifted = env.state();
  lifted.q[1] += 1.0;
  const Tensor base = env.set_state(lifted).obs;
  const Tensor moved = env.set_state(s).obs;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (i == leaf) continue;
    for (std::size_t k = 0; k < kObsDim; ++k) EXPECT_EQ(base.at(i, k), moved.at(i, k));
  }
  EXPECT_NE(before.rows(), 0u);
}

TEST(Trajectory, WriterEmitsHeaderAndRows) {
  const MorphologyTree t = sample_morphology(15, 4, 4);
  Env env(t, Terrain::flat());
  env.reset(0);
  std::ostringstream out;
  TrajectoryWriter w(out, t.size());
  for (int k = 0; k < 5; ++k) {
    const StepResult r = env.step(std::vector<double>(t.size(), 0.2));
    w.write(env.state(), r.reward);
  }
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line,
            "step\troot_x\troot_y\tpitch\ttheta_1\ttheta_2\ttheta_3\ttheta_dot_1\ttheta_dot_2\t"
            "theta_dot_3\treward");
  int rows = 0;
  while (std::getline(in, line)) {
    ++rows;
    EXPECT_EQ(std::count(line.begin(), line.end(), '\t'), 10);
    EXPECT_EQ(line.substr(0, line.find('\t')), std::to_string(rows));
  }
  EXPECT_EQ(rows, 5);
}

}  // namespace
}  // namespace morphctl
