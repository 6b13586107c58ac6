#include <gtest/gtest.h>

#include <cmath>
#include <set>
#include <sstream>

#include "morphctl/eval/ablation.hpp"
#include "morphctl/eval/diagnostics.hpp"
#include "morphctl/eval/evaluate.hpp"
#include "morphctl/eval/plots.hpp"

namespace morphctl {
namespace {

ControllerSpec small_spec() {
  ControllerSpec s;
  s.d_model = 16;
  s.heads = 2;
  s.d_head = 8;
  s.layers = 2;
  s.ff_dim = 32;
  s.hn_hidden = 16;
  s.fa_hidden = 16;
  s.decoder_hidden = 16;
  s.critic_hidden = 16;
  return s;
}

std::vector<MorphologyTree> corpus(std::size_t count, std::uint64_t seed = 21,
                                   std::size_t lo = 3, std::size_t hi = 6) {
  std::vector<MorphologyTree> out;
  for (std::size_t i = 0; i < count; ++i) {
    out.push_back(sample_morphology(Rng::mix(seed, i), lo, hi));
    out.back().id = "r" + std::to_string(i);
  }
  return out;
}

// Builds a tree from a parent list; children expand in index order.
MorphologyTree tree_from_parents(const std::string& id, const std::vector<int>& parent) {
  MorphologyTree t;
  t.id = id;
  t.parent = parent;
  t.limbs.resize(parent.size());
  t.child_order.resize(parent.size());
  for (std::size_t i = 1; i < parent.size(); ++i) {
    t.child_order[parent[i]].push_back(static_cast<int>(i));
    t.limbs[i].depth = t.limbs[parent[i]].depth + 1;
    t.limbs[i].gear = 20.0;
  }
  validate(t);
  return t;
}

EvalSettings short_eval(std::size_t rollouts = 8) {
  EvalSettings s;
  s.rollouts = rollouts;
  s.seed = 3;
  s.env.config.horizon = 60;
  return s;
}

// ---------------------------------------------------------------- evaluate

TEST(Evaluate, UsesConfiguredRolloutsAndIsDeterministic) {
  auto trees = corpus(3);
  auto norm = ContextNormalizer::fit(trees);
  Controller c(spec_for_variant("fa+hn", small_spec()), 4);
  EvalSettings s = short_eval();
  s.rollouts = 64;
  EvalReport a = evaluate(c, norm, trees, s);
  EvalReport b = evaluate(c, norm, trees, s);
  ASSERT_EQ(a.rows.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(a.rows[i].returns.size(), 64u);
    EXPECT_EQ(a.rows[i].returns, b.rows[i].returns);
  }
  std::ostringstream ta, tb;
  write_report_table(ta, a);
  write_report_table(tb, b);
  EXPECT_EQ(ta.str(), tb.str());
  s.seed = 4;
  EXPECT_NE(evaluate(c, norm, trees, s).rows[0].returns, a.rows[0].returns);
}

TEST(Evaluate, LeavesTheControllerUntouched) {
  auto trees = corpus(2);
  auto norm = ContextNormalizer::fit(trees);
  Controller c(spec_for_variant("hn", small_spec()), 4);
  const ParamStore before = c.params();
  evaluate(c, norm, trees, short_eval());
  for (const auto& p : c.params()) EXPECT_EQ(p.value, before.get(p.name).value) << p.name;
}

TEST(Evaluate, RejectsRobotsBeyondNodeLimit) {
  auto trees = corpus(1, 5, 6, 6);
  auto norm = ContextNormalizer::fit(trees);
  ControllerSpec spec = small_spec();
  spec.max_nodes = 5;
  Controller c(spec, 1);
  EXPECT_THROW(evaluate(c, norm, trees, short_eval()), EvalError);
}

// A policy whose mean action is exactly zero reproduces the zero-torque
// baseline rollout for rollout.
TEST(Evaluate, ZeroMeanPolicyMatchesZeroActionBaseline) {
  auto trees = corpus(3, 77, 3, 8);
  auto norm = ContextNormalizer::fit(trees);
  EvalSettings s = short_eval(16);
  s.env.config.horizon = 200;
  EvalReport zero = evaluate_zero_action(trees, s);
  for (const char* variant : {"baseline", "fa+hn"}) {
    Controller c(spec_for_variant(variant, small_spec()), 1);
    for (auto& p : c.params()) {
      if (p.name.starts_with("decoder.l1.") || p.name.starts_with("hn.head.dec1.")) p.value.fill(0.0);
    }
    EvalReport e = evaluate(c, norm, trees, s);
    for (std::size_t i = 0; i < trees.size(); ++i) EXPECT_EQ(e.rows[i].returns, zero.rows[i].returns);
  }
}

// With a near-deterministic policy, the training metric and the evaluation
// estimate the same quantity.
TEST(Evaluate, AgreesWithTrainingReturnsForNearDeterministicPolicy) {
  auto trees = corpus(2);
  auto norm = ContextNormalizer::fit(trees);
  ControllerSpec spec = small_spec();
  spec.init_log_std = -12.0;
  PpoConfig cfg;
  cfg.workers = 4;
  cfg.steps_per_worker = 120;
  cfg.learning_rate = 0.0;
  EnvSettings env;
  env.config.horizon = 60;
  Trainer t(trees, norm, make_env_factory(env), spec, cfg, 8);
  std::vector<double> per_robot_sum(2, 0.0), per_robot_n(2, 0.0);
  std::vector<double> all;
  for (int i = 0; i < 3; ++i) {
    IterationMetrics m = t.iterate();
    for (std::size_t r = 0; r < 2; ++r) {
      if (m.robot_returns[r].episodes == 0) continue;
      per_robot_sum[r] += m.robot_returns[r].mean * m.robot_returns[r].episodes;
      per_robot_n[r] += m.robot_returns[r].episodes;
    }
  }
  EvalSettings s = short_eval(64);
  s.env = env;
  EvalReport e = evaluate(t.controller(), norm, trees, s);
  for (std::size_t r = 0; r < 2; ++r) {
    ASSERT_GT(per_robot_n[r], 4.0);
    const double train = per_robot_sum[r] / per_robot_n[r];
    const double se = e.rows[r].std * std::sqrt(1.0 / 64.0 + 1.0 / per_robot_n[r]);
    EXPECT_LT(std::abs(train - e.rows[r].mean), 2.0 * se + 1e-9) << trees[r].id;
  }
}

// ---------------------------------------------------------------- sweep

TEST(VariantSweep, CountsAndPreservesTopology) {
  auto trees = corpus(3);
  auto norm = ContextNormalizer::fit(trees);
  Controller c(small_spec(), 2);
  SweepOptions o;
  o.parameters = {VariationParam::kMass, VariationParam::kJointLimits};
  o.seed = 9;
  EvalSettings s = short_eval(4);
  EvalReport r = variant_sweep(c, norm, trees, o, s);
  ASSERT_EQ(r.rows.size(), 2u * 3u * 4u);
  auto variants = sweep_variants(trees, o);
  ASSERT_EQ(variants.size(), r.rows.size());
  for (std::size_t i = 0; i < variants.size(); ++i) {
    const std::size_t robot = (i / 4) % 3;
    EXPECT_EQ(topology_hash(variants[i]), topology_hash(trees[robot]));
    EXPECT_EQ(variants[i].parent, trees[robot].parent);
    EXPECT_NE(variants[i], trees[robot]);
    EXPECT_EQ(r.rows[i].robot, trees[robot].id);
    EXPECT_EQ(r.rows[i].variant, static_cast<int>(i % 4));
    EXPECT_EQ(r.rows[i].returns.size(), 4u);
  }
  EXPECT_EQ(r.rows[0].parameter, "mass");
}

TEST(VariantSweep, ZeroRangeEqualsPlainEvaluation) {
  auto trees = corpus(2);
  auto norm = ContextNormalizer::fit(trees);
  Controller c(spec_for_variant("fa", small_spec()), 2);
  SweepOptions o;
  o.parameters = {VariationParam::kGear};
  o.relative_range = 0.0;
  EvalSettings s = short_eval(4);
  EvalReport plain = evaluate(c, norm, trees, s);
  EvalReport sweep = variant_sweep(c, norm, trees, o, s);
  for (std::size_t i = 0; i < sweep.rows.size(); ++i) {
    EXPECT_EQ(sweep.rows[i].returns, plain.rows[i / 4].returns);
  }
  EXPECT_EQ(sweep.mean, plain.mean);
}

TEST(VariantSweep, EmptyParameterListGivesEmptyReport) {
  auto trees = corpus(2);
  Controller c(small_spec(), 2);
  EvalReport r = variant_sweep(c, ContextNormalizer::fit(trees), trees, {}, short_eval());
  EXPECT_TRUE(r.rows.empty());
  std::ostringstream out;
  write_report_table(out, r);
  EXPECT_EQ(out.str(), "environment\trobot\tparameter\tvariant\tseed\trollouts\tmean\tstd\n");
}

// ---------------------------------------------------------------- correlation

TEST(Correlation, IdenticalSeriesCorrelatePerfectly) {
  Rng rng(1);
  std::vector<double> a(500), b(500);
  for (std::size_t t = 0; t < 500; ++t) {
    a[t] = rng.normal();
    b[t] = rng.normal();
  }
  std::vector<double> neg(a);
  for (double& x : neg) x = -x;
  CorrelationMatrix m = pearson_matrix({a, a, b, neg});
  EXPECT_DOUBLE_EQ(m.at(0, 1), 1.0);
  EXPECT_DOUBLE_EQ(m.at(0, 3), -1.0);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(m.at(i, i), 1.0);
    for (std::size_t j = 0; j < 4; ++j) {
      EXPECT_EQ(m.at(i, j), m.at(j, i));
      EXPECT_LE(std::abs(m.at(i, j)), 1.0);
    }
  }
}

TEST(Correlation, IndependentNoiseIsNearZero) {
  Rng rng(2);
  std::vector<std::vector<double>> s(6, std::vector<double>(10000));
  for (auto& v : s)
    for (double& x : v) x = rng.uniform(-1.0, 1.0);
  CorrelationMatrix m = pearson_matrix(s);
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t j = i + 1; j < 6; ++j) EXPECT_LT(std::abs(m.at(i, j)), 0.05);
  EXPECT_LT(m.mean_abs_offdiag, 0.05);
  EXPECT_GE(m.mean_abs_offdiag, 0.0);
}

TEST(Correlation, ConstantSeriesIsUndefinedAndExcluded) {
  std::vector<double> a = {1, 2, 3, 4}, b = {2, 4, 6, 9}, c = {0.3, 0.3, 0.3, 0.3};
  CorrelationMatrix m = pearson_matrix({a, b, c});
  EXPECT_FALSE(m.defined(2, 2));
  EXPECT_FALSE(m.defined(0, 2));
  EXPECT_TRUE(m.defined(0, 1));
  EXPECT_DOUBLE_EQ(m.mean_abs_offdiag, std::abs(m.at(0, 1)));
  CorrelationMatrix all_constant = pearson_matrix({c, c});
  EXPECT_TRUE(std::isnan(all_constant.mean_abs_offdiag));
}

TEST(Correlation, PolicyActionsGiveSymmetricMatrix) {
  auto trees = corpus(1, 31, 5, 5);
  auto norm = ContextNormalizer::fit(trees);
  Controller c(small_spec(), 3);
  EnvSettings env;
  env.config.horizon = 80;
  CorrelationMatrix m = action_correlation(c, norm, trees[0], env, 2, 5);
  EXPECT_EQ(m.dim, 4u);
  EXPECT_EQ(m.samples, 160u);
  for (std::size_t i = 0; i < m.dim; ++i) {
    if (m.defined(i, i)) {
      EXPECT_EQ(m.at(i, i), 1.0);
    }
    for (std::size_t j = 0; j < m.dim; ++j) {
      if (m.defined(i, j)) {
        EXPECT_EQ(m.at(i, j), m.at(j, i));
      }
    }
  }
  EXPECT_GE(m.mean_abs_offdiag, 0.0);
  EXPECT_LE(m.mean_abs_offdiag, 1.0);
  CorrelationMatrix again = action_correlation(c, norm, trees[0], env, 2, 5);
  EXPECT_EQ(m.values.size(), again.values.size());
  for (std::size_t k = 0; k < m.values.size(); ++k) {
    EXPECT_TRUE(m.values[k] == again.values[k] || (std::isnan(m.values[k]) && std::isnan(again.values[k])));
  }
}

// ---------------------------------------------------------------- PE

TEST(PeDiagnostic, ChainHasNoChurn) {
  auto chain = tree_from_parents("chain", {-1, 0, 1, 2, 3});
  PeReport r = pe_diagnostic({chain}, ContextNormalizer::fit({chain}));
  EXPECT_EQ(r.trees[0].changed, 0u);
  EXPECT_EQ(r.churn_fraction, 0.0);
}

// Root with two branches: expanding the other branch first moves every
// non-root limb.
TEST(PeDiagnostic, ReorderedBranchesMoveEveryLimb) {
  for (const auto& parents : std::vector<std::vector<int>>{{-1, 0, 1, 0, 3}, {-1, 0, 0, 2}, {-1, 0, 1, 0, 3, 4}}) {
    auto t = tree_from_parents("fork", parents);
    PeReport r = pe_diagnostic({t}, ContextNormalizer::fit({t}));
    EXPECT_EQ(r.trees[0].changed, t.size() - 1);
    EXPECT_EQ(r.churn_fraction, 1.0);
  }
}

TEST(PeDiagnostic, DifferentTreesCollide) {
  auto a = tree_from_parents("a", {-1, 0, 1});
  auto b = tree_from_parents("b", {-1, 0, 0});
  auto norm = ContextNormalizer::fit({a, b});
  PeReport r = pe_diagnostic({a, b}, norm);
  // Index 2 holds a depth-2 limb in a and a depth-1 limb in b.
  ASSERT_FALSE(r.collisions.empty());
  bool found = false;
  for (const PeCollision& c : r.collisions) found |= c.index == 2;
  EXPECT_TRUE(found);
  PeReport same = pe_diagnostic({a, a}, norm);
  EXPECT_TRUE(same.collisions.empty());
  std::ostringstream out;
  write_pe_table(out, r);
  EXPECT_NE(out.str().find("# collisions\t"), std::string::npos);
}

TEST(PeDiagnostic, SampledCorpusShowsChurnOnlyOnBranchingTrees) {
  auto trees = corpus(20, 4, 3, 8);
  PeReport r = pe_diagnostic(trees, ContextNormalizer::fit(trees));
  for (std::size_t i = 0; i < trees.size(); ++i) {
    bool branching = false;
    for (const auto& c : trees[i].child_order) branching |= c.size() > 1;
    if (!branching) {
      EXPECT_EQ(r.trees[i].changed, 0u) << trees[i].id;
    }
  }
  EXPECT_GT(r.churn_fraction, 0.0);
}

// ---------------------------------------------------------------- ratio drift

TEST(RatioDrift, FirstMinibatchDependsOnDropoutConsistency) {
  auto trees = corpus(3);
  auto norm = ContextNormalizer::fit(trees);
  ControllerSpec spec = small_spec();
  spec.dropout = 0.1;
  PpoConfig cfg;
  cfg.workers = 2;
  cfg.steps_per_worker = 32;
  EnvSettings env;
  env.config.horizon = 50;
  auto off = ratio_drift_diagnostic(trees, norm, env, spec, cfg, DropoutMode::kOff, 2, 1);
  auto con = ratio_drift_diagnostic(trees, norm, env, spec, cfg, DropoutMode::kConsistent, 2, 1);
  auto inc = ratio_drift_diagnostic(trees, norm, env, spec, cfg, DropoutMode::kInconsistent, 2, 1);
  for (std::size_t it = 0; it < 2; ++it) {
    EXPECT_EQ(mass_at_one(off.first_minibatch[it]), 1.0);
    EXPECT_EQ(mass_at_one(con.first_minibatch[it]), 1.0);
    EXPECT_EQ(off.first_minibatch[it], con.first_minibatch[it]);
    EXPECT_LT(mass_at_one(inc.first_minibatch[it]), 1.0);
    EXPECT_LT(mass_at_one(inc.epochs[it][0]), 1.0);
    EXPECT_EQ(off.epochs[it].size(), cfg.epochs);
  }
  spec.dropout = 0.0;
  EXPECT_THROW(ratio_drift_diagnostic(trees, norm, env, spec, cfg, DropoutMode::kConsistent, 1, 1),
               std::invalid_argument);
  std::ostringstream out;
  write_ratio_table(out, inc);
  EXPECT_NE(out.str().find("inconsistent\t0\tfirst_minibatch"), std::string::npos);
}

// ---------------------------------------------------------------- ablation

TEST(Ablation, SingleVariantReducesToOneTrainingRun) {
  auto trees = corpus(2);
  auto norm = ContextNormalizer::fit(trees);
  PpoConfig cfg;
  cfg.workers = 2;
  cfg.steps_per_worker = 16;
  AblationConfig a;
  a.variants = {"fa+hn"};
  a.seeds = {5};
  a.steps = 64;
  a.eval = short_eval(4);
  AblationResult r = ablation_suite(trees, norm, small_spec(), cfg, a);
  ASSERT_EQ(r.runs.size(), 1u);
  ASSERT_EQ(r.summary.size(), 1u);

  Trainer t(trees, norm, make_env_factory(a.eval.env), spec_for_variant("fa+hn", small_spec()), cfg, 5);
  t.run(64);
  EXPECT_EQ(r.runs[0].final_return, evaluate(t.controller(), norm, trees, a.eval).mean);
  EXPECT_EQ(r.runs[0].env_steps, t.env_steps());
  EXPECT_EQ(r.summary[0].mean, r.runs[0].final_return);
  EXPECT_EQ(r.zero_action, evaluate_zero_action(trees, a.eval).mean);
}

TEST(Ablation, RowsCollapseToVariantAggregates) {
  auto trees = corpus(2);
  auto norm = ContextNormalizer::fit(trees);
  PpoConfig cfg;
  cfg.workers = 2;
  cfg.steps_per_worker = 8;
  cfg.minibatches = 2;
  AblationConfig a;
  a.variants = {"baseline", "per-node-embedding", "mlp-sr"};
  a.seeds = {1, 2};
  a.steps = 16;
  a.single_robot = true;
  a.eval = short_eval(2);
  std::size_t iterations = 0;
  AblationHooks hooks;
  hooks.on_iteration = [&](const AblationRun&, const IterationMetrics&, const Trainer&) { ++iterations; };
  AblationResult r = ablation_suite(trees, norm, small_spec(), cfg, a, hooks);
  EXPECT_EQ(r.runs.size(), 3u * 2u * 2u);
  ASSERT_EQ(r.summary.size(), 3u);
  for (const auto& s : r.summary) EXPECT_EQ(s.runs, 4u);
  EXPECT_EQ(iterations, 12u);

  // A lookup hook replays stored results instead of training.
  hooks.lookup = [&](const AblationRun& key) -> std::optional<AblationRun> {
    for (const auto& run : r.runs)
      if (run.variant == key.variant && run.seed == key.seed && run.robot == key.robot) return run;
    return std::nullopt;
  };
  iterations = 0;
  AblationResult again = ablation_suite(trees, norm, small_spec(), cfg, a, hooks);
  EXPECT_EQ(iterations, 0u);
  std::ostringstream x, y;
  write_ablation_summary(x, r);
  write_ablation_summary(y, again);
  EXPECT_EQ(x.str(), y.str());

  a.single_robot = false;
  EXPECT_THROW(ablation_suite(trees, norm, small_spec(), cfg, a), std::invalid_argument);
}

// ---------------------------------------------------------------- plots

TEST(Plots, RenderDeterministicSvg) {
  Series s{"a", {0, 1, 2, 3}, {1.0, std::nan(""), 2.0, 0.5}};
  const std::string line = svg_line_plot("t<1>", "x", "y", {s});
  EXPECT_EQ(line.rfind("<svg", 0), 0u);
  EXPECT_NE(line.find("</svg>"), std::string::npos);
  EXPECT_NE(line.find("t&lt;1&gt;"), std::string::npos);
  EXPECT_EQ(line, svg_line_plot("t<1>", "x", "y", {s}));
  const std::string h = svg_histogram_panels("h", {"e0", "e1"}, {{1, 2, 3}, {0, 5, 0}}, 0, 2);
  EXPECT_NE(h.find("n=5"), std::string::npos);
  CorrelationMatrix m = pearson_matrix({{1, 2, 3}, {3, 2, 1}, {1, 1, 1}});
  EXPECT_NE(svg_heatmap("c", m).find("#bbbbbb"), std::string::npos);
  EXPECT_NE(svg_bar_chart("b", {"x", "y"}, {1.0, -0.5}, {0.1, 0.2}).find("</svg>"), std::string::npos);
}

}  // namespace
}  // namespace morphctl
