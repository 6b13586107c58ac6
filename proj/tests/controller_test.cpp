#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <memory>
#include <numeric>
#include <set>

#include "morphctl/controller/checkpoint.hpp"
#include "morphctl/controller/controller.hpp"
#include "test_support.hpp"

namespace morphctl {
namespace {

Tensor random_matrix(Rng& rng, std::size_t rows, std::size_t cols, double scale = 1.0) {
  Tensor t({rows, cols});
  for (double& v : t.values()) v = rng.uniform(-scale, scale);
  return t;
}

struct Fleet {
  std::vector<MorphologyTree> trees;
  ContextNormalizer normalizer;
  std::vector<std::unique_ptr<RobotInfo>> robots;

  explicit Fleet(std::size_t count, std::uint64_t seed = 11, std::size_t lo = 3,
                 std::size_t hi = 8) {
    for (std::size_t i = 0; i < count; ++i) {
      trees.push_back(sample_morphology(Rng::mix(seed, i), lo, hi));
      trees.back().id = "r" + std::to_string(i);
    }
    normalizer = ContextNormalizer::fit(trees);
    for (const auto& t : trees) robots.push_back(std::make_unique<RobotInfo>(make_robot_info(t, normalizer)));
  }
};

NodeBatch random_batch(const ControllerSpec& spec, const std::vector<const RobotInfo*>& robots,
                       Rng& rng, std::size_t pad_to = 0) {
  BatchBuilder b(spec);
  for (const RobotInfo* r : robots) {
    Tensor obs = random_matrix(rng, r->n, spec.obs_dim);
    Tensor ext = random_matrix(rng, 1, std::max<std::size_t>(spec.ext_dim, 1)).reshaped(
        {std::max<std::size_t>(spec.ext_dim, 1)});
    b.add(*r, obs, spec.ext_dim > 0 ? &ext : nullptr);
  }
  return b.build(pad_to);
}

struct Outputs {
  Tensor mu, value;
  std::vector<Tensor> attention;
};

Outputs run(Controller& c, const NodeBatch& batch, const ForwardOptions& options = {}) {
  Tape tape(false);
  ForwardOptions o = options;
  o.keep_attention = true;
  PolicyVars v = c.forward(tape, batch, o);
  Outputs out{v.mu.value(), v.value.value(), {}};
  for (Var a : v.attention) out.attention.push_back(a.value());
  return out;
}

// Real-node rows of mu for group g.
Tensor group_mu(const Tensor& mu, const NodeBatch& batch, std::size_t g) {
  const std::size_t n = batch.robots[g]->n, a = mu.cols();
  Tensor t({n, a});
  for (std::size_t i = 0; i < n; ++i) std::copy(mu.row(g * batch.n + i), mu.row(g * batch.n + i) + a, t.row(i));
  return t;
}

ControllerSpec small_spec(bool ext = true) {
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
  s.ext_dim = ext ? kHeightMapDim : 0;
  s.ext_hidden = 8;
  s.ext_out = 4;
  return s;
}

ControllerSpec tiny_spec() {
  ControllerSpec s;
  s.d_model = 8;
  s.heads = 2;
  s.d_head = 4;
  s.layers = 1;
  s.ff_dim = 8;
  s.hn_hidden = 6;
  s.hn_layers = 2;
  s.fa_hidden = 6;
  s.fa_layers = 3;
  s.decoder_hidden = 6;
  s.critic_hidden = 6;
  s.ext_dim = 4;
  s.ext_hidden = 5;
  s.ext_out = 3;
  s.mlp_hidden = {7, 7};
  return s;
}

std::vector<const RobotInfo*> all(const Fleet& f) {
  std::vector<const RobotInfo*> out;
  for (const auto& r : f.robots) out.push_back(r.get());
  return out;
}

// ---------------------------------------------------------------- spec

TEST(ControllerSpec, RejectsInconsistentSettings) {
  ControllerSpec s;
  s.heads = 3;
  EXPECT_THROW(s.validate(), std::invalid_argument);
  s = ControllerSpec{};
  s.use_hn = true;
  s.per_node = PerNode::kEmbedding;
  s.robot_nodes = 4;
  EXPECT_THROW(s.validate(), std::invalid_argument);
  s = ControllerSpec{};
  s.per_node = PerNode::kDecoder;
  EXPECT_THROW(s.validate(), std::invalid_argument);
  EXPECT_THROW(spec_for_variant("bogus"), std::invalid_argument);
  EXPECT_THROW(spec_for_variant("mlp-sr"), std::invalid_argument);
}

TEST(ControllerSpec, JsonRoundTrip) {
  for (const auto& name : variant_names()) {
    ControllerSpec s = spec_for_variant(name, small_spec(), 5);
    EXPECT_EQ(spec_from_json(spec_to_json(s)), s) << name;
  }
  EXPECT_THROW(spec_from_json("{\"heads\": \"two\"}"), std::invalid_argument);
  EXPECT_THROW(spec_from_json("{not json"), std::invalid_argument);
}

// ---------------------------------------------------------------- init

TEST(ControllerInit, SameSeedSameParameters) {
  ControllerSpec s = spec_for_variant("fa+hn", small_spec());
  Controller a(s, 5), b(s, 5), c(s, 6);
  bool differs = false;
  for (std::size_t i = 0; i < a.params().size(); ++i) {
    EXPECT_EQ(a.params()[i].value, b.params()[i].value);
    differs |= !(a.params()[i].value == c.params()[i].value);
  }
  EXPECT_TRUE(differs);
}

TEST(ControllerInit, HyperNetworkHeadWeightsAreZero) {
  Controller c(spec_for_variant("hn", small_spec()), 3);
  int heads = 0;
  for (const Parameter& p : c.params()) {
    if (p.name.rfind("hn.head.", 0) == 0 && p.name.ends_with(".w")) {
      ++heads;
      for (double v : p.value.values()) EXPECT_EQ(v, 0.0);
    }
  }
  EXPECT_EQ(heads, 3);
  EXPECT_EQ(c.params().get("log_std").value, Tensor::vector({0.0}));
}

TEST(ControllerInit, BiasHyperInitMatchesSharedControllerExactly) {
  Fleet fleet(12);
  Rng rng(4);
  for (const char* variant : {"hn", "fa+hn"}) {
    Controller hn(spec_for_variant(variant, small_spec()), 21);
    Controller shared = hn.shared_equivalent();
    EXPECT_FALSE(shared.spec().use_hn);
    NodeBatch batch = random_batch(hn.spec(), all(fleet), rng);
    Outputs a = run(hn, batch), b = run(shared, batch);
    for (std::size_t g = 0; g < batch.groups; ++g) {
      EXPECT_EQ(max_abs_diff(group_mu(a.mu, batch, g), group_mu(b.mu, batch, g)), 0.0) << variant;
    }
    EXPECT_EQ(max_abs_diff(a.value, b.value), 0.0) << variant;
  }
}

TEST(ControllerInit, HyperNetworkOutputDependsOnContextAfterTraining) {
  Fleet fleet(2);
  Controller c(spec_for_variant("hn", small_spec()), 2);
  Rng rng(9);
  for (Parameter& p : c.params()) {
    if (p.name.rfind("hn.head.", 0) == 0) {
      for (double& v : p.value.values()) v += rng.uniform(-0.1, 0.1);
    }
  }
  MorphCache c0 = c.build_cache(*fleet.robots[0]);
  // Identical context rows give identical generated parameters.
  RobotInfo twin = *fleet.robots[0];
  std::copy(twin.context.row(0), twin.context.row(0) + twin.context.cols(), twin.context.row(1));
  MorphCache ct = c.build_cache(twin);
  const Tensor& e = ct.hn_params[0];
  EXPECT_TRUE(std::equal(e.row(0), e.row(0) + e.cols(), e.row(1)));
  EXPECT_FALSE(std::equal(c0.hn_params[0].row(0), c0.hn_params[0].row(0) + e.cols(),
                          c0.hn_params[0].row(1)));
}

// ---------------------------------------------------------------- attention

TEST(ControllerAttention, FixedAttentionIgnoresObservations) {
  Fleet fleet(10);
  Controller c(spec_for_variant("fa", small_spec()), 8);
  Rng rng(1);
  for (const auto& robot : fleet.robots) {
    NodeBatch first = random_batch(c.spec(), {robot.get()}, rng);
    Outputs ref = run(c, first);
    for (int k = 0; k < 5; ++k) {
      NodeBatch other = random_batch(c.spec(), {robot.get()}, rng);
      Outputs o = run(c, other);
      ASSERT_EQ(o.attention.size(), ref.attention.size());
      for (std::size_t l = 0; l < o.attention.size(); ++l) EXPECT_EQ(o.attention[l], ref.attention[l]);
      EXPECT_NE(o.mu, ref.mu);
    }
  }
}

TEST(ControllerAttention, BaselineAttentionFollowsObservations) {
  Fleet fleet(1);
  Controller c(spec_for_variant("baseline", small_spec()), 8);
  Rng rng(1);
  Outputs a = run(c, random_batch(c.spec(), all(fleet), rng));
  Outputs b = run(c, random_batch(c.spec(), all(fleet), rng));
  EXPECT_NE(a.attention[0], b.attention[0]);
}

TEST(ControllerAttention, ProbabilityRowsSumToOneOverRealNodes) {
  Fleet fleet(6);
  Rng rng(2);
  for (const char* variant : {"baseline", "fa", "fa+hn"}) {
    Controller c(spec_for_variant(variant, small_spec()), 8);
    NodeBatch batch = random_batch(c.spec(), all(fleet), rng, kMaxLimbs);
    Outputs o = run(c, batch);
    const std::size_t n = batch.n, H = c.spec().heads;
    for (const Tensor& p : o.attention) {
      for (std::size_t g = 0; g < batch.groups; ++g) {
        for (std::size_t r = 0; r < H * n; ++r) {
          const double* row = p.row(g * H * n + r);
          double total = 0.0;
          for (std::size_t j = 0; j < n; ++j) {
            if (batch.mask[g * n + j]) {
              total += row[j];
            } else {
              EXPECT_EQ(row[j], 0.0);
            }
          }
          EXPECT_NEAR(total, 1.0, 1e-12);
        }
      }
    }
  }
}

// ---------------------------------------------------------------- equivariance

TEST(ControllerEquivariance, NodePermutationPermutesActionsAndKeepsValue) {
  Rng rng(17);
  for (const char* variant : {"baseline", "fa", "hn", "fa+hn"}) {
    Controller c(spec_for_variant(variant, small_spec()), 5);
    for (Parameter& p : c.params()) {
      for (double& v : p.value.values()) v += rng.uniform(-0.05, 0.05);
    }
    for (int trial = 0; trial < 20; ++trial) {
      MorphologyTree tree = sample_morphology(rng.uniform_int(0, 1 << 30), 3, 8);
      const std::size_t n = tree.size();
      std::vector<int> perm(n);
      std::iota(perm.begin(), perm.end(), 0);
      for (std::size_t i = n - 1; i > 1; --i) std::swap(perm[i], perm[1 + rng.uniform_int(0, i - 1)]);
      MorphologyTree moved = relabeled(tree, perm);
      auto norm = ContextNormalizer::identity();
      RobotInfo ra = make_robot_info(tree, norm), rb = make_robot_info(moved, norm);
      Tensor obs = random_matrix(rng, n, c.spec().obs_dim), pobs({n, c.spec().obs_dim});
      for (std::size_t i = 0; i < n; ++i) std::copy(obs.row(i), obs.row(i) + obs.cols(), pobs.row(perm[i]));
      Tensor ext = random_matrix(rng, 1, kHeightMapDim).reshaped({kHeightMapDim});
      BatchBuilder ba(c.spec()), bb(c.spec());
      ba.add(ra, obs, &ext);
      bb.add(rb, pobs, &ext);
      Outputs oa = run(c, ba.build()), ob = run(c, bb.build());
      for (std::size_t i = 0; i < n; ++i) {
        EXPECT_NEAR(oa.mu.at(i, 0), ob.mu.at(perm[i], 0), 1e-9) << variant;
      }
      EXPECT_NEAR(oa.value[0], ob.value[0], 1e-9) << variant;
    }
  }
}

// ---------------------------------------------------------------- padding and caching

TEST(ControllerMasking, PaddedObservationsDoNotLeak) {
  Fleet fleet(5);
  Rng rng(3);
  for (const char* variant : {"baseline", "pe", "fa+hn"}) {
    Controller c(spec_for_variant(variant, small_spec()), 5);
    NodeBatch batch = random_batch(c.spec(), all(fleet), rng, 10);
    Outputs a = run(c, batch);
    NodeBatch noisy = batch;
    for (std::size_t r = 0; r < noisy.rows(); ++r) {
      if (!noisy.mask[r]) {
        for (std::size_t k = 0; k < noisy.obs.cols(); ++k) noisy.obs.at(r, k) = rng.uniform(-50, 50);
      }
    }
    Outputs b = run(c, noisy);
    for (std::size_t g = 0; g < batch.groups; ++g) {
      EXPECT_EQ(group_mu(a.mu, batch, g), group_mu(b.mu, noisy, g)) << variant;
    }
    EXPECT_EQ(a.value, b.value) << variant;

    // Extra padding changes nothing either.
    NodeBatch tight = batch;
    BatchBuilder bb(c.spec());
    for (std::size_t g = 0; g < batch.groups; ++g) {
      Tensor obs({batch.robots[g]->n, c.spec().obs_dim});
      for (std::size_t i = 0; i < obs.rows(); ++i) {
        std::copy(batch.obs.row(g * batch.n + i), batch.obs.row(g * batch.n + i) + obs.cols(), obs.row(i));
      }
      Tensor ext = Tensor::vector({batch.ext.row(g), batch.ext.row(g) + batch.ext.cols()});
      bb.add(*batch.robots[g], obs, &ext);
    }
    tight = bb.build();
    ASSERT_LT(tight.n, batch.n);
    Outputs t = run(c, tight);
    for (std::size_t g = 0; g < batch.groups; ++g) {
      EXPECT_EQ(group_mu(a.mu, batch, g), group_mu(t.mu, tight, g)) << variant;
    }
    EXPECT_EQ(a.value, t.value) << variant;
  }
}

TEST(ControllerCache, CachedForwardIsBitIdenticalToInline) {
  Fleet fleet(6);
  Rng rng(5);
  for (const char* variant : {"fa", "hn", "fa+hn"}) {
    Controller c(spec_for_variant(variant, small_spec()), 5);
    for (Parameter& p : c.params()) {
      for (double& v : p.value.values()) v += rng.uniform(-0.05, 0.05);
    }
    // Repeated robots exercise the per-robot deduplication.
    std::vector<const RobotInfo*> robots = all(fleet);
    robots.push_back(fleet.robots[2].get());
    robots.push_back(fleet.robots[0].get());
    NodeBatch batch = random_batch(c.spec(), robots, rng, 9);
    std::vector<MorphCache> caches;
    for (const RobotInfo* r : robots) caches.push_back(c.build_cache(*r));
    std::vector<const MorphCache*> ptrs;
    for (const auto& m : caches) ptrs.push_back(&m);
    ForwardOptions with;
    with.caches = ptrs;
    Outputs a = run(c, batch), b = run(c, batch, with);
    for (std::size_t g = 0; g < batch.groups; ++g) {
      EXPECT_EQ(group_mu(a.mu, batch, g), group_mu(b.mu, batch, g)) << variant;
    }
    EXPECT_EQ(a.value, b.value) << variant;
    // Query rows of padded nodes are never read; compare the real ones.
    const std::size_t H = c.spec().heads, n = batch.n;
    for (std::size_t l = 0; l < a.attention.size(); ++l) {
      for (std::size_t g = 0; g < batch.groups; ++g) {
        for (std::size_t h = 0; h < H; ++h) {
          for (std::size_t i = 0; i < batch.robots[g]->n; ++i) {
            const std::size_t r = (g * H + h) * n + i;
            EXPECT_TRUE(std::equal(a.attention[l].row(r), a.attention[l].row(r) + n,
                                   b.attention[l].row(r)));
          }
        }
      }
    }

    // Rebuilding gives the same bits.
    MorphCache again = c.build_cache(*robots[0]);
    EXPECT_EQ(again.hn_params, caches[0].hn_params);
    EXPECT_EQ(again.fa_logits, caches[0].fa_logits);
  }
}

TEST(ControllerCache, RejectsMissingOrForeignCaches) {
  Fleet fleet(2);
  Rng rng(5);
  Controller c(spec_for_variant("fa+hn", small_spec()), 5);
  NodeBatch batch = random_batch(c.spec(), all(fleet), rng);
  MorphCache c0 = c.build_cache(*fleet.robots[0]);
  std::vector<const MorphCache*> one = {&c0};
  ForwardOptions o;
  o.caches = one;
  Tape tape(false);
  EXPECT_THROW(c.forward(tape, batch, o), std::invalid_argument);
  std::vector<const MorphCache*> swapped = {&c0, &c0};
  o.caches = swapped;
  EXPECT_THROW(c.forward(tape, batch, o), std::invalid_argument);
}

TEST(ControllerCache, PerturbedMassesChangeGeneratedParameters) {
  Fleet fleet(1);
  Controller c(spec_for_variant("hn", small_spec()), 5);
  Rng rng(8);
  for (Parameter& p : c.params()) {
    if (p.name.rfind("hn.head.", 0) == 0) {
      for (double& v : p.value.values()) v += rng.uniform(-0.1, 0.1);
    }
  }
  MorphologyTree heavy = perturb(fleet.trees[0], {VariationParam::kMass, 0.2, 3});
  RobotInfo r = make_robot_info(heavy, fleet.normalizer);
  EXPECT_NE(c.build_cache(*fleet.robots[0]).hn_params[0], c.build_cache(r).hn_params[0]);
}

// ---------------------------------------------------------------- gradients

Var surrogate(Controller& c, Tape& tape, const NodeBatch& batch, const Tensor& actions,
              const ForwardOptions& o = {}) {
  PolicyVars v = c.forward(tape, batch, o);
  Var lp = ops::gaussian_logprob(actions, v.mu, v.log_std, batch.actuated, batch.groups);
  Var w = tape.constant(Tensor::vector(std::vector<double>(batch.groups, 0.7)));
  return ops::add(ops::sum(ops::mul(lp, w)), ops::mean(ops::square(v.value)));
}

TEST(ControllerGradients, EveryParameterMatchesFiniteDifferences) {
  Rng rng(31);
  std::vector<MorphologyTree> trees;
  for (int k = 0; k < 2; ++k) {
    MorphologyTree t = sample_morphology(100 + k, 3, 3);
    trees.push_back(t);
  }
  auto norm = ContextNormalizer::fit(trees);
  RobotInfo r0 = make_robot_info(trees[0], norm), r1 = make_robot_info(trees[1], norm);
  for (const auto& variant : variant_names()) {
    ControllerSpec s = spec_for_variant(variant, tiny_spec(), 3);
    Controller c(s, 7);
    for (Parameter& p : c.params()) {
      for (double& v : p.value.values()) v += rng.uniform(-0.2, 0.2);
    }
    const bool single = s.arch == Architecture::kMlp || s.per_node != PerNode::kNone;
    std::vector<const RobotInfo*> robots = single ? std::vector<const RobotInfo*>{&r0, &r0}
                                                  : std::vector<const RobotInfo*>{&r0, &r1};
    NodeBatch batch = random_batch(s, robots, rng);
    Tensor actions = random_matrix(rng, batch.rows(), 1);
    auto result = testing::check_gradients(
        c.params(), [&](Tape& t) { return surrogate(c, t, batch, actions); },
        [](const std::string&) { return true; }, 1e-6);
    std::set<std::string> groups;
    for (const auto& [name, err] : result.relative_error) {
      groups.insert(parameter_group(name));
      EXPECT_LT(err, 1e-4) << variant << " " << name;
    }
    if (s.use_hn) {
      EXPECT_TRUE(groups.contains("hn"));
    }
    if (s.use_fa) {
      EXPECT_TRUE(groups.contains("fa"));
    }
    if (s.use_pe) {
      EXPECT_TRUE(groups.contains("pe"));
    }
    if (s.per_node != PerNode::kNone) {
      EXPECT_TRUE(groups.contains("pernode"));
    }
  }
}

TEST(ControllerGradients, DropoutMaskIsReplayable) {
  Fleet fleet(2);
  ControllerSpec s = small_spec();
  s.dropout = 0.3;
  Controller c(s, 3);
  Rng rng(4);
  NodeBatch batch = random_batch(s, all(fleet), rng);
  Tape t1(false), t2(false), t3(false);
  ForwardOptions fresh;
  fresh.dropout_rng = &rng;
  PolicyVars a = c.forward(t1, batch, fresh);
  ASSERT_EQ(a.dropout_mask.size(), batch.rows() * s.d_model);
  ForwardOptions replay;
  replay.dropout_mask = &a.dropout_mask;
  PolicyVars b = c.forward(t2, batch, replay);
  EXPECT_EQ(a.mu.value(), b.mu.value());
  PolicyVars off = c.forward(t3, batch);
  EXPECT_TRUE(off.dropout_mask.empty());
  EXPECT_NE(off.mu.value(), a.mu.value());
}

// ---------------------------------------------------------------- per-node ablation

TEST(ControllerPerNode, IdenticalTablesMatchSharedBaseline) {
  Fleet fleet(1, 19, 5, 5);
  Rng rng(6);
  for (const char* variant : {"per-node-embedding", "per-node-decoder"}) {
    Controller c(spec_for_variant(variant, small_spec(), 5), 4);
    Controller shared = c.shared_equivalent();
    NodeBatch batch = random_batch(c.spec(), {fleet.robots[0].get(), fleet.robots[0].get()}, rng);
    Outputs a = run(c, batch), b = run(shared, batch);
    EXPECT_EQ(a.mu, b.mu) << variant;
    EXPECT_EQ(a.value, b.value) << variant;
  }
}

TEST(ControllerPerNode, ParameterCountGrowsLinearlyInNodes) {
  auto count = [](const char* variant, std::size_t n) {
    return parameter_count(Controller(spec_for_variant(variant, small_spec(), n), 1));
  };
  for (const char* variant : {"per-node-embedding", "per-node-decoder"}) {
    const auto c3 = count(variant, 3), c4 = count(variant, 4), c7 = count(variant, 7);
    EXPECT_GT(c4, c3);
    EXPECT_EQ(c7 - c3, 4 * (c4 - c3)) << variant;
  }
}

TEST(ControllerPerNode, RejectsOtherMorphologies) {
  Fleet fleet(2, 19, 5, 5);
  Controller c(spec_for_variant("per-node-embedding", small_spec(), 5), 4);
  Rng rng(6);
  NodeBatch batch = random_batch(c.spec(), all(fleet), rng);
  Tape tape(false);
  EXPECT_THROW(c.forward(tape, batch), std::invalid_argument);
  NodeBatch padded = random_batch(c.spec(), {fleet.robots[0].get()}, rng, 6);
  EXPECT_THROW(c.forward(tape, padded), std::invalid_argument);
}

TEST(ControllerPerNode, DecoderGradientIsLocalToItsNode) {
  Fleet fleet(1, 19, 5, 5);
  Controller c(spec_for_variant("per-node-decoder", small_spec(), 5), 4);
  Rng rng(6);
  NodeBatch batch = random_batch(c.spec(), {fleet.robots[0].get()}, rng);
  Tensor actions = random_matrix(rng, batch.rows(), 1);
  Mask without3 = batch.actuated;
  without3[3] = 0;
  c.params().zero_grad();
  Tape tape;
  PolicyVars v = c.forward(tape, batch);
  tape.backward(ops::sum(ops::gaussian_logprob(actions, v.mu, v.log_std, without3, 1)));
  for (const char* name : {"pernode.dec0", "pernode.dec1"}) {
    const Tensor& g = c.params().get(name).grad;
    double row3 = 0.0, row1 = 0.0;
    for (std::size_t k = 0; k < g.cols(); ++k) {
      row3 += std::abs(g.at(3, k));
      row1 += std::abs(g.at(1, k));
    }
    EXPECT_EQ(row3, 0.0) << name;
    EXPECT_GT(row1, 0.0) << name;
  }
}

// ---------------------------------------------------------------- scale

TEST(ControllerScale, ParameterCountIndependentOfCorpusSize) {
  ControllerSpec s = spec_for_variant("fa+hn", ControllerSpec{});
  std::size_t reference = 0;
  Rng rng(1);
  for (std::size_t size : {1, 20, 100}) {
    Fleet fleet(size, 40);
    Controller c(s, 9);
    // Every robot of the corpus goes through the same controller.
    NodeBatch batch = random_batch(s, all(fleet), rng);
    Tape tape(false);
    c.forward(tape, batch);
    if (reference == 0) reference = parameter_count(c);
    EXPECT_EQ(parameter_count(c), reference);
  }
}

// ---------------------------------------------------------------- diagnostics

TEST(ControllerDiagnostics, NonFiniteValuesNameTheSubmodule) {
  Fleet fleet(1);
  Rng rng(2);
  struct Case {
    const char* variant;
    const char* param;
    const char* module;
  };
  for (const Case& k : {Case{"baseline", "layer1.ff1.w", "layer1"},
                        Case{"fa+hn", "hn.enc0.b", "hn"}, Case{"fa", "fa.out.w", "fa"},
                        Case{"baseline", "critic.l1.b", "critic"},
                        Case{"baseline", "ext.l0.b", "ext"}}) {
    Controller c(spec_for_variant(k.variant, small_spec()), 1);
    c.params().get(k.param).value[0] = std::numeric_limits<double>::quiet_NaN();
    NodeBatch batch = random_batch(c.spec(), all(fleet), rng);
    Tape tape(false);
    try {
      c.forward(tape, batch);
      ADD_FAILURE() << "no error for " << k.param;
    } catch (const NumericalError& e) {
      EXPECT_NE(std::string(e.what()).find(std::string("'") + k.module + "'"), std::string::npos)
          << e.what();
    }
  }
}

// ---------------------------------------------------------------- checkpoints

TEST(ControllerCheckpoint, RoundTripRestoresOutputs) {
  Fleet fleet(3);
  Rng rng(2);
  Controller c(spec_for_variant("fa+hn", small_spec()), 12);
  for (Parameter& p : c.params()) {
    for (double& v : p.value.values()) v += rng.uniform(-0.1, 0.1);
  }
  const auto dir = std::filesystem::temp_directory_path() / "morphctl_ckpt_test";
  std::filesystem::remove_all(dir);
  Checkpoint ck = make_checkpoint(c, fleet.normalizer, 0xabcdef0123456789ULL);
  ck.extra.push_back({"adam.m", random_matrix(rng, 3, 2)});
  ck.metadata = R"({"iteration": 4})";
  save_checkpoint(dir / "model.ckpt", ck);
  Checkpoint back = load_checkpoint(dir / "model.ckpt");
  EXPECT_EQ(back.spec, c.spec());
  EXPECT_EQ(back.normalizer, fleet.normalizer);
  EXPECT_EQ(back.manifest_hash, 0xabcdef0123456789ULL);
  ASSERT_EQ(back.extra.size(), 1u);
  EXPECT_EQ(back.extra[0].value, ck.extra[0].value);
  Controller restored = controller_from_checkpoint(back);
  NodeBatch batch = random_batch(c.spec(), all(fleet), rng);
  Outputs a = run(c, batch), b = run(restored, batch);
  EXPECT_EQ(a.mu, b.mu);
  EXPECT_EQ(a.value, b.value);

  Controller other(spec_for_variant("hn", small_spec()), 12);
  EXPECT_THROW(restore_parameters(other, back), CheckpointError);

  // Truncation and garbage are rejected.
  const auto size = std::filesystem::file_size(dir / "model.ckpt");
  std::filesystem::resize_file(dir / "model.ckpt", size - 8);
  EXPECT_THROW(load_checkpoint(dir / "model.ckpt"), CheckpointError);
  std::ofstream(dir / "junk.ckpt") << "hello";
  EXPECT_THROW(load_checkpoint(dir / "junk.ckpt"), CheckpointError);
  std::filesystem::remove_all(dir);
}

}  // namespace
}  // namespace morphctl
