#include "morphctl/eval/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <ostream>
#include <stdexcept>

#include "morphctl/eval/evaluate.hpp"

namespace morphctl {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

CorrelationMatrix pearson_matrix(const std::vector<std::vector<double>>& series,
                                 std::vector<std::string> labels) {
  CorrelationMatrix m;
  m.dim = series.size();
  m.samples = series.empty() ? 0 : series[0].size();
  for (const auto& s : series) {
    if (s.size() != m.samples) throw std::invalid_argument("pearson_matrix: series lengths differ");
  }
  if (labels.empty()) {
    for (std::size_t i = 0; i < m.dim; ++i) labels.push_back("a" + std::to_string(i));
  }
  if (labels.size() != m.dim) throw std::invalid_argument("pearson_matrix: label count");
  m.labels = std::move(labels);
  m.values.assign(m.dim * m.dim, kNaN);

  std::vector<std::vector<double>> centered(m.dim);
  std::vector<double> ss(m.dim, 0.0);
  std::vector<bool> constant(m.dim, true);
  for (std::size_t i = 0; i < m.dim; ++i) {
    const auto& s = series[i];
    double mean = 0.0;
    for (double x : s) mean += x;
    mean /= static_cast<double>(std::max<std::size_t>(m.samples, 1));
    centered[i].resize(m.samples);
    for (std::size_t t = 0; t < m.samples; ++t) {
      centered[i][t] = s[t] - mean;
      ss[i] += centered[i][t] * centered[i][t];
      if (s[t] != s[0]) constant[i] = false;
    }
  }
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < m.dim; ++i) {
    if (constant[i]) continue;
    m.values[i * m.dim + i] = 1.0;
    for (std::size_t j = i + 1; j < m.dim; ++j) {
      if (constant[j]) continue;
      double sxy = 0.0;
      for (std::size_t t = 0; t < m.samples; ++t) sxy += centered[i][t] * centered[j][t];
      const double r = std::clamp(sxy / std::sqrt(ss[i] * ss[j]), -1.0, 1.0);
      m.values[i * m.dim + j] = m.values[j * m.dim + i] = r;
      sum += std::abs(r);
      ++count;
    }
  }
  m.mean_abs_offdiag = count > 0 ? sum / static_cast<double>(count) : kNaN;
  return m;
}

namespace {

// Runs the mean-action policy for one episode; on_step sees every env step.
template <class F>
void mean_action_episode(Controller& c, const RobotInfo& info, const MorphCache* cache,
                         const MorphologyTree& robot, const EnvFactory& factory,
                         std::uint64_t episode_seed, F&& on_step) {
  const ControllerSpec& spec = c.spec();
  std::vector<double> action(robot.size(), 0.0);
  Env sim = factory(robot, episode_seed);
  StepResult r = sim.reset(episode_seed);
  for (;;) {
    BatchBuilder b(spec);
    b.add(info, r.obs, spec.ext_dim > 0 ? &r.ext : nullptr);
    NodeBatch batch = b.build();
    ForwardOptions o;
    if (cache) o.caches = std::span<const MorphCache* const>(&cache, 1);
    Tape tape(false);
    const Tensor mu = c.forward(tape, batch, o).mu.value();
    for (std::size_t i = 1; i < robot.size(); ++i) action[i] = std::clamp(mu.at(i, 0), -1.0, 1.0);
    r = sim.step(action);
    on_step(sim, action, r);
    if (r.done) break;
  }
}

std::optional<MorphCache> maybe_cache(Controller& c, const RobotInfo& info) {
  const ControllerSpec& spec = c.spec();
  if (spec.arch == Architecture::kTransformer && (spec.use_hn || spec.use_fa)) {
    return c.build_cache(info);
  }
  return std::nullopt;
}

}  // namespace

CorrelationMatrix action_correlation(const Controller& controller,
                                     const ContextNormalizer& normalizer,
                                     const MorphologyTree& robot, const EnvSettings& env,
                                     std::size_t episodes, std::uint64_t seed) {
  Controller c = controller;
  const RobotInfo info = make_robot_info(robot, normalizer);
  const std::optional<MorphCache> cache = maybe_cache(c, info);
  const EnvFactory factory = make_env_factory(env);
  std::vector<std::vector<double>> series(robot.size() - 1);
  for (std::size_t e = 0; e < episodes; ++e) {
    mean_action_episode(c, info, cache ? &*cache : nullptr, robot, factory, Rng::mix(seed, e),
                        [&](const Env&, const std::vector<double>& action, const StepResult&) {
                          for (std::size_t i = 1; i < robot.size(); ++i) {
                            series[i - 1].push_back(action[i]);
                          }
                        });
  }
  std::vector<std::string> labels;
  for (std::size_t i = 1; i < robot.size(); ++i) labels.push_back("limb" + std::to_string(i));
  return pearson_matrix(series, std::move(labels));
}

double record_trajectory(const Controller& controller, const ContextNormalizer& normalizer,
                         const MorphologyTree& robot, const EnvSettings& env,
                         std::uint64_t seed, std::ostream& out) {
  Controller c = controller;
  const RobotInfo info = make_robot_info(robot, normalizer);
  const std::optional<MorphCache> cache = maybe_cache(c, info);
  TrajectoryWriter writer(out, robot.size());
  double total = 0.0;
  mean_action_episode(c, info, cache ? &*cache : nullptr, robot, make_env_factory(env),
                      Rng::mix(seed, 0),
                      [&](const Env& sim, const std::vector<double>&, const StepResult& r) {
                        writer.write(sim.state(), r.reward);
                        total += r.reward;
                      });
  return total;
}

void write_correlation_table(std::ostream& out, const CorrelationMatrix& m) {
  out << "joint";
  for (const auto& l : m.labels) out << '\t' << l;
  out << '\n';
  for (std::size_t i = 0; i < m.dim; ++i) {
    out << m.labels[i];
    for (std::size_t j = 0; j < m.dim; ++j) out << '\t' << format_double(m.at(i, j));
    out << '\n';
  }
  out << "# samples\t" << m.samples << "\n# mean_abs_offdiag\t" << format_double(m.mean_abs_offdiag)
      << '\n';
}

// ---------------------------------------------------------------- PE

PeReport pe_diagnostic(const std::vector<MorphologyTree>& corpus,
                       const ContextNormalizer& normalizer, double tolerance) {
  PeReport report;
  std::size_t total = 0, changed = 0;
  std::vector<std::vector<int>> orders;
  std::vector<Tensor> contexts;
  for (const MorphologyTree& t : corpus) {
    const std::vector<int> before = dfs_positions(t);
    const std::vector<int> after = dfs_positions(with_reversed_child_order(t));
    PeTreeChurn c;
    c.robot = t.id;
    c.non_root = t.size() - 1;
    for (std::size_t i = 1; i < t.size(); ++i) c.changed += before[i] != after[i];
    total += c.non_root;
    changed += c.changed;
    report.trees.push_back(c);
    orders.push_back(dfs_order(t));
    contexts.push_back(context_matrix(t, normalizer));
  }
  report.churn_fraction = total > 0 ? static_cast<double>(changed) / static_cast<double>(total) : 0.0;

  for (std::size_t a = 0; a < corpus.size(); ++a) {
    for (std::size_t b = a + 1; b < corpus.size(); ++b) {
      const std::size_t shared = std::min(orders[a].size(), orders[b].size());
      for (std::size_t p = 0; p < shared; ++p) {
        const auto la = static_cast<std::size_t>(orders[a][p]);
        const auto lb = static_cast<std::size_t>(orders[b][p]);
        ++report.compared_pairs;
        bool differ = corpus[a].limbs[la].depth != corpus[b].limbs[lb].depth;
        for (std::size_t f = 0; f < kContextDim && !differ; ++f) {
          differ = std::abs(contexts[a].at(la, f) - contexts[b].at(lb, f)) > tolerance;
        }
        if (differ) report.collisions.push_back({a, la, b, lb, p});
      }
    }
  }
  return report;
}

void write_pe_table(std::ostream& out, const PeReport& report) {
  out << "robot\tnon_root\tchanged\tfraction\n";
  for (const PeTreeChurn& t : report.trees) {
    const double f = t.non_root ? static_cast<double>(t.changed) / static_cast<double>(t.non_root) : 0.0;
    out << t.robot << '\t' << t.non_root << '\t' << t.changed << '\t' << format_double(f) << '\n';
  }
  out << "# churn_fraction\t" << format_double(report.churn_fraction) << '\n'
      << "# compared_pairs\t" << report.compared_pairs << '\n'
      << "# collisions\t" << report.collisions.size() << '\n';
}

// ---------------------------------------------------------------- ratio drift

RatioDriftReport ratio_drift_diagnostic(const std::vector<MorphologyTree>& robots,
                                        const ContextNormalizer& normalizer,
                                        const EnvSettings& env, const ControllerSpec& spec,
                                        PpoConfig config, DropoutMode mode,
                                        std::size_t iterations, std::uint64_t seed) {
  if (mode != DropoutMode::kOff && !(spec.dropout > 0.0)) {
    throw std::invalid_argument("ratio drift: dropout mode '" + std::string(dropout_mode_name(mode)) +
                                "' needs a dropout rate > 0");
  }
  config.dropout_mode = mode;
  Trainer trainer(robots, normalizer, make_env_factory(env), spec, config, seed);
  RatioDriftReport report;
  report.mode = mode;
  report.bins = config.histogram_bins;
  for (std::size_t i = 0; i < iterations; ++i) {
    IterationMetrics m = trainer.iterate();
    report.epochs.push_back(m.update.ratio_histograms);
    report.first_minibatch.push_back(ratio_histogram(m.update.first_ratios, config.histogram_bins));
  }
  return report;
}

double mass_at_one(const std::vector<std::size_t>& h) {
  std::size_t total = 0;
  for (std::size_t c : h) total += c;
  if (total == 0) return 0.0;
  // Bins split [0, 2] evenly; 1.0 lands in bin floor(bins / 2).
  return static_cast<double>(h[h.size() / 2]) / static_cast<double>(total);
}

void write_ratio_table(std::ostream& out, const RatioDriftReport& r) {
  out << "mode\titeration\tepoch\tbin_lo\tbin_hi\tcount\n";
  const double w = 2.0 / static_cast<double>(r.bins);
  auto rows = [&](std::size_t it, const std::string& epoch, const std::vector<std::size_t>& h) {
    for (std::size_t b = 0; b < h.size(); ++b) {
      out << dropout_mode_name(r.mode) << '\t' << it << '\t' << epoch << '\t'
          << format_double(w * static_cast<double>(b)) << '\t'
          << format_double(w * static_cast<double>(b + 1)) << '\t' << h[b] << '\n';
    }
  };
  for (std::size_t it = 0; it < r.epochs.size(); ++it) {
    rows(it, "first_minibatch", r.first_minibatch[it]);
    for (std::size_t e = 0; e < r.epochs[it].size(); ++e) rows(it, std::to_string(e), r.epochs[it][e]);
  }
}

}  // namespace morphctl
