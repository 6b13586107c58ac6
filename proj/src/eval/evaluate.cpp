#include "morphctl/eval/evaluate.hpp"

#include <cmath>
#include <cstdio>
#include <functional>
#include <optional>
#include <ostream>

namespace morphctl {

namespace {

double sample_std(const std::vector<double>& v, double mean) {
  if (v.size() < 2) return 0.0;
  double s = 0.0;
  for (double x : v) s += (x - mean) * (x - mean);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

RobotEval summarize(std::string robot, std::vector<double> returns) {
  RobotEval r;
  r.robot = std::move(robot);
  double s = 0.0;
  for (double x : returns) s += x;
  r.mean = returns.empty() ? 0.0 : s / static_cast<double>(returns.size());
  r.std = sample_std(returns, r.mean);
  r.returns = std::move(returns);
  return r;
}

struct Rollout {
  Env env;
  Tensor obs, ext;
  double ret = 0.0;
};

// Fills actions[k] ([n] per live rollout) for the given live rollouts.
using BatchPolicy =
    std::function<void(const std::vector<Rollout*>& live, std::vector<std::vector<double>>& actions)>;

std::vector<double> run_rollouts(const MorphologyTree& tree, const EvalSettings& settings,
                                 const BatchPolicy& policy) {
  const EnvFactory factory = make_env_factory(settings.env);
  std::vector<std::optional<Rollout>> rollouts(settings.rollouts);
  for (std::size_t k = 0; k < settings.rollouts; ++k) {
    const std::uint64_t seed = Rng::mix(settings.seed, k);
    Env env = factory(tree, seed);
    StepResult r = env.reset(seed);
    rollouts[k].emplace(Rollout{std::move(env), std::move(r.obs), std::move(r.ext), 0.0});
  }
  std::vector<double> returns(settings.rollouts, 0.0);
  std::vector<std::size_t> live_index;
  for (std::size_t k = 0; k < settings.rollouts; ++k) live_index.push_back(k);
  std::vector<std::vector<double>> actions;
  while (!live_index.empty()) {
    std::vector<Rollout*> live;
    for (std::size_t k : live_index) live.push_back(&*rollouts[k]);
    actions.assign(live.size(), std::vector<double>(tree.size(), 0.0));
    policy(live, actions);
    std::vector<std::size_t> still;
    for (std::size_t i = 0; i < live.size(); ++i) {
      Rollout& r = *live[i];
      StepResult s = r.env.step(actions[i]);
      r.ret += s.reward;
      if (s.done) {
        returns[live_index[i]] = r.ret;
      } else {
        r.obs = std::move(s.obs);
        r.ext = std::move(s.ext);
        still.push_back(live_index[i]);
      }
    }
    live_index = std::move(still);
  }
  return returns;
}

EvalReport make_report(const EvalSettings& settings) {
  EvalReport report;
  report.environment = std::string(terrain_kind_name(settings.env.terrain));
  report.seed = settings.seed;
  report.rollouts = settings.rollouts;
  return report;
}

void finish(EvalReport& report) {
  double s = 0.0;
  for (const RobotEval& r : report.rows) s += r.mean;
  report.mean = report.rows.empty() ? 0.0 : s / static_cast<double>(report.rows.size());
}

class Evaluator {
 public:
  Evaluator(const Controller& controller, const ContextNormalizer& normalizer)
      : controller_(controller), normalizer_(normalizer) {}

  RobotEval run(const MorphologyTree& tree, const EvalSettings& settings) {
    const ControllerSpec& spec = controller_.spec();
    if (tree.size() > spec.max_nodes) {
      throw EvalError("robot '" + tree.id + "' has " + std::to_string(tree.size()) +
                      " limbs; the controller supports at most " + std::to_string(spec.max_nodes));
    }
    const RobotInfo info = make_robot_info(tree, normalizer_);
    std::optional<MorphCache> cache;
    if (spec.arch == Architecture::kTransformer && (spec.use_hn || spec.use_fa)) {
      cache = controller_.build_cache(info);
    }
    auto policy = [&](const std::vector<Rollout*>& live, std::vector<std::vector<double>>& actions) {
      BatchBuilder b(spec);
      for (Rollout* r : live) b.add(info, r->obs, spec.ext_dim > 0 ? &r->ext : nullptr);
      NodeBatch batch = b.build();
      std::vector<const MorphCache*> caches(cache ? live.size() : 0, cache ? &*cache : nullptr);
      ForwardOptions o;
      o.caches = caches;
      Tape tape(false);
      const Tensor mu = controller_.forward(tape, batch, o).mu.value();
      for (std::size_t g = 0; g < live.size(); ++g) {
        for (std::size_t i = 1; i < info.n; ++i) actions[g][i] = mu.at(g * batch.n + i, 0);
      }
    };
    return summarize(tree.id, run_rollouts(tree, settings, policy));
  }

 private:
  Controller controller_;
  ContextNormalizer normalizer_;
};

}  // namespace

EvalReport evaluate(const Controller& controller, const ContextNormalizer& normalizer,
                    const std::vector<MorphologyTree>& robots, const EvalSettings& settings) {
  EvalReport report = make_report(settings);
  Evaluator ev(controller, normalizer);
  for (const MorphologyTree& t : robots) report.rows.push_back(ev.run(t, settings));
  finish(report);
  return report;
}

EvalReport evaluate_zero_action(const std::vector<MorphologyTree>& robots,
                                const EvalSettings& settings) {
  EvalReport report = make_report(settings);
  auto zero = [](const std::vector<Rollout*>&, std::vector<std::vector<double>>&) {};
  for (const MorphologyTree& t : robots) report.rows.push_back(summarize(t.id, run_rollouts(t, settings, zero)));
  finish(report);
  return report;
}

std::vector<MorphologyTree> sweep_variants(const std::vector<MorphologyTree>& corpus,
                                           const SweepOptions& options) {
  std::vector<MorphologyTree> out;
  for (VariationParam p : options.parameters) {
    for (std::size_t r = 0; r < corpus.size(); ++r) {
      const std::uint64_t robot_seed =
          Rng::mix(Rng::mix(options.seed, static_cast<std::uint64_t>(p)), r);
      for (std::size_t k = 0; k < options.variants_per_robot; ++k) {
        MorphologyTree v = perturb(corpus[r], {p, options.relative_range, Rng::mix(robot_seed, k)});
        if (topology_hash(v) != topology_hash(corpus[r])) {
          throw std::logic_error("variant of '" + corpus[r].id + "' changed topology");
        }
        out.push_back(std::move(v));
      }
    }
  }
  return out;
}

EvalReport variant_sweep(const Controller& controller, const ContextNormalizer& normalizer,
                         const std::vector<MorphologyTree>& corpus, const SweepOptions& options,
                         const EvalSettings& settings) {
  EvalReport report = make_report(settings);
  const std::vector<MorphologyTree> variants = sweep_variants(corpus, options);
  Evaluator ev(controller, normalizer);
  std::size_t i = 0;
  for (VariationParam p : options.parameters) {
    for (std::size_t r = 0; r < corpus.size(); ++r) {
      for (std::size_t k = 0; k < options.variants_per_robot; ++k, ++i) {
        RobotEval row = ev.run(variants[i], settings);
        row.robot = corpus[r].id;
        row.parameter = std::string(variation_name(p));
        row.variant = static_cast<int>(k);
        report.rows.push_back(std::move(row));
      }
    }
  }
  finish(report);
  return report;
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

void write_report_table(std::ostream& out, const EvalReport& report) {
  out << "environment\trobot\tparameter\tvariant\tseed\trollouts\tmean\tstd\n";
  for (const RobotEval& r : report.rows) {
    out << report.environment << '\t' << r.robot << '\t' << (r.parameter.empty() ? "-" : r.parameter)
        << '\t' << r.variant << '\t' << report.seed << '\t' << r.returns.size() << '\t'
        << format_double(r.mean) << '\t' << format_double(r.std) << '\n';
  }
}

}  // namespace morphctl
