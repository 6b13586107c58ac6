#include "morphctl/eval/ablation.hpp"

#include <cmath>
#include <ostream>

namespace morphctl {

std::vector<AblationSummary> summarize_runs(const std::vector<std::string>& variants,
                                            const std::vector<AblationRun>& runs) {
  std::vector<AblationSummary> out;
  for (const std::string& v : variants) {
    AblationSummary s;
    s.variant = v;
    std::vector<double> x;
    for (const AblationRun& r : runs) {
      if (r.variant == v) x.push_back(r.final_return);
    }
    s.runs = x.size();
    for (double f : x) s.mean += f;
    if (!x.empty()) s.mean /= static_cast<double>(x.size());
    if (x.size() > 1) {
      double ss = 0.0;
      for (double f : x) ss += (f - s.mean) * (f - s.mean);
      s.std = std::sqrt(ss / static_cast<double>(x.size() - 1));
    }
    out.push_back(s);
  }
  return out;
}

AblationResult ablation_suite(const std::vector<MorphologyTree>& robots,
                              const ContextNormalizer& normalizer, const ControllerSpec& base,
                              const PpoConfig& ppo, const AblationConfig& config,
                              const AblationHooks& hooks) {
  if (config.variants.empty() || config.seeds.empty()) {
    throw std::invalid_argument("ablation: need at least one variant and one seed");
  }
  // Every spec is built before any training so a bad variant fails fast.
  for (const std::string& v : config.variants) {
    if (config.single_robot) {
      for (const MorphologyTree& t : robots) spec_for_variant(v, base, t.size());
    } else {
      spec_for_variant(v, base);
    }
  }

  AblationResult result;
  const EnvFactory factory = make_env_factory(config.eval.env);
  auto run_one = [&](const std::string& variant, std::uint64_t seed,
                     const std::vector<MorphologyTree>& trees, const std::string& label) {
    AblationRun run;
    run.variant = variant;
    run.seed = seed;
    run.robot = label;
    if (hooks.lookup) {
      if (auto done = hooks.lookup(run)) return *done;
    }
    const ControllerSpec spec =
        spec_for_variant(variant, base, config.single_robot ? trees[0].size() : 0);
    Trainer trainer(trees, normalizer, factory, spec, ppo, seed);
    run.last_train_return = std::nan("");
    trainer.run(config.steps, [&](const IterationMetrics& m) {
      if (m.episodes > 0) run.last_train_return = m.mean_return;
      run.env_steps = m.env_steps;
      run.iterations = m.iteration;
      if (hooks.on_iteration) hooks.on_iteration(run, m, trainer);
    });
    run.final_return = evaluate(trainer.controller(), normalizer, trees, config.eval).mean;
    if (hooks.on_run_done) hooks.on_run_done(run, trainer);
    return run;
  };

  for (const std::string& v : config.variants) {
    for (std::uint64_t seed : config.seeds) {
      if (config.single_robot) {
        for (const MorphologyTree& t : robots) result.runs.push_back(run_one(v, seed, {t}, t.id));
      } else {
        result.runs.push_back(run_one(v, seed, robots, "*"));
      }
    }
  }
  result.summary = summarize_runs(config.variants, result.runs);
  result.zero_action = evaluate_zero_action(robots, config.eval).mean;
  return result;
}

void write_ablation_runs(std::ostream& out, const std::vector<AblationRun>& runs) {
  out << "variant\tseed\trobot\tfinal_return\tlast_train_return\tenv_steps\titerations\n";
  for (const AblationRun& r : runs) {
    out << r.variant << '\t' << r.seed << '\t' << r.robot << '\t' << format_double(r.final_return)
        << '\t' << format_double(r.last_train_return) << '\t' << r.env_steps << '\t'
        << r.iterations << '\n';
  }
}

void write_ablation_summary(std::ostream& out, const AblationResult& result) {
  out << "variant\truns\tmean\tstd\n";
  for (const AblationSummary& s : result.summary) {
    out << s.variant << '\t' << s.runs << '\t' << format_double(s.mean) << '\t'
        << format_double(s.std) << '\n';
  }
  out << "zero-action\t-\t" << format_double(result.zero_action) << "\t-\n";
}

}  // namespace morphctl
