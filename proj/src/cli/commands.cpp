#include "morphctl/cli/commands.hpp"

#include <malloc.h>

#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "morphctl/eval/ablation.hpp"
#include "morphctl/eval/diagnostics.hpp"
#include "morphctl/eval/plots.hpp"

namespace morphctl {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

void log_line(const CommandOptions& o, const std::string& line) {
  if (o.log != nullptr) *o.log << line << std::endl;
}

std::string read_text(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot read " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

template <class F>
void write_table(const fs::path& path, F&& body) {
  std::ostringstream s;
  body(s);
  write_text_file(path, s.str());
}

void require_out(const CommandOptions& o) {
  if (o.out.empty()) throw ConfigError("an output directory (--out) is required");
}

void write_config(const fs::path& out, const RunConfig& cfg) {
  write_text_file(out / "config.json", run_config_to_json(cfg));
}

Corpus load_corpus(const RunConfig& cfg) {
  const fs::path manifest = cfg.corpus_dir / "manifest.json";
  if (!fs::exists(manifest)) {
    throw MorphologyError("no corpus at " + cfg.corpus_dir.string() + " (run gen-corpus first)");
  }
  return read_corpus(manifest);
}

std::vector<MorphologyTree> split_trees(const Corpus& corpus, const std::string& split,
                                        std::size_t limit = 0) {
  std::vector<MorphologyTree> trees;
  if (split == "train" || split == "all") trees = corpus.train;
  if (split == "test" || split == "all") trees.insert(trees.end(), corpus.test.begin(), corpus.test.end());
  if (limit > 0 && limit < trees.size()) trees.resize(limit);
  if (trees.empty()) throw ConfigError("split '" + split + "' selects no robots");
  return trees;
}

ControllerSpec variant_spec(const std::string& variant, const ControllerSpec& base,
                            const std::vector<MorphologyTree>& trees) {
  try {
    return spec_for_variant(variant, base, trees.size() == 1 ? trees[0].size() : 0);
  } catch (const std::invalid_argument& e) {
    throw ConfigError("variant '" + variant + "': " + e.what() +
                      (trees.size() == 1 ? "" : " (single-robot variants need exactly one robot)"));
  }
}

fs::path resolve_checkpoint(const fs::path& given) {
  if (given.empty()) throw CheckpointError("missing checkpoint: pass --checkpoint or set checkpoint");
  if (fs::is_directory(given)) {
    for (const char* name : {"checkpoints/final.ckpt", "checkpoints/latest.ckpt", "final.ckpt",
                             "latest.ckpt"}) {
      if (fs::exists(given / name)) return given / name;
    }
    throw CheckpointError("missing checkpoint: no checkpoint under " + given.string());
  }
  if (!fs::exists(given)) throw CheckpointError("missing checkpoint: " + given.string());
  return given;
}

struct Policy {
  Checkpoint checkpoint;
  Controller controller;
};

Policy load_policy(const RunConfig& cfg, const Corpus& corpus) {
  Checkpoint ck = load_checkpoint(resolve_checkpoint(cfg.checkpoint));
  if (ck.manifest_hash != corpus.manifest.hash) {
    throw CheckpointError("checkpoint was trained on corpus " + hex64(ck.manifest_hash) +
                          ", not " + hex64(corpus.manifest.hash));
  }
  Controller c = controller_from_checkpoint(ck);
  return {std::move(ck), std::move(c)};
}

std::vector<double> row_stds(const EvalReport& r) {
  std::vector<double> s;
  for (const RobotEval& e : r.rows) s.push_back(e.std);
  return s;
}

void eval_bars(const fs::path& path, const std::string& title, const EvalReport& report) {
  std::vector<std::string> labels;
  std::vector<double> means;
  for (const RobotEval& e : report.rows) {
    labels.push_back(e.robot);
    means.push_back(e.mean);
  }
  write_text_file(path, svg_bar_chart(title, labels, means, row_stds(report)));
}

// Reads a metrics stream back as a learning curve.
Series learning_curve(const fs::path& metrics, const std::string& name) {
  Series s;
  s.name = name;
  std::ifstream f(metrics);
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    const json j = json::parse(line);
    s.x.push_back(j.at("env_steps").get<double>());
    s.y.push_back(j.at("mean_return").is_null() ? std::nan("") : j.at("mean_return").get<double>());
  }
  return s;
}

// Drops records past the given iteration, so a resumed run's stream picks up
// exactly where its checkpoint left off.
void truncate_metrics(const fs::path& path, std::size_t last_iteration) {
  if (!fs::exists(path)) return;
  std::ifstream f(path);
  std::string line, kept;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    if (json::parse(line).at("iteration").get<std::size_t>() > last_iteration) break;
    kept += line + "\n";
  }
  f.close();
  write_text_file(path, kept);
}

void apply_override_error(const std::string& flag, const std::string& command) {
  throw ConfigError(flag + " does not apply to " + command);
}

}  // namespace

RunConfig effective_config(const std::string& command, const CommandOptions& o) {
  RunConfig cfg = o.config ? load_run_config(*o.config) : RunConfig{};
  if (o.corpus) cfg.corpus_dir = *o.corpus;
  if (o.checkpoint) cfg.checkpoint = *o.checkpoint;
  if (command == "gen-corpus") cfg.corpus_dir = o.out;
  if (o.seed) {
    if (command == "gen-corpus") cfg.corpus.seed = *o.seed;
    else if (command == "train") cfg.train.seed = *o.seed;
    else if (command == "eval") cfg.eval.seed = *o.seed;
    else if (command == "sweep") cfg.sweep.seed = *o.seed;
    else if (command == "diagnose") cfg.diagnose.seed = *o.seed;
    else if (command == "ablate") cfg.ablate.seeds = {*o.seed};
  }
  if (o.variant) {
    if (command == "train" || command == "diagnose") {
      cfg.train.variant = *o.variant;
    } else if (command == "ablate") {
      cfg.ablate.variants = {*o.variant};
    } else {
      apply_override_error("--variant", command);
    }
  }
  if (o.steps) {
    if (command == "train") cfg.train.steps = *o.steps;
    else if (command == "ablate") cfg.ablate.steps = *o.steps;
    else apply_override_error("--steps", command);
  }
  return cfg;
}

// ---------------------------------------------------------------- gen-corpus

void cmd_gen_corpus(const CommandOptions& o) {
  require_out(o);
  const RunConfig cfg = effective_config("gen-corpus", o);
  if (fs::exists(o.out) && !fs::is_empty(o.out)) {
    if (!o.force) {
      throw OutputExistsError(o.out.string() + " already exists (use --force to overwrite)");
    }
    fs::remove_all(o.out);
  }
  Corpus corpus = generate_corpus(cfg.corpus);
  write_corpus(o.out, corpus);
  write_config(o.out, cfg);
  log_line(o, "wrote " + std::to_string(corpus.train.size()) + " train and " +
                  std::to_string(corpus.test.size()) + " test robots to " + o.out.string() +
                  " (manifest " + hex64(corpus.manifest.hash) + ")");
}

// ---------------------------------------------------------------- train

void cmd_train(const CommandOptions& o) {
  require_out(o);
  const RunConfig cfg = effective_config("train", o);
  const Corpus corpus = load_corpus(cfg);
  const std::vector<MorphologyTree> trees = split_trees(corpus, cfg.train.split, cfg.train.robots);
  const ControllerSpec spec = variant_spec(cfg.train.variant, cfg.controller, trees);

  if (o.force && fs::exists(o.out)) fs::remove_all(o.out);
  const fs::path ckdir = o.out / "checkpoints", latest = ckdir / "latest.ckpt";
  const fs::path metrics_path = o.out / "metrics.jsonl";
  fs::create_directories(ckdir);

  Trainer trainer(trees, corpus.manifest.normalizer, make_env_factory(cfg.env), spec, cfg.ppo,
                  cfg.train.seed);
  if (fs::exists(latest)) {
    const Checkpoint ck = load_checkpoint(latest);
    if (ck.manifest_hash != corpus.manifest.hash) {
      throw CheckpointError("run " + o.out.string() + " was trained on a different corpus");
    }
    if (fs::exists(o.out / "config.json")) {
      const RunConfig before = load_run_config(o.out / "config.json");
      if (env_settings_to_json(before.env) != env_settings_to_json(cfg.env) ||
          before.train.variant != cfg.train.variant || before.train.split != cfg.train.split ||
          before.train.robots != cfg.train.robots) {
        throw CheckpointError("run " + o.out.string() +
                              " was started with a different environment, variant or robot set");
      }
    }
    trainer.resume(ck);
    truncate_metrics(metrics_path, trainer.iteration());
    log_line(o, "resuming at iteration " + std::to_string(trainer.iteration()) + ", " +
                    std::to_string(trainer.env_steps()) + " steps");
  } else {
    write_text_file(metrics_path, "");
  }
  write_config(o.out, cfg);
  write_text_file(o.out / "manifest_hash", hex64(corpus.manifest.hash) + "\n");

  std::ofstream metrics(metrics_path, std::ios::app);
  trainer.run(cfg.train.steps, [&](const IterationMetrics& m) {
    metrics << metrics_to_json(m, trainer.robots()) << '\n';
    metrics.flush();
    if (m.iteration % cfg.train.checkpoint_every == 0) {
      save_checkpoint(latest, trainer.checkpoint(corpus.manifest.hash));
    }
    char buf[160];
    std::snprintf(buf, sizeof buf, "iter %zu  steps %zu  return %s  updates %zu/%zu  kl %.4g",
                  m.iteration, m.env_steps, format_double(m.mean_return).c_str(),
                  m.update.updates, m.update.planned_updates, m.update.last_kl);
    log_line(o, buf);
  });
  metrics.close();
  const Checkpoint final_ck = trainer.checkpoint(corpus.manifest.hash);
  save_checkpoint(latest, final_ck);
  save_checkpoint(ckdir / "final.ckpt", final_ck);
  write_text_file(o.out / "learning_curve.svg",
                  svg_line_plot("training return (" + cfg.train.variant + ")", "env steps",
                                "mean episode return", {learning_curve(metrics_path, cfg.train.variant)}));
  log_line(o, "finished at " + std::to_string(trainer.env_steps()) + " steps; checkpoint " +
                  (ckdir / "final.ckpt").string());
}

// ---------------------------------------------------------------- eval / sweep

void cmd_eval(const CommandOptions& o) {
  require_out(o);
  const RunConfig cfg = effective_config("eval", o);
  const Corpus corpus = load_corpus(cfg);
  const Policy policy = load_policy(cfg, corpus);
  const std::vector<MorphologyTree> trees = split_trees(corpus, cfg.eval.split);
  const EvalSettings es{cfg.env, cfg.eval.rollouts, cfg.eval.seed};

  fs::create_directories(o.out);
  write_config(o.out, cfg);
  const EvalReport report = evaluate(policy.controller, policy.checkpoint.normalizer, trees, es);
  const EvalReport zero = evaluate_zero_action(trees, es);
  write_table(o.out / "eval.tsv", [&](std::ostream& s) { write_report_table(s, report); });
  write_table(o.out / "zero_action.tsv", [&](std::ostream& s) { write_report_table(s, zero); });
  eval_bars(o.out / "eval.svg", "evaluation return (" + cfg.eval.split + " split)", report);
  log_line(o, "mean return " + format_double(report.mean) + " over " +
                  std::to_string(report.rows.size()) + " robots (zero action " +
                  format_double(zero.mean) + ")");
}

void cmd_sweep(const CommandOptions& o) {
  require_out(o);
  const RunConfig cfg = effective_config("sweep", o);
  const Corpus corpus = load_corpus(cfg);
  const Policy policy = load_policy(cfg, corpus);
  const std::vector<MorphologyTree> trees = split_trees(corpus, cfg.sweep.split);
  SweepOptions so;
  for (const std::string& p : cfg.sweep.parameters) so.parameters.push_back(parse_variation(p));
  so.variants_per_robot = cfg.sweep.variants_per_robot;
  so.relative_range = cfg.sweep.relative_range;
  so.seed = cfg.sweep.seed;
  const EvalSettings es{cfg.env, cfg.sweep.rollouts, cfg.sweep.seed};

  fs::create_directories(o.out);
  write_config(o.out, cfg);
  const EvalReport report =
      variant_sweep(policy.controller, policy.checkpoint.normalizer, trees, so, es);
  write_table(o.out / "sweep.tsv", [&](std::ostream& s) { write_report_table(s, report); });

  // One bar per parameter: mean and spread over its variant rows.
  std::vector<std::string> labels;
  std::vector<double> means, stds;
  for (const std::string& p : cfg.sweep.parameters) {
    std::vector<double> v;
    for (const RobotEval& e : report.rows) {
      if (e.parameter == p) v.push_back(e.mean);
    }
    double m = 0.0, ss = 0.0;
    for (double x : v) m += x;
    m /= std::max<std::size_t>(v.size(), 1);
    for (double x : v) ss += (x - m) * (x - m);
    labels.push_back(p);
    means.push_back(m);
    stds.push_back(v.size() > 1 ? std::sqrt(ss / (v.size() - 1)) : 0.0);
  }
  write_text_file(o.out / "sweep.svg", svg_bar_chart("variant sweep", labels, means, stds));
  log_line(o, "evaluated " + std::to_string(report.rows.size()) + " variants, mean return " +
                  format_double(report.mean));
}

// ---------------------------------------------------------------- diagnose

void cmd_diagnose(const std::string& kind, const CommandOptions& o) {
  require_out(o);
  const RunConfig cfg = effective_config("diagnose", o);
  const Corpus corpus = load_corpus(cfg);
  std::vector<MorphologyTree> trees = split_trees(corpus, cfg.diagnose.split);
  if (!cfg.diagnose.robot.empty()) {
    std::erase_if(trees, [&](const MorphologyTree& t) { return t.id != cfg.diagnose.robot; });
    if (trees.empty()) throw ConfigError("diagnose.robot '" + cfg.diagnose.robot + "' not in split");
  }

  if (kind == "pe") {
    fs::create_directories(o.out);
    write_config(o.out, cfg);
    const PeReport r = pe_diagnostic(trees, corpus.manifest.normalizer, cfg.diagnose.pe_tolerance);
    write_table(o.out / "pe.tsv", [&](std::ostream& s) { write_pe_table(s, r); });
    std::vector<std::string> labels;
    std::vector<double> churn;
    for (const PeTreeChurn& t : r.trees) {
      labels.push_back(t.robot);
      churn.push_back(t.non_root ? static_cast<double>(t.changed) / t.non_root : 0.0);
    }
    write_text_file(o.out / "pe.svg", svg_bar_chart("DFS index churn under reversed child order",
                                                    labels, churn, {}));
    log_line(o, "index churn " + format_double(r.churn_fraction) + ", " +
                    std::to_string(r.collisions.size()) + " collisions");
    return;
  }

  if (kind == "ratio") {
    ControllerSpec spec = variant_spec(cfg.train.variant, cfg.controller, trees);
    spec.dropout = cfg.diagnose.dropout;
    fs::create_directories(o.out);
    write_config(o.out, cfg);
    for (const std::string& name : cfg.diagnose.dropout_modes) {
      const DropoutMode mode = parse_dropout_mode(name);
      const RatioDriftReport r =
          ratio_drift_diagnostic(trees, corpus.manifest.normalizer, cfg.env, spec, cfg.ppo, mode,
                                 cfg.diagnose.iterations, cfg.diagnose.seed);
      write_table(o.out / ("ratio_" + name + ".tsv"),
                  [&](std::ostream& s) { write_ratio_table(s, r); });
      std::vector<std::string> titles;
      std::vector<std::vector<std::size_t>> hists;
      for (std::size_t it = 0; it < r.epochs.size(); ++it) {
        for (std::size_t e = 0; e < r.epochs[it].size(); ++e) {
          titles.push_back("iteration " + std::to_string(it + 1) + ", epoch " + std::to_string(e + 1));
          hists.push_back(r.epochs[it][e]);
        }
      }
      write_text_file(o.out / ("ratio_" + name + ".svg"),
                      svg_histogram_panels("ratio distribution (" + name + " dropout)", titles,
                                           hists, 0.0, 2.0));
      const double at_one = r.first_minibatch.empty() ? std::nan("") : mass_at_one(r.first_minibatch[0]);
      log_line(o, name + ": first-minibatch mass at 1 = " + format_double(at_one));
    }
    return;
  }

  if (kind == "correlation" || kind == "trajectory") {
    const Policy policy = load_policy(cfg, corpus);
    fs::create_directories(o.out);
    write_config(o.out, cfg);
    if (kind == "correlation") {
      std::ostringstream summary;
      summary << "robot\tsamples\tmean_abs_offdiag\n";
      for (const MorphologyTree& t : trees) {
        const CorrelationMatrix m =
            action_correlation(policy.controller, policy.checkpoint.normalizer, t, cfg.env,
                               cfg.diagnose.episodes, cfg.diagnose.seed);
        write_table(o.out / ("correlation_" + t.id + ".tsv"),
                    [&](std::ostream& s) { write_correlation_table(s, m); });
        write_text_file(o.out / ("correlation_" + t.id + ".svg"),
                        svg_heatmap("action correlation, " + t.id, m));
        summary << t.id << '\t' << m.samples << '\t' << format_double(m.mean_abs_offdiag) << '\n';
      }
      write_text_file(o.out / "correlation.tsv", summary.str());
    } else {
      std::ostringstream summary;
      summary << "robot\treturn\n";
      for (const MorphologyTree& t : trees) {
        std::ostringstream rows;
        const double ret = record_trajectory(policy.controller, policy.checkpoint.normalizer, t,
                                             cfg.env, cfg.diagnose.seed, rows);
        write_text_file(o.out / ("trajectory_" + t.id + ".tsv"), rows.str());
        summary << t.id << '\t' << format_double(ret) << '\n';
      }
      write_text_file(o.out / "trajectory.tsv", summary.str());
    }
    log_line(o, "wrote " + kind + " reports for " + std::to_string(trees.size()) + " robots");
    return;
  }
  throw ConfigError("unknown diagnostic '" + kind + "' (pe, ratio, correlation, trajectory)");
}

// ---------------------------------------------------------------- ablate

namespace {

json run_to_json(const AblationRun& r) {
  auto num = [](double v) { return std::isfinite(v) ? json(v) : json(nullptr); };
  return {{"variant", r.variant},           {"seed", r.seed},
          {"robot", r.robot},               {"final_return", num(r.final_return)},
          {"last_train_return", num(r.last_train_return)}, {"env_steps", r.env_steps},
          {"iterations", r.iterations}};
}

AblationRun run_from_json(const json& j) {
  auto num = [](const json& v) { return v.is_null() ? std::nan("") : v.get<double>(); };
  AblationRun r;
  r.variant = j.at("variant");
  r.seed = j.at("seed");
  r.robot = j.at("robot");
  r.final_return = num(j.at("final_return"));
  r.last_train_return = num(j.at("last_train_return"));
  r.env_steps = j.at("env_steps");
  r.iterations = j.at("iterations");
  return r;
}

std::string run_label(const AblationRun& r) {
  return r.variant + "_seed" + std::to_string(r.seed) + "_" + (r.robot == "*" ? "all" : r.robot);
}

}  // namespace

void cmd_ablate(const CommandOptions& o) {
  require_out(o);
  const RunConfig cfg = effective_config("ablate", o);
  const Corpus corpus = load_corpus(cfg);
  const std::vector<MorphologyTree> trees = split_trees(corpus, cfg.ablate.split, cfg.ablate.robots);

  if (o.force && fs::exists(o.out)) fs::remove_all(o.out);
  const fs::path runs_path = o.out / "runs.jsonl";
  if (fs::exists(o.out / "config.json") &&
      read_text(o.out / "config.json") != run_config_to_json(cfg)) {
    throw OutputExistsError(o.out.string() +
                            " holds an ablation with a different config (use --force)");
  }
  fs::create_directories(o.out / "metrics");
  write_config(o.out, cfg);

  std::map<std::string, AblationRun> done;
  if (fs::exists(runs_path)) {
    std::ifstream f(runs_path);
    std::string line;
    while (std::getline(f, line)) {
      if (line.empty()) continue;
      const AblationRun r = run_from_json(json::parse(line));
      done[run_label(r)] = r;
    }
  }

  AblationConfig ac;
  ac.variants = cfg.ablate.variants;
  ac.seeds = cfg.ablate.seeds;
  ac.steps = cfg.ablate.steps;
  ac.single_robot = cfg.ablate.single_robot;
  ac.eval = EvalSettings{cfg.env, cfg.ablate.rollouts, cfg.ablate.eval_seed};

  std::ofstream runs_out(runs_path, std::ios::app);
  std::ofstream metrics;
  AblationHooks hooks;
  hooks.lookup = [&](const AblationRun& key) -> std::optional<AblationRun> {
    auto it = done.find(run_label(key));
    if (it == done.end()) return std::nullopt;
    log_line(o, run_label(key) + ": already done");
    return it->second;
  };
  hooks.on_iteration = [&](const AblationRun& run, const IterationMetrics& m, const Trainer& t) {
    if (m.iteration == 1) {
      metrics.close();
      metrics.open(o.out / "metrics" / (run_label(run) + ".jsonl"), std::ios::trunc);
    }
    metrics << metrics_to_json(m, t.robots()) << '\n';
    metrics.flush();
    if (m.iteration % 10 == 0) {
      log_line(o, run_label(run) + ": iter " + std::to_string(m.iteration) + ", " +
                      std::to_string(m.env_steps) + " steps, return " +
                      format_double(m.mean_return));
    }
  };
  hooks.on_run_done = [&](const AblationRun& run, const Trainer&) {
    metrics.close();
    runs_out << run_to_json(run).dump() << '\n';
    runs_out.flush();
    log_line(o, run_label(run) + ": final return " + format_double(run.final_return));
  };

  const AblationResult result = ablation_suite(trees, corpus.manifest.normalizer, cfg.controller,
                                               cfg.ppo, ac, hooks);
  write_table(o.out / "ablation_runs.tsv",
              [&](std::ostream& s) { write_ablation_runs(s, result.runs); });
  write_table(o.out / "ablation_summary.tsv",
              [&](std::ostream& s) { write_ablation_summary(s, result); });

  std::vector<std::string> labels;
  std::vector<double> means, stds;
  for (const AblationSummary& s : result.summary) {
    labels.push_back(s.variant);
    means.push_back(s.mean);
    stds.push_back(s.std);
  }
  labels.push_back("zero-action");
  means.push_back(result.zero_action);
  stds.push_back(0.0);
  write_text_file(o.out / "ablation.svg", svg_bar_chart("final return", labels, means, stds));
  std::vector<Series> curves;
  for (const AblationRun& r : result.runs) {
    const fs::path p = o.out / "metrics" / (run_label(r) + ".jsonl");
    if (fs::exists(p)) curves.push_back(learning_curve(p, run_label(r)));
  }
  write_text_file(o.out / "learning_curves.svg",
                  svg_line_plot("training return", "env steps", "mean episode return", curves));
  for (const AblationSummary& s : result.summary) {
    log_line(o, s.variant + ": " + format_double(s.mean) + " +- " + format_double(s.std) +
                    " over " + std::to_string(s.runs) + " runs");
  }
}

// ---------------------------------------------------------------- errors

void tune_allocator() {
  mallopt(M_MMAP_THRESHOLD, 256 << 20);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
}

std::string error_class(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return "ConfigError";
  if (dynamic_cast<const OutputExistsError*>(&e)) return "OutputExists";
  if (dynamic_cast<const MorphologyError*>(&e)) return "CorpusError";
  if (dynamic_cast<const CheckpointError*>(&e)) return "CheckpointError";
  if (dynamic_cast<const EvalError*>(&e)) return "EvalError";
  if (dynamic_cast<const EnvError*>(&e)) return "EnvError";
  if (dynamic_cast<const NumericalError*>(&e)) return "NumericalError";
  if (dynamic_cast<const ShapeError*>(&e)) return "ShapeError";
  if (dynamic_cast<const fs::filesystem_error*>(&e)) return "IoError";
  if (dynamic_cast<const json::exception*>(&e)) return "FormatError";
  if (dynamic_cast<const std::invalid_argument*>(&e)) return "InvalidArgument";
  return "InternalError";
}

int exit_code_for(const std::string& cls) {
  static const std::map<std::string, int> codes = {
      {"UsageError", 2},     {"InvalidArgument", 2}, {"ConfigError", 3},
      {"OutputExists", 4},   {"CorpusError", 5},     {"CheckpointError", 6},
      {"EvalError", 7},      {"EnvError", 8},        {"NumericalError", 9},
      {"ShapeError", 9},     {"IoError", 10},        {"FormatError", 11}};
  auto it = codes.find(cls);
  return it == codes.end() ? 1 : it->second;
}

}  // namespace morphctl
