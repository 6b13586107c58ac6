#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "morphctl/cli/commands.hpp"

namespace {

void report_error(const std::string& cls, const std::string& message) {
  std::string one_line = message;
  for (char& c : one_line) {
    if (c == '\n' || c == '\r') c = ' ';
  }
  std::cerr << "error: " << cls << ": " << one_line << std::endl;
}

}  // namespace

int main(int argc, char** argv) {
  using namespace morphctl;
  tune_allocator();

  CLI::App app{"Modular morphology controllers: corpus generation, training and evaluation."};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every command");

  CommandOptions opts;
  opts.log = &std::cerr;
  std::string config, out, variant, corpus, checkpoint;
  std::uint64_t seed = 0;
  std::size_t steps = 0;
  bool quiet = false;

  auto common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config, "Run config (JSON); defaults when omitted")
        ->check(CLI::ExistingFile);
    cmd->add_option("--out", out, "Output directory")->required();
    cmd->add_option("--seed", seed, "Seed override for this command");
    cmd->add_option("--corpus", corpus, "Corpus directory (overrides corpus.dir)");
    cmd->add_flag("--quiet", quiet, "No progress output");
  };

  auto* gen = app.add_subcommand("gen-corpus", "Sample train/test morphologies and a manifest");
  common(gen);
  gen->add_flag("--force", opts.force, "Replace an existing output directory");

  auto* train = app.add_subcommand("train", "Train a controller; resumes from the latest checkpoint");
  common(train);
  train->add_option("--variant", variant, "baseline, fa, hn, fa+hn, pe, mlp-sr, per-node-embedding, per-node-decoder");
  train->add_option("--steps", steps, "Environment step budget");
  train->add_flag("--force", opts.force, "Start over instead of resuming");

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a corpus split");
  common(eval);
  eval->add_option("--checkpoint", checkpoint, "Checkpoint file or training run directory");

  auto* sweep = app.add_subcommand("sweep", "Evaluate on parametric variants of the corpus");
  common(sweep);
  sweep->add_option("--checkpoint", checkpoint, "Checkpoint file or training run directory");

  auto* diagnose = app.add_subcommand("diagnose", "Diagnostics: pe, ratio, correlation, trajectory");
  common(diagnose);
  std::string kind;
  diagnose->add_option("kind", kind, "pe | ratio | correlation | trajectory")
      ->required()
      ->check(CLI::IsMember({"pe", "ratio", "correlation", "trajectory"}));
  diagnose->add_option("--checkpoint", checkpoint, "Checkpoint (correlation, trajectory)");
  diagnose->add_option("--variant", variant, "Controller variant for the ratio diagnostic");

  auto* ablate = app.add_subcommand("ablate", "Train and compare controller variants");
  common(ablate);
  ablate->add_option("--variant", variant, "Run a single variant");
  ablate->add_option("--steps", steps, "Step budget per run");
  ablate->add_flag("--force", opts.force, "Discard finished runs in the output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    report_error("UsageError", e.what());
    return exit_code_for("UsageError");
  }

  CLI::App* cmd = app.get_subcommands().front();
  if (!config.empty()) opts.config = config;
  opts.out = out;
  if (cmd->count("--seed")) opts.seed = seed;
  if (cmd->get_option_no_throw("--variant") && cmd->count("--variant")) opts.variant = variant;
  if (cmd->get_option_no_throw("--steps") && cmd->count("--steps")) opts.steps = steps;
  if (cmd->count("--corpus")) opts.corpus = corpus;
  if (cmd->get_option_no_throw("--checkpoint") && cmd->count("--checkpoint")) {
    opts.checkpoint = checkpoint;
  }
  if (quiet) opts.log = nullptr;

  try {
    const std::string name = cmd->get_name();
    if (name == "gen-corpus") cmd_gen_corpus(opts);
    else if (name == "train") cmd_train(opts);
    else if (name == "eval") cmd_eval(opts);
    else if (name == "sweep") cmd_sweep(opts);
    else if (name == "diagnose") cmd_diagnose(kind, opts);
    else if (name == "ablate") cmd_ablate(opts);
  } catch (const std::exception& e) {
    const std::string cls = error_class(e);
    report_error(cls, e.what());
    return exit_code_for(cls);
  }
  return 0;
}
