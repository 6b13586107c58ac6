#pragma once

#include <cstdint>
#include <exception>
#include <filesystem>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>

#include "morphctl/cli/run_config.hpp"

namespace morphctl {

class OutputExistsError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Flags shared by every command. Overrides are applied to the loaded config,
// and the result is what gets persisted as <out>/config.json.
struct CommandOptions {
  std::optional<std::filesystem::path> config;
  std::filesystem::path out;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> variant;
  std::optional<std::size_t> steps;
  std::optional<std::filesystem::path> corpus;
  std::optional<std::filesystem::path> checkpoint;
  bool force = false;
  std::ostream* log = nullptr;  // progress lines; nullptr keeps quiet
};

// Resolves the config (file or defaults) and applies the overrides that make
// sense for the named command.
RunConfig effective_config(const std::string& command, const CommandOptions& options);

void cmd_gen_corpus(const CommandOptions& options);
void cmd_train(const CommandOptions& options);
void cmd_eval(const CommandOptions& options);
void cmd_sweep(const CommandOptions& options);
// kind: pe, ratio, correlation or trajectory.
void cmd_diagnose(const std::string& kind, const CommandOptions& options);
void cmd_ablate(const CommandOptions& options);

// Keeps freed tensor buffers in the heap instead of returning them to the OS
// after every step. Call once at process start.
void tune_allocator();

// Stable class name for the one-line error report, and the exit code.
std::string error_class(const std::exception& e);
int exit_code_for(const std::string& error_class);

}  // namespace morphctl
