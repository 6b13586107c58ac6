#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "morphctl/controller/controller.hpp"

namespace morphctl {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct NamedTensor {
  std::string name;
  Tensor value;
};

// File layout: "MORPHCTL" magic, u32 version, u64 header length, a JSON
// header (spec, normalizer, manifest hash, tensor names and shapes, metadata),
// then the raw little-endian doubles of every listed tensor in order.
struct Checkpoint {
  ControllerSpec spec;
  ContextNormalizer normalizer = ContextNormalizer::identity();
  std::uint64_t manifest_hash = 0;
  std::vector<NamedTensor> params;
  std::vector<NamedTensor> extra;  // optimizer state and similar
  std::string metadata = "{}";     // JSON object
};

Checkpoint make_checkpoint(const Controller& controller, const ContextNormalizer& normalizer,
                           std::uint64_t manifest_hash);
// Writes through a temporary file and renames it into place.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Copies parameters into controller. Rejects a checkpoint whose spec, names
// or shapes differ from the controller's.
void restore_parameters(Controller& controller, const Checkpoint& checkpoint);
Controller controller_from_checkpoint(const Checkpoint& checkpoint);

}  // namespace morphctl
