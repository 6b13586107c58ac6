#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "morphctl/controller/spec.hpp"
#include "morphctl/morphology/morphology.hpp"
#include "morphctl/numerics/ops.hpp"
#include "morphctl/numerics/param_store.hpp"
#include "morphctl/numerics/tape.hpp"

namespace morphctl {

// Raised when a forward pass produces NaN or infinity; names the submodule.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Time-invariant per-robot inputs.
struct RobotInfo {
  std::string id;
  std::size_t n = 0;
  Tensor context;             // [n, ctx_dim], normalized
  std::vector<int> dfs_pos;   // per limb
  std::uint64_t key = 0;      // content hash of the tree
};

RobotInfo make_robot_info(const MorphologyTree& tree, const ContextNormalizer& normalizer);

// Observations of several robots padded to a common node count.
struct NodeBatch {
  std::size_t groups = 0;
  std::size_t n = 0;
  Tensor obs;   // [groups * n, obs_dim]
  Tensor ext;   // [groups, ext_dim], empty when ext_dim == 0
  Mask mask;    // [groups * n], 1 for real nodes
  Mask actuated;  // real non-root nodes
  std::vector<const RobotInfo*> robots;

  std::size_t rows() const { return groups * n; }
};

class BatchBuilder {
 public:
  explicit BatchBuilder(const ControllerSpec& spec) : spec_(spec) {}
  // obs: [robot.n, obs_dim]; ext: [ext_dim] or null when ext_dim == 0.
  // The robot must outlive every batch built from it.
  void add(const RobotInfo& robot, const Tensor& obs, const Tensor* ext = nullptr);
  std::size_t size() const { return robots_.size(); }
  // Pads to max(pad_to, largest robot).
  NodeBatch build(std::size_t pad_to = 0) const;

 private:
  const ControllerSpec& spec_;
  std::vector<const RobotInfo*> robots_;
  std::vector<Tensor> obs_;
  std::vector<Tensor> ext_;
};

// Per-robot quantities that depend only on the context: HN-generated layer
// parameters and fixed-attention logits.
struct MorphCache {
  std::uint64_t key = 0;
  std::vector<Tensor> hn_params;  // per modulated layer, [n, d_in * d_out + d_out]
  std::vector<Tensor> fa_logits;  // per transformer layer, [heads * n, n]
};

struct ForwardOptions {
  // One cache per batch group; empty means HN/FA are computed on the tape
  // (training). A partial or mismatched cache list is rejected.
  std::span<const MorphCache* const> caches;
  // Dropout is active when spec.dropout > 0 and either a mask or an rng is given.
  const Mask* dropout_mask = nullptr;  // [rows * d_model]
  Rng* dropout_rng = nullptr;
  bool keep_attention = false;
};

struct PolicyVars {
  Var mu;       // [rows, act_dim]
  Var log_std;  // [act_dim]
  Var value;    // [groups]
  Mask dropout_mask;             // empty when dropout was inactive
  std::vector<Var> attention;    // per layer [groups * heads * n, n] when requested
};

// A modulated linear layer: shared weights, HN-generated, or per-node.
struct LayerShape {
  std::string name;  // shared parameter prefix, e.g. "decoder.l0"
  std::string tag;   // HN head / per-node table suffix, e.g. "dec0"
  std::size_t d_in = 0, d_out = 0;
  std::size_t packed() const { return d_in * d_out + d_out; }
};

class Controller {
 public:
  // Registers and initializes every parameter; deterministic given seed.
  Controller(ControllerSpec spec, std::uint64_t seed);

  const ControllerSpec& spec() const { return spec_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  PolicyVars forward(Tape& tape, const NodeBatch& batch, const ForwardOptions& options = {});
  MorphCache build_cache(const RobotInfo& robot);

  // Modulated layers in HN head order: embedding, then decoder layers.
  const std::vector<LayerShape>& modulated_layers() const { return modulated_; }

  // Shared-parameter controller equal to this one while HN head weights are
  // zero (or per-node tables are uniform): the HN bias heads (row 0 of the
  // per-node tables) become the shared layers, every other parameter is copied.
  Controller shared_equivalent() const;

 private:
  Controller(ControllerSpec spec);
  void register_params();

  void add_linear(const std::string& name, std::size_t d_out, std::size_t d_in,
                  double scale = 1.0);
  std::vector<Var> hn_generate(Tape& tape, Var contexts);
  Var fa_encode(Tape& tape, Var contexts);
  Var affine(Tape& tape, std::size_t layer, Var x, const std::vector<Var>& generated,
             const std::vector<std::size_t>& index);
  PolicyVars mlp_forward(Tape& tape, const NodeBatch& batch);

  ControllerSpec spec_;
  ParamStore params_;
  std::vector<LayerShape> modulated_;
};

// Total scalar parameter count.
inline std::size_t parameter_count(const Controller& c) { return c.params().scalar_count(); }
// Group of a parameter name: the prefix before the first '.'.
std::string parameter_group(const std::string& name);

}  // namespace morphctl
