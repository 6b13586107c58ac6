#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "morphctl/envsim/env.hpp"
#include "morphctl/morphology/morphology.hpp"

namespace morphctl {

enum class Architecture { kTransformer, kMlp };
// Single-robot ablation: one parameter set per node for the named layer.
enum class PerNode { kNone, kEmbedding, kDecoder };

std::string_view per_node_name(PerNode p);
PerNode parse_per_node(std::string_view name);

struct ControllerSpec {
  Architecture arch = Architecture::kTransformer;
  bool use_hn = false;
  bool use_fa = false;
  bool use_pe = false;
  PerNode per_node = PerNode::kNone;
  std::size_t robot_nodes = 0;  // node count of the single robot (per-node and MLP modes)

  std::size_t obs_dim = kObsDim;
  std::size_t ctx_dim = kContextDim;
  std::size_t act_dim = 1;
  std::size_t ext_dim = 0;  // 0 disables the exteroceptive branch
  std::size_t max_nodes = kMaxLimbs;

  std::size_t d_model = 64;
  std::size_t heads = 2;
  std::size_t layers = 3;
  std::size_t ff_dim = 256;
  std::size_t d_head = 32;  // per-head query/key and value width
  double dropout = 0.0;     // applied to the node embedding

  std::size_t hn_hidden = 128, hn_layers = 2;
  std::size_t fa_hidden = 128, fa_layers = 3;
  std::size_t decoder_hidden = 64;
  std::size_t critic_hidden = 64;
  std::size_t ext_hidden = 64, ext_out = 32;
  std::vector<std::size_t> mlp_hidden = {256, 256, 256};
  double init_log_std = 0.0;

  // Throws std::invalid_argument on inconsistent settings.
  void validate() const;
  std::size_t node_input_dim() const { return obs_dim + ctx_dim; }
  std::size_t decoder_input_dim() const { return d_model + (ext_dim > 0 ? ext_out : 0); }

  friend bool operator==(const ControllerSpec&, const ControllerSpec&) = default;
};

// "baseline", "fa", "hn", "fa+hn", "pe" (baseline with PE), "mlp-sr",
// "per-node-embedding", "per-node-decoder". robot_nodes is required by the
// single-robot variants.
ControllerSpec spec_for_variant(std::string_view variant, ControllerSpec base = {},
                                std::size_t robot_nodes = 0);
const std::vector<std::string>& variant_names();

std::string spec_to_json(const ControllerSpec& spec);
ControllerSpec spec_from_json(const std::string& text);

}  // namespace morphctl
