#include "morphctl/controller/spec.hpp"

#include <stdexcept>

#include "json.hpp"

namespace morphctl {

using nlohmann::json;

std::string_view per_node_name(PerNode p) {
  switch (p) {
    case PerNode::kNone: return "none";
    case PerNode::kEmbedding: return "embedding";
    case PerNode::kDecoder: return "decoder";
  }
  return "none";
}

PerNode parse_per_node(std::string_view name) {
  if (name == "none") return PerNode::kNone;
  if (name == "embedding") return PerNode::kEmbedding;
  if (name == "decoder") return PerNode::kDecoder;
  throw std::invalid_argument("unknown per-node mode '" + std::string(name) + "'");
}

void ControllerSpec::validate() const {
  auto fail = [](const std::string& m) { throw std::invalid_argument("controller spec: " + m); };
  if (obs_dim == 0 || act_dim == 0) fail("obs_dim and act_dim must be positive");
  if (max_nodes == 0) fail("max_nodes must be positive");
  if (arch == Architecture::kMlp) {
    if (use_hn || use_fa || use_pe || per_node != PerNode::kNone)
      fail("the MLP architecture takes no modulation flags");
    if (robot_nodes == 0) fail("the MLP architecture needs robot_nodes");
    if (mlp_hidden.empty()) fail("mlp_hidden is empty");
    return;
  }
  if (d_model == 0 || heads == 0 || layers == 0 || d_head == 0 || ff_dim == 0)
    fail("transformer sizes must be positive");
  if (d_model % heads != 0) fail("d_model must be divisible by heads");
  if (!(dropout >= 0.0 && dropout < 1.0)) fail("dropout must lie in [0, 1)");
  if (decoder_hidden == 0 || critic_hidden == 0) fail("head sizes must be positive");
  if (use_hn && (hn_layers == 0 || hn_hidden == 0)) fail("HN encoder sizes must be positive");
  if (use_fa && (fa_layers == 0 || fa_hidden == 0)) fail("FA encoder sizes must be positive");
  if (ext_dim > 0 && (ext_hidden == 0 || ext_out == 0)) fail("ext MLP sizes must be positive");
  if (per_node != PerNode::kNone) {
    if (use_hn) fail("per-node parameters and HN are exclusive");
    if (robot_nodes == 0 || robot_nodes > max_nodes)
      fail("per-node parameters need 0 < robot_nodes <= max_nodes");
  }
}

const std::vector<std::string>& variant_names() {
  static const std::vector<std::string> names = {"baseline", "pe", "fa", "hn", "fa+hn",
                                                 "mlp-sr", "per-node-embedding",
                                                 "per-node-decoder"};
  return names;
}

ControllerSpec spec_for_variant(std::string_view variant, ControllerSpec base,
                                std::size_t robot_nodes) {
  ControllerSpec s = base;
  s.arch = Architecture::kTransformer;
  s.use_hn = s.use_fa = s.use_pe = false;
  s.per_node = PerNode::kNone;
  s.robot_nodes = 0;
  if (variant == "baseline") {
  } else if (variant == "pe") {
    s.use_pe = true;
  } else if (variant == "fa") {
    s.use_fa = true;
  } else if (variant == "hn") {
    s.use_hn = true;
  } else if (variant == "fa+hn") {
    s.use_fa = s.use_hn = true;
  } else if (variant == "mlp-sr") {
    s.arch = Architecture::kMlp;
    s.robot_nodes = robot_nodes;
  } else if (variant == "per-node-embedding") {
    s.per_node = PerNode::kEmbedding;
    s.robot_nodes = robot_nodes;
  } else if (variant == "per-node-decoder") {
    s.per_node = PerNode::kDecoder;
    s.robot_nodes = robot_nodes;
  } else {
    throw std::invalid_argument("unknown controller variant '" + std::string(variant) + "'");
  }
  s.validate();
  return s;
}

std::string spec_to_json(const ControllerSpec& s) {
  json j;
  j["arch"] = s.arch == Architecture::kMlp ? "mlp" : "transformer";
  j["use_hn"] = s.use_hn;
  j["use_fa"] = s.use_fa;
  j["use_pe"] = s.use_pe;
  j["per_node"] = per_node_name(s.per_node);
  j["robot_nodes"] = s.robot_nodes;
  j["obs_dim"] = s.obs_dim;
  j["ctx_dim"] = s.ctx_dim;
  j["act_dim"] = s.act_dim;
  j["ext_dim"] = s.ext_dim;
  j["max_nodes"] = s.max_nodes;
  j["d_model"] = s.d_model;
  j["heads"] = s.heads;
  j["layers"] = s.layers;
  j["ff_dim"] = s.ff_dim;
  j["d_head"] = s.d_head;
  j["dropout"] = s.dropout;
  j["hn_hidden"] = s.hn_hidden;
  j["hn_layers"] = s.hn_layers;
  j["fa_hidden"] = s.fa_hidden;
  j["fa_layers"] = s.fa_layers;
  j["decoder_hidden"] = s.decoder_hidden;
  j["critic_hidden"] = s.critic_hidden;
  j["ext_hidden"] = s.ext_hidden;
  j["ext_out"] = s.ext_out;
  j["mlp_hidden"] = s.mlp_hidden;
  j["init_log_std"] = s.init_log_std;
  return j.dump();
}

ControllerSpec spec_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("controller spec: ") + e.what());
  }
  if (!j.is_object()) throw std::invalid_argument("controller spec: expected an object");
  ControllerSpec s;
  auto get = [&](const char* key, auto& field) {
    if (!j.contains(key)) return;
    try {
      j.at(key).get_to(field);
    } catch (const json::exception&) {
      throw std::invalid_argument(std::string("controller spec: field ") + key + ": bad type");
    }
  };
  std::string arch = "transformer", per_node = "none";
  get("arch", arch);
  if (arch == "mlp") {
    s.arch = Architecture::kMlp;
  } else if (arch != "transformer") {
    throw std::invalid_argument("controller spec: field arch: unknown value '" + arch + "'");
  }
  get("use_hn", s.use_hn);
  get("use_fa", s.use_fa);
  get("use_pe", s.use_pe);
  get("per_node", per_node);
  s.per_node = parse_per_node(per_node);
  get("robot_nodes", s.robot_nodes);
  get("obs_dim", s.obs_dim);
  get("ctx_dim", s.ctx_dim);
  get("act_dim", s.act_dim);
  get("ext_dim", s.ext_dim);
  get("max_nodes", s.max_nodes);
  get("d_model", s.d_model);
  get("heads", s.heads);
  get("layers", s.layers);
  get("ff_dim", s.ff_dim);
  get("d_head", s.d_head);
  get("dropout", s.dropout);
  get("hn_hidden", s.hn_hidden);
  get("hn_layers", s.hn_layers);
  get("fa_hidden", s.fa_hidden);
  get("fa_layers", s.fa_layers);
  get("decoder_hidden", s.decoder_hidden);
  get("critic_hidden", s.critic_hidden);
  get("ext_hidden", s.ext_hidden);
  get("ext_out", s.ext_out);
  get("mlp_hidden", s.mlp_hidden);
  get("init_log_std", s.init_log_std);
  s.validate();
  return s;
}

}  // namespace morphctl
