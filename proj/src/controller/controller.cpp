#include "morphctl/controller/controller.hpp"

#include <algorithm>
#include <map>
#include <stdexcept>

namespace morphctl {

namespace {

void check_finite(Var v, const std::string& submodule) {
  if (!v.value().all_finite()) {
    throw NumericalError("non-finite values in controller submodule '" + submodule + "'");
  }
}

Var param(Tape& tape, ParamStore& store, const std::string& name) {
  return tape.param(store, name);
}

Var shared_linear(Tape& tape, ParamStore& store, Var x, const std::string& prefix) {
  return ops::linear(x, param(tape, store, prefix + ".w"), param(tape, store, prefix + ".b"));
}

}  // namespace

std::string parameter_group(const std::string& name) {
  const auto dot = name.find('.');
  return dot == std::string::npos ? name : name.substr(0, dot);
}

RobotInfo make_robot_info(const MorphologyTree& tree, const ContextNormalizer& normalizer) {
  validate(tree);
  RobotInfo r;
  r.id = tree.id;
  r.n = tree.size();
  r.context = context_matrix(tree, normalizer);
  r.dfs_pos = dfs_positions(tree);
  r.key = content_hash(tree);
  return r;
}

// ---------------------------------------------------------------- batching

void BatchBuilder::add(const RobotInfo& robot, const Tensor& obs, const Tensor* ext) {
  if (robot.n == 0 || robot.n > spec_.max_nodes) {
    throw std::invalid_argument("batch: robot '" + robot.id + "' has " +
                                std::to_string(robot.n) + " nodes, limit " +
                                std::to_string(spec_.max_nodes));
  }
  if (obs.rank() != 2 || obs.dim(0) != robot.n || obs.dim(1) != spec_.obs_dim) {
    throw std::invalid_argument("batch: observation shape " + shape_string(obs.shape()) +
                                " does not match robot '" + robot.id + "'");
  }
  if (spec_.ext_dim > 0) {
    if (ext == nullptr || ext->size() != spec_.ext_dim) {
      throw std::invalid_argument("batch: exteroceptive input of size " +
                                  std::to_string(spec_.ext_dim) + " required");
    }
    ext_.push_back(*ext);
  }
  robots_.push_back(&robot);
  obs_.push_back(obs);
}

NodeBatch BatchBuilder::build(std::size_t pad_to) const {
  NodeBatch b;
  b.groups = robots_.size();
  if (b.groups == 0) throw std::invalid_argument("batch: no robots added");
  b.n = pad_to;
  for (const RobotInfo* r : robots_) b.n = std::max(b.n, r->n);
  if (b.n > spec_.max_nodes) throw std::invalid_argument("batch: padding exceeds max_nodes");
  const std::size_t rows = b.rows(), d = spec_.obs_dim;
  b.obs = Tensor::matrix(rows, d);
  b.mask.assign(rows, 0);
  b.actuated.assign(rows, 0);
  for (std::size_t g = 0; g < b.groups; ++g) {
    const Tensor& o = obs_[g];
    for (std::size_t i = 0; i < robots_[g]->n; ++i) {
      std::copy(o.row(i), o.row(i) + d, b.obs.row(g * b.n + i));
      b.mask[g * b.n + i] = 1;
      b.actuated[g * b.n + i] = i > 0 ? 1 : 0;
    }
  }
  if (spec_.ext_dim > 0) {
    b.ext = Tensor::matrix(b.groups, spec_.ext_dim);
    for (std::size_t g = 0; g < b.groups; ++g) {
      std::copy(ext_[g].data(), ext_[g].data() + spec_.ext_dim, b.ext.row(g));
    }
  }
  b.robots = robots_;
  return b;
}

// ---------------------------------------------------------------- construction

Controller::Controller(ControllerSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  register_params();
}

Controller::Controller(ControllerSpec spec, std::uint64_t seed) : Controller(std::move(spec)) {
  Rng rng(seed);
  params_.initialize(rng);
  // Per-node tables start with every node sharing one parameter set.
  for (const LayerShape& l : modulated_) {
    const std::string name = "pernode." + l.tag;
    if (!params_.contains(name)) continue;
    Tensor& t = params_.get(name).value;
    for (std::size_t r = 1; r < t.rows(); ++r) std::copy(t.row(0), t.row(0) + t.cols(), t.row(r));
  }
}

namespace {

// The action head starts 10x smaller than fan-in so initial mean actions
// sit near zero.
constexpr double kActionHeadScale = 0.1;

InitSpec scaled_fan_in(std::size_t fan_in, double scale) {
  return InitSpec::uniform(scale / std::sqrt(static_cast<double>(fan_in)));
}

InitSpec layer_init(const LayerShape& l) {
  return scaled_fan_in(l.d_in, l.tag == "dec1" ? kActionHeadScale : 1.0);
}

}  // namespace

void Controller::add_linear(const std::string& name, std::size_t d_out, std::size_t d_in,
                            double scale) {
  params_.add(name + ".w", {d_out, d_in}, scaled_fan_in(d_in, scale));
  params_.add(name + ".b", {d_out}, scaled_fan_in(d_in, scale));
}

void Controller::register_params() {
  const ControllerSpec& s = spec_;
  if (s.arch == Architecture::kMlp) {
    const std::size_t in = s.robot_nodes * s.obs_dim + s.ext_dim;
    for (const char* head : {"actor", "critic"}) {
      std::size_t prev = in;
      for (std::size_t i = 0; i < s.mlp_hidden.size(); ++i) {
        add_linear("mlp." + std::string(head) + std::to_string(i), s.mlp_hidden[i], prev);
        prev = s.mlp_hidden[i];
      }
      const std::size_t out = head[0] == 'a' ? s.robot_nodes * s.act_dim : 1;
      add_linear("mlp." + std::string(head) + "_out", out, prev,
                 head[0] == 'a' ? kActionHeadScale : 1.0);
    }
    params_.add("log_std", {s.act_dim}, InitSpec::constant(s.init_log_std));
    return;
  }

  modulated_ = {{"embed", "embed", s.node_input_dim(), s.d_model},
                {"decoder.l0", "dec0", s.decoder_input_dim(), s.decoder_hidden},
                {"decoder.l1", "dec1", s.decoder_hidden, s.act_dim}};
  auto register_modulated = [&](std::size_t k) {
    const LayerShape& l = modulated_[k];
    const bool per_node = (k == 0 && s.per_node == PerNode::kEmbedding) ||
                          (k > 0 && s.per_node == PerNode::kDecoder);
    if (per_node) {
      params_.add("pernode." + l.tag, {s.robot_nodes, l.packed()}, layer_init(l));
    } else if (!s.use_hn) {
      add_linear(l.name, l.d_out, l.d_in, l.tag == "dec1" ? kActionHeadScale : 1.0);
    }
  };

  register_modulated(0);
  if (s.use_pe) params_.add("pe.table", {s.max_nodes, s.d_model}, InitSpec::fan_in(s.d_model));
  const std::size_t inner = s.heads * s.d_head;
  for (std::size_t l = 0; l < s.layers; ++l) {
    const std::string p = "layer" + std::to_string(l) + ".";
    add_linear(p + "q", inner, s.d_model);
    add_linear(p + "k", inner, s.d_model);
    add_linear(p + "v", inner, s.d_model);
    add_linear(p + "o", s.d_model, inner);
    params_.add(p + "ln1.g", {s.d_model}, InitSpec::constant(1.0));
    params_.add(p + "ln1.b", {s.d_model}, InitSpec::zeros());
    add_linear(p + "ff1", s.ff_dim, s.d_model);
    add_linear(p + "ff2", s.d_model, s.ff_dim);
    params_.add(p + "ln2.g", {s.d_model}, InitSpec::constant(1.0));
    params_.add(p + "ln2.b", {s.d_model}, InitSpec::zeros());
  }
  if (s.ext_dim > 0) {
    add_linear("ext.l0", s.ext_hidden, s.ext_dim);
    add_linear("ext.l1", s.ext_out, s.ext_hidden);
  }
  register_modulated(1);
  register_modulated(2);
  add_linear("critic.l0", s.critic_hidden, s.decoder_input_dim());
  add_linear("critic.l1", 1, s.critic_hidden);
  params_.add("log_std", {s.act_dim}, InitSpec::constant(s.init_log_std));

  if (s.use_hn) {
    std::size_t prev = s.ctx_dim;
    for (std::size_t i = 0; i < s.hn_layers; ++i) {
      add_linear("hn.enc" + std::to_string(i), s.hn_hidden, prev);
      prev = s.hn_hidden;
    }
    // Bias-HyperInit: zero weights, biases drawn like the base layer's.
    for (const LayerShape& l : modulated_) {
      params_.add("hn.head." + l.tag + ".w", {l.packed(), prev}, InitSpec::zeros());
      params_.add("hn.head." + l.tag + ".b", {l.packed()}, layer_init(l));
    }
  }
  if (s.use_fa) {
    std::size_t prev = s.ctx_dim;
    for (std::size_t i = 0; i < s.fa_layers; ++i) {
      add_linear("fa.enc" + std::to_string(i), s.fa_hidden, prev);
      prev = s.fa_hidden;
    }
    add_linear("fa.out", s.d_model, prev);
  }
}

Controller Controller::shared_equivalent() const {
  ControllerSpec s = spec_;
  s.use_hn = false;
  s.per_node = PerNode::kNone;
  s.robot_nodes = 0;
  Controller out(s);
  for (Parameter& p : out.params_) {
    if (params_.contains(p.name)) p.value = params_.get(p.name).value;
  }
  for (const LayerShape& l : modulated_) {
    const double* packed = nullptr;
    if (params_.contains("hn.head." + l.tag + ".b")) {
      packed = params_.get("hn.head." + l.tag + ".b").value.data();
    } else if (params_.contains("pernode." + l.tag)) {
      packed = params_.get("pernode." + l.tag).value.row(0);
    } else {
      continue;
    }
    Tensor& w = out.params_.get(l.name + ".w").value;
    Tensor& b = out.params_.get(l.name + ".b").value;
    for (std::size_t i = 0; i < l.d_in; ++i) {
      for (std::size_t o = 0; o < l.d_out; ++o) w.at(o, i) = packed[i * l.d_out + o];
    }
    for (std::size_t o = 0; o < l.d_out; ++o) b[o] = packed[l.d_in * l.d_out + o];
  }
  return out;
}

// ---------------------------------------------------------------- submodules

std::vector<Var> Controller::hn_generate(Tape& tape, Var contexts) {
  Var c = contexts;
  for (std::size_t i = 0; i < spec_.hn_layers; ++i) {
    c = ops::relu(shared_linear(tape, params_, c, "hn.enc" + std::to_string(i)));
  }
  std::vector<Var> out;
  for (const LayerShape& l : modulated_) {
    out.push_back(shared_linear(tape, params_, c, "hn.head." + l.tag));
    check_finite(out.back(), "hn");
  }
  return out;
}

Var Controller::fa_encode(Tape& tape, Var contexts) {
  Var c = contexts;
  for (std::size_t i = 0; i < spec_.fa_layers; ++i) {
    c = ops::relu(shared_linear(tape, params_, c, "fa.enc" + std::to_string(i)));
  }
  c = shared_linear(tape, params_, c, "fa.out");
  check_finite(c, "fa");
  return c;
}

Var Controller::affine(Tape& tape, std::size_t k, Var x, const std::vector<Var>& generated,
                       const std::vector<std::size_t>& index) {
  const LayerShape& l = modulated_[k];
  const std::string table = "pernode." + l.tag;
  if (params_.contains(table)) {
    std::vector<std::size_t> node(index.size());
    const std::size_t n = spec_.robot_nodes;
    for (std::size_t r = 0; r < node.size(); ++r) node[r] = r % n;
    return ops::nodewise_linear(x, param(tape, params_, table), std::move(node), l.d_in, l.d_out);
  }
  if (spec_.use_hn) return ops::nodewise_linear(x, generated[k], index, l.d_in, l.d_out);
  return shared_linear(tape, params_, x, l.name);
}

MorphCache Controller::build_cache(const RobotInfo& robot) {
  if (robot.context.rank() != 2 || robot.context.dim(0) != robot.n ||
      robot.context.dim(1) != spec_.ctx_dim) {
    throw std::invalid_argument("build_cache: context shape does not match robot '" + robot.id +
                                "'");
  }
  MorphCache cache;
  cache.key = robot.key;
  if (spec_.arch != Architecture::kTransformer) return cache;
  Tape tape(false);
  Var ctx = tape.constant(robot.context);
  if (spec_.use_hn) {
    for (Var v : hn_generate(tape, ctx)) cache.hn_params.push_back(v.value());
  }
  if (spec_.use_fa) {
    Var ce = fa_encode(tape, ctx);
    for (std::size_t l = 0; l < spec_.layers; ++l) {
      const std::string p = "layer" + std::to_string(l) + ".";
      Var q = shared_linear(tape, params_, ce, p + "q");
      Var k = shared_linear(tape, params_, ce, p + "k");
      cache.fa_logits.push_back(ops::attention_scores(q, k, 1, robot.n, spec_.heads).value());
    }
  }
  return cache;
}

// ---------------------------------------------------------------- forward

PolicyVars Controller::mlp_forward(Tape& tape, const NodeBatch& batch) {
  const ControllerSpec& s = spec_;
  const std::size_t G = batch.groups, n = batch.n;
  Var x = ops::reshape(tape.constant(batch.obs), {G, n * s.obs_dim});
  if (s.ext_dim > 0) x = ops::concat_cols(x, tape.constant(batch.ext));
  auto run = [&](const std::string& head) {
    Var h = x;
    for (std::size_t i = 0; i < s.mlp_hidden.size(); ++i) {
      h = ops::relu(shared_linear(tape, params_, h, "mlp." + head + std::to_string(i)));
    }
    return shared_linear(tape, params_, h, "mlp." + head + "_out");
  };
  PolicyVars out;
  out.mu = ops::reshape(run("actor"), {G * n, s.act_dim});
  check_finite(out.mu, "mlp.actor");
  out.value = ops::reshape(run("critic"), {G});
  check_finite(out.value, "mlp.critic");
  out.log_std = param(tape, params_, "log_std");
  return out;
}

PolicyVars Controller::forward(Tape& tape, const NodeBatch& batch, const ForwardOptions& options) {
  const ControllerSpec& s = spec_;
  const std::size_t G = batch.groups, n = batch.n, R = G * n, H = s.heads;
  if (G == 0 || batch.robots.size() != G || batch.obs.rank() != 2 || batch.obs.dim(0) != R ||
      batch.obs.dim(1) != s.obs_dim || batch.mask.size() != R) {
    throw std::invalid_argument("forward: malformed batch");
  }
  if (n > s.max_nodes) throw std::invalid_argument("forward: batch exceeds max_nodes");
  if (s.ext_dim > 0 && (batch.ext.rank() != 2 || batch.ext.dim(0) != G ||
                        batch.ext.dim(1) != s.ext_dim)) {
    throw std::invalid_argument("forward: exteroceptive input has the wrong shape");
  }
  if (s.arch == Architecture::kMlp || s.per_node != PerNode::kNone) {
    for (const RobotInfo* r : batch.robots) {
      if (r->n != s.robot_nodes || n != s.robot_nodes || r->key != batch.robots[0]->key) {
        throw std::invalid_argument(
            "forward: single-robot controller used with a different or padded morphology");
      }
    }
  }
  if (s.arch == Architecture::kMlp) return mlp_forward(tape, batch);

  const bool cached = !options.caches.empty();
  if (cached) {
    if (options.caches.size() != G) {
      throw std::invalid_argument("forward: expected one morphology cache per batch group");
    }
    for (std::size_t g = 0; g < G; ++g) {
      const MorphCache* c = options.caches[g];
      if (c == nullptr || c->key != batch.robots[g]->key ||
          c->hn_params.size() != (s.use_hn ? modulated_.size() : 0) ||
          c->fa_logits.size() != (s.use_fa ? s.layers : 0)) {
        throw std::invalid_argument("forward: missing or mismatched morphology cache for group " +
                                    std::to_string(g));
      }
    }
  }

  // Distinct robots in the batch; HN and FA run once per robot.
  std::vector<std::size_t> group_u(G);
  std::vector<std::size_t> first_group;
  {
    std::map<std::uint64_t, std::size_t> seen;
    for (std::size_t g = 0; g < G; ++g) {
      auto [it, fresh] = seen.emplace(batch.robots[g]->key, first_group.size());
      if (fresh) first_group.push_back(g);
      group_u[g] = it->second;
    }
  }
  const std::size_t U = first_group.size();

  std::vector<std::size_t> row_index(R);  // batch row -> distinct-robot row
  for (std::size_t g = 0; g < G; ++g) {
    for (std::size_t i = 0; i < n; ++i) row_index[g * n + i] = group_u[g] * n + i;
  }

  Tensor x({R, s.node_input_dim()});
  for (std::size_t g = 0; g < G; ++g) {
    const RobotInfo& r = *batch.robots[g];
    if (r.context.rank() != 2 || r.context.dim(0) != r.n || r.context.dim(1) != s.ctx_dim) {
      throw std::invalid_argument("forward: context shape does not match robot '" + r.id + "'");
    }
    for (std::size_t i = 0; i < n; ++i) {
      double* dst = x.row(g * n + i);
      std::copy(batch.obs.row(g * n + i), batch.obs.row(g * n + i) + s.obs_dim, dst);
      if (i < r.n) std::copy(r.context.row(i), r.context.row(i) + s.ctx_dim, dst + s.obs_dim);
    }
  }
  Tensor ucontext({U * n, s.ctx_dim});
  for (std::size_t u = 0; u < U; ++u) {
    const RobotInfo& r = *batch.robots[first_group[u]];
    for (std::size_t i = 0; i < r.n; ++i) {
      std::copy(r.context.row(i), r.context.row(i) + s.ctx_dim, ucontext.row(u * n + i));
    }
  }

  std::vector<Var> generated;
  if (s.use_hn) {
    if (cached) {
      for (std::size_t k = 0; k < modulated_.size(); ++k) {
        Tensor t({U * n, modulated_[k].packed()});
        for (std::size_t u = 0; u < U; ++u) {
          const std::size_t g = first_group[u];
          const Tensor& src = options.caches[g]->hn_params[k];
          const std::size_t nr = batch.robots[g]->n;
          if (src.rank() != 2 || src.dim(0) != nr || src.dim(1) != t.cols()) {
            throw std::invalid_argument("forward: morphology cache has the wrong HN shape");
          }
          for (std::size_t i = 0; i < n; ++i) {
            const double* row = src.row(i < nr ? i : 0);
            std::copy(row, row + t.cols(), t.row(u * n + i));
          }
        }
        generated.push_back(tape.constant(std::move(t)));
      }
    } else {
      generated = hn_generate(tape, tape.constant(ucontext));
    }
  }

  std::vector<Var> fixed_logits;
  if (s.use_fa) {
    if (cached) {
      for (std::size_t l = 0; l < s.layers; ++l) {
        Tensor t({G * H * n, n});
        for (std::size_t g = 0; g < G; ++g) {
          const Tensor& src = options.caches[g]->fa_logits[l];
          const std::size_t nr = batch.robots[g]->n;
          if (src.rank() != 2 || src.dim(0) != H * nr || src.dim(1) != nr) {
            throw std::invalid_argument("forward: morphology cache has the wrong FA shape");
          }
          for (std::size_t h = 0; h < H; ++h) {
            for (std::size_t i = 0; i < nr; ++i) {
              std::copy(src.row(h * nr + i), src.row(h * nr + i) + nr,
                        t.row((g * H + h) * n + i));
            }
          }
        }
        fixed_logits.push_back(tape.constant(std::move(t)));
      }
    } else {
      Var ce = fa_encode(tape, tape.constant(ucontext));
      std::vector<std::size_t> idx(G * H * n);
      for (std::size_t g = 0; g < G; ++g) {
        for (std::size_t h = 0; h < H; ++h) {
          for (std::size_t i = 0; i < n; ++i) {
            idx[(g * H + h) * n + i] = (group_u[g] * H + h) * n + i;
          }
        }
      }
      for (std::size_t l = 0; l < s.layers; ++l) {
        const std::string p = "layer" + std::to_string(l) + ".";
        Var q = shared_linear(tape, params_, ce, p + "q");
        Var k = shared_linear(tape, params_, ce, p + "k");
        Var logits = ops::attention_scores(q, k, U, n, H);
        fixed_logits.push_back(U == G ? logits : ops::gather_rows(logits, idx));
      }
    }
  }

  PolicyVars out;
  Var h = affine(tape, 0, tape.constant(std::move(x)), generated, row_index);
  check_finite(h, "embed");
  if (s.use_pe) {
    std::vector<std::size_t> pos(R);
    for (std::size_t g = 0; g < G; ++g) {
      const RobotInfo& r = *batch.robots[g];
      for (std::size_t i = 0; i < n; ++i) {
        pos[g * n + i] = i < r.n ? static_cast<std::size_t>(r.dfs_pos.at(i)) : i;
      }
    }
    h = ops::add(h, ops::gather_rows(param(tape, params_, "pe.table"), std::move(pos)));
  }
  if (s.dropout > 0.0 && (options.dropout_mask != nullptr || options.dropout_rng != nullptr)) {
    auto d = ops::dropout(h, s.dropout, options.dropout_mask, options.dropout_rng);
    h = d.out;
    out.dropout_mask = std::move(d.mask);
  }

  Mask key_mask(G * H * n * n);
  for (std::size_t g = 0; g < G; ++g) {
    for (std::size_t r = 0; r < H * n; ++r) {
      std::copy(batch.mask.begin() + g * n, batch.mask.begin() + (g + 1) * n,
                key_mask.begin() + ((g * H * n) + r) * n);
    }
  }

  for (std::size_t l = 0; l < s.layers; ++l) {
    const std::string p = "layer" + std::to_string(l) + ".";
    Var v = shared_linear(tape, params_, h, p + "v");
    Var logits = s.use_fa ? fixed_logits[l]
                          : ops::attention_scores(shared_linear(tape, params_, h, p + "q"),
                                                  shared_linear(tape, params_, h, p + "k"), G,
                                                  n, H);
    Var probs = ops::masked_softmax_rows(logits, key_mask);
    if (options.keep_attention) out.attention.push_back(probs);
    Var a = shared_linear(tape, params_, ops::attention_mix(probs, v, G, n, H), p + "o");
    h = ops::layer_norm(ops::add(h, a), param(tape, params_, p + "ln1.g"),
                        param(tape, params_, p + "ln1.b"));
    Var f = shared_linear(tape, params_,
                          ops::relu(shared_linear(tape, params_, h, p + "ff1")), p + "ff2");
    h = ops::layer_norm(ops::add(h, f), param(tape, params_, p + "ln2.g"),
                        param(tape, params_, p + "ln2.b"));
    check_finite(h, "layer" + std::to_string(l));
  }

  if (s.ext_dim > 0) {
    Var e = ops::relu(shared_linear(tape, params_, tape.constant(batch.ext), "ext.l0"));
    e = ops::relu(shared_linear(tape, params_, e, "ext.l1"));
    check_finite(e, "ext");
    std::vector<std::size_t> owner(R);
    for (std::size_t r = 0; r < R; ++r) owner[r] = r / n;
    h = ops::concat_cols(h, ops::gather_rows(e, std::move(owner)));
  }

  Var z = ops::relu(affine(tape, 1, h, generated, row_index));
  out.mu = affine(tape, 2, z, generated, row_index);
  check_finite(out.mu, "decoder");

  Var pooled = ops::masked_mean_rows(h, batch.mask, G);
  Var c = ops::relu(shared_linear(tape, params_, pooled, "critic.l0"));
  out.value = ops::reshape(shared_linear(tape, params_, c, "critic.l1"), {G});
  check_finite(out.value, "critic");
  out.log_std = param(tape, params_, "log_std");
  return out;
}

}  // namespace morphctl
