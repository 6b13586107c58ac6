#include "morphctl/ppo/ppo.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <memory>
#include <numbers>
#include <stdexcept>

#include "json.hpp"
#include "morphctl/ppo/gae.hpp"

namespace morphctl {

using nlohmann::json;

std::string_view dropout_mode_name(DropoutMode m) {
  switch (m) {
    case DropoutMode::kOff: return "off";
    case DropoutMode::kConsistent: return "consistent";
    case DropoutMode::kInconsistent: return "inconsistent";
  }
  return "off";
}

DropoutMode parse_dropout_mode(std::string_view name) {
  if (name == "off") return DropoutMode::kOff;
  if (name == "consistent") return DropoutMode::kConsistent;
  if (name == "inconsistent") return DropoutMode::kInconsistent;
  throw std::invalid_argument("unknown dropout mode '" + std::string(name) + "'");
}

void PpoConfig::validate() const {
  auto fail = [](const std::string& m) { throw std::invalid_argument("ppo config: " + m); };
  if (!(clip > 0.0 && clip < 1.0)) fail("clip must lie in (0, 1)");
  if (!(kl_threshold >= 0.0)) fail("kl_threshold must be >= 0");
  if (epochs == 0 || minibatches == 0) fail("epochs and minibatches must be positive");
  if (!(gamma >= 0.0 && gamma <= 1.0) || !(lambda >= 0.0 && lambda <= 1.0))
    fail("gamma and lambda must lie in [0, 1]");
  if (!(learning_rate >= 0.0)) fail("learning_rate must be >= 0");
  if (workers == 0 || steps_per_worker == 0) fail("workers and steps_per_worker must be positive");
  if (minibatches > workers * steps_per_worker) fail("more minibatches than samples");
  if (histogram_bins == 0) fail("histogram_bins must be positive");
}

AdamConfig PpoConfig::adam() const {
  AdamConfig a;
  a.learning_rate = learning_rate;
  a.max_grad_norm = max_grad_norm;
  return a;
}

std::string ppo_config_to_json(const PpoConfig& c) {
  json j;
  j["clip"] = c.clip;
  if (std::isinf(c.kl_threshold)) {
    j["kl_threshold"] = "inf";
  } else {
    j["kl_threshold"] = c.kl_threshold;
  }
  j["epochs"] = c.epochs;
  j["minibatches"] = c.minibatches;
  j["gamma"] = c.gamma;
  j["lambda"] = c.lambda;
  j["learning_rate"] = c.learning_rate;
  j["value_coef"] = c.value_coef;
  j["entropy_coef"] = c.entropy_coef;
  j["max_grad_norm"] = c.max_grad_norm;
  j["dropout_mode"] = dropout_mode_name(c.dropout_mode);
  j["workers"] = c.workers;
  j["steps_per_worker"] = c.steps_per_worker;
  j["histogram_bins"] = c.histogram_bins;
  j["normalize_advantages"] = c.normalize_advantages;
  return j.dump();
}

PpoConfig ppo_config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("ppo config: ") + e.what());
  }
  if (!j.is_object()) throw std::invalid_argument("ppo config: expected an object");
  PpoConfig c;
  auto get = [&](const char* key, auto& field) {
    if (!j.contains(key)) return;
    try {
      j.at(key).get_to(field);
    } catch (const json::exception&) {
      throw std::invalid_argument(std::string("ppo config: field ") + key + ": bad type");
    }
  };
  get("clip", c.clip);
  if (j.contains("kl_threshold") && j["kl_threshold"].is_string()) {
    if (j["kl_threshold"] != "inf") {
      throw std::invalid_argument("ppo config: field kl_threshold: expected a number or \"inf\"");
    }
    c.kl_threshold = std::numeric_limits<double>::infinity();
  } else {
    get("kl_threshold", c.kl_threshold);
  }
  get("epochs", c.epochs);
  get("minibatches", c.minibatches);
  get("gamma", c.gamma);
  get("lambda", c.lambda);
  get("learning_rate", c.learning_rate);
  get("value_coef", c.value_coef);
  get("entropy_coef", c.entropy_coef);
  get("max_grad_norm", c.max_grad_norm);
  std::string mode = "off";
  get("dropout_mode", mode);
  c.dropout_mode = parse_dropout_mode(mode);
  get("workers", c.workers);
  get("steps_per_worker", c.steps_per_worker);
  get("histogram_bins", c.histogram_bins);
  get("normalize_advantages", c.normalize_advantages);
  c.validate();
  return c;
}

// ---------------------------------------------------------------- buffer

RolloutBuffer::RolloutBuffer(std::size_t workers, std::size_t steps)
    : workers_(workers), steps_(steps), data_(workers * steps), bootstrap_(workers, 0.0) {}

Transition& RolloutBuffer::at(std::size_t worker, std::size_t t) {
  if (finalized_) throw std::logic_error("rollout buffer is finalized");
  return data_.at(worker * steps_ + t);
}

void RolloutBuffer::set_bootstrap(std::size_t worker, double value) {
  if (finalized_) throw std::logic_error("rollout buffer is finalized");
  bootstrap_.at(worker) = value;
}

void RolloutBuffer::finalize(const PpoConfig& config) {
  if (finalized_) throw std::logic_error("rollout buffer is already finalized");
  std::vector<double> all;
  all.reserve(data_.size());
  for (std::size_t w = 0; w < workers_; ++w) {
    std::vector<double> r(steps_), v(steps_);
    auto d = std::make_unique<bool[]>(steps_);
    for (std::size_t t = 0; t < steps_; ++t) {
      const Transition& x = data_[w * steps_ + t];
      r[t] = x.reward;
      v[t] = x.value;
      d[t] = x.done;
    }
    GaeResult g = compute_gae(r, v, std::span<const bool>(d.get(), steps_), bootstrap_[w],
                              config.gamma, config.lambda);
    for (std::size_t t = 0; t < steps_; ++t) {
      data_[w * steps_ + t].advantage = g.advantages[t];
      data_[w * steps_ + t].ret = g.returns[t];
      all.push_back(g.advantages[t]);
    }
  }
  if (config.normalize_advantages) {
    normalize_advantages(all);
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i].advantage = all[i];
  }
  finalized_ = true;
}

// ---------------------------------------------------------------- loss

namespace {

struct Bucket {
  std::vector<std::size_t> positions;  // positions within the minibatch
};

// Groups minibatch positions by robot node count, preserving order.
std::vector<Bucket> bucket_by_size(std::span<const RobotInfo> robots, const RolloutBuffer& buffer,
                                   std::span<const std::size_t> indices) {
  std::map<std::size_t, Bucket> by_n;
  for (std::size_t p = 0; p < indices.size(); ++p) {
    by_n[robots[buffer[indices[p]].robot].n].positions.push_back(p);
  }
  std::vector<Bucket> out;
  for (auto& [n, b] : by_n) out.push_back(std::move(b));
  return out;
}

struct BucketForward {
  NodeBatch batch;
  PolicyVars vars;
  Var logp;
};

BucketForward forward_bucket(Tape& tape, Controller& controller,
                             std::span<const RobotInfo> robots, const RolloutBuffer& buffer,
                             std::span<const std::size_t> indices, const Bucket& bucket,
                             const PpoConfig& config, Rng& dropout_rng) {
  const ControllerSpec& spec = controller.spec();
  BatchBuilder builder(spec);
  for (std::size_t p : bucket.positions) {
    const Transition& x = buffer[indices[p]];
    builder.add(robots[x.robot], x.obs, spec.ext_dim > 0 ? &x.ext : nullptr);
  }
  BucketForward f;
  f.batch = builder.build();
  const std::size_t G = f.batch.groups, n = f.batch.n, a = spec.act_dim;

  ForwardOptions options;
  Mask replay;
  const bool dropout_on = spec.dropout > 0.0 && config.dropout_mode != DropoutMode::kOff &&
                          spec.arch == Architecture::kTransformer;
  if (dropout_on && config.dropout_mode == DropoutMode::kConsistent) {
    const std::size_t width = n * spec.d_model;
    replay.resize(G * width);
    for (std::size_t g = 0; g < G; ++g) {
      const Mask& m = buffer[indices[bucket.positions[g]]].dropout_mask;
      if (m.size() != width) {
        throw std::invalid_argument("ppo_loss: consistent dropout needs the stored collection masks");
      }
      std::copy(m.begin(), m.end(), replay.begin() + g * width);
    }
    options.dropout_mask = &replay;
  } else if (dropout_on) {
    options.dropout_rng = &dropout_rng;
  }
  f.vars = controller.forward(tape, f.batch, options);

  Tensor actions({G * n, a});
  for (std::size_t g = 0; g < G; ++g) {
    const Tensor& act = buffer[indices[bucket.positions[g]]].action;
    std::copy(act.data(), act.data() + n * a, actions.row(g * n));
  }
  f.logp = ops::gaussian_logprob(actions, f.vars.mu, f.vars.log_std, f.batch.actuated, G);
  return f;
}

}  // namespace

MinibatchLoss ppo_loss(Tape& tape, Controller& controller, std::span<const RobotInfo> robots,
                       const RolloutBuffer& buffer, std::span<const std::size_t> indices,
                       const PpoConfig& config, Rng& dropout_rng) {
  if (!buffer.finalized()) throw std::logic_error("ppo_loss: buffer is not finalized");
  if (indices.empty()) throw std::invalid_argument("ppo_loss: empty minibatch");
  const double count = static_cast<double>(indices.size());
  const double eps = config.clip;
  MinibatchLoss out;
  LossStats& st = out.stats;
  st.ratios.assign(indices.size(), 0.0);

  Var surrogate, value_sq, log_std;
  double actuated_rows = 0.0, kl = 0.0, clipped = 0.0, ratio_sum = 0.0;
  bool first = true;
  for (const Bucket& bucket : bucket_by_size(robots, buffer, indices)) {
    BucketForward f =
        forward_bucket(tape, controller, robots, buffer, indices, bucket, config, dropout_rng);
    const std::size_t G = f.batch.groups;
    Tensor old_lp({G}), adv({G}), ret({G});
    for (std::size_t g = 0; g < G; ++g) {
      const Transition& x = buffer[indices[bucket.positions[g]]];
      old_lp[g] = x.logp;
      adv[g] = x.advantage;
      ret[g] = x.ret;
    }
    for (std::uint8_t m : f.batch.actuated) actuated_rows += m;
    Var ratio = ops::exp(ops::sub(f.logp, tape.constant(old_lp)));
    Var A = tape.constant(adv);
    Var s = ops::sum(ops::minimum(ops::mul(ratio, A),
                                  ops::mul(ops::clamp(ratio, 1.0 - eps, 1.0 + eps), A)));
    Var v = ops::sum(ops::square(ops::sub(f.vars.value, tape.constant(ret))));
    surrogate = first ? s : ops::add(surrogate, s);
    value_sq = first ? v : ops::add(value_sq, v);
    log_std = f.vars.log_std;
    first = false;

    const Tensor& lp = f.logp.value();
    const Tensor& r = ratio.value();
    for (std::size_t g = 0; g < G; ++g) {
      st.ratios[bucket.positions[g]] = r[g];
      kl += old_lp[g] - lp[g];
      ratio_sum += r[g];
      if (std::abs(r[g] - 1.0) > eps) clipped += 1.0;
    }
  }

  // Entropy of the diagonal Gaussian, per actuated row: sum_d log_std_d + const.
  const std::size_t act = controller.spec().act_dim;
  const double half_log_2pi_e = 0.5 * std::log(2.0 * std::numbers::pi * std::numbers::e);
  Var entropy = ops::add_scalar(ops::scale(ops::sum(log_std), actuated_rows / count),
                                half_log_2pi_e * static_cast<double>(act) * actuated_rows / count);

  Var policy_loss = ops::scale(surrogate, -1.0 / count);
  Var value_loss = ops::scale(value_sq, 1.0 / count);
  Var loss = ops::add(policy_loss, ops::scale(value_loss, config.value_coef));
  if (config.entropy_coef != 0.0) loss = ops::sub(loss, ops::scale(entropy, config.entropy_coef));
  if (!loss.value().all_finite()) {
    throw NumericalError("ppo_loss: non-finite loss (policy " +
                         std::to_string(policy_loss.value().item()) + ", value " +
                         std::to_string(value_loss.value().item()) + ")");
  }
  out.loss = loss;
  st.loss = loss.value().item();
  st.policy_loss = policy_loss.value().item();
  st.value_loss = value_loss.value().item();
  st.entropy = entropy.value().item();
  st.approx_kl = kl / count;
  st.clip_fraction = clipped / count;
  st.mean_ratio = ratio_sum / count;
  return out;
}

double approx_kl(Controller& controller, std::span<const RobotInfo> robots,
                 const RolloutBuffer& buffer, std::span<const std::size_t> indices,
                 const PpoConfig& config, Rng& dropout_rng) {
  if (indices.empty()) throw std::invalid_argument("approx_kl: empty minibatch");
  Tape tape(false);
  double kl = 0.0;
  for (const Bucket& bucket : bucket_by_size(robots, buffer, indices)) {
    BucketForward f =
        forward_bucket(tape, controller, robots, buffer, indices, bucket, config, dropout_rng);
    for (std::size_t g = 0; g < f.batch.groups; ++g) {
      kl += buffer[indices[bucket.positions[g]]].logp - f.logp.value()[g];
    }
  }
  return kl / static_cast<double>(indices.size());
}

std::vector<std::size_t> ratio_histogram(std::span<const double> ratios, std::size_t bins) {
  std::vector<std::size_t> h(bins, 0);
  for (double r : ratios) {
    const double c = std::clamp(std::isnan(r) ? 2.0 : r, 0.0, 2.0);
    const auto b = static_cast<std::size_t>(c / 2.0 * static_cast<double>(bins));
    ++h[std::min(b, bins - 1)];
  }
  return h;
}

// ---------------------------------------------------------------- iteration

IterationStats train_iteration(const RolloutBuffer& buffer, Controller& controller, Adam& adam,
                               std::span<const RobotInfo> robots, const PpoConfig& config,
                               Rng& rng) {
  if (!buffer.finalized()) throw std::logic_error("train_iteration: buffer is not finalized");
  IterationStats st;
  st.planned_updates = config.epochs * config.minibatches;
  const std::size_t total = buffer.size();
  std::vector<std::size_t> order(total);
  for (std::size_t i = 0; i < total; ++i) order[i] = i;
  ParamStore& params = controller.params();

  for (std::size_t epoch = 0; epoch < config.epochs && st.early_stop_epoch < 0; ++epoch) {
    for (std::size_t i = total; i > 1; --i) {
      std::swap(order[i - 1], order[static_cast<std::size_t>(rng.uniform_int(0, i - 1))]);
    }
    std::vector<double> epoch_ratios;
    for (std::size_t b = 0; b < config.minibatches; ++b) {
      const std::size_t lo = b * total / config.minibatches;
      const std::size_t hi = (b + 1) * total / config.minibatches;
      std::span<const std::size_t> mb(order.data() + lo, hi - lo);
      params.zero_grad();
      Tape tape;
      MinibatchLoss ml = ppo_loss(tape, controller, robots, buffer, mb, config, rng);
      epoch_ratios.insert(epoch_ratios.end(), ml.stats.ratios.begin(), ml.stats.ratios.end());
      if (epoch == 0 && b == 0) st.first_ratios = ml.stats.ratios;
      st.last_kl = ml.stats.approx_kl;
      st.kl_checks.push_back(ml.stats.approx_kl);
      if (ml.stats.approx_kl > config.kl_threshold) {
        st.early_stop_epoch = static_cast<int>(epoch);
        break;
      }
      tape.backward(ml.loss);
      st.grad_norm += adam.step(params);
      st.policy_loss += ml.stats.policy_loss;
      st.value_loss += ml.stats.value_loss;
      st.entropy += ml.stats.entropy;
      st.clip_fraction += ml.stats.clip_fraction;
      ++st.updates;
    }
    st.ratio_histograms.push_back(ratio_histogram(epoch_ratios, config.histogram_bins));
  }
  if (st.updates > 0) {
    const double u = static_cast<double>(st.updates);
    st.grad_norm /= u;
    st.policy_loss /= u;
    st.value_loss /= u;
    st.entropy /= u;
    st.clip_fraction /= u;
  }
  return st;
}

}  // namespace morphctl
