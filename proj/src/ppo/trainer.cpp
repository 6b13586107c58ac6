#include "morphctl/ppo/trainer.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "json.hpp"
#include "morphctl/morphology/io.hpp"

namespace morphctl {

using nlohmann::json;

EnvFactory make_env_factory(const EnvSettings& settings) {
  return [settings](const MorphologyTree& tree, std::uint64_t episode_seed) {
    Terrain terrain = settings.terrain == TerrainKind::kFlat
                          ? Terrain::flat()
                          : Terrain::variable(Rng::mix(episode_seed, 0x7e77a1));
    return Env(tree, std::move(terrain), settings.config);
  };
}

namespace {

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

}  // namespace

std::string metrics_to_json(const IterationMetrics& m, const std::vector<RobotInfo>& robots) {
  json j;
  j["iteration"] = m.iteration;
  j["env_steps"] = m.env_steps;
  j["episodes"] = m.episodes;
  j["mean_return"] = finite_or_null(m.mean_return);
  json per = json::object();
  for (std::size_t r = 0; r < m.robot_returns.size(); ++r) {
    per[robots.at(r).id] = {{"mean", finite_or_null(m.robot_returns[r].mean)},
                            {"episodes", m.robot_returns[r].episodes}};
  }
  j["robot_returns"] = per;
  const IterationStats& u = m.update;
  j["updates"] = u.updates;
  j["planned_updates"] = u.planned_updates;
  j["early_stop_epoch"] = u.early_stop_epoch;
  j["last_kl"] = finite_or_null(u.last_kl);
  json kls = json::array();
  for (double k : u.kl_checks) kls.push_back(finite_or_null(k));
  j["kl_checks"] = kls;
  j["policy_loss"] = finite_or_null(u.policy_loss);
  j["value_loss"] = finite_or_null(u.value_loss);
  j["entropy"] = finite_or_null(u.entropy);
  j["clip_fraction"] = finite_or_null(u.clip_fraction);
  j["grad_norm"] = finite_or_null(u.grad_norm);
  j["ratio_histograms"] = u.ratio_histograms;
  return j.dump();
}

Trainer::Trainer(std::vector<MorphologyTree> robots, const ContextNormalizer& normalizer,
                 EnvFactory env_factory, ControllerSpec spec, PpoConfig config,
                 std::uint64_t seed)
    : trees_(std::move(robots)),
      normalizer_(normalizer),
      env_factory_(std::move(env_factory)),
      config_(config),
      seed_(seed),
      controller_(std::move(spec), Rng::mix(seed, 1)),
      adam_(controller_.params(), config.adam()),
      update_rng_(Rng::mix(seed, 2)),
      rollout_rng_(Rng::mix(seed, 3)) {
  config_.validate();
  if (trees_.empty()) throw std::invalid_argument("trainer: empty robot set");
  const ControllerSpec& s = controller_.spec();
  if (s.ext_dim != 0 && s.ext_dim != kHeightMapDim) {
    throw std::invalid_argument("trainer: ext_dim must be 0 or " + std::to_string(kHeightMapDim));
  }
  for (const MorphologyTree& t : trees_) robot_info_.push_back(make_robot_info(t, normalizer_));
  workers_.resize(config_.workers);
  for (std::size_t w = 0; w < workers_.size(); ++w) {
    workers_[w].rng = Rng(Rng::mix(seed, 100 + w));
    start_episode(workers_[w]);
  }
}

void Trainer::start_episode(Worker& w) {
  w.robot = static_cast<std::size_t>(w.rng.uniform_int(0, static_cast<std::int64_t>(trees_.size()) - 1));
  w.episode_seed = w.rng.next_u64();
  w.env.emplace(env_factory_(trees_[w.robot], w.episode_seed));
  StepResult r = w.env->reset(w.episode_seed);
  w.obs = std::move(r.obs);
  w.ext = std::move(r.ext);
  w.episode_return = 0.0;
}

RolloutBuffer Trainer::collect(IterationMetrics& metrics) {
  const ControllerSpec& spec = controller_.spec();
  const std::size_t M = workers_.size(), T = config_.steps_per_worker, a = spec.act_dim;
  RolloutBuffer buffer(M, T);

  // The parameters are frozen during collection, so HN/FA run once per robot.
  std::vector<MorphCache> caches;
  const bool cached = spec.arch == Architecture::kTransformer && (spec.use_hn || spec.use_fa);
  if (cached) {
    for (const RobotInfo& r : robot_info_) caches.push_back(controller_.build_cache(r));
  }
  const bool dropout = config_.dropout_mode != DropoutMode::kOff && spec.dropout > 0.0 &&
                       spec.arch == Architecture::kTransformer;

  std::vector<double> return_sum(trees_.size(), 0.0);
  std::vector<std::size_t> return_count(trees_.size(), 0);
  double total_return = 0.0;

  auto forward = [&](Tape& tape, bool with_dropout, NodeBatch& batch) {
    BatchBuilder builder(spec);
    for (Worker& w : workers_) builder.add(robot_info_[w.robot], w.obs, spec.ext_dim > 0 ? &w.ext : nullptr);
    batch = builder.build();
    std::vector<const MorphCache*> ptrs;
    if (cached) {
      for (Worker& w : workers_) ptrs.push_back(&caches[w.robot]);
    }
    ForwardOptions o;
    o.caches = ptrs;
    if (with_dropout) o.dropout_rng = &rollout_rng_;
    return controller_.forward(tape, batch, o);
  };

  for (std::size_t t = 0; t < T; ++t) {
    Tape tape(false);
    NodeBatch batch;
    PolicyVars v = forward(tape, dropout, batch);
    const std::size_t n_pad = batch.n;
    const Tensor& mu = v.mu.value();
    const Tensor& log_std = v.log_std.value();

    Tensor actions({M * n_pad, a});
    for (std::size_t g = 0; g < M; ++g) {
      Worker& w = workers_[g];
      for (std::size_t i = 1; i < robot_info_[w.robot].n; ++i) {
        for (std::size_t d = 0; d < a; ++d) {
          actions.at(g * n_pad + i, d) =
              mu.at(g * n_pad + i, d) + std::exp(log_std[d]) * w.rng.normal();
        }
      }
    }
    const Tensor logp =
        ops::gaussian_logprob(actions, v.mu, v.log_std, batch.actuated, M).value();

    for (std::size_t g = 0; g < M; ++g) {
      Worker& w = workers_[g];
      const std::size_t n = robot_info_[w.robot].n;
      Transition& x = buffer.at(g, t);
      x.robot = w.robot;
      x.obs = w.obs;
      if (spec.ext_dim > 0) x.ext = w.ext;
      x.action = Tensor({n, a});
      std::copy(actions.row(g * n_pad), actions.row(g * n_pad) + n * a, x.action.data());
      if (!v.dropout_mask.empty()) {
        const std::size_t d = spec.d_model;
        x.dropout_mask.assign(v.dropout_mask.begin() + g * n_pad * d,
                              v.dropout_mask.begin() + (g * n_pad + n) * d);
      }
      x.logp = logp[g];
      x.value = v.value.value()[g];

      StepResult r = w.env->step(x.action);
      ++env_steps_;
      x.reward = r.reward;
      x.done = r.done;
      w.episode_return += r.reward;
      if (r.done) {
        return_sum[w.robot] += w.episode_return;
        ++return_count[w.robot];
        total_return += w.episode_return;
        ++metrics.episodes;
        start_episode(w);
      } else {
        w.obs = std::move(r.obs);
        w.ext = std::move(r.ext);
      }
    }
  }

  Tape tape(false);
  NodeBatch batch;
  PolicyVars v = forward(tape, false, batch);
  for (std::size_t g = 0; g < M; ++g) buffer.set_bootstrap(g, v.value.value()[g]);

  metrics.robot_returns.resize(trees_.size());
  for (std::size_t r = 0; r < trees_.size(); ++r) {
    metrics.robot_returns[r].episodes = return_count[r];
    metrics.robot_returns[r].mean = return_count[r] > 0
                                        ? return_sum[r] / static_cast<double>(return_count[r])
                                        : std::numeric_limits<double>::quiet_NaN();
  }
  metrics.mean_return = metrics.episodes > 0
                            ? total_return / static_cast<double>(metrics.episodes)
                            : std::numeric_limits<double>::quiet_NaN();
  return buffer;
}

IterationMetrics Trainer::iterate() {
  IterationMetrics m;
  RolloutBuffer buffer = collect(m);
  buffer.finalize(config_);
  m.update = train_iteration(buffer, controller_, adam_, robot_info_, config_, update_rng_);
  ++iteration_;
  m.iteration = iteration_;
  m.env_steps = env_steps_;
  return m;
}

void Trainer::run(std::size_t total_steps,
                  const std::function<void(const IterationMetrics&)>& on_iteration) {
  while (env_steps_ < total_steps) {
    IterationMetrics m = iterate();
    if (on_iteration) on_iteration(m);
  }
}

// ---------------------------------------------------------------- persistence

namespace {

json corpus_fingerprint(const std::vector<MorphologyTree>& trees) {
  json out = json::array();
  for (const MorphologyTree& t : trees) out.push_back(hex64(content_hash(t)));
  return out;
}

}  // namespace

Checkpoint Trainer::checkpoint(std::uint64_t manifest_hash) const {
  Checkpoint c = make_checkpoint(controller_, normalizer_, manifest_hash);
  c.extra = adam_.save();
  json workers = json::array();
  for (const Worker& w : workers_) {
    const SimState& s = w.env->state();
    workers.push_back({{"robot", w.robot},
                       {"episode_seed", std::to_string(w.episode_seed)},
                       {"q", s.q},
                       {"qd", s.qd},
                       {"step", s.step},
                       {"episode_return", w.episode_return},
                       {"rng", w.rng.save()}});
  }
  json meta;
  meta["trainer"] = {{"iteration", iteration_},
                     {"env_steps", env_steps_},
                     {"seed", std::to_string(seed_)},
                     {"ppo", json::parse(ppo_config_to_json(config_))},
                     {"corpus", corpus_fingerprint(trees_)},
                     {"update_rng", update_rng_.save()},
                     {"rollout_rng", rollout_rng_.save()},
                     {"workers", workers}};
  c.metadata = meta.dump();
  return c;
}

void Trainer::resume(const Checkpoint& c) {
  json t;
  try {
    t = json::parse(c.metadata).at("trainer");
  } catch (const std::exception&) {
    throw CheckpointError("checkpoint carries no trainer state");
  }
  try {
    if (ppo_config_from_json(t.at("ppo").dump()) != config_) {
      throw CheckpointError("checkpoint was trained with a different PPO config");
    }
    if (t.at("seed").get<std::string>() != std::to_string(seed_)) {
      throw CheckpointError("checkpoint was trained with a different seed");
    }
    if (t.at("corpus") != corpus_fingerprint(trees_)) {
      throw CheckpointError("checkpoint was trained on a different corpus");
    }
    if (!(c.normalizer == normalizer_)) {
      throw CheckpointError("checkpoint normalizer differs from the corpus normalizer");
    }
    restore_parameters(controller_, c);
    adam_.restore(c.extra);
    update_rng_.restore(t.at("update_rng").get<std::string>());
    rollout_rng_.restore(t.at("rollout_rng").get<std::string>());
    const json& ws = t.at("workers");
    if (ws.size() != workers_.size()) throw CheckpointError("checkpoint worker count differs");
    for (std::size_t i = 0; i < workers_.size(); ++i) {
      const json& j = ws[i];
      Worker& w = workers_[i];
      w.robot = j.at("robot").get<std::size_t>();
      if (w.robot >= trees_.size()) throw CheckpointError("checkpoint worker robot out of range");
      w.episode_seed = std::stoull(j.at("episode_seed").get<std::string>());
      w.env.emplace(env_factory_(trees_[w.robot], w.episode_seed));
      w.env->reset(w.episode_seed);
      SimState s = w.env->state();
      s.q = j.at("q").get<std::vector<double>>();
      s.qd = j.at("qd").get<std::vector<double>>();
      s.step = j.at("step").get<std::size_t>();
      StepResult r = w.env->set_state(std::move(s));
      w.obs = std::move(r.obs);
      w.ext = std::move(r.ext);
      w.episode_return = j.at("episode_return").get<double>();
      w.rng.restore(j.at("rng").get<std::string>());
    }
    iteration_ = t.at("iteration").get<std::size_t>();
    env_steps_ = t.at("env_steps").get<std::size_t>();
  } catch (const CheckpointError&) {
    throw;
  } catch (const std::exception& e) {
    throw CheckpointError(std::string("malformed trainer state: ") + e.what());
  }
}

}  // namespace morphctl
