#include "morphctl/cli/run_config.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

namespace morphctl {

using json = nlohmann::json;

namespace {

json physics_json(const PhysicsConfig& p) {
  return {{"gravity", p.gravity},
          {"dt", p.dt},
          {"substeps", p.substeps},
          {"contact", p.contact},
          {"contact_stiffness", p.contact_stiffness},
          {"contact_damping", p.contact_damping},
          {"contact_radius", p.contact_radius},
          {"friction", p.friction},
          {"friction_velocity", p.friction_velocity},
          {"joint_damping", p.joint_damping},
          {"armature", p.armature},
          {"max_joint_speed", p.max_joint_speed},
          {"max_root_speed", p.max_root_speed}};
}

json env_json(const EnvSettings& e) {
  return {{"terrain", terrain_kind_name(e.terrain)},
          {"horizon", e.config.horizon},
          {"action_penalty", e.config.action_penalty},
          {"init_noise", e.config.init_noise},
          {"physics", physics_json(e.config.physics)}};
}

json rules_json(const GenerationRules& r) {
  return {{"root_length_lo", r.root_length_lo}, {"root_length_hi", r.root_length_hi},
          {"length_lo", r.length_lo},           {"length_hi", r.length_hi},
          {"density_lo", r.density_lo},         {"density_hi", r.density_hi},
          {"limit_lo_min", r.limit_lo_min},     {"limit_lo_max", r.limit_lo_max},
          {"limit_hi_min", r.limit_hi_min},     {"limit_hi_max", r.limit_hi_max},
          {"gear_lo", r.gear_lo},               {"gear_hi", r.gear_hi},
          {"max_depth", r.max_depth}};
}

json to_json(const RunConfig& c) {
  json j;
  j["corpus"] = {{"dir", c.corpus_dir.string()},
                 {"seed", c.corpus.seed},
                 {"train_count", c.corpus.train_count},
                 {"test_count", c.corpus.test_count},
                 {"min_limbs", c.corpus.min_limbs},
                 {"max_limbs", c.corpus.max_limbs},
                 {"rules", rules_json(c.corpus.rules)}};
  j["checkpoint"] = c.checkpoint.string();
  j["env"] = env_json(c.env);
  j["controller"] = json::parse(spec_to_json(c.controller));
  j["ppo"] = json::parse(ppo_config_to_json(c.ppo));
  j["train"] = {{"variant", c.train.variant},
                {"seed", c.train.seed},
                {"steps", c.train.steps},
                {"split", c.train.split},
                {"robots", c.train.robots},
                {"checkpoint_every", c.train.checkpoint_every}};
  j["eval"] = {{"rollouts", c.eval.rollouts}, {"seed", c.eval.seed}, {"split", c.eval.split}};
  j["sweep"] = {{"parameters", c.sweep.parameters},
                {"variants_per_robot", c.sweep.variants_per_robot},
                {"relative_range", c.sweep.relative_range},
                {"seed", c.sweep.seed},
                {"rollouts", c.sweep.rollouts},
                {"split", c.sweep.split}};
  j["diagnose"] = {{"seed", c.diagnose.seed},
                   {"split", c.diagnose.split},
                   {"pe_tolerance", c.diagnose.pe_tolerance},
                   {"dropout_modes", c.diagnose.dropout_modes},
                   {"dropout", c.diagnose.dropout},
                   {"iterations", c.diagnose.iterations},
                   {"episodes", c.diagnose.episodes},
                   {"robot", c.diagnose.robot}};
  j["ablate"] = {{"variants", c.ablate.variants},
                 {"seeds", c.ablate.seeds},
                 {"steps", c.ablate.steps},
                 {"single_robot", c.ablate.single_robot},
                 {"split", c.ablate.split},
                 {"robots", c.ablate.robots},
                 {"rollouts", c.ablate.rollouts},
                 {"eval_seed", c.ablate.eval_seed}};
  return j;
}

// Every key of `given` must exist in `defaults`, recursively through objects.
void check_keys(const json& given, const json& defaults, const std::string& path) {
  if (!given.is_object() || !defaults.is_object()) return;
  for (auto it = given.begin(); it != given.end(); ++it) {
    const std::string p = path.empty() ? it.key() : path + "." + it.key();
    if (!defaults.contains(it.key())) throw ConfigError("unknown config key '" + p + "'");
    check_keys(it.value(), defaults.at(it.key()), p);
  }
}

class Reader {
 public:
  explicit Reader(const json& root) : root_(root) {}

  template <class T>
  void get(const char* section, const char* key, T& out) const {
    try {
      root_.at(section).at(key).get_to(out);
    } catch (const json::exception&) {
      throw ConfigError(std::string("config key '") + section + "." + key + "': bad type");
    }
  }
  template <class T>
  void get(const char* section, const char* sub, const char* key, T& out) const {
    try {
      root_.at(section).at(sub).at(key).get_to(out);
    } catch (const json::exception&) {
      throw ConfigError(std::string("config key '") + section + "." + sub + "." + key +
                        "': bad type");
    }
  }

 private:
  const json& root_;
};

PhysicsConfig physics_from(const Reader& r, const char* section) {
  PhysicsConfig p;
  r.get(section, "physics", "gravity", p.gravity);
  r.get(section, "physics", "dt", p.dt);
  r.get(section, "physics", "substeps", p.substeps);
  r.get(section, "physics", "contact", p.contact);
  r.get(section, "physics", "contact_stiffness", p.contact_stiffness);
  r.get(section, "physics", "contact_damping", p.contact_damping);
  r.get(section, "physics", "contact_radius", p.contact_radius);
  r.get(section, "physics", "friction", p.friction);
  r.get(section, "physics", "friction_velocity", p.friction_velocity);
  r.get(section, "physics", "joint_damping", p.joint_damping);
  r.get(section, "physics", "armature", p.armature);
  r.get(section, "physics", "max_joint_speed", p.max_joint_speed);
  r.get(section, "physics", "max_root_speed", p.max_root_speed);
  return p;
}

EnvSettings env_from(const Reader& r, const char* section) {
  EnvSettings e;
  std::string terrain;
  r.get(section, "terrain", terrain);
  try {
    e.terrain = parse_terrain_kind(terrain);
  } catch (const std::invalid_argument& ex) {
    throw ConfigError(std::string(section) + ".terrain: " + ex.what());
  }
  r.get(section, "horizon", e.config.horizon);
  r.get(section, "action_penalty", e.config.action_penalty);
  r.get(section, "init_noise", e.config.init_noise);
  e.config.physics = physics_from(r, section);
  if (e.config.horizon <= 0) throw ConfigError("env.horizon must be positive");
  return e;
}

json parse_object(const std::string& text, const char* what) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string(what) + ": " + e.what());
  }
  if (!j.is_object()) throw ConfigError(std::string(what) + ": expected a JSON object");
  return j;
}

void check_split(const std::string& split, const char* key) {
  if (split != "train" && split != "test" && split != "all") {
    throw ConfigError(std::string(key) + ": expected train, test or all, got '" + split + "'");
  }
}

}  // namespace

std::string env_settings_to_json(const EnvSettings& env) { return env_json(env).dump(); }

EnvSettings env_settings_from_json(const std::string& text) {
  json given = parse_object(text, "env settings");
  json full = {{"env", env_json(EnvSettings{})}};
  check_keys(given, full.at("env"), "env");
  full["env"].merge_patch(given);
  return env_from(Reader(full), "env");
}

RunConfig run_config_from_json(const std::string& text) {
  const json given = parse_object(text, "config");
  json full = to_json(RunConfig{});
  check_keys(given, full, "");
  // The controller and ppo sections are parsed by their own modules, which
  // apply defaults themselves; merging keeps the key check uniform.
  full.merge_patch(given);
  const Reader r(full);

  RunConfig c;
  std::string dir;
  r.get("corpus", "dir", dir);
  c.corpus_dir = dir;
  try {
    c.checkpoint = full.at("checkpoint").get<std::string>();
  } catch (const json::exception&) {
    throw ConfigError("config key 'checkpoint': bad type");
  }
  r.get("corpus", "seed", c.corpus.seed);
  r.get("corpus", "train_count", c.corpus.train_count);
  r.get("corpus", "test_count", c.corpus.test_count);
  r.get("corpus", "min_limbs", c.corpus.min_limbs);
  r.get("corpus", "max_limbs", c.corpus.max_limbs);
  GenerationRules& g = c.corpus.rules;
  r.get("corpus", "rules", "root_length_lo", g.root_length_lo);
  r.get("corpus", "rules", "root_length_hi", g.root_length_hi);
  r.get("corpus", "rules", "length_lo", g.length_lo);
  r.get("corpus", "rules", "length_hi", g.length_hi);
  r.get("corpus", "rules", "density_lo", g.density_lo);
  r.get("corpus", "rules", "density_hi", g.density_hi);
  r.get("corpus", "rules", "limit_lo_min", g.limit_lo_min);
  r.get("corpus", "rules", "limit_lo_max", g.limit_lo_max);
  r.get("corpus", "rules", "limit_hi_min", g.limit_hi_min);
  r.get("corpus", "rules", "limit_hi_max", g.limit_hi_max);
  r.get("corpus", "rules", "gear_lo", g.gear_lo);
  r.get("corpus", "rules", "gear_hi", g.gear_hi);
  r.get("corpus", "rules", "max_depth", g.max_depth);

  c.env = env_from(r, "env");
  try {
    c.controller = spec_from_json(full.at("controller").dump());
    c.controller.validate();
    c.ppo = ppo_config_from_json(full.at("ppo").dump());
    c.ppo.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }

  r.get("train", "variant", c.train.variant);
  r.get("train", "seed", c.train.seed);
  r.get("train", "steps", c.train.steps);
  r.get("train", "split", c.train.split);
  r.get("train", "robots", c.train.robots);
  r.get("train", "checkpoint_every", c.train.checkpoint_every);
  check_split(c.train.split, "train.split");
  if (c.train.checkpoint_every == 0) throw ConfigError("train.checkpoint_every must be positive");

  r.get("eval", "rollouts", c.eval.rollouts);
  r.get("eval", "seed", c.eval.seed);
  r.get("eval", "split", c.eval.split);
  check_split(c.eval.split, "eval.split");

  r.get("sweep", "parameters", c.sweep.parameters);
  r.get("sweep", "variants_per_robot", c.sweep.variants_per_robot);
  r.get("sweep", "relative_range", c.sweep.relative_range);
  r.get("sweep", "seed", c.sweep.seed);
  r.get("sweep", "rollouts", c.sweep.rollouts);
  r.get("sweep", "split", c.sweep.split);
  check_split(c.sweep.split, "sweep.split");
  for (const std::string& p : c.sweep.parameters) {
    try {
      parse_variation(p);
    } catch (const MorphologyError& e) {
      throw ConfigError(std::string("sweep.parameters: ") + e.what());
    }
  }

  r.get("diagnose", "seed", c.diagnose.seed);
  r.get("diagnose", "split", c.diagnose.split);
  r.get("diagnose", "pe_tolerance", c.diagnose.pe_tolerance);
  r.get("diagnose", "dropout_modes", c.diagnose.dropout_modes);
  r.get("diagnose", "dropout", c.diagnose.dropout);
  r.get("diagnose", "iterations", c.diagnose.iterations);
  r.get("diagnose", "episodes", c.diagnose.episodes);
  r.get("diagnose", "robot", c.diagnose.robot);
  check_split(c.diagnose.split, "diagnose.split");
  for (const std::string& m : c.diagnose.dropout_modes) {
    try {
      parse_dropout_mode(m);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("diagnose.dropout_modes: ") + e.what());
    }
  }

  r.get("ablate", "variants", c.ablate.variants);
  r.get("ablate", "seeds", c.ablate.seeds);
  r.get("ablate", "steps", c.ablate.steps);
  r.get("ablate", "single_robot", c.ablate.single_robot);
  r.get("ablate", "split", c.ablate.split);
  r.get("ablate", "robots", c.ablate.robots);
  r.get("ablate", "rollouts", c.ablate.rollouts);
  r.get("ablate", "eval_seed", c.ablate.eval_seed);
  check_split(c.ablate.split, "ablate.split");
  return c;
}

std::string run_config_to_json(const RunConfig& config) { return to_json(config).dump(2) + "\n"; }

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot read config " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  try {
    return run_config_from_json(ss.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

}  // namespace morphctl
