#include "vcrisk/config.hpp"

#include <fstream>

#include "vcrisk/errors.hpp"
#include "vcrisk/hash.hpp"

namespace vcrisk {

Json default_config() {
  Json c;

  // Four-bus system: devices, network, integration step.
  c["sim"] = {
      {"h_int", 0.01},
      {"f_hz", 50.0},
      {"s_base_mva", 1000.0},
      {"v1", 1.08},
      {"tie_r", 0.0},
      {"tie_x", 0.45},
      {"tie_b", 0.0},
      {"xfmr_x", 0.08},
      {"ltc_x", 0.1},
      {"gen",
       {{"xd", 2.6},
        {"xdp", 0.4},
        {"td0", 8.0},
        {"h", 3.0},
        {"d", 5.0},
        {"v2_setpoint", 1.02}}},
      {"avr", {{"ka", 100.0}, {"ta", 0.1}, {"efd_max", 5.0}, {"efd_min", 0.0}}},
      {"oxl",
       {{"if_lim", 2.55},
        {"gain", 1.0},
        {"threshold", 30.0},
        {"decay", 0.05},
        {"ratchet", 0.06}}},
      {"motor",
       {{"base_mva", 600.0},
        {"rr", 0.05},
        {"xm", 0.2},
        {"hm", 0.6},
        {"s_stall", 0.95}}},
      {"load",
       {{"p_total_mw", 1500.0},
        {"alpha", 1.5},
        {"beta", 2.5},
        {"q_ratio", 0.3},
        {"v0", 1.0}}},
      {"ltc",
       {{"deadband", 0.01},
        {"delay0", 30.0},
        {"delay", 15.0},
        {"step", 0.01},
        {"r_min", 0.78},
        {"r_max", 1.1},
        {"v3_ref", 1.0}}},
  };

  // Open-loop scenario runs (`simulate`).
  c["scenario"] = {
      {"horizon", 600.0},
      {"disturbance_enabled", true},
      {"disturbance_time", 10.0},
      {"pg_mw", 850.0},
      {"r_motor", 0.0},
      {"sigma_demand_mw", 0.0},
      {"sigma_ratio", 0.0},
      {"noise_dt", 10.0},
      {"output_csv", "trajectory.csv"},
  };

  // Safety-MDP episode wrapper.
  c["episode"] = {
      {"tau", 600.0},
      {"tau_max", 600.0},
      {"dt", 10.0},
      {"disturbance_time", 0.0},
      {"pg_min_mw", 850.0},
      {"pg_max_mw", 850.0},
      {"rmotor_min", 0.0},
      {"rmotor_max", 0.0},
      {"sigma_demand_mw", 5.0},
      {"sigma_ratio", 0.05},
      {"action_scale", 0.1},
      {"v3ref_min", 0.9},
      {"v3ref_max", 1.1},
      {"observe_v3ref", false},
      {"reset_retries", 20},
      {"norm",
       {{"v4", {0.4, 1.2}},
        {"eq", {0.0, 1.6}},
        {"xoxl", {0.0, 30.0}},
        {"pg_mw", {0.0, 1200.0}},
        {"rmotor", {0.0, 1.0}}}},
  };

  // Scalar toy system used to validate the whole stack against an exact
  // dynamic-programming solution.
  c["toy"] = {
      {"b", 0.5},
      {"c", 0.3},
      {"sigma", 0.4},
      {"dt", 1.0},
      {"tau_max", 10.0},
      {"z0", 1.0},
      {"z_max", 4.0},
  };

  c["dp"] = {
      {"nz", 201},
      {"quad_points", 64},
      {"actions", 9},
  };

  c["mc"] = {
      {"env", "toy"},
      {"n", 1000},
      {"tau", 10.0},
      {"output_csv", "mc.csv"},
  };

  c["train"] = {
      {"env", "toy"},
      {"episodes", 4000},
      {"max_env_steps", -1},
      {"batch_size", 256},
      {"buffer_capacity", 1000000},
      {"gamma", 1.0},
      {"polyak", 0.005},
      {"policy_delay", 2},
      {"lr_actor", 1e-5},
      {"lr_critic", 1e-4},
      {"hidden", {64, 64, 64}},
      {"expl_sigma", 0.2},
      {"expl_sigma_min", 0.05},
      {"expl_decay", 0.995},
      {"tgt_sigma", 0.1},
      {"tgt_clip", 0.3},
      {"grad_per_step", 1},
      {"warmup_steps", 1000},
      {"sample_tau", true},
      {"z0_min", 0.05},
      {"z0_max", 3.5},
      {"eval_every", 500},
      {"eval_episodes", 200},
      {"checkpoint_every", 0},
      {"resume", ""},
  };

  c["surface"] = {
      {"env", "power"},
      {"taus", {60.0, 120.0, 300.0, 600.0}},
      {"pgs_mw", {850.0}},
      {"rmotors", {0.0}},
      {"n_per_cell", 200},
      {"checkpoint", ""},
      {"output_csv", "surface.csv"},
  };

  c["eval"] = {
      {"agreement_tol", 0.01},
      {"grid_h", 20},
      {"grid_z", 20},
  };

  c["validate"] = {
      {"episodes", 1000},
      {"report_json", "validation.json"},
  };

  return c;
}

Json merge_config(const Json& defaults, const Json& user, const std::string& path) {
  if (defaults.is_object()) {
    if (!user.is_object())
      throw ConfigError("config: expected object at '" + (path.empty() ? "<root>" : path) + "'");
    Json out = defaults;
    for (auto it = user.begin(); it != user.end(); ++it) {
      const std::string child = path.empty() ? it.key() : path + "." + it.key();
      if (!defaults.contains(it.key())) throw ConfigError("config: unknown key '" + child + "'");
      out[it.key()] = merge_config(defaults.at(it.key()), it.value(), child);
    }
    return out;
  }
  // Scalars and arrays replace wholesale, but must not change kind.
  const bool def_num = defaults.is_number();
  const bool usr_num = user.is_number();
  if (def_num != usr_num || defaults.is_array() != user.is_array() ||
      defaults.is_string() != user.is_string() || defaults.is_boolean() != user.is_boolean())
    throw ConfigError("config: type mismatch at '" + path + "'");
  return user;
}

Json load_config(const std::string& path) {
  const Json defaults = default_config();
  if (path.empty()) return defaults;
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open '" + path + "'");
  Json user;
  try {
    user = Json::parse(in);
  } catch (const std::exception& e) {
    throw ConfigError("config: parse error in '" + path + "': " + e.what());
  }
  return merge_config(defaults, user);
}

std::string config_hash(const Json& effective) { return to_hex(fnv1a64(effective.dump())); }

}  // namespace vcrisk
