#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "vcrisk/config.hpp"
#include "vcrisk/random.hpp"
#include "vcrisk/sim/network.hpp"

namespace vcrisk::sim {

struct GeneratorParams {
  double xd = 2.2;
  double xdp = 0.4;
  double td0 = 8.0;
  double h = 3.0;
  double d = 2.0;
  double v2_setpoint = 1.02;
};

struct AvrParams {
  double ka = 200.0;
  double ta = 0.1;
  double efd_max = 5.0;
  double efd_min = 0.0;
};

struct OxlParams {
  double if_lim = 1.9;
  double gain = 1.0;      // integrator charge rate on (i_f - i_f_lim)
  double threshold = 15.0;
  double decay = 0.05;    // integrator discharge rate toward 0
  double ratchet = 0.02;  // cap rundown rate while i_f stays above the limit
};

struct MotorParams {
  double base_mva = 1500.0;  // fixed rated power
  double rr = 0.05;
  double xm = 0.35;
  double hm = 0.6;
  double s_stall = 0.95;
};

struct StaticLoadParams {
  double alpha = 1.5;
  double beta = 2.5;
  double q_ratio = 0.3;
  double v0 = 1.0;
};

struct LtcParams {
  double deadband = 0.01;
  double delay0 = 30.0;  // first move after entering violation
  double delay = 10.0;   // subsequent moves
  double step = 0.01;
  double r_min = 0.85;
  double r_max = 1.1;
  double v3_ref = 1.0;
};

struct SimParams {
  NetworkModel net;
  GeneratorParams gen;
  AvrParams avr;
  OxlParams oxl;
  MotorParams motor;
  StaticLoadParams load;
  LtcParams ltc;
  double f_hz = 50.0;
  double h_int = 0.01;
  double p_total_mw = 1500.0;

  static SimParams from_config(const Json& sim);
};

enum class Mechanism : int { GeneratorLoss = 1, MotorStall = 2 };
const char* mechanism_name(Mechanism m);

struct InstabilityEvent {
  Mechanism mechanism;
  double t = 0.0;
  std::string detail;
};

struct LogEntry {
  double t = 0.0;
  std::string kind;
  std::string detail;
};

struct GeneratorState {
  double delta = 0.0;   // rotor angle, rad
  double domega = 0.0;  // speed deviation, pu
  double eq = 1.0;      // transient EMF
  double efd = 1.0;     // field voltage
  double pm = 0.0;      // mechanical power, set from the operating condition
};

struct AvrOxlState {
  double v2_ref = 1.0;
  double x_oxl = 0.0;
  bool oxl_active = false;
  double efd_cap = 5.0;  // meaningful once oxl_active
  double i_f = 0.0;      // field current at the cached solution
};

struct MotorState {
  bool present = false;
  double slip = 1e-4;
  double tm = 0.0;  // mechanical torque, pu on motor base
};

struct LtcState {
  double r = 1.0;
  double v3_ref = 1.0;
  double timer = 0.0;
  bool in_violation = false;
  int moves = 0;  // tap moves since entering the current violation
};

struct LoadState {
  double p_total_mw = 1500.0;
  double r_motor = 0.0;
  double p0 = 0.0;  // exponential component at v0, pu
  double q0 = 0.0;
};

struct SimState {
  double t = 0.0;
  GeneratorState gen;
  AvrOxlState avr;
  MotorState motor;
  LtcState ltc;
  LoadState load;
  NetworkModel net;  // per-trajectory copy; branch status mutates on disturbance
  BusVoltages volt;
  double delta_ref = 0.0;  // post-disturbance reference angle
  double max_power_residual = 0.0;
  std::optional<InstabilityEvent> event;
  std::vector<LogEntry> log;
};

struct ScenarioConfig {
  double horizon = 600.0;
  bool disturbance_enabled = true;
  double disturbance_time = 10.0;
  double pg_mw = 400.0;
  double r_motor = 0.0;
  double p_total_mw = 1500.0;
  double sigma_demand_mw = 0.0;
  double sigma_ratio = 0.0;
  double noise_dt = 10.0;

  static ScenarioConfig from_config(const Json& scenario, const Json& sim);
};

struct Trajectory {
  std::vector<double> t, v1, v2, v3, v4, delta, domega, eq, efd, xoxl, slip, tap, v3ref;
  std::vector<std::string> event_mark;
  std::vector<LogEntry> log;
  std::optional<InstabilityEvent> event;
  double max_power_residual = 0.0;

  std::size_t rows() const { return t.size(); }
  void append(const SimState& s, const std::string& mark);
  void write_csv(const std::string& path) const;
};

/// Four-bus multi-scale simulator. Instances are immutable after
/// construction and safe to share across threads; all trajectory state
/// lives in SimState.
class Simulator {
 public:
  explicit Simulator(SimParams p);
  const SimParams& params() const { return p_; }

  /// Pre-disturbance steady state at the given operating condition.
  /// Throws InfeasibleInitialCondition when no equilibrium exists.
  SimState init_steady_state(double pg_mw, double r_motor, double p_total_mw) const;

  /// Re-derives the composite-load split (exponential + motor torque) from
  /// total demand and motor ratio. Motor rated power stays fixed.
  void set_load(SimState& s, double p_total_mw, double r_motor) const;

  /// Trips one tie circuit (0-based index among the 1-4 circuits).
  /// Throws UnknownBranch when the circuit is not in service.
  void apply_disturbance(SimState& s, int tie_circuit) const;

  /// Re-solves the network at the current state (after discrete changes).
  /// On failure records the attributed instability event and returns false.
  bool resolve(SimState& s) const;

  /// One RK4 substep of the fast dynamics, re-solving the network at each
  /// stage. Returns false when a stage solve fails; the state is left at
  /// the last consistent point.
  bool step_fast(SimState& s, double h) const;

  /// Advances `window` seconds (multiple of h_int) interleaving fast steps
  /// with LTC tap logic and OXL activation, detecting instability first-hit.
  /// Returns false once the trajectory is absorbed (s.event set).
  bool step_slow(SimState& s, double window,
                 const std::function<void(const SimState&)>* recorder = nullptr) const;

  /// First-hit instability criteria. Total function of the current state
  /// and the solve outcome.
  std::optional<InstabilityEvent> detect_instability(const SimState& s, bool solve_failed) const;

  struct SlowVars {
    double tap = 1.0;
    double v3_ref = 1.0;
    bool oxl_active = false;
    double efd_cap = 5.0;
    double pm = 0.0;
    double v2_ref = 1.0;
    double p0 = 0.0, q0 = 0.0, tm = 0.0;
    bool motor_present = false;
    bool gen_online = true;
  };
  SlowVars slow_vars(const SimState& s) const;

  struct FastEquilibrium {
    double delta = 0.0, eq = 0.0, efd = 0.0, slip = 0.0;
    BusVoltages volt;
  };
  /// Solves the fast-subsystem equilibrium for frozen slow variables;
  /// nullopt when the Newton iteration finds none (loss of short-term
  /// equilibrium).
  std::optional<FastEquilibrium> solve_short_term_equilibrium(const SlowVars& sv,
                                                              const SimState* warm = nullptr) const;

  using PolicyFn = std::function<double(const SimState&, double t)>;

  /// Full scenario rollout at h_int resolution. `policy` (optional) adjusts
  /// the LTC reference every noise_dt seconds like the MDP action channel.
  Trajectory simulate_trajectory(const ScenarioConfig& sc, RandomStream& rng,
                                 const PolicyFn* policy = nullptr) const;

  InjectionState injections(const SimState& s) const;

  struct MachineVars {
    double id = 0.0, iq = 0.0, pe = 0.0, i_f = 0.0, v2m = 0.0;
  };
  MachineVars machine_vars(double eq, double delta, const Complex& v2) const;

  double motor_torque(double slip, double v3m) const;
  double peak_torque_slip() const { return p_.motor.rr / p_.motor.xm; }

  /// Stable-branch equilibrium slip for torque tm at voltage v; nullopt when
  /// tm exceeds the peak torque at that voltage.
  std::optional<double> equilibrium_slip(double tm, double v) const;

 private:
  struct DerivCtx;

  SimParams p_;
};

}  // namespace vcrisk::sim
