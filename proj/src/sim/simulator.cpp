#include "vcrisk/sim/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "vcrisk/csv.hpp"
#include "vcrisk/errors.hpp"
#include "vcrisk/linalg.hpp"

namespace vcrisk::sim {

namespace {
constexpr double kTwoPi = 6.283185307179586476925286766559;
constexpr double kSlipFloor = 1e-4;

double clip(double v, double lo, double hi) { return std::min(std::max(v, lo), hi); }

// Damped Newton with forward-difference Jacobian; used by the cold-path
// equilibrium and initialization solvers. `fn` returns false when the
// residual cannot be evaluated at the iterate.
bool newton_fd(const std::function<bool(const double*, double*)>& fn, double* x, int n,
               int max_iter, double tol) {
  std::vector<double> f0(n), f1(n), jac(n * n), step(n), xs(x, x + n);
  for (int it = 0; it < max_iter; ++it) {
    if (!fn(xs.data(), f0.data())) return false;
    double norm = 0.0;
    for (double v : f0) norm = std::max(norm, std::abs(v));
    if (!std::isfinite(norm)) return false;
    if (norm < tol) {
      std::copy(xs.begin(), xs.end(), x);
      return true;
    }
    for (int j = 0; j < n; ++j) {
      const double save = xs[j];
      const double eps = 1e-7 * std::max(1.0, std::abs(save));
      xs[j] = save + eps;
      if (!fn(xs.data(), f1.data())) return false;
      xs[j] = save;
      for (int i = 0; i < n; ++i) jac[i * n + j] = (f1[i] - f0[i]) / eps;
    }
    for (int i = 0; i < n; ++i) step[i] = -f0[i];
    if (!solve_dense(jac.data(), step.data(), n)) return false;
    double biggest = 0.0;
    for (double s : step) biggest = std::max(biggest, std::abs(s));
    const double scale = biggest > 0.5 ? 0.5 / biggest : 1.0;
    for (int i = 0; i < n; ++i) xs[i] += scale * step[i];
  }
  return false;
}

}  // namespace

const char* mechanism_name(Mechanism m) {
  return m == Mechanism::GeneratorLoss ? "GeneratorLoss" : "MotorStall";
}

SimParams SimParams::from_config(const Json& sim) {
  SimParams p;
  p.h_int = sim.at("h_int").get<double>();
  p.f_hz = sim.at("f_hz").get<double>();
  p.net = NetworkModel::four_bus(sim.at("tie_r"), sim.at("tie_x"), sim.at("tie_b"),
                                 sim.at("xfmr_x"), sim.at("ltc_x"), sim.at("v1"),
                                 sim.at("s_base_mva"));
  const auto& g = sim.at("gen");
  p.gen = {g.at("xd"), g.at("xdp"), g.at("td0"), g.at("h"), g.at("d"), g.at("v2_setpoint")};
  const auto& a = sim.at("avr");
  p.avr = {a.at("ka"), a.at("ta"), a.at("efd_max"), a.at("efd_min")};
  const auto& o = sim.at("oxl");
  p.oxl = {o.at("if_lim"), o.at("gain"), o.at("threshold"), o.at("decay"), o.at("ratchet")};
  const auto& m = sim.at("motor");
  p.motor = {m.at("base_mva"), m.at("rr"), m.at("xm"), m.at("hm"), m.at("s_stall")};
  const auto& l = sim.at("load");
  p.load = {l.at("alpha"), l.at("beta"), l.at("q_ratio"), l.at("v0")};
  p.p_total_mw = l.at("p_total_mw");
  const auto& t = sim.at("ltc");
  p.ltc = {t.at("deadband"), t.at("delay0"), t.at("delay"),  t.at("step"),
           t.at("r_min"),    t.at("r_max"),  t.at("v3_ref")};
  p.net.validate(clip(1.0, p.ltc.r_min, p.ltc.r_max), p.ltc.r_min, p.ltc.r_max);
  if (!(p.gen.xd > p.gen.xdp && p.gen.xdp > 0.0))
    throw ConfigError("sim.gen: need xd > xdp > 0");
  if (!(p.gen.h > 0.0)) throw ConfigError("sim.gen.h must be positive");
  return p;
}

ScenarioConfig ScenarioConfig::from_config(const Json& scenario, const Json& sim) {
  ScenarioConfig sc;
  sc.horizon = scenario.at("horizon");
  sc.disturbance_enabled = scenario.at("disturbance_enabled");
  sc.disturbance_time = scenario.at("disturbance_time");
  sc.pg_mw = scenario.at("pg_mw");
  sc.r_motor = scenario.at("r_motor");
  sc.p_total_mw = sim.at("load").at("p_total_mw");
  sc.sigma_demand_mw = scenario.at("sigma_demand_mw");
  sc.sigma_ratio = scenario.at("sigma_ratio");
  sc.noise_dt = scenario.at("noise_dt");
  if (!(sc.horizon > 0.0)) throw ConfigError("scenario.horizon must be positive");
  if (sc.r_motor < 0.0 || sc.r_motor > 1.0) throw ConfigError("scenario.r_motor must be in [0,1]");
  if (!(sc.noise_dt > 0.0)) throw ConfigError("scenario.noise_dt must be positive");
  return sc;
}

Simulator::Simulator(SimParams p) : p_(std::move(p)) {}

Simulator::MachineVars Simulator::machine_vars(double eq, double delta, const Complex& v2) const {
  MachineVars mv;
  mv.v2m = std::abs(v2);
  const Complex rot = v2 * std::polar(1.0, -delta);  // V2 in the rotor frame
  mv.id = (eq - rot.real()) / p_.gen.xdp;
  mv.iq = -rot.imag() / p_.gen.xdp;
  mv.pe = eq * mv.iq;
  mv.i_f = eq + (p_.gen.xd - p_.gen.xdp) * mv.id;
  return mv;
}

double Simulator::motor_torque(double slip, double v3m) const {
  const double u = p_.motor.rr / slip;
  return v3m * v3m * u / (u * u + p_.motor.xm * p_.motor.xm);
}

std::optional<double> Simulator::equilibrium_slip(double tm, double v) const {
  if (tm <= 0.0) return kSlipFloor;
  const double disc = v * v * v * v - 4.0 * tm * tm * p_.motor.xm * p_.motor.xm;
  if (disc < 0.0) return std::nullopt;
  const double u = (v * v + std::sqrt(disc)) / (2.0 * tm);
  return p_.motor.rr / u;
}

InjectionState Simulator::injections(const SimState& s) const {
  InjectionState inj;
  inj.gen_online = true;
  inj.eq = s.gen.eq;
  inj.delta = s.gen.delta;
  inj.xdp = p_.gen.xdp;
  inj.motor_present = s.motor.present;
  inj.motor_scale = p_.motor.base_mva / s.net.s_base_mva;
  inj.rr = p_.motor.rr;
  inj.xm = p_.motor.xm;
  inj.slip = s.motor.slip;
  inj.p0 = s.load.p0;
  inj.q0 = s.load.q0;
  inj.alpha = p_.load.alpha;
  inj.beta = p_.load.beta;
  inj.v0 = p_.load.v0;
  return inj;
}

void Simulator::set_load(SimState& s, double p_total_mw, double r_motor) const {
  r_motor = clip(r_motor, 0.0, 1.0);
  if (!s.motor.present) r_motor = 0.0;
  s.load.p_total_mw = p_total_mw;
  s.load.r_motor = r_motor;
  s.load.p0 = (1.0 - r_motor) * p_total_mw / s.net.s_base_mva;
  s.load.q0 = p_.load.q_ratio * s.load.p0;
  s.motor.tm = s.motor.present ? r_motor * p_total_mw / p_.motor.base_mva : 0.0;
}

void Simulator::apply_disturbance(SimState& s, int tie_circuit) const {
  int seen = 0;
  for (auto& br : s.net.branches) {
    if (br.from == 1 && br.to == 4) {
      if (seen == tie_circuit) {
        if (!br.in_service)
          throw UnknownBranch("tie circuit " + std::to_string(tie_circuit) + " already out of service");
        br.in_service = false;
        s.delta_ref = s.gen.delta;
        s.log.push_back({s.t, "line_trip", "tie circuit " + std::to_string(tie_circuit)});
        return;
      }
      ++seen;
    }
  }
  throw UnknownBranch("no tie circuit with index " + std::to_string(tie_circuit));
}

bool Simulator::resolve(SimState& s) const {
  const auto sol = solve_network(s.net, s.ltc.r, injections(s), &s.volt);
  if (!sol) {
    s.event = detect_instability(s, true);
    if (s.event) s.log.push_back({s.t, "instability", s.event->detail});
    return false;
  }
  s.volt = *sol;
  s.max_power_residual = std::max(s.max_power_residual, sol->residual);
  s.avr.i_f = machine_vars(s.gen.eq, s.gen.delta, sol->v2).i_f;
  return true;
}

std::optional<InstabilityEvent> Simulator::detect_instability(const SimState& s,
                                                              bool solve_failed) const {
  if (solve_failed) {
    if (s.motor.present && s.motor.slip > peak_torque_slip())
      return InstabilityEvent{Mechanism::MotorStall, s.t,
                              "equilibrium lost with slip beyond peak torque"};
    if (s.avr.oxl_active || s.gen.efd >= p_.avr.efd_max - 1e-9)
      return InstabilityEvent{Mechanism::GeneratorLoss, s.t,
                              "equilibrium lost while field-limited"};
    return InstabilityEvent{Mechanism::GeneratorLoss, s.t, "equilibrium lost"};
  }
  if (std::abs(s.gen.delta - s.delta_ref) >= kTwoPi)
    return InstabilityEvent{Mechanism::GeneratorLoss, s.t, "pole slip"};
  if (s.motor.present && s.motor.slip >= p_.motor.s_stall)
    return InstabilityEvent{Mechanism::MotorStall, s.t, "motor stall"};
  return std::nullopt;
}

// Fast state vector: [delta, domega, eq, efd, slip, x_oxl, efd_cap]
struct Simulator::DerivCtx {
  double tap = 1.0;
  double v2_ref = 1.0;
  double pm = 0.0;
  double tm = 0.0;
  bool motor_present = false;
  bool oxl_active = false;
  double w0 = kTwoPi * 50.0;
  InjectionState inj;  // template; eq/delta/slip overwritten per stage
};

bool Simulator::step_fast(SimState& s, double h) const {
  DerivCtx ctx;
  ctx.tap = s.ltc.r;
  ctx.v2_ref = s.avr.v2_ref;
  ctx.pm = s.gen.pm;
  ctx.tm = s.motor.tm;
  ctx.motor_present = s.motor.present;
  ctx.oxl_active = s.avr.oxl_active;
  ctx.w0 = kTwoPi * p_.f_hz;
  ctx.inj = injections(s);

  // The network model may have been modified per trajectory; solve against
  // the state's copy, not the pristine template.
  const NetworkModel& net = s.net;
  auto eval = [&](const double* y, BusVoltages& warm, double* dy) -> bool {
    const double cap_hi = ctx.oxl_active ? std::min(y[6], p_.avr.efd_max) : p_.avr.efd_max;
    const double eq = y[2];
    if (eq <= 0.0) return false;
    InjectionState inj = ctx.inj;
    inj.eq = eq;
    inj.delta = y[0];
    inj.slip = clip(y[4], kSlipFloor, 1.0);
    const auto sol = solve_network(net, ctx.tap, inj, &warm);
    if (!sol) return false;
    warm = *sol;
    s.max_power_residual = std::max(s.max_power_residual, sol->residual);
    const MachineVars mv = machine_vars(eq, y[0], sol->v2);
    const double v3m = std::abs(sol->v3);
    const double efd = clip(y[3], p_.avr.efd_min, cap_hi);
    dy[0] = ctx.w0 * y[1];
    dy[1] = (ctx.pm - mv.pe - p_.gen.d * y[1]) / (2.0 * p_.gen.h);
    dy[2] = (efd - mv.i_f) / p_.gen.td0;
    double defd = (p_.avr.ka * (ctx.v2_ref - mv.v2m) - efd) / p_.avr.ta;
    if (efd >= cap_hi && defd > 0.0) defd = 0.0;
    if (efd <= p_.avr.efd_min && defd < 0.0) defd = 0.0;
    dy[3] = defd;
    if (ctx.motor_present) {
      const double slip = inj.slip;
      double dslip = (ctx.tm - motor_torque(slip, v3m)) / (2.0 * p_.motor.hm);
      if (slip >= 1.0 && dslip > 0.0) dslip = 0.0;
      if (slip <= kSlipFloor && dslip < 0.0) dslip = 0.0;
      dy[4] = dslip;
    } else {
      dy[4] = 0.0;
    }
    const double excess = mv.i_f - p_.oxl.if_lim;
    const double x_oxl = std::max(y[5], 0.0);
    double dxoxl = excess > 0.0 ? p_.oxl.gain * excess : -p_.oxl.decay * x_oxl;
    if (x_oxl <= 0.0 && dxoxl < 0.0) dxoxl = 0.0;
    dy[5] = dxoxl;
    dy[6] = ctx.oxl_active && excess > 0.0 ? -p_.oxl.ratchet * excess : 0.0;
    return true;
  };

  const double y0[7] = {s.gen.delta, s.gen.domega, s.gen.eq,     s.gen.efd,
                        s.motor.slip, s.avr.x_oxl, s.avr.efd_cap};
  double k1[7], k2[7], k3[7], k4[7], yw[7];
  BusVoltages warm = s.volt;

  if (!eval(y0, warm, k1)) return false;
  for (int i = 0; i < 7; ++i) yw[i] = y0[i] + 0.5 * h * k1[i];
  if (!eval(yw, warm, k2)) return false;
  for (int i = 0; i < 7; ++i) yw[i] = y0[i] + 0.5 * h * k2[i];
  if (!eval(yw, warm, k3)) return false;
  for (int i = 0; i < 7; ++i) yw[i] = y0[i] + h * k3[i];
  if (!eval(yw, warm, k4)) return false;

  double yn[7];
  for (int i = 0; i < 7; ++i)
    yn[i] = y0[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);

  const double cap_hi = s.avr.oxl_active ? std::min(yn[6], p_.avr.efd_max) : p_.avr.efd_max;
  yn[3] = clip(yn[3], p_.avr.efd_min, cap_hi);
  yn[4] = clip(yn[4], kSlipFloor, 1.0);
  yn[5] = std::max(yn[5], 0.0);

  InjectionState inj = ctx.inj;
  inj.eq = yn[2];
  inj.delta = yn[0];
  inj.slip = yn[4];
  if (yn[2] <= 0.0) return false;
  const auto sol = solve_network(net, ctx.tap, inj, &warm);
  if (!sol) return false;

  s.gen.delta = yn[0];
  s.gen.domega = yn[1];
  s.gen.eq = yn[2];
  s.gen.efd = yn[3];
  s.motor.slip = yn[4];
  s.avr.x_oxl = yn[5];
  s.avr.efd_cap = yn[6];
  s.volt = *sol;
  s.max_power_residual = std::max(s.max_power_residual, sol->residual);
  s.avr.i_f = machine_vars(s.gen.eq, s.gen.delta, sol->v2).i_f;
  s.t += h;
  return true;
}

namespace {

// Deadband/delay tap logic; returns true when the tap moved.
bool ltc_update(SimState& s, const LtcParams& ltc, double dt) {
  const double err = std::abs(s.volt.v3) - s.ltc.v3_ref;
  if (std::abs(err) <= ltc.deadband) {
    s.ltc.timer = 0.0;
    s.ltc.in_violation = false;
    s.ltc.moves = 0;
    return false;
  }
  if (!s.ltc.in_violation) {
    s.ltc.in_violation = true;
    s.ltc.timer = 0.0;
    s.ltc.moves = 0;
  }
  s.ltc.timer += dt;
  const double need = s.ltc.moves == 0 ? ltc.delay0 : ltc.delay;
  if (s.ltc.timer + 1e-9 < need) return false;
  s.ltc.timer -= need;
  const double dir = err < 0.0 ? -1.0 : 1.0;  // low voltage -> lower ratio
  const double r_new = std::min(std::max(s.ltc.r + dir * ltc.step, ltc.r_min), ltc.r_max);
  if (r_new == s.ltc.r) {
    s.log.push_back({s.t, "tap_limit", "tap saturated at " + std::to_string(s.ltc.r)});
    s.ltc.moves += 1;
    return false;
  }
  s.log.push_back({s.t, "tap_step", s.ltc.moves == 0 ? "tap stepping begins" : ""});
  s.ltc.r = r_new;
  s.ltc.moves += 1;
  return true;
}

}  // namespace

bool Simulator::step_slow(SimState& s, double window,
                          const std::function<void(const SimState&)>* recorder) const {
  const int n = static_cast<int>(std::llround(window / p_.h_int));
  if (n <= 0 || std::abs(n * p_.h_int - window) > 1e-6)
    throw std::invalid_argument("step_slow: window must be a positive multiple of h_int");

  for (int i = 0; i < n; ++i) {
    if (!step_fast(s, p_.h_int)) {
      s.event = detect_instability(s, true);
      s.log.push_back({s.t, "instability", s.event->detail});
      return false;
    }
    if (auto ev = detect_instability(s, false)) {
      s.event = ev;
      s.log.push_back({s.t, "instability", ev->detail});
      return false;
    }
    if (!s.avr.oxl_active && s.avr.x_oxl >= p_.oxl.threshold) {
      s.avr.oxl_active = true;
      s.avr.efd_cap = std::min(s.gen.efd, p_.oxl.if_lim);
      s.gen.efd = std::min(s.gen.efd, s.avr.efd_cap);
      s.log.push_back({s.t, "oxl_activated", "field cap enforced"});
    }
    if (ltc_update(s, p_.ltc, p_.h_int)) {
      if (!resolve(s)) return false;
    }
    if (recorder) (*recorder)(s);
  }
  return true;
}

Simulator::SlowVars Simulator::slow_vars(const SimState& s) const {
  SlowVars sv;
  sv.tap = s.ltc.r;
  sv.v3_ref = s.ltc.v3_ref;
  sv.oxl_active = s.avr.oxl_active;
  sv.efd_cap = s.avr.efd_cap;
  sv.pm = s.gen.pm;
  sv.v2_ref = s.avr.v2_ref;
  sv.p0 = s.load.p0;
  sv.q0 = s.load.q0;
  sv.tm = s.motor.tm;
  sv.motor_present = s.motor.present;
  return sv;
}

std::optional<Simulator::FastEquilibrium> Simulator::solve_short_term_equilibrium(
    const SlowVars& sv, const SimState* warm) const {
  const double cap_eff = sv.oxl_active ? std::min(sv.efd_cap, p_.avr.efd_max) : p_.avr.efd_max;
  const NetworkModel& net = warm ? warm->net : p_.net;

  if (!sv.gen_online) {
    // No fast machine states left; the equilibrium is just the network
    // solution at the frozen slow variables.
    InjectionState inj;
    inj.gen_online = false;
    inj.motor_present = sv.motor_present;
    inj.motor_scale = p_.motor.base_mva / net.s_base_mva;
    inj.rr = p_.motor.rr;
    inj.xm = p_.motor.xm;
    inj.slip = kSlipFloor;
    inj.p0 = sv.p0;
    inj.q0 = sv.q0;
    inj.alpha = p_.load.alpha;
    inj.beta = p_.load.beta;
    inj.v0 = p_.load.v0;
    const auto sol = solve_network(net, sv.tap, inj);
    if (!sol) return std::nullopt;
    FastEquilibrium fe;
    fe.slip = kSlipFloor;
    fe.volt = *sol;
    return fe;
  }

  InjectionState base;
  base.gen_online = true;
  base.xdp = p_.gen.xdp;
  base.motor_present = sv.motor_present;
  base.motor_scale = p_.motor.base_mva / net.s_base_mva;
  base.rr = p_.motor.rr;
  base.xm = p_.motor.xm;
  base.p0 = sv.p0;
  base.q0 = sv.q0;
  base.alpha = p_.load.alpha;
  base.beta = p_.load.beta;
  base.v0 = p_.load.v0;

  // Unknowns: [delta, eq, efd, slip, ReV2, ImV2, ReV3, ImV3, ReV4, ImV4]
  auto residual = [&](bool avr_free, const double* w, double* f) -> bool {
    const double delta = w[0], eq = w[1], efd = w[2], slip = w[3];
    if (eq <= 1e-6 || slip <= 1e-6 || slip > 1.5) return false;
    InjectionState inj = base;
    inj.eq = eq;
    inj.delta = delta;
    inj.slip = slip;
    network_residual(net, sv.tap, inj, w + 4, f + 4, nullptr);
    const Complex v2{w[4], w[5]};
    const Complex v3{w[6], w[7]};
    const double v3m = std::abs(v3);
    if (v3m < 0.05) return false;
    const MachineVars mv = machine_vars(eq, delta, v2);
    f[0] = sv.pm - mv.pe;
    f[1] = efd - mv.i_f;
    f[2] = avr_free ? efd - p_.avr.ka * (sv.v2_ref - mv.v2m) : efd - cap_eff;
    f[3] = sv.motor_present && sv.tm > 0.0 ? sv.tm - motor_torque(slip, v3m)
                                           : slip - kSlipFloor;
    return true;
  };

  auto make_start = [&](bool from_warm, double* w) {
    if (from_warm && warm) {
      w[0] = warm->gen.delta;
      w[1] = warm->gen.eq;
      w[2] = warm->gen.efd;
      w[3] = warm->motor.slip;
      w[4] = warm->volt.v2.real();
      w[5] = warm->volt.v2.imag();
      w[6] = warm->volt.v3.real();
      w[7] = warm->volt.v3.imag();
      w[8] = warm->volt.v4.real();
      w[9] = warm->volt.v4.imag();
    } else {
      w[0] = 0.3;
      w[1] = 1.0;
      w[2] = std::min(1.5, cap_eff);
      w[3] = sv.motor_present && sv.tm > 0.0
                 ? equilibrium_slip(sv.tm, 1.0).value_or(0.05)
                 : kSlipFloor;
      w[4] = 1.0;
      w[5] = 0.0;
      w[6] = 1.0;
      w[7] = 0.0;
      w[8] = 1.0;
      w[9] = 0.0;
    }
  };

  auto accept = [&](const double* w, bool avr_free) -> std::optional<FastEquilibrium> {
    const double efd = w[2];
    if (avr_free && efd > cap_eff + 1e-9) return std::nullopt;  // saturated; retry pinned
    if (efd < p_.avr.efd_min - 1e-9) return std::nullopt;
    if (w[1] <= 0.0 || w[3] <= 0.0 || w[3] > 1.0) return std::nullopt;
    FastEquilibrium fe;
    fe.delta = w[0];
    fe.eq = w[1];
    fe.efd = efd;
    fe.slip = w[3];
    fe.volt.v2 = {w[4], w[5]};
    fe.volt.v3 = {w[6], w[7]};
    fe.volt.v4 = {w[8], w[9]};
    double x6[6], f6[6];
    std::copy(w + 4, w + 10, x6);
    InjectionState inj = base;
    inj.eq = fe.eq;
    inj.delta = fe.delta;
    inj.slip = fe.slip;
    network_residual(net, sv.tap, inj, x6, f6, nullptr);
    fe.volt.residual = power_mismatch(x6, f6);
    return fe;
  };

  double w[10];
  for (const bool avr_free : {true, false}) {
    for (const bool from_warm : {true, false}) {
      if (from_warm && !warm) continue;
      make_start(from_warm, w);
      auto fn = [&](const double* x, double* f) { return residual(avr_free, x, f); };
      if (!newton_fd(fn, w, 10, 80, 1e-9)) continue;
      if (auto fe = accept(w, avr_free)) return fe;
    }
  }
  return std::nullopt;
}

SimState Simulator::init_steady_state(double pg_mw, double r_motor, double p_total_mw) const {
  SimState s;
  s.net = p_.net;
  s.motor.present = r_motor > 0.0;
  s.ltc.v3_ref = p_.ltc.v3_ref;
  set_load(s, p_total_mw, r_motor);

  const double pg_pu = pg_mw / s.net.s_base_mva;
  const double v2set = p_.gen.v2_setpoint;
  const double v3tgt = p_.ltc.v3_ref;

  double slip0 = kSlipFloor;
  if (s.motor.present && s.motor.tm > 0.0) {
    const auto sl = equilibrium_slip(s.motor.tm, v3tgt);
    if (!sl)
      throw InfeasibleInitialCondition("motor torque exceeds peak torque at the reference voltage");
    slip0 = *sl;
  }

  InjectionState inj;
  inj.gen_online = false;  // generator enters through the power constraint
  inj.xdp = p_.gen.xdp;
  inj.motor_present = s.motor.present;
  inj.motor_scale = p_.motor.base_mva / s.net.s_base_mva;
  inj.rr = p_.motor.rr;
  inj.xm = p_.motor.xm;
  inj.slip = slip0;
  inj.p0 = s.load.p0;
  inj.q0 = s.load.q0;
  inj.alpha = p_.load.alpha;
  inj.beta = p_.load.beta;
  inj.v0 = p_.load.v0;

  // Stage 1: solve for [theta2, V3, V4, tap] pinning |V3| at the reference.
  auto flow_residual = [&](bool tap_free, double tap_fixed, const double* u, double* f) -> bool {
    const double theta2 = u[0];
    const double tap = tap_free ? u[5] : tap_fixed;
    if (tap < 0.3 || tap > 2.0) return false;
    double x6[6] = {v2set * std::cos(theta2), v2set * std::sin(theta2), u[1], u[2], u[3], u[4]};
    if (u[1] * u[1] + u[2] * u[2] < 1e-4) return false;
    double f6[6];
    network_residual(s.net, tap, inj, x6, f6, nullptr);
    const Complex v2{x6[0], x6[1]};
    const Complex igen{f6[0], f6[1]};  // machine must supply the bus-2 mismatch
    const Complex sgen = v2 * std::conj(igen);
    f[0] = sgen.real() - pg_pu;
    f[1] = f6[2];
    f[2] = f6[3];
    f[3] = f6[4];
    f[4] = f6[5];
    if (tap_free) f[5] = std::sqrt(u[1] * u[1] + u[2] * u[2]) - v3tgt;
    return true;
  };

  double u[6] = {0.05, v3tgt, -0.05, 1.0, -0.03, 1.0};
  auto fn6 = [&](const double* x, double* f) { return flow_residual(true, 0.0, x, f); };
  if (!newton_fd(fn6, u, 6, 60, 1e-10))
    throw InfeasibleInitialCondition("no pre-disturbance power flow solution");

  double tap = clip(u[5], p_.ltc.r_min, p_.ltc.r_max);
  tap = p_.ltc.r_min + std::round((tap - p_.ltc.r_min) / p_.ltc.step) * p_.ltc.step;
  tap = clip(tap, p_.ltc.r_min, p_.ltc.r_max);

  // Stage 2: re-solve at the discrete tap; |V3| floats inside the deadband.
  auto fn5 = [&](const double* x, double* f) { return flow_residual(false, tap, x, f); };
  if (!newton_fd(fn5, u, 5, 60, 1e-10))
    throw InfeasibleInitialCondition("no power flow solution at the discrete tap");

  const Complex v2 = std::polar(v2set, u[0]);
  double x6[6] = {v2.real(), v2.imag(), u[1], u[2], u[3], u[4]};
  double f6[6];
  network_residual(s.net, tap, inj, x6, f6, nullptr);
  const Complex igen{f6[0], f6[1]};
  const Complex emf = v2 + Complex(0.0, p_.gen.xdp) * igen;

  s.gen.delta = std::arg(emf);
  s.gen.domega = 0.0;
  s.gen.eq = std::abs(emf);
  if (s.gen.eq <= 0.1) throw InfeasibleInitialCondition("degenerate internal EMF");

  const MachineVars mv = machine_vars(s.gen.eq, s.gen.delta, v2);
  s.gen.pm = mv.pe;
  s.gen.efd = mv.i_f;
  if (s.gen.efd > p_.avr.efd_max)
    throw InfeasibleInitialCondition("field voltage above ceiling at initialization (" +
                                     std::to_string(s.gen.efd) + ")");
  if (s.gen.efd < p_.avr.efd_min)
    throw InfeasibleInitialCondition("field voltage below floor at initialization (" +
                                     std::to_string(s.gen.efd) + ")");
  s.avr.v2_ref = mv.v2m + s.gen.efd / p_.avr.ka;
  s.avr.x_oxl = 0.0;
  s.avr.oxl_active = false;
  s.avr.efd_cap = p_.avr.efd_max;
  s.motor.slip = slip0;
  s.ltc.r = tap;
  s.delta_ref = s.gen.delta;

  s.volt.v2 = v2;
  s.volt.v3 = {u[1], u[2]};
  s.volt.v4 = {u[3], u[4]};
  if (!resolve(s)) throw InfeasibleInitialCondition("network solve failed at the steady state");
  if (std::abs(s.volt.v2 - v2) > 1e-6)
    throw InfeasibleInitialCondition("inconsistent machine interface at initialization");
  return s;
}

void Trajectory::append(const SimState& s, const std::string& mark) {
  t.push_back(s.t);
  v1.push_back(s.net.v1);
  v2.push_back(std::abs(s.volt.v2));
  v3.push_back(std::abs(s.volt.v3));
  v4.push_back(std::abs(s.volt.v4));
  delta.push_back(s.gen.delta);
  domega.push_back(s.gen.domega);
  eq.push_back(s.gen.eq);
  efd.push_back(s.gen.efd);
  xoxl.push_back(s.avr.x_oxl);
  slip.push_back(s.motor.slip);
  tap.push_back(s.ltc.r);
  v3ref.push_back(s.ltc.v3_ref);
  event_mark.push_back(mark);
}

void Trajectory::write_csv(const std::string& path) const {
  CsvWriter w(path, "t,V1,V2,V3,V4,delta,domega,Eq,Efd,Xoxl,slip,tap,V3ref,event");
  for (std::size_t i = 0; i < rows(); ++i) {
    w.row({CsvWriter::num(t[i]), CsvWriter::num(v1[i]), CsvWriter::num(v2[i]),
           CsvWriter::num(v3[i]), CsvWriter::num(v4[i]), CsvWriter::num(delta[i]),
           CsvWriter::num(domega[i], "%.12g"), CsvWriter::num(eq[i]), CsvWriter::num(efd[i]),
           CsvWriter::num(xoxl[i]), CsvWriter::num(slip[i]), CsvWriter::num(tap[i]),
           CsvWriter::num(v3ref[i]), event_mark[i]});
  }
}

Trajectory Simulator::simulate_trajectory(const ScenarioConfig& sc, RandomStream& rng,
                                          const PolicyFn* policy) const {
  Trajectory traj;
  SimState s = init_steady_state(sc.pg_mw, sc.r_motor, sc.p_total_mw);

  std::size_t consumed_log = 0;
  auto mark_of = [&](const SimState& st) {
    std::string mark;
    for (; consumed_log < st.log.size(); ++consumed_log) {
      if (!mark.empty()) mark += ';';
      mark += st.log[consumed_log].kind;
    }
    return mark;
  };
  std::function<void(const SimState&)> recorder = [&](const SimState& st) {
    traj.append(st, mark_of(st));
  };

  traj.append(s, "");
  const bool want_boundaries = sc.sigma_demand_mw > 0.0 || sc.sigma_ratio > 0.0 || policy;
  bool disturbance_pending = sc.disturbance_enabled;
  const double grid = p_.h_int;
  auto snap = [&](double v) { return std::round(v / grid) * grid; };
  const double t_dist = snap(sc.disturbance_time);
  int noise_k = 1;

  while (s.t < sc.horizon - 1e-6 && !s.event) {
    double t_next = sc.horizon;
    if (disturbance_pending && t_dist > s.t + 1e-6) t_next = std::min(t_next, t_dist);
    if (want_boundaries) {
      while (noise_k * sc.noise_dt <= s.t + 1e-6) ++noise_k;
      t_next = std::min(t_next, snap(noise_k * sc.noise_dt));
    }
    if (disturbance_pending && t_dist <= s.t + 1e-6) {
      apply_disturbance(s, 0);
      disturbance_pending = false;
      if (!resolve(s)) break;
      continue;
    }
    const double window = snap(t_next - s.t);
    if (window <= 0.0) break;
    if (!step_slow(s, window, &recorder)) break;
    if (want_boundaries && std::abs(s.t - snap(noise_k * sc.noise_dt)) < 1e-6) {
      ++noise_k;
      if (policy) {
        const double a = clip((*policy)(s, s.t), -1.0, 1.0);
        s.ltc.v3_ref = clip(s.ltc.v3_ref + 0.1 * a, 0.9, 1.1);
      }
      if (sc.sigma_demand_mw > 0.0 || sc.sigma_ratio > 0.0) {
        const double demand = sc.p_total_mw + rng.normal(0.0, sc.sigma_demand_mw);
        double ratio = sc.r_motor;
        if (s.motor.present && sc.sigma_ratio > 0.0)
          ratio = clip(sc.r_motor + rng.normal(0.0, sc.sigma_ratio), 0.0, 1.0);
        set_load(s, demand, ratio);
        if (!resolve(s)) break;
      }
    }
  }

  if (s.event) {
    std::string mark = mark_of(s);
    if (mark.empty()) mark = mechanism_name(s.event->mechanism);
    traj.append(s, mark);
  }
  traj.log = s.log;
  traj.event = s.event;
  traj.max_power_residual = s.max_power_residual;
  return traj;
}

}  // namespace vcrisk::sim
