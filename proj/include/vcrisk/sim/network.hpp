#pragma once

#include <complex>
#include <optional>
#include <vector>

namespace vcrisk::sim {

using Complex = std::complex<double>;

struct Branch {
  int from = 0;
  int to = 0;
  double r = 0.0;
  double x = 0.0;
  double b = 0.0;  // total line charging, split half per end
  bool in_service = true;
  bool is_ltc = false;  // off-nominal tap applied on the `from` side
};

/// Four-bus system: bus 1 remote source (fixed phasor v1 at angle 0),
/// bus 2 local generator, bus 3 load behind the LTC, bus 4 transmission hub.
struct NetworkModel {
  double s_base_mva = 1000.0;
  double v1 = 1.04;
  std::vector<Branch> branches;

  /// Standard topology: two parallel tie circuits 1-4, step-up 2-4,
  /// LTC transformer 4-3.
  static NetworkModel four_bus(double tie_r, double tie_x, double tie_b, double xfmr_x,
                               double ltc_x, double v1, double s_base_mva);

  bool connected() const;
  int ties_in_service() const;
  void validate(double tap, double tap_min, double tap_max) const;
};

/// Quantities held fixed during one algebraic network solve.
struct InjectionState {
  bool gen_online = true;
  double eq = 1.0;     // transient EMF magnitude
  double delta = 0.0;  // rotor angle (rad)
  double xdp = 0.4;

  bool motor_present = false;
  double motor_scale = 1.5;  // motor MVA base / system MVA base
  double rr = 0.05;
  double xm = 0.35;
  double slip = 0.02;

  // exponential static load at bus 3 (consumption, pu at v0)
  double p0 = 0.0;
  double q0 = 0.0;
  double alpha = 1.5;
  double beta = 2.5;
  double v0 = 1.0;
};

struct BusVoltages {
  Complex v2{1.0, 0.0};
  Complex v3{1.0, 0.0};
  Complex v4{1.0, 0.0};
  double residual = 0.0;  // inf-norm of per-bus complex power mismatch
  int iterations = 0;
};

/// Residual F (current mismatch at buses 2,3,4 as 6 reals) of the network
/// algebraic equations at voltage iterate x = (Re V2, Im V2, ..., Im V4),
/// and optionally the 6x6 row-major Jacobian dF/dx.
void network_residual(const NetworkModel& net, double tap, const InjectionState& inj,
                      const double* x, double* f, double* jac);

/// Inf-norm of the per-bus power mismatch S_i = V_i * conj(F_i).
double power_mismatch(const double* x, const double* f);

/// Newton-Raphson with warm start; returns nullopt on non-convergence or a
/// singular Jacobian (candidate loss of short-term equilibrium).
std::optional<BusVoltages> solve_network(const NetworkModel& net, double tap,
                                         const InjectionState& inj,
                                         const BusVoltages* warm = nullptr, int max_iter = 50,
                                         double tol = 1e-9);

}  // namespace vcrisk::sim
