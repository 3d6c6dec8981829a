#include "vcrisk/sim/network.hpp"

#include <array>
#include <cmath>
#include <stdexcept>

#include "vcrisk/linalg.hpp"

namespace vcrisk::sim {

NetworkModel NetworkModel::four_bus(double tie_r, double tie_x, double tie_b, double xfmr_x,
                                    double ltc_x, double v1, double s_base_mva) {
  NetworkModel net;
  net.v1 = v1;
  net.s_base_mva = s_base_mva;
  net.branches = {
      {1, 4, tie_r, tie_x, tie_b, true, false},
      {1, 4, tie_r, tie_x, tie_b, true, false},
      {2, 4, 0.0, xfmr_x, 0.0, true, false},
      {4, 3, 0.0, ltc_x, 0.0, true, true},
  };
  return net;
}

bool NetworkModel::connected() const {
  // union-find over buses 1..4
  std::array<int, 5> parent{0, 1, 2, 3, 4};
  auto find = [&](int a) {
    while (parent[a] != a) a = parent[a] = parent[parent[a]];
    return a;
  };
  for (const auto& br : branches)
    if (br.in_service) parent[find(br.from)] = find(br.to);
  const int root = find(1);
  return find(2) == root && find(3) == root && find(4) == root;
}

int NetworkModel::ties_in_service() const {
  int n = 0;
  for (const auto& br : branches)
    if (br.in_service && br.from == 1 && br.to == 4) ++n;
  return n;
}

void NetworkModel::validate(double tap, double tap_min, double tap_max) const {
  for (const auto& br : branches) {
    if (!(br.x > 0.0)) throw std::invalid_argument("network: branch reactance must be positive");
    if (br.from < 1 || br.from > 4 || br.to < 1 || br.to > 4)
      throw std::invalid_argument("network: bus index out of range");
  }
  if (!(tap_min > 0.0 && tap_min < tap_max))
    throw std::invalid_argument("network: need 0 < tap_min < tap_max");
  if (tap < tap_min || tap > tap_max) throw std::invalid_argument("network: tap out of range");
  if (ties_in_service() >= 1 && !connected())
    throw std::invalid_argument("network: graph disconnected");
}

namespace {

// Reduced system: rows/cols for buses 2,3,4 (index 0..2), with the fixed
// source at bus 1 folded into an injection vector.
struct ReducedY {
  Complex y[3][3]{};
  Complex rhs[3]{};  // fixed current injections (source, generator EMF)
};

ReducedY assemble(const NetworkModel& net, double tap, const InjectionState& inj) {
  ReducedY red;
  auto idx = [](int bus) { return bus - 2; };  // bus 2..4 -> 0..2; bus 1 -> -1
  const Complex v1{net.v1, 0.0};
  for (const auto& br : net.branches) {
    if (!br.in_service) continue;
    const Complex ys = 1.0 / Complex(br.r, br.x);
    const Complex ysh(0.0, br.b * 0.5);
    const double t = br.is_ltc ? tap : 1.0;
    const Complex yff = ys / (t * t) + ysh;
    const Complex ytt = ys + ysh;
    const Complex yft = -ys / t;
    const int f = idx(br.from), to = idx(br.to);
    if (f >= 0)
      red.y[f][f] += yff;
    if (to >= 0)
      red.y[to][to] += ytt;
    if (f >= 0 && to >= 0) {
      red.y[f][to] += yft;
      red.y[to][f] += yft;
    } else if (f < 0 && to >= 0) {  // from side is the source bus
      red.rhs[to] -= yft * v1;      // move Y_t1 * V1 to the right-hand side
    } else if (to < 0 && f >= 0) {
      red.rhs[f] -= yft * v1;
    }
  }
  if (inj.gen_online) {
    const Complex yg = 1.0 / Complex(0.0, inj.xdp);
    red.y[0][0] += yg;
    red.rhs[0] += yg * std::polar(inj.eq, inj.delta);
  }
  if (inj.motor_present) {
    const Complex ym = inj.motor_scale / Complex(inj.rr / inj.slip, inj.xm);
    red.y[1][1] += ym;
  }
  return red;
}

// exponent fast paths for the common half-integer defaults
inline double powv(double v, double e) {
  if (e == 0.0) return 1.0;
  if (e == 1.0) return v;
  if (e == 1.5) return v * std::sqrt(v);
  if (e == 2.0) return v * v;
  if (e == 2.5) return v * v * std::sqrt(v);
  return std::pow(v, e);
}

}  // namespace

void network_residual(const NetworkModel& net, double tap, const InjectionState& inj,
                      const double* x, double* f, double* jac) {
  const ReducedY red = assemble(net, tap, inj);
  const Complex v[3] = {{x[0], x[1]}, {x[2], x[3]}, {x[4], x[5]}};

  Complex mis[3];
  for (int i = 0; i < 3; ++i) {
    Complex acc = -red.rhs[i];
    for (int k = 0; k < 3; ++k) acc += red.y[i][k] * v[k];
    mis[i] = acc;
  }

  // exponential load at bus 3 (reduced index 1): consumption current
  const double lx = x[2], ly = x[3];
  const double r2 = lx * lx + ly * ly;
  const double vm = std::sqrt(r2);
  const double p = inj.p0 * powv(vm / inj.v0, inj.alpha);
  const double q = inj.q0 * powv(vm / inj.v0, inj.beta);
  // I = conj(S)/conj(V) = (P - jQ) * V / |V|^2
  const double ilx = (p * lx + q * ly) / r2;
  const double ily = (p * ly - q * lx) / r2;
  mis[1] += Complex(ilx, ily);

  for (int i = 0; i < 3; ++i) {
    f[2 * i] = mis[i].real();
    f[2 * i + 1] = mis[i].imag();
  }

  if (!jac) return;
  for (int i = 0; i < 36; ++i) jac[i] = 0.0;
  for (int i = 0; i < 3; ++i) {
    for (int k = 0; k < 3; ++k) {
      const double g = red.y[i][k].real(), b = red.y[i][k].imag();
      jac[(2 * i) * 6 + 2 * k] = g;
      jac[(2 * i) * 6 + 2 * k + 1] = -b;
      jac[(2 * i + 1) * 6 + 2 * k] = b;
      jac[(2 * i + 1) * 6 + 2 * k + 1] = g;
    }
  }
  // load current block d(I_L)/d(V3)
  const double dpx = inj.alpha * p * lx / r2, dpy = inj.alpha * p * ly / r2;
  const double dqx = inj.beta * q * lx / r2, dqy = inj.beta * q * ly / r2;
  const double sx = p * lx + q * ly;
  const double sy = p * ly - q * lx;
  const double j00 = (dpx * lx + p + dqx * ly) / r2 - 2.0 * lx * sx / (r2 * r2);
  const double j01 = (dpy * lx + dqy * ly + q) / r2 - 2.0 * ly * sx / (r2 * r2);
  const double j10 = (dpx * ly - dqx * lx - q) / r2 - 2.0 * lx * sy / (r2 * r2);
  const double j11 = (dpy * ly + p - dqy * lx) / r2 - 2.0 * ly * sy / (r2 * r2);
  jac[2 * 6 + 2] += j00;
  jac[2 * 6 + 3] += j01;
  jac[3 * 6 + 2] += j10;
  jac[3 * 6 + 3] += j11;
}

double power_mismatch(const double* x, const double* f) {
  double worst = 0.0;
  for (int i = 0; i < 3; ++i) {
    const Complex v{x[2 * i], x[2 * i + 1]};
    const Complex s = v * std::conj(Complex(f[2 * i], f[2 * i + 1]));
    worst = std::max({worst, std::abs(s.real()), std::abs(s.imag())});
  }
  return worst;
}

std::optional<BusVoltages> solve_network(const NetworkModel& net, double tap,
                                         const InjectionState& inj, const BusVoltages* warm,
                                         int max_iter, double tol) {
  double x[6];
  if (warm) {
    x[0] = warm->v2.real();
    x[1] = warm->v2.imag();
    x[2] = warm->v3.real();
    x[3] = warm->v3.imag();
    x[4] = warm->v4.real();
    x[5] = warm->v4.imag();
  } else {
    for (int i = 0; i < 3; ++i) {
      x[2 * i] = 1.0;
      x[2 * i + 1] = 0.0;
    }
  }

  double f[6], jac[36], step[6];
  for (int it = 1; it <= max_iter; ++it) {
    network_residual(net, tap, inj, x, f, jac);
    const double pmis = power_mismatch(x, f);
    if (!std::isfinite(pmis)) return std::nullopt;
    if (pmis < tol) {
      BusVoltages out;
      out.v2 = {x[0], x[1]};
      out.v3 = {x[2], x[3]};
      out.v4 = {x[4], x[5]};
      out.residual = pmis;
      out.iterations = it - 1;
      return out;
    }
    for (int i = 0; i < 6; ++i) step[i] = -f[i];
    if (!solve_dense(jac, step, 6)) return std::nullopt;
    double biggest = 0.0;
    for (double s : step) biggest = std::max(biggest, std::abs(s));
    const double scale = biggest > 0.25 ? 0.25 / biggest : 1.0;
    for (int i = 0; i < 6; ++i) x[i] += scale * step[i];
    // low-voltage iterates indicate divergence toward the unstable branch
    for (int i = 0; i < 3; ++i)
      if (x[2 * i] * x[2 * i] + x[2 * i + 1] * x[2 * i + 1] < 1e-4) return std::nullopt;
  }
  return std::nullopt;
}

}  // namespace vcrisk::sim
