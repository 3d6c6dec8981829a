#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "vcrisk/sim/network.hpp"

using namespace vcrisk::sim;

namespace {

NetworkModel standard_net() {
  return NetworkModel::four_bus(0.0, 0.3, 0.0, 0.08, 0.1, 1.0, 1000.0);
}

InjectionState no_injections() {
  InjectionState inj;
  inj.gen_online = false;
  inj.motor_present = false;
  inj.p0 = 0.0;
  inj.q0 = 0.0;
  return inj;
}

}  // namespace

TEST_CASE("no-injection flat case solves to the source phasor") {
  const NetworkModel net = standard_net();
  const auto sol = solve_network(net, 1.0, no_injections());
  REQUIRE(sol.has_value());
  CHECK(std::abs(sol->v2 - Complex(1.0, 0.0)) < 1e-10);
  CHECK(std::abs(sol->v3 - Complex(1.0, 0.0)) < 1e-10);
  CHECK(std::abs(sol->v4 - Complex(1.0, 0.0)) < 1e-10);
  CHECK(sol->residual < 1e-10);
}

TEST_CASE("two-bus constant-power load matches the quadratic formula") {
  // Degenerate the four-bus model into source -> X = 0.1 -> P load:
  // single tie of 0.05 plus the LTC branch of 0.05 at tap 1, generator off.
  NetworkModel net = NetworkModel::four_bus(0.0, 0.05, 0.0, 0.08, 0.05, 1.0, 1000.0);
  net.branches[1].in_service = false;  // one tie circuit only
  InjectionState inj = no_injections();
  inj.p0 = 0.5;
  inj.q0 = 0.0;
  inj.alpha = 0.0;  // constant power
  inj.beta = 0.0;

  const auto sol = solve_network(net, 1.0, inj);
  REQUIRE(sol.has_value());

  // V^2 is the larger root of v^4 - (E^2 - 2QX) v^2 + X^2 (P^2 + Q^2) = 0.
  const double e = 1.0, x = 0.1, p = 0.5, q = 0.0;
  const double half = e * e / 2.0 - q * x;
  const double v2sq = half + std::sqrt(half * half - x * x * (p * p + q * q));
  const double v_expect = std::sqrt(v2sq);
  CHECK(std::abs(std::abs(sol->v3) - v_expect) < 1e-8);
  CHECK(sol->residual < 1e-8);
}

TEST_CASE("analytic jacobian matches finite differences") {
  NetworkModel net = standard_net();
  InjectionState inj;
  inj.gen_online = true;
  inj.eq = 1.1;
  inj.delta = 0.4;
  inj.xdp = 0.4;
  inj.motor_present = true;
  inj.motor_scale = 1.5;
  inj.rr = 0.05;
  inj.xm = 0.35;
  inj.slip = 0.03;
  inj.p0 = 0.9;
  inj.q0 = 0.3;
  inj.alpha = 1.5;
  inj.beta = 2.5;

  double x[6] = {1.01, 0.05, 0.97, -0.08, 0.99, -0.02};
  double f0[6], f1[6], jac[36];
  network_residual(net, 0.98, inj, x, f0, jac);

  for (int j = 0; j < 6; ++j) {
    const double eps = 1e-7;
    double xx[6];
    std::copy(x, x + 6, xx);
    xx[j] += eps;
    network_residual(net, 0.98, inj, xx, f1, nullptr);
    for (int i = 0; i < 6; ++i) {
      const double fd = (f1[i] - f0[i]) / eps;
      CHECK(jac[i * 6 + j] == doctest::Approx(fd).epsilon(1e-4));
    }
  }
}

TEST_CASE("loaded solve meets the residual contract and warm start helps") {
  NetworkModel net = standard_net();
  InjectionState inj;
  inj.gen_online = true;
  inj.eq = 1.15;
  inj.delta = 0.5;
  inj.xdp = 0.4;
  inj.motor_present = true;
  inj.motor_scale = 1.5;
  inj.rr = 0.05;
  inj.xm = 0.35;
  inj.slip = 0.02;
  inj.p0 = 0.9;
  inj.q0 = 0.27;

  const auto cold = solve_network(net, 1.0, inj);
  REQUIRE(cold.has_value());
  CHECK(cold->residual < 1e-8);

  const auto warm = solve_network(net, 1.0, inj, &*cold);
  REQUIRE(warm.has_value());
  CHECK(warm->iterations <= 1);
}

TEST_CASE("infeasible constant-power demand yields no solution") {
  NetworkModel net = NetworkModel::four_bus(0.0, 0.05, 0.0, 0.08, 0.05, 1.0, 1000.0);
  net.branches[1].in_service = false;
  InjectionState inj = no_injections();
  inj.p0 = 6.0;  // far beyond the ~V^2/(2X) transfer limit
  inj.alpha = 0.0;
  inj.beta = 0.0;
  CHECK_FALSE(solve_network(net, 1.0, inj).has_value());
}

TEST_CASE("model validation and connectivity") {
  NetworkModel net = standard_net();
  CHECK(net.connected());
  CHECK(net.ties_in_service() == 2);
  net.branches[0].in_service = false;
  CHECK(net.connected());
  CHECK(net.ties_in_service() == 1);
  net.branches[1].in_service = false;
  CHECK_FALSE(net.connected());

  NetworkModel bad = standard_net();
  bad.branches[2].x = -0.1;
  CHECK_THROWS(bad.validate(1.0, 0.85, 1.1));
}
