#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <sstream>

#include "vcrisk/config.hpp"
#include "vcrisk/errors.hpp"
#include "vcrisk/hash.hpp"
#include "vcrisk/linalg.hpp"
#include "vcrisk/random.hpp"

using namespace vcrisk;

TEST_CASE("random stream is reproducible and substreams are disjoint") {
  RandomStream a(42), b(42);
  for (int i = 0; i < 1000; ++i) CHECK(a.uniform() == b.uniform());

  RandomStream s0 = RandomStream::substream(7, 0);
  RandomStream s1 = RandomStream::substream(7, 1);
  CHECK(s0.uniform() != s1.uniform());

  // save/load round-trip restores the exact sequence
  RandomStream c(9);
  for (int i = 0; i < 17; ++i) c.normal();
  std::stringstream ss;
  c.save(ss);
  RandomStream d(0);
  d.load(ss);
  for (int i = 0; i < 100; ++i) CHECK(c.normal() == d.normal());
}

TEST_CASE("normal draws have sane moments") {
  RandomStream r(123);
  double sum = 0.0, sq = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double x = r.normal();
    sum += x;
    sq += x * x;
  }
  CHECK(std::abs(sum / n) < 0.01);
  CHECK(std::abs(sq / n - 1.0) < 0.02);
}

TEST_CASE("uniform_index covers the range without bias toward 0") {
  RandomStream r(5);
  int counts[7] = {0};
  for (int i = 0; i < 70000; ++i) counts[r.uniform_index(7)]++;
  for (int c : counts) CHECK(std::abs(c - 10000) < 500);
}

TEST_CASE("dense solve matches a known system and flags singularity") {
  // 3x3 with known solution x = (1, -2, 3)
  double a[9] = {2, 1, 1, 1, 3, 2, 1, 0, 0};
  double b[3] = {2 * 1 + 1 * -2 + 1 * 3, 1 * 1 + 3 * -2 + 2 * 3, 1.0};
  REQUIRE(solve_dense(a, b, 3));
  CHECK(b[0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(b[1] == doctest::Approx(-2.0).epsilon(1e-12));
  CHECK(b[2] == doctest::Approx(3.0).epsilon(1e-12));

  double sing[4] = {1, 2, 2, 4};
  double rhs[2] = {1, 2};
  CHECK_FALSE(solve_dense(sing, rhs, 2));
}

TEST_CASE("config: defaults load, unknown keys rejected, overrides merge") {
  const Json def = default_config();
  CHECK(def.at("sim").at("h_int").get<double>() == 0.01);

  Json user = {{"sim", {{"h_int", 0.02}}}};
  const Json merged = merge_config(def, user);
  CHECK(merged.at("sim").at("h_int").get<double>() == 0.02);
  CHECK(merged.at("sim").at("f_hz").get<double>() == 50.0);

  Json bad = {{"sim", {{"no_such_key", 1.0}}}};
  CHECK_THROWS_AS(merge_config(def, bad), ConfigError);

  Json bad_type = {{"sim", {{"h_int", "fast"}}}};
  CHECK_THROWS_AS(merge_config(def, bad_type), ConfigError);

  // hash is stable and sensitive
  CHECK(config_hash(def) == config_hash(default_config()));
  CHECK(config_hash(def) != config_hash(merged));
}

TEST_CASE("fnv1a is stable") {
  CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
  CHECK(to_hex(fnv1a64("a")).size() == 16);
}
