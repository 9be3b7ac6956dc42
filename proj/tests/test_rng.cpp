#include <catch2/catch_amalgamated.hpp>

#include <array>
#include <cmath>
#include <vector>

#include "testutil.hpp"
#include "uvb/rng.hpp"

TEST_CASE("splitmix64 matches the published reference sequence") {
  // First three outputs for seed 1234567, from the reference implementation
  // (Vigna, splitmix64.c, public domain).
  std::uint64_t s = 1234567;
  CHECK(uvb::splitmix64(s) == 6457827717110365317ull);
  CHECK(uvb::splitmix64(s) == 3203168211198807973ull);
  CHECK(uvb::splitmix64(s) == 9817491932198370423ull);
}

TEST_CASE("generator streams are deterministic and seed-separated") {
  uvb::Rng a(42), b(42), c(43);
  bool all_equal = true, any_diff = false;
  for (int i = 0; i < 64; ++i) {
    const auto va = a.next_u64();
    all_equal = all_equal && (va == b.next_u64());
    any_diff = any_diff || (va != c.next_u64());
  }
  CHECK(all_equal);
  CHECK(any_diff);
}

TEST_CASE("mix_seed separates counter streams") {
  const auto k1 = uvb::mix_seed(7, 1, 0, 5);
  const auto k2 = uvb::mix_seed(7, 1, 0, 6);
  const auto k3 = uvb::mix_seed(7, 2, 0, 5);
  CHECK(k1 != k2);
  CHECK(k1 != k3);
  CHECK(k2 != k3);
  CHECK(uvb::mix_seed(7, 1, 0, 5) == k1);
}

TEST_CASE("uniform lies in [0,1) and fills the range") {
  uvb::Rng r(9001);
  double lo = 1.0, hi = 0.0;
  for (int i = 0; i < 20000; ++i) {
    const double u = r.uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    lo = std::min(lo, u);
    hi = std::max(hi, u);
  }
  CHECK(lo < 0.01);
  CHECK(hi > 0.99);
}

TEST_CASE("gaussian moments match the standard normal") {
  uvb::Rng r(31337);
  const int n = 200000;
  std::vector<double> xs(n);
  r.fill_gaussian(xs, 1.0);
  // SE of the mean is 1/sqrt(n) ~ 0.0022; 4-sigma bands.
  CHECK(std::abs(testutil::mean(xs)) < 0.01);
  CHECK(std::abs(testutil::variance(xs) - 1.0) < 0.02);
  double m4 = 0.0;
  for (double x : xs) m4 += x * x * x * x;
  m4 /= n;
  CHECK(std::abs(m4 - 3.0) < 0.15);  // normal kurtosis
}

TEST_CASE("state round-trips through save and restore") {
  uvb::Rng r(555);
  for (int i = 0; i < 17; ++i) r.next_u64();
  const std::array<std::uint64_t, 4> snap = r.state();
  std::vector<double> first(8);
  r.fill_gaussian(first, 2.5);

  uvb::Rng resumed(0);
  resumed.set_state(snap);
  std::vector<double> second(8);
  resumed.fill_gaussian(second, 2.5);
  CHECK(first == second);
}

TEST_CASE("fill_uniform honors bounds") {
  uvb::Rng r(8);
  std::vector<double> v(4096);
  r.fill_uniform(v, -2.0, 3.0);
  for (double x : v) {
    REQUIRE(x >= -2.0);
    REQUIRE(x < 3.0);
  }
}
