#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "testutil.hpp"
#include "uvb/nets.hpp"

using uvb::MlpSpec;
using uvb::NamedMlp;
using uvb::Readout;
using uvb::Tape;

TEST_CASE("parameter counts") {
  CHECK(uvb::mlp_param_count({784, {}, 100, Readout::kLinear}) == 78500u);
  CHECK(uvb::mlp_param_count({2, {3}, 1, Readout::kLinear}) == 13u);
  CHECK(uvb::mlp_param_count({2, {64}, 8, Readout::kLinear}) == 712u);
}

TEST_CASE("layout covers the value vector exactly, in order") {
  const std::vector<NamedMlp> nets = {
      {"enc", {2, {4}, 3, Readout::kLinear}},
      {"dec", {3, {4}, 2, Readout::kLogistic}},
  };
  const auto ps = uvb::make_param_set(nets);
  std::size_t expect = 0;
  for (const auto& e : ps.layout) {
    CHECK(e.offset == expect);
    expect += static_cast<std::size_t>(e.rows) * e.cols;
  }
  CHECK(ps.values.size() == expect);
  CHECK(ps.values.size() ==
        uvb::mlp_param_count(nets[0].spec) + uvb::mlp_param_count(nets[1].spec));
  CHECK(ps.layout.front().name == "enc.w0");
  CHECK(ps.layout.back().name == "dec.b1");
}

TEST_CASE("initialization: reproducible, zero biases, bounded weights") {
  const std::vector<NamedMlp> nets = {{"f", {2, {3}, 1, Readout::kLinear}}};
  const auto a = uvb::init_params(nets, 99);
  const auto b = uvb::init_params(nets, 99);
  const auto c = uvb::init_params(nets, 100);
  CHECK(a.values == b.values);
  CHECK(a.values != c.values);

  const double bound_l0 = std::sqrt(6.0 / (2 + 3));
  for (const auto& e : a.layout) {
    for (int i = 0; i < e.rows * e.cols; ++i) {
      const double v = a.values[e.offset + static_cast<std::size_t>(i)];
      if (e.is_bias) {
        CHECK(v == 0.0);
      } else if (e.name == "f.w0") {
        CHECK(std::abs(v) <= bound_l0);
      }
    }
  }
}

TEST_CASE("one-hidden-unit net matches hand evaluation") {
  // f(x) = w1 * silu(w0*x + b0) + b1 with w0=2, b0=-1, w1=3, b1=0.5, x=0.8
  const MlpSpec s{1, {1}, 1, Readout::kLinear};
  Tape t;
  const std::vector<Tape::Id> x = {t.input(0)};
  const auto out = uvb::mlp_emit(t, s, 0, x);
  REQUIRE(out.size() == 1u);
  t.set_output(out[0]);
  const std::vector<double> params = {2.0, -1.0, 3.0, 0.5};  // w0,b0,w1,b1
  const double got = t.forward(std::vector<double>{0.8}, params);
  const double pre = 2.0 * 0.8 - 1.0;
  const double hidden = pre / (1.0 + std::exp(-pre));
  CHECK(got == Catch::Approx(3.0 * hidden + 0.5).epsilon(1e-15));
}

TEST_CASE("readout behavior at zero parameters") {
  for (Readout r : {Readout::kLinear, Readout::kLogistic}) {
    const MlpSpec s{3, {4}, 2, r};
    Tape t;
    const std::vector<Tape::Id> x = {t.input(0), t.input(1), t.input(2)};
    const auto out = uvb::mlp_emit(t, s, 0, x);
    REQUIRE(out.size() == 2u);
    t.set_output(t.sum(out));
    std::vector<double> params(uvb::mlp_param_count(s), 0.0);
    t.forward(std::vector<double>{0.3, -0.7, 1.1}, params);
    const double want = r == Readout::kLinear ? 0.0 : 0.5;
    CHECK(t.value(out[0]) == want);
    CHECK(t.value(out[1]) == want);
  }
}

TEST_CASE("logistic readout stays inside (0,1) at representable magnitudes") {
  const MlpSpec s{1, {}, 1, Readout::kLogistic};
  Tape t;
  const std::vector<Tape::Id> x = {t.input(0)};
  const auto out = uvb::mlp_emit(t, s, 0, x);
  t.set_output(out[0]);
  for (double w : {-30.0, -5.0, 5.0, 30.0}) {
    const double v = t.forward(std::vector<double>{1.0}, std::vector<double>{w, 0.0});
    CHECK(v > 0.0);
    CHECK(v < 1.0);
  }
}

TEST_CASE("net-level gradients match finite differences") {
  const MlpSpec s{2, {5, 4}, 1, Readout::kLogistic};
  const std::vector<NamedMlp> nets = {{"f", s}};
  const auto ps = uvb::init_params(nets, 7);
  const std::vector<double> x0 = {0.4, -1.2};

  Tape t;
  const std::vector<Tape::Id> x = {t.input(0), t.input(1)};
  t.set_output(uvb::mlp_emit(t, s, 0, x)[0]);
  t.forward(x0, ps.values);
  const auto gx = t.grad_inputs();
  std::vector<double> gp(ps.values.size());
  t.grad_params(gp);

  auto f_of_x = [&](std::span<const double> xx) {
    Tape u;
    const std::vector<Tape::Id> xi = {u.input(0), u.input(1)};
    u.set_output(uvb::mlp_emit(u, s, 0, xi)[0]);
    return u.forward(xx, ps.values);
  };
  auto f_of_p = [&](std::span<const double> pp) {
    Tape u;
    const std::vector<Tape::Id> xi = {u.input(0), u.input(1)};
    u.set_output(uvb::mlp_emit(u, s, 0, xi)[0]);
    return u.forward(x0, pp);
  };
  CHECK(testutil::max_rel_diff(gx, testutil::fd_gradient(f_of_x, x0)) < 1e-6);
  CHECK(testutil::max_rel_diff(gp, testutil::fd_gradient(f_of_p, ps.values)) < 1e-6);
}

TEST_CASE("hidden-unit permutation with matched weights leaves output unchanged") {
  const MlpSpec s{2, {2}, 1, Readout::kLinear};
  // layout: w0 (2x2 row-major), b0 (2), w1 (1x2), b1 (1)
  const std::vector<double> p = {0.3, -0.8, 1.1, 0.4, 0.05, -0.2, 0.9, -1.3, 0.7};
  std::vector<double> q = p;
  std::swap(q[0], q[2]);  // w0 rows (hidden units)
  std::swap(q[1], q[3]);
  std::swap(q[4], q[5]);  // b0
  std::swap(q[6], q[7]);  // w1 columns

  Tape t;
  const std::vector<Tape::Id> x = {t.input(0), t.input(1)};
  t.set_output(uvb::mlp_emit(t, s, 0, x)[0]);
  const std::vector<double> x0 = {0.6, -0.9};
  const double a = t.forward(x0, p);
  const double b = t.forward(x0, q);
  CHECK(a == Catch::Approx(b).epsilon(1e-14));
}

TEST_CASE("input length mismatch raises a dimension error") {
  const MlpSpec s{3, {}, 1, Readout::kLinear};
  Tape t;
  const std::vector<Tape::Id> x = {t.input(0), t.input(1)};
  CHECK_THROWS_AS(uvb::mlp_emit(t, s, 0, x), uvb::DimensionError);
  CHECK_THROWS_AS(uvb::mlp_layers({0, {}, 1, Readout::kLinear}), uvb::DimensionError);
  CHECK_THROWS_AS(uvb::mlp_layers({2, {0}, 1, Readout::kLinear}), uvb::DimensionError);
}
