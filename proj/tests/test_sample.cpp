#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "testutil.hpp"
#include "uvb/sample.hpp"

using uvb::Matrix;
using uvb::SampleConfig;
using uvb::walk_jump;

TEST_CASE("langevin update matches the closed form on the quadratic energy") {
  auto f = uvb::quadratic_field(2);
  const double delta = 0.05;
  std::vector<double> y = {0.4, -0.3};
  const std::vector<double> y0 = y;
  const std::uint64_t walk_key = uvb::mix_seed(77, 3);
  std::vector<double> sbuf(2), nbuf(2);
  uvb::langevin_step(f, y, delta, 0, walk_key, sbuf, nbuf);

  std::vector<double> xi(2);
  uvb::Rng check(walk_key);
  check.fill_gaussian(xi, 1.0);
  for (int i = 0; i < 2; ++i) {
    const double want = y0[static_cast<std::size_t>(i)] +
                        delta * delta * (-y0[static_cast<std::size_t>(i)]) +
                        std::numbers::sqrt2 * delta * xi[static_cast<std::size_t>(i)];
    CHECK(y[static_cast<std::size_t>(i)] == Catch::Approx(want).margin(1e-12));
  }
}

TEST_CASE("zero step size keeps the chain at its starting point") {
  auto f = uvb::quadratic_field(3);
  SampleConfig cfg;
  cfg.steps = 50;
  cfg.delta = 0.0;
  cfg.period = 0;
  cfg.seed = 9;
  const auto r = walk_jump(f, cfg);

  std::vector<double> y0(3);
  uvb::Rng init(uvb::mix_seed(cfg.seed, uvb::stream::kWalkInit, 0));
  init.fill_uniform(y0, 0.0, 1.0);
  CHECK(r.final_y == y0);
  CHECK(r.jumps.rows == 0);
}

TEST_CASE("chain on the standard-normal energy reaches its stationary moments") {
  // Discretized chain y <- (1 - delta^2) y + sqrt(2) delta xi has stationary
  // variance 2 delta^2 / (1 - (1-delta^2)^2) = 1 / (1 - delta^2/2).
  auto f = uvb::quadratic_field(1);
  SampleConfig cfg;
  cfg.steps = 20000;
  cfg.delta = 0.1;
  cfg.period = 0;
  cfg.seed = 4;
  double sum = 0.0, sumsq = 0.0;
  std::uint64_t count = 0;
  const auto r = walk_jump(f, cfg, 0, [&](std::uint64_t t, std::span<const double> y) {
    if (t <= 1000) return;
    sum += y[0];
    sumsq += y[0] * y[0];
    ++count;
  });
  (void)r;
  const double m = sum / static_cast<double>(count);
  const double v = sumsq / static_cast<double>(count) - m * m;
  CHECK(std::abs(m) < 0.15);
  CHECK(v > 0.85);
  CHECK(v < 1.15);
}

TEST_CASE("recording jumps does not perturb the walk") {
  auto fa = uvb::quadratic_field(2);
  auto fb = uvb::quadratic_field(2);
  SampleConfig with;
  with.steps = 200;
  with.delta = 0.2;
  with.period = 10;
  with.seed = 11;
  SampleConfig without = with;
  without.period = 0;

  std::vector<double> traj_a, traj_b;
  const auto ra = walk_jump(fa, with, 0, [&](std::uint64_t, std::span<const double> y) {
    traj_a.insert(traj_a.end(), y.begin(), y.end());
  });
  const auto rb = walk_jump(fb, without, 0, [&](std::uint64_t, std::span<const double> y) {
    traj_b.insert(traj_b.end(), y.begin(), y.end());
  });
  CHECK(ra.jumps.rows == 20);
  CHECK(rb.jumps.rows == 0);
  CHECK(traj_a == traj_b);
  CHECK(ra.final_y == rb.final_y);
}

TEST_CASE("chains reproduce by seed and separate by chain index") {
  auto f = uvb::quadratic_field(2);
  SampleConfig cfg;
  cfg.steps = 100;
  cfg.delta = 0.15;
  cfg.period = 25;
  cfg.seed = 21;
  const auto a = walk_jump(f, cfg, 0);
  const auto b = walk_jump(f, cfg, 0);
  const auto c = walk_jump(f, cfg, 1);
  CHECK(a.final_y == b.final_y);
  CHECK(a.jumps.data == b.jumps.data);
  CHECK(a.jump_steps == std::vector<std::uint64_t>{25, 50, 75, 100});
  CHECK(a.final_y != c.final_y);
}

TEST_CASE("zero walk steps with jumps enabled denoises the starting point once") {
  auto f = uvb::two_mass_field();
  SampleConfig cfg;
  cfg.steps = 0;
  cfg.period = 10;
  cfg.seed = 2;
  const auto r = walk_jump(f, cfg);
  REQUIRE(r.jumps.rows == 1);
  std::vector<double> y0(1);
  uvb::Rng init(uvb::mix_seed(cfg.seed, uvb::stream::kWalkInit, 0));
  init.fill_uniform(y0, 0.0, 1.0);
  CHECK(r.jumps.at(0, 0) == Catch::Approx(std::tanh(y0[0])).epsilon(1e-12));
}

TEST_CASE("runaway chains abort with the failing step") {
  // Energy -0.5 ||y||^2 pushes the walk outward exponentially.
  uvb::Tape t;
  std::vector<uvb::Tape::Id> sq(1, t.square(t.input(0)));
  t.set_output(t.scale(t.sum(sq), -0.5));
  uvb::TapeField f(std::move(t), 1, 1.0);

  SampleConfig cfg;
  cfg.steps = 10000;
  cfg.delta = 0.2;
  cfg.period = 0;
  cfg.seed = 3;
  try {
    walk_jump(f, cfg, 5);
    FAIL("expected ChainError");
  } catch (const uvb::ChainError& e) {
    CHECK(e.chain() == 5);
    CHECK(e.step() > 0);
    CHECK(e.step() < 10000);
  }
}

TEST_CASE("two denoising passes compose the posterior mean with itself") {
  auto f = uvb::two_mass_field();
  std::vector<double> y = {1.3}, x1(1), x2(1);
  uvb::two_step_denoise(f, y, x1, x2, 99);
  CHECK(x1[0] == Catch::Approx(std::tanh(1.3)).epsilon(1e-12));
  CHECK(x2[0] == Catch::Approx(std::tanh(std::tanh(1.3))).epsilon(1e-12));
}

TEST_CASE("latent-model walks support frozen and resampled draws") {
  uvb::UvbSpec s;
  s.d = 2;
  s.dz = 2;
  s.k = 1;
  s.enc_hidden = {6};
  s.dec_hidden = {6};
  uvb::EnergyModel m = uvb::EnergyModel::uvb(s, 0.5);
  m.init(17);
  uvb::ModelField fa(m), fb(m), fc(m);

  SampleConfig fresh;
  fresh.steps = 20;
  fresh.delta = 0.05;
  fresh.period = 0;
  fresh.seed = 8;
  SampleConfig frozen = fresh;
  frozen.resample_eps = false;

  const auto a = walk_jump(fa, fresh);
  const auto b = walk_jump(fb, fresh);
  const auto c = walk_jump(fc, frozen);
  CHECK(a.final_y == b.final_y);
  CHECK(a.final_y != c.final_y);
}

TEST_CASE("decoder prior samples") {
  uvb::UvbSpec s;
  s.d = 3;
  s.dz = 2;
  s.k = 1;
  s.enc_hidden = {4};
  s.dec_hidden = {4};
  s.dec_readout = uvb::Readout::kLinear;

  SECTION("constant decoder maps every draw to its bias") {
    uvb::EnergyModel m = uvb::EnergyModel::uvb(s, 1.0);  // params stay zero
    // dec has one hidden layer, so the readout bias is its second bias entry
    for (const auto& e : m.params().layout)
      if (e.name == "dec.b1") {
        m.params().values[e.offset] = 0.25;
        m.params().values[e.offset + 1] = -1.5;
        m.params().values[e.offset + 2] = 3.0;
      }
    const Matrix out = uvb::decoder_prior_sample(m, 5, 1);
    REQUIRE(out.rows == 5);
    REQUIRE(out.cols == 3);
    for (int i = 0; i < 5; ++i) {
      CHECK(out.at(i, 0) == 0.25);
      CHECK(out.at(i, 1) == -1.5);
      CHECK(out.at(i, 2) == 3.0);
    }
  }

  SECTION("trained-weight draws reproduce and vary") {
    uvb::EnergyModel m = uvb::EnergyModel::uvb(s, 1.0);
    m.init(23);
    const Matrix a = uvb::decoder_prior_sample(m, 4, 7);
    const Matrix b = uvb::decoder_prior_sample(m, 4, 7);
    const Matrix c = uvb::decoder_prior_sample(m, 4, 8);
    CHECK(a.data == b.data);
    CHECK(a.data != c.data);
    CHECK(a.row(0)[0] != a.row(1)[0]);
  }

  SECTION("plain energy networks have no decoder") {
    uvb::DeenSpec ds;
    ds.d = 2;
    ds.hidden = {4};
    const uvb::EnergyModel m = uvb::EnergyModel::deen(ds, 1.0);
    CHECK_THROWS_AS(uvb::decoder_prior_sample(m, 1, 1), uvb::ConfigError);
  }
}
