#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <vector>

#include "testutil.hpp"
#include "uvb/metrics.hpp"

using uvb::EnergyModel;
using uvb::GmmSpec;
using uvb::Matrix;

namespace {

EnergyModel zero_deen(int d, double sigma) {
  uvb::DeenSpec s;
  s.d = d;
  s.hidden = {8};
  return EnergyModel::deen(s, sigma);  // params stay zero: f == 0, score == 0
}

GmmSpec unit_gaussian() {
  GmmSpec g;
  g.weights = {1.0};
  g.means = {{0.0}};
  g.var = 1.0;
  return g;
}

GmmSpec desk_gmm() {
  GmmSpec g;
  g.weights = {0.25, 0.25, 0.25, 0.25};
  g.means = {{0.2, 0.2}, {0.2, 0.8}, {0.8, 0.2}, {0.8, 0.8}};
  g.var = 0.0025;
  return g;
}

}  // namespace

TEST_CASE("loss table: same model in both columns gives identical numbers") {
  const EnergyModel m = zero_deen(2, 0.5);
  Matrix train(64, 2), test(32, 2);
  uvb::Rng r(3);
  r.fill_uniform(train.data, 0.0, 1.0);
  r.fill_uniform(test.data, 0.0, 1.0);
  const auto row = uvb::loss_table_row(m, m, train, test, 7);
  CHECK(row.a_train == row.b_train);
  CHECK(row.a_test == row.b_test);
  CHECK(row.sigma == 0.5);

  const auto again = uvb::loss_table_row(m, m, train, test, 7);
  CHECK(row.a_train == again.a_train);
  CHECK(row.a_test == again.a_test);
}

TEST_CASE("loss table: zero-gradient energies sit at the sigma^2 d identity") {
  const double sigma = 1.0;
  const EnergyModel a = zero_deen(2, sigma);
  const EnergyModel b = zero_deen(2, sigma);
  Matrix train(4096, 2), test(4096, 2);
  uvb::Rng r(5);
  r.fill_uniform(train.data, 0.0, 1.0);
  r.fill_uniform(test.data, 0.0, 1.0);
  const auto row = uvb::loss_table_row(a, b, train, test, 11);
  // x_hat(y) = y, so each entry estimates E||eps||^2 = sigma^2 d = 2;
  // 3 Monte Carlo standard errors at n = 4096 is about 0.1.
  CHECK(std::abs(row.a_train - 2.0) < 0.1);
  CHECK(std::abs(row.a_test - 2.0) < 0.1);
  CHECK(std::abs(row.b_train - 2.0) < 0.1);
  CHECK(std::abs(row.b_test - 2.0) < 0.1);
}

TEST_CASE("loss table rejects mismatched models") {
  Matrix train(8, 2), test(8, 2);
  train.data.assign(16, 0.5);
  test.data.assign(16, 0.5);
  CHECK_THROWS_AS(uvb::loss_table_row(zero_deen(2, 0.5), zero_deen(2, 1.0), train, test, 1),
                  uvb::ConfigError);
  CHECK_THROWS_AS(uvb::loss_table_row(zero_deen(3, 0.5), zero_deen(3, 0.5), train, test, 1),
                  uvb::DimensionError);
}

TEST_CASE("loss table file has the four model columns in both scales") {
  namespace fs = std::filesystem;
  const auto path = fs::temp_directory_path() / "uvb_loss_table.csv";
  uvb::LossTable t;
  t.d = 2;
  t.rows.push_back({0.5, 1.0, 1.1, 2.0, 2.1});
  t.rows.push_back({1.0, 3.0, 3.1, 4.0, 4.1});
  uvb::write_loss_table(path.string(), t);
  std::ifstream in(path);
  std::string header, r1, r2;
  std::getline(in, header);
  std::getline(in, r1);
  std::getline(in, r2);
  CHECK(header ==
        "sigma,uvb_train_total,uvb_test_total,deen_train_total,deen_test_total,"
        "uvb_train_per_dim,uvb_test_per_dim,deen_train_per_dim,deen_test_per_dim");
  CHECK(r1 ==
        "0.5,1,1.1000000000000001,2,2.1000000000000001,0.5,"
        "0.55000000000000004,1,1.05");
  CHECK(r2.substr(0, 2) == "1,");
}

TEST_CASE("score error of the oracle against itself is exactly zero") {
  const GmmSpec g = desk_gmm();
  uvb::OracleField f(g, 0.5);
  const auto e = uvb::score_error(f, g, 0.5, 200, 13);
  CHECK(e.mse == 0.0);
  CHECK(e.relative == 0.0);
}

TEST_CASE("score error of the zero energy on a unit Gaussian is relatively one") {
  const GmmSpec g = unit_gaussian();
  const EnergyModel m = zero_deen(1, 1.0);
  uvb::ModelField f(m);
  const auto e = uvb::score_error(f, g, 1.0, 5000, 17);
  CHECK(e.relative == 1.0);  // zero prediction: error power == reference power
  // E||score||^2 with y ~ N(0,2), score = -y/2: E[y^2]/4 = 0.5
  CHECK(e.mse == Catch::Approx(0.5).margin(0.03));
}

TEST_CASE("risk gap of the oracle is exactly zero and closed forms hold") {
  const GmmSpec g = unit_gaussian();
  uvb::OracleField of(g, 1.0);
  const auto r0 = uvb::bayes_risk_gap(of, g, 1.0, 2000, 19);
  CHECK(r0.gap == 0.0);
  // Posterior variance of x given y is 1/2 at var = sigma = 1.
  CHECK(r0.bayes_risk == Catch::Approx(0.5).margin(0.05));

  const EnergyModel m = zero_deen(1, 1.0);
  uvb::ModelField mf(m);
  const auto r1 = uvb::bayes_risk_gap(mf, g, 1.0, 50000, 19);
  CHECK(r1.model_risk == Catch::Approx(1.0).margin(0.02));
  CHECK(r1.gap == Catch::Approx(0.5).margin(0.02));
}

TEST_CASE("risk gap never undercuts the Bayes floor") {
  const GmmSpec g = desk_gmm();
  uvb::UvbSpec s;
  s.d = 2;
  s.dz = 2;
  s.k = 1;
  s.enc_hidden = {8};
  s.dec_hidden = {8};
  EnergyModel m = EnergyModel::uvb(s, 0.5);
  m.init(41);  // arbitrary untrained energy
  uvb::ModelField f(m);
  const auto r = uvb::bayes_risk_gap(f, g, 0.5, 4000, 23);
  CHECK(r.gap > -0.01);
}

TEST_CASE("risk gap and score error agree through the estimator identity") {
  // x_hat_model - x_hat_oracle = sigma^2 (score_model - score_oracle), and the
  // cross term is mean-zero, so gap ~= sigma^4 * score mse on shared draws.
  const GmmSpec g = unit_gaussian();
  const EnergyModel m = zero_deen(1, 1.0);
  uvb::ModelField f1(m), f2(m);
  const int n = 100000;
  const std::uint64_t seed = 29;
  const auto se = uvb::score_error(f1, g, 1.0, n, seed);
  const auto rg = uvb::bayes_risk_gap(f2, g, 1.0, n, seed);
  CHECK(std::abs(rg.gap - se.mse) < 0.05 * se.mse);
}

TEST_CASE("metrics are reproducible by seed") {
  const GmmSpec g = desk_gmm();
  uvb::OracleField f(g, 0.5);
  const auto a = uvb::bayes_risk_gap(f, g, 0.5, 500, 31);
  const auto b = uvb::bayes_risk_gap(f, g, 0.5, 500, 31);
  const auto c = uvb::bayes_risk_gap(f, g, 0.5, 500, 32);
  CHECK(a.model_risk == b.model_risk);
  CHECK(a.bayes_risk == b.bayes_risk);
  CHECK(a.model_risk != c.model_risk);
}

TEST_CASE("posterior diagnostics: zero encoder gives exactly zero KL") {
  uvb::UvbSpec s;
  s.d = 2;
  s.dz = 3;
  s.k = 2;
  s.enc_hidden = {4};
  s.dec_hidden = {4};
  s.dec_readout = uvb::Readout::kLinear;
  const EnergyModel m = EnergyModel::uvb(s, 0.5);  // params stay zero
  Matrix y(20, 2);
  uvb::Rng r(2);
  r.fill_uniform(y.data, 0.0, 1.0);
  const auto d = uvb::vae_diagnostics(m, y, 43);
  CHECK(d.kl_mean == 0.0);
  // dec(z) == 0, so the scaled reconstruction is mean ||y||^2 / (2 sigma^2).
  double want = 0.0;
  for (double v : y.data) want += v * v;
  want /= 2.0 * 0.5 * 0.5 * y.rows;
  CHECK(d.recon_mean == Catch::Approx(want).epsilon(1e-12));
}

TEST_CASE("posterior diagnostics reject non-latent models and bad shapes") {
  Matrix y(4, 2);
  y.data.assign(8, 0.1);
  CHECK_THROWS_AS(uvb::vae_diagnostics(zero_deen(2, 0.5), y, 1), uvb::ConfigError);
  uvb::UvbSpec s;
  s.d = 3;
  s.dz = 2;
  CHECK_THROWS_AS(uvb::vae_diagnostics(EnergyModel::uvb(s, 0.5), y, 1),
                  uvb::DimensionError);
}

TEST_CASE("diagnostics table lists one model per row") {
  namespace fs = std::filesystem;
  const auto path = fs::temp_directory_path() / "uvb_diag_table.csv";
  uvb::write_diagnostics_table(path.string(), {"uvb", "vae"},
                               {{692.0, 103.0}, {3.7, 51.5}});
  std::ifstream in(path);
  std::string l0, l1, l2;
  std::getline(in, l0);
  std::getline(in, l1);
  std::getline(in, l2);
  CHECK(l0 == "model,kl_mean,recon_mean");
  CHECK(l1 == "uvb,692,103");
  CHECK(l2 == "vae,3.7000000000000002,51.5");
}
