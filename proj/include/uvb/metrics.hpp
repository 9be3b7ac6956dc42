#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "uvb/data.hpp"
#include "uvb/energy.hpp"
#include "uvb/errors.hpp"
#include "uvb/field.hpp"
#include "uvb/io.hpp"
#include "uvb/rng.hpp"
#include "uvb/train.hpp"

namespace uvb {

// Evaluation streams (fresh draws, never the training noise).
namespace stream {
constexpr std::uint64_t kEvalX = 0x65766C78u;      // clean draws
constexpr std::uint64_t kEvalNoise = 0x65766C6Eu;  // corrupting noise
constexpr std::uint64_t kEvalEps = 0x65766C65u;    // latent draws per point
}  // namespace stream

// ---- loss table ---------------------------------------------------------------

// One sigma row of the cross-model loss comparison. Values are mean total
// ||x - x_hat(y)||^2 per example; divide by `d` for per-dimension numbers.
struct LossTableRow {
  double sigma = 0.0;
  double a_train = 0.0, a_test = 0.0;  // first model (latent-variable energy)
  double b_train = 0.0, b_test = 0.0;  // second model (plain-network energy)
};

struct LossTable {
  int d = 0;
  std::vector<LossTableRow> rows;
};

// Empirical-Bayes loss of `m` over freshly corrupted copies of `clean`.
inline double eb_loss_on(const EnergyModel& m, const Matrix& clean, std::uint64_t seed) {
  Rng noise(mix_seed(seed, stream::kEvalNoise));
  const NoisyBatch nb = make_noisy_pairs(clean, m.sigma(), noise);
  return eb_loss_mean(m, nb.x, nb.y, mix_seed(seed, stream::kEvalEps));
}

// Both models graded on the same clean data; they must agree on sigma and
// dimension so the comparison is meaningful.
inline LossTableRow loss_table_row(const EnergyModel& model_a, const EnergyModel& model_b,
                                   const Matrix& train_clean, const Matrix& test_clean,
                                   std::uint64_t seed) {
  if (model_a.sigma() != model_b.sigma())
    throw ConfigError("loss table: models were trained at different sigma");
  if (model_a.d() != model_b.d() || model_a.d() != train_clean.cols ||
      train_clean.cols != test_clean.cols)
    throw DimensionError("loss table: model/data dimension mismatch");
  LossTableRow r;
  r.sigma = model_a.sigma();
  r.a_train = eb_loss_on(model_a, train_clean, mix_seed(seed, 1));
  r.a_test = eb_loss_on(model_a, test_clean, mix_seed(seed, 2));
  r.b_train = eb_loss_on(model_b, train_clean, mix_seed(seed, 1));
  r.b_test = eb_loss_on(model_b, test_clean, mix_seed(seed, 2));
  return r;
}

inline void write_loss_table(const std::string& path, const LossTable& t) {
  const std::vector<std::string> header = {
      "sigma",           "uvb_train_total",   "uvb_test_total",
      "deen_train_total", "deen_test_total",   "uvb_train_per_dim",
      "uvb_test_per_dim", "deen_train_per_dim", "deen_test_per_dim"};
  CsvWriter csv(path, header);
  const double d = static_cast<double>(t.d);
  for (const auto& r : t.rows)
    csv.row(std::vector<double>{r.sigma, r.a_train, r.a_test, r.b_train, r.b_test,
                                r.a_train / d, r.a_test / d, r.b_train / d, r.b_test / d});
}

// ---- score error against the mixture oracle ------------------------------------

struct ScoreError {
  double mse = 0.0;       // E || score_model(y) - score_oracle(y) ||^2
  double relative = 0.0;  // mse / E || score_oracle(y) ||^2
};

// Fresh y ~ (mixture + sigma-noise); the field's own latent draws come from a
// per-point stream key.
inline ScoreError score_error(ScoreField& f, const GmmSpec& gmm, double sigma, int n,
                              std::uint64_t seed) {
  gmm.validate();
  const int d = gmm.dim();
  if (f.dim() != d) throw DimensionError("score error: field/mixture dimension mismatch");
  Rng xr(mix_seed(seed, stream::kEvalX));
  const Matrix x = gmm_sample(gmm, n, xr);
  Rng nr(mix_seed(seed, stream::kEvalNoise));
  std::vector<double> y(static_cast<std::size_t>(d)), s_hat(static_cast<std::size_t>(d));
  double err_sum = 0.0, ref_sum = 0.0;
  for (int i = 0; i < n; ++i) {
    nr.fill_gaussian(y, sigma);
    const auto xi = x.row(i);
    for (int j = 0; j < d; ++j) y[static_cast<std::size_t>(j)] += xi[static_cast<std::size_t>(j)];
    f.score(y, s_hat, mix_seed(seed, stream::kEvalEps, static_cast<std::uint64_t>(i)));
    const auto o = gmm_smoothed_oracle(gmm, sigma, y);
    for (int j = 0; j < d; ++j) {
      const double e = s_hat[static_cast<std::size_t>(j)] - o.score[static_cast<std::size_t>(j)];
      err_sum += e * e;
      ref_sum += o.score[static_cast<std::size_t>(j)] * o.score[static_cast<std::size_t>(j)];
    }
  }
  ScoreError out;
  out.mse = err_sum / n;
  out.relative = err_sum / ref_sum;
  return out;
}

// ---- denoising risk against the Bayes floor -------------------------------------

struct RiskGap {
  double model_risk = 0.0;  // E || x - x_hat_model(y) ||^2
  double bayes_risk = 0.0;  // E || x - x_hat_oracle(y) ||^2, same draws
  double gap = 0.0;         // model_risk - bayes_risk
};

inline RiskGap bayes_risk_gap(ScoreField& f, const GmmSpec& gmm, double sigma, int n,
                              std::uint64_t seed) {
  gmm.validate();
  const int d = gmm.dim();
  if (f.dim() != d) throw DimensionError("risk gap: field/mixture dimension mismatch");
  Rng xr(mix_seed(seed, stream::kEvalX));
  const Matrix x = gmm_sample(gmm, n, xr);
  Rng nr(mix_seed(seed, stream::kEvalNoise));
  std::vector<double> y(static_cast<std::size_t>(d)), xh(static_cast<std::size_t>(d));
  double model_sum = 0.0, bayes_sum = 0.0;
  for (int i = 0; i < n; ++i) {
    nr.fill_gaussian(y, sigma);
    const auto xi = x.row(i);
    for (int j = 0; j < d; ++j) y[static_cast<std::size_t>(j)] += xi[static_cast<std::size_t>(j)];
    f.bayes(y, xh, mix_seed(seed, stream::kEvalEps, static_cast<std::uint64_t>(i)));
    const auto o = gmm_smoothed_oracle(gmm, sigma, y);
    for (int j = 0; j < d; ++j) {
      const double em = xi[static_cast<std::size_t>(j)] - xh[static_cast<std::size_t>(j)];
      const double eo = xi[static_cast<std::size_t>(j)] - o.bayes_mean[static_cast<std::size_t>(j)];
      model_sum += em * em;
      bayes_sum += eo * eo;
    }
  }
  RiskGap out;
  out.model_risk = model_sum / n;
  out.bayes_risk = bayes_sum / n;
  out.gap = out.model_risk - out.bayes_risk;
  return out;
}

// ---- posterior diagnostics -------------------------------------------------------

// Mean KL and mean scaled reconstruction of a latent-variable energy over a
// noisy set, fresh latent draws per row. The reconstruction term is already
// divided by 2 sigma^2 (it is the energy's first summand).
struct VaeDiagnostics {
  double kl_mean = 0.0;
  double recon_mean = 0.0;
};

inline VaeDiagnostics vae_diagnostics(const EnergyModel& m, const Matrix& noisy_y,
                                      std::uint64_t eps_key) {
  if (m.variant() != Variant::kUvb)
    throw ConfigError("diagnostics require a latent-variable model");
  if (noisy_y.cols != m.d())
    throw DimensionError("diagnostics: data dimension != model dimension");
  EnergyEval eval(m);
  std::vector<double> eps(static_cast<std::size_t>(m.eps_len()));
  VaeDiagnostics out;
  for (int i = 0; i < noisy_y.rows; ++i) {
    Rng rng(mix_seed(eps_key, static_cast<std::uint64_t>(i)));
    rng.fill_gaussian(eps, 1.0);
    eval.energy(noisy_y.row(i), eps, m.param_values());
    out.kl_mean += eval.kl_value();
    out.recon_mean += eval.recon_value();
  }
  const double n = static_cast<double>(std::max(1, noisy_y.rows));
  out.kl_mean /= n;
  out.recon_mean /= n;
  return out;
}

// Rows = one model each, columns = the two posterior diagnostics.
inline void write_diagnostics_table(const std::string& path,
                                    const std::vector<std::string>& names,
                                    const std::vector<VaeDiagnostics>& diags) {
  if (names.size() != diags.size())
    throw DimensionError("diagnostics table: names/rows mismatch");
  std::vector<std::vector<std::string>> rows;
  rows.push_back({"model", "kl_mean", "recon_mean"});
  for (std::size_t i = 0; i < names.size(); ++i)
    rows.push_back({names[i], format_double(diags[i].kl_mean),
                    format_double(diags[i].recon_mean)});
  write_csv(path, rows);
}

}  // namespace uvb
