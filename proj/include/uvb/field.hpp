#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "uvb/data.hpp"
#include "uvb/energy.hpp"
#include "uvb/rng.hpp"

namespace uvb {

// A smoothed-density score field: what the sampler walks on and the metrics
// compare against. `noise_key` seeds any stochasticity inside the energy
// (the latent draws); deterministic fields ignore it. Callers choose keys so
// that reads (jumps) never disturb the walk stream.
class ScoreField {
 public:
  virtual ~ScoreField() = default;
  virtual int dim() const = 0;
  virtual double sigma() const = 0;
  virtual double energy(std::span<const double> y, std::uint64_t noise_key) = 0;
  virtual void score(std::span<const double> y, std::span<double> out,
                     std::uint64_t noise_key) = 0;

  virtual void bayes(std::span<const double> y, std::span<double> out,
                     std::uint64_t noise_key) {
    score(y, out, noise_key);
    const double s2 = sigma() * sigma();
    for (std::size_t i = 0; i < y.size(); ++i) out[i] = y[i] + s2 * out[i];
  }
};

// Learned-energy field. Holds a reference to the model; one instance per
// thread (the underlying evaluator replays a private tape).
class ModelField : public ScoreField {
 public:
  explicit ModelField(const EnergyModel& m)
      : model_(&m), eval_(m), eps_(static_cast<std::size_t>(m.eps_len())) {}

  int dim() const override { return eval_.dim(); }
  double sigma() const override { return eval_.sigma(); }

  double energy(std::span<const double> y, std::uint64_t noise_key) override {
    draw_eps(noise_key);
    return eval_.energy(y, eps_, model_->param_values());
  }
  void score(std::span<const double> y, std::span<double> out,
             std::uint64_t noise_key) override {
    draw_eps(noise_key);
    eval_.score(y, eps_, model_->param_values(), out);
  }

  double last_kl() const { return eval_.kl_value(); }
  double last_recon() const { return eval_.recon_value(); }

 private:
  void draw_eps(std::uint64_t noise_key) {
    if (eps_.empty()) return;
    Rng rng(noise_key);
    rng.fill_gaussian(eps_, 1.0);
  }

  const EnergyModel* model_;
  EnergyEval eval_;
  std::vector<double> eps_;
};

// Exact field of a Gaussian mixture smoothed by sigma. The reference the
// learned fields are graded against.
class OracleField : public ScoreField {
 public:
  OracleField(GmmSpec spec, double sigma) : spec_(std::move(spec)), sigma_(sigma) {
    spec_.validate();
  }

  int dim() const override { return spec_.dim(); }
  double sigma() const override { return sigma_; }

  double energy(std::span<const double> y, std::uint64_t) override {
    return -gmm_smoothed_oracle(spec_, sigma_, y).log_density;
  }
  void score(std::span<const double> y, std::span<double> out, std::uint64_t) override {
    const auto o = gmm_smoothed_oracle(spec_, sigma_, y);
    std::copy(o.score.begin(), o.score.end(), out.begin());
  }

 private:
  GmmSpec spec_;
  double sigma_;
};

// Deterministic fixture around a hand-built tape whose inputs are y.
class TapeField : public ScoreField {
 public:
  TapeField(Tape tape, int d, double sigma)
      : tape_(std::move(tape)), d_(d), sigma_(sigma), grad_(static_cast<std::size_t>(d)) {}

  int dim() const override { return d_; }
  double sigma() const override { return sigma_; }

  double energy(std::span<const double> y, std::uint64_t) override {
    return tape_.forward(y, {});
  }
  void score(std::span<const double> y, std::span<double> out, std::uint64_t) override {
    tape_.forward(y, {});
    tape_.grad_inputs_into(grad_);
    for (int i = 0; i < d_; ++i) out[static_cast<std::size_t>(i)] = -grad_[static_cast<std::size_t>(i)];
  }

 private:
  Tape tape_;
  int d_;
  double sigma_;
  std::vector<double> grad_;
};

// f(y) = 0.5 ||y||^2 — the standard-normal energy.
inline TapeField quadratic_field(int d, double sigma = 1.0) {
  Tape t;
  std::vector<Tape::Id> sq(static_cast<std::size_t>(d));
  for (int i = 0; i < d; ++i) sq[static_cast<std::size_t>(i)] = t.square(t.input(i));
  t.set_output(t.scale(t.sum(sq), 0.5));
  return TapeField(std::move(t), d, sigma);
}

// Exact 1-D energy of equal point masses at +/-1 smoothed by sigma = 1:
// f(y) = -log( exp(-(y-1)^2/2) + exp(-(y+1)^2/2) ).
inline TapeField two_mass_field() {
  Tape t;
  const auto y = t.input(0);
  const auto half = t.constant(0.5);
  const auto a = t.exp(t.neg(t.mul(half, t.square(t.sub(y, t.constant(1.0))))));
  const auto b = t.exp(t.neg(t.mul(half, t.square(t.add(y, t.constant(1.0))))));
  t.set_output(t.neg(t.log(t.add(a, b))));
  return TapeField(std::move(t), 1, 1.0);
}

}  // namespace uvb
