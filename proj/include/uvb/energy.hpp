#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "uvb/errors.hpp"
#include "uvb/nets.hpp"
#include "uvb/tape.hpp"

namespace uvb {

// ---- closed-form KL and reparameterization ---------------------------------

// KL( N(mu, diag(exp(lambda))) || N(0, I) ) with lambda_k = 2 log sigma_k:
// -2 KL = sum_k (1 + lambda_k - mu_k^2 - exp(lambda_k)).
inline double kl_diag_gaussian(std::span<const double> mu,
                               std::span<const double> lambda) {
  if (mu.size() != lambda.size())
    throw DimensionError("kl: mu and lambda lengths differ");
  double acc = 0.0;
  for (std::size_t k = 0; k < mu.size(); ++k)
    acc += 1.0 + lambda[k] - mu[k] * mu[k] - std::exp(lambda[k]);
  return -0.5 * acc;
}

inline Tape::Id kl_diag_gaussian(Tape& t, std::span<const Tape::Id> mu,
                                 std::span<const Tape::Id> lambda) {
  if (mu.size() != lambda.size())
    throw DimensionError("kl: mu and lambda lengths differ");
  const Tape::Id one = t.constant(1.0);
  std::vector<Tape::Id> terms(mu.size());
  for (std::size_t k = 0; k < mu.size(); ++k)
    terms[k] = t.sub(t.sub(t.add(one, lambda[k]), t.square(mu[k])), t.exp(lambda[k]));
  return t.scale(t.sum(terms), -0.5);
}

// z_k = mu_k + exp(lambda_k / 2) * eps_k
inline std::vector<double> reparam_sample(std::span<const double> mu,
                                          std::span<const double> lambda,
                                          std::span<const double> eps) {
  if (mu.size() != lambda.size() || mu.size() != eps.size())
    throw DimensionError("reparam: length mismatch");
  std::vector<double> z(mu.size());
  for (std::size_t k = 0; k < mu.size(); ++k)
    z[k] = mu[k] + std::exp(0.5 * lambda[k]) * eps[k];
  return z;
}

inline std::vector<Tape::Id> reparam_sample(Tape& t, std::span<const Tape::Id> mu,
                                            std::span<const Tape::Id> lambda,
                                            std::span<const Tape::Id> eps) {
  if (mu.size() != lambda.size() || mu.size() != eps.size())
    throw DimensionError("reparam: length mismatch");
  std::vector<Tape::Id> z(mu.size());
  for (std::size_t k = 0; k < mu.size(); ++k)
    z[k] = t.fma(t.exp(t.scale(lambda[k], 0.5)), eps[k], mu[k]);
  return z;
}

// ---- model definitions ------------------------------------------------------

enum class Variant { kUvb, kDeen };

// Energy = negative ELBO of a Gaussian-latent autoencoder:
//   f(y) = (1/K) sum_j ||y - dec(z_j)||^2 / (2 sigma^2) + KL(q(z|y) || N(0,I)),
//   z_j = mu(y) + exp(lambda(y)/2) * eps_j.
// The mu and lambda heads share architecture but not weights.
struct UvbSpec {
  int d = 0, dz = 0, k = 1;
  std::vector<int> enc_hidden, dec_hidden;
  Readout dec_readout = Readout::kLogistic;

  MlpSpec enc_mu() const { return {d, enc_hidden, dz, Readout::kLinear}; }
  MlpSpec enc_lambda() const { return {d, enc_hidden, dz, Readout::kLinear}; }
  MlpSpec dec() const { return {dz, dec_hidden, d, dec_readout}; }

  void validate() const {
    if (d < 1) throw ConfigError("uvb: data dim must be >= 1");
    if (dz < 1) throw ConfigError("uvb: dz must be >= 1");
    if (k < 1) throw ConfigError("uvb: k_samples must be >= 1");
  }
};

// Energy = scalar output of a plain network.
struct DeenSpec {
  int d = 0;
  std::vector<int> hidden;

  MlpSpec f() const { return {d, hidden, 1, Readout::kLinear}; }

  void validate() const {
    if (d < 1) throw ConfigError("deen: data dim must be >= 1");
  }
};

class EnergyModel {
 public:
  static EnergyModel uvb(UvbSpec spec, double sigma) {
    spec.validate();
    EnergyModel m;
    m.variant_ = Variant::kUvb;
    m.uvb_ = std::move(spec);
    m.set_sigma(sigma);
    m.params_ = make_param_set(m.nets());
    return m;
  }

  static EnergyModel deen(DeenSpec spec, double sigma) {
    spec.validate();
    EnergyModel m;
    m.variant_ = Variant::kDeen;
    m.deen_ = std::move(spec);
    m.set_sigma(sigma);
    m.params_ = make_param_set(m.nets());
    return m;
  }

  Variant variant() const { return variant_; }
  double sigma() const { return sigma_; }
  void set_sigma(double s) {
    if (!(s > 0.0)) throw ConfigError("sigma must be > 0");
    sigma_ = s;
  }

  int d() const { return variant_ == Variant::kUvb ? uvb_.d : deen_.d; }
  int dz() const { return variant_ == Variant::kUvb ? uvb_.dz : 0; }
  int k() const { return variant_ == Variant::kUvb ? uvb_.k : 0; }
  int eps_len() const { return variant_ == Variant::kUvb ? uvb_.k * uvb_.dz : 0; }
  const UvbSpec& uvb_spec() const { return uvb_; }
  const DeenSpec& deen_spec() const { return deen_; }

  std::vector<NamedMlp> nets() const {
    if (variant_ == Variant::kUvb)
      return {{"enc_mu", uvb_.enc_mu()},
              {"enc_lambda", uvb_.enc_lambda()},
              {"dec", uvb_.dec()}};
    return {{"f", deen_.f()}};
  }

  std::size_t param_count() const { return params_.values.size(); }
  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }
  std::span<const double> param_values() const { return params_.values; }

  void init(std::uint64_t seed) { params_ = init_params(nets(), seed); }

 private:
  Variant variant_ = Variant::kDeen;
  double sigma_ = 1.0;
  UvbSpec uvb_;
  DeenSpec deen_;
  ParamSet params_;
};

// ---- recorded graphs --------------------------------------------------------

// Input slot order: y [0, d), then eps [d, d+eps_len), then (loss graphs
// only) clean x [d+eps_len, 2d+eps_len).
struct EnergyGraph {
  Tape tape;
  Tape::Id f = -1;
  Tape::Id kl = -1, recon = -1;    // latent-model terms; -1 for the plain net
  std::vector<Tape::Id> grad_y;    // emitted df/dy nodes (loss graphs)
  Tape::Id loss = -1;              // ||x - y + sigma^2 grad_y||^2 (loss graphs)
  int d = 0, eps_len = 0, x_base = -1;
};

inline EnergyGraph build_energy_graph(const EnergyModel& m) {
  EnergyGraph g;
  g.d = m.d();
  g.eps_len = m.eps_len();
  Tape& t = g.tape;

  std::vector<Tape::Id> y(static_cast<std::size_t>(g.d));
  for (int i = 0; i < g.d; ++i) y[static_cast<std::size_t>(i)] = t.input(i);

  if (m.variant() == Variant::kDeen) {
    g.f = mlp_emit(t, m.deen_spec().f(), 0, y)[0];
    t.set_output(g.f);
    return g;
  }

  const UvbSpec& spec = m.uvb_spec();
  const std::size_t mu_base = 0;
  const std::size_t lam_base = mlp_param_count(spec.enc_mu());
  const std::size_t dec_base = lam_base + mlp_param_count(spec.enc_lambda());

  const auto mu = mlp_emit(t, spec.enc_mu(), mu_base, y);
  const auto lam = mlp_emit(t, spec.enc_lambda(), lam_base, y);
  g.kl = kl_diag_gaussian(t, mu, lam);

  std::vector<Tape::Id> sq_terms;
  sq_terms.reserve(static_cast<std::size_t>(spec.k));
  for (int j = 0; j < spec.k; ++j) {
    std::vector<Tape::Id> eps(static_cast<std::size_t>(spec.dz));
    for (int kk = 0; kk < spec.dz; ++kk)
      eps[static_cast<std::size_t>(kk)] = t.input(g.d + j * spec.dz + kk);
    const auto z = reparam_sample(t, mu, lam, eps);
    const auto yhat = mlp_emit(t, spec.dec(), dec_base, z);
    std::vector<Tape::Id> sq(static_cast<std::size_t>(g.d));
    for (int i = 0; i < g.d; ++i)
      sq[static_cast<std::size_t>(i)] =
          t.square(t.sub(y[static_cast<std::size_t>(i)], yhat[static_cast<std::size_t>(i)]));
    sq_terms.push_back(t.sum(sq));
  }
  const double scale = 1.0 / (2.0 * m.sigma() * m.sigma() * spec.k);
  g.recon = t.scale(t.sum(sq_terms), scale);
  g.f = t.add(g.recon, g.kl);
  t.set_output(g.f);
  return g;
}

// Extends the energy graph with its own input gradient and the squared
// empirical-Bayes residual ||x - (y - sigma^2 df/dy)||^2. A numeric reverse
// sweep over this tape yields the parameter gradient of the residual,
// second-order terms included.
inline EnergyGraph build_eb_loss_graph(const EnergyModel& m) {
  EnergyGraph g = build_energy_graph(m);
  Tape& t = g.tape;
  const auto grads = t.emit_input_gradients(g.f);
  g.grad_y.assign(grads.begin(), grads.begin() + g.d);

  g.x_base = g.d + g.eps_len;
  const Tape::Id s2 = t.constant(m.sigma() * m.sigma());
  std::vector<Tape::Id> sq(static_cast<std::size_t>(g.d));
  for (int i = 0; i < g.d; ++i) {
    const Tape::Id x_i = t.input(g.x_base + i);
    const Tape::Id resid =
        t.add(t.sub(x_i, t.input(i)), t.mul(s2, g.grad_y[static_cast<std::size_t>(i)]));
    sq[static_cast<std::size_t>(i)] = t.square(resid);
  }
  g.loss = t.sum(sq);
  t.set_output(g.loss);
  return g;
}

// ---- replayable evaluators --------------------------------------------------

// Owns an energy graph and its input buffer. Not thread-safe; build one per
// thread (the model itself is shared read-only).
class EnergyEval {
 public:
  explicit EnergyEval(const EnergyModel& m)
      : sigma_(m.sigma()), g_(build_energy_graph(m)),
        in_(static_cast<std::size_t>(g_.d + g_.eps_len), 0.0) {}

  int dim() const { return g_.d; }
  int eps_len() const { return g_.eps_len; }
  double sigma() const { return sigma_; }
  const EnergyGraph& graph() const { return g_; }

  double energy(std::span<const double> y, std::span<const double> eps,
                std::span<const double> params) {
    load(y, eps);
    return g_.tape.forward(in_, params);
  }

  // -df/dy. Returns the energy value.
  double score(std::span<const double> y, std::span<const double> eps,
               std::span<const double> params, std::span<double> out) {
    const double f = energy(y, eps, params);
    scratch_.resize(in_.size());
    g_.tape.grad_inputs_into(scratch_);
    for (int i = 0; i < g_.d; ++i) out[static_cast<std::size_t>(i)] = -scratch_[static_cast<std::size_t>(i)];
    return f;
  }

  // x_hat = y + sigma^2 * score(y). Returns the energy value.
  double bayes(std::span<const double> y, std::span<const double> eps,
               std::span<const double> params, std::span<double> out) {
    const double f = score(y, eps, params, out);
    for (int i = 0; i < g_.d; ++i)
      out[static_cast<std::size_t>(i)] = y[static_cast<std::size_t>(i)] + sigma_ * sigma_ * out[static_cast<std::size_t>(i)];
    return f;
  }

  // df/dparams of the energy itself (the ELBO training direction).
  double energy_param_grad(std::span<const double> y, std::span<const double> eps,
                           std::span<const double> params, std::span<double> grad_out) {
    const double f = energy(y, eps, params);
    g_.tape.grad_params(grad_out);
    return f;
  }

  // Latent-model diagnostics from the most recent evaluation.
  double kl_value() const { return g_.kl >= 0 ? g_.tape.value(g_.kl) : 0.0; }
  double recon_value() const { return g_.recon >= 0 ? g_.tape.value(g_.recon) : 0.0; }

 private:
  void load(std::span<const double> y, std::span<const double> eps) {
    if (static_cast<int>(y.size()) != g_.d)
      throw DimensionError("energy: y length != model dim");
    if (static_cast<int>(eps.size()) != g_.eps_len)
      throw DimensionError("energy: eps length != k * dz");
    std::copy(y.begin(), y.end(), in_.begin());
    std::copy(eps.begin(), eps.end(), in_.begin() + g_.d);
  }

  double sigma_;
  EnergyGraph g_;
  std::vector<double> in_, scratch_;
};

// Owns an extended loss graph. Not thread-safe; one per worker.
class EbLossEval {
 public:
  explicit EbLossEval(const EnergyModel& m)
      : g_(build_eb_loss_graph(m)),
        in_(static_cast<std::size_t>(2 * g_.d + g_.eps_len), 0.0) {}

  int dim() const { return g_.d; }
  int eps_len() const { return g_.eps_len; }

  // ||x - x_hat(y)||^2 for one pair.
  double loss(std::span<const double> x, std::span<const double> y,
              std::span<const double> eps, std::span<const double> params) {
    load(x, y, eps);
    return g_.tape.forward(in_, params);
  }

  // Loss and its full parameter gradient (through the energy gradient).
  double loss_param_grad(std::span<const double> x, std::span<const double> y,
                         std::span<const double> eps, std::span<const double> params,
                         std::span<double> grad_out) {
    const double v = loss(x, y, eps, params);
    g_.tape.grad_params(grad_out);
    return v;
  }

  double kl_value() const { return g_.kl >= 0 ? g_.tape.value(g_.kl) : 0.0; }
  double recon_value() const { return g_.recon >= 0 ? g_.tape.value(g_.recon) : 0.0; }
  double energy_value() const { return g_.tape.value(g_.f); }

 private:
  void load(std::span<const double> x, std::span<const double> y,
            std::span<const double> eps) {
    if (static_cast<int>(x.size()) != g_.d || static_cast<int>(y.size()) != g_.d)
      throw DimensionError("loss: x/y length != model dim");
    if (static_cast<int>(eps.size()) != g_.eps_len)
      throw DimensionError("loss: eps length != k * dz");
    std::copy(y.begin(), y.end(), in_.begin());
    std::copy(eps.begin(), eps.end(), in_.begin() + g_.d);
    std::copy(x.begin(), x.end(), in_.begin() + g_.d + g_.eps_len);
  }

  EnergyGraph g_;
  std::vector<double> in_;
};

}  // namespace uvb
