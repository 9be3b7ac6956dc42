#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "uvb/config.hpp"
#include "uvb/data.hpp"
#include "uvb/energy.hpp"
#include "uvb/field.hpp"
#include "uvb/nets.hpp"
#include "uvb/rng.hpp"
#include "uvb/tape.hpp"

namespace uvb {

// Sampler streams. Jump reads use their own stream so computing (or skipping)
// a jump can never alter the walk trajectory.
namespace stream {
constexpr std::uint64_t kWalkEps = 0x77616C6Bu;   // Langevin noise xi_t
constexpr std::uint64_t kWalkInit = 0x79696E69u;  // chain starting point
constexpr std::uint64_t kModelEps = 0x6D657073u;  // latent draws along the walk
constexpr std::uint64_t kJumpEps = 0x6A657073u;   // latent draws at jumps
constexpr std::uint64_t kPriorZ = 0x7A707269u;    // decoder prior draws
}  // namespace stream

class ChainError : public std::runtime_error {
 public:
  ChainError(const std::string& what, int chain, std::uint64_t step)
      : std::runtime_error(what), chain_(chain), step_(step) {}
  int chain() const { return chain_; }
  std::uint64_t step() const { return step_; }

 private:
  int chain_;
  std::uint64_t step_;
};

struct SampleConfig {
  std::uint64_t steps = 5000;  // walk updates per chain
  double delta = 0.2;          // Langevin step size
  int period = 10;             // record a jump every `period` steps; 0 = never
  std::uint64_t warmup = 0;    // steps to walk before the first jump
  std::uint64_t seed = 1;
  bool resample_eps = true;    // fresh latent draws each step; frozen when false
  double max_radius = 0.0;     // abort when ||y|| exceeds this; 0 = 10 sqrt(d)
};

inline SampleConfig sample_config_from(const Config& c) {
  SampleConfig s;
  const long steps = c.get_int("steps", static_cast<long>(s.steps));
  if (steps < 0) throw ConfigError("config: key 'steps' must be >= 0");
  s.steps = static_cast<std::uint64_t>(steps);
  s.delta = c.get_double("delta", s.delta);
  if (!(s.delta >= 0.0)) throw ConfigError("config: key 'delta' must be >= 0");
  s.period = static_cast<int>(c.get_int("period", s.period));
  if (s.period < 0) throw ConfigError("config: key 'period' must be >= 0");
  const long warmup = c.get_int("warmup", static_cast<long>(s.warmup));
  if (warmup < 0) throw ConfigError("config: key 'warmup' must be >= 0");
  s.warmup = static_cast<std::uint64_t>(warmup);
  s.seed = static_cast<std::uint64_t>(c.get_int("seed", static_cast<long>(s.seed)));
  s.resample_eps = c.get_bool("resample_eps", s.resample_eps);
  s.max_radius = c.get_double("max_radius", s.max_radius);
  if (s.max_radius < 0.0) throw ConfigError("config: key 'max_radius' must be >= 0");
  return s;
}

// One update of the discretized Langevin diffusion on energy f:
//   y <- y - delta^2 * grad f(y) + sqrt(2) * delta * xi,   xi ~ N(0, I).
// `model_key` seeds any stochasticity inside the field's score; `walk_key`
// seeds xi. Buffers must be length dim.
inline void langevin_step(ScoreField& f, std::span<double> y, double delta,
                          std::uint64_t model_key, std::uint64_t walk_key,
                          std::span<double> score_buf, std::span<double> noise_buf) {
  f.score(y, score_buf, model_key);
  Rng rng(walk_key);
  rng.fill_gaussian(noise_buf, 1.0);
  const double pull = delta * delta;
  const double push = std::numbers::sqrt2 * delta;
  for (std::size_t i = 0; i < y.size(); ++i)
    y[i] += pull * score_buf[i] + push * noise_buf[i];
}

struct WalkJumpResult {
  Matrix jumps;                          // one denoised point per row
  std::vector<std::uint64_t> jump_steps; // walk step each jump was taken at
  std::vector<double> final_y;           // last walk state
};

// Runs one chain: y0 ~ Unif[0,1]^d, then `steps` Langevin updates. After
// completed step t (1-based), when period > 0 and t >= warmup and
// (t - warmup) % period == 0, the current point is denoised through the
// field's posterior mean and recorded; the walk itself is never touched by
// these reads. steps == 0 with period > 0 records a single jump from the
// starting point. `on_step` (optional) observes the state after every update.
inline WalkJumpResult walk_jump(
    ScoreField& f, const SampleConfig& cfg, int chain = 0,
    const std::function<void(std::uint64_t, std::span<const double>)>& on_step = {}) {
  const int d = f.dim();
  const std::size_t n = static_cast<std::size_t>(d);
  const double guard = cfg.max_radius > 0.0 ? cfg.max_radius
                                            : 10.0 * std::sqrt(static_cast<double>(d));
  std::vector<double> y(n), score(n), noise(n), xhat(n);
  {
    Rng init(mix_seed(cfg.seed, stream::kWalkInit, static_cast<std::uint64_t>(chain)));
    init.fill_uniform(y, 0.0, 1.0);
  }

  std::vector<double> jump_flat;
  std::vector<std::uint64_t> jump_steps;
  auto record_jump = [&](std::uint64_t t) {
    f.bayes(y, xhat,
            mix_seed(cfg.seed, stream::kJumpEps, static_cast<std::uint64_t>(chain), t));
    jump_flat.insert(jump_flat.end(), xhat.begin(), xhat.end());
    jump_steps.push_back(t);
  };

  if (cfg.steps == 0 && cfg.period > 0) record_jump(0);

  for (std::uint64_t t = 1; t <= cfg.steps; ++t) {
    const std::uint64_t eps_t = cfg.resample_eps ? t : 0;
    langevin_step(
        f, y, cfg.delta,
        mix_seed(cfg.seed, stream::kModelEps, static_cast<std::uint64_t>(chain), eps_t),
        mix_seed(cfg.seed, stream::kWalkEps, static_cast<std::uint64_t>(chain), t),
        score, noise);
    double r2 = 0.0;
    for (double v : y) r2 += v * v;
    if (!std::isfinite(r2) || r2 > guard * guard)
      throw ChainError("chain " + std::to_string(chain) + " diverged at step " +
                           std::to_string(t) + " (|y| > " + std::to_string(guard) + ")",
                       chain, t);
    if (on_step) on_step(t, y);
    if (cfg.period > 0 && t >= cfg.warmup &&
        (t - cfg.warmup) % static_cast<std::uint64_t>(cfg.period) == 0)
      record_jump(t);
  }

  WalkJumpResult out;
  out.jumps = Matrix(static_cast<int>(jump_steps.size()), d);
  out.jumps.data = std::move(jump_flat);
  out.jump_steps = std::move(jump_steps);
  out.final_y = std::move(y);
  return out;
}

// Two denoising passes in sequence: x1 = xhat(y), x2 = xhat(x1). The second
// application re-estimates from the first pass's output.
inline void two_step_denoise(ScoreField& f, std::span<const double> y,
                             std::span<double> x1, std::span<double> x2,
                             std::uint64_t key) {
  f.bayes(y, x1, mix_seed(key, 1));
  f.bayes(x1, x2, mix_seed(key, 2));
}

// Draws from the latent prior pushed through the decoder: z ~ N(0, I), row i
// of the result is dec(z_i). Only latent-variable models have a decoder.
inline Matrix decoder_prior_sample(const EnergyModel& m, int n, std::uint64_t seed) {
  if (m.variant() != Variant::kUvb)
    throw ConfigError("prior sampling requires a latent-variable model");
  const UvbSpec& spec = m.uvb_spec();
  const std::size_t dec_base =
      mlp_param_count(spec.enc_mu()) + mlp_param_count(spec.enc_lambda());

  Tape t;
  std::vector<Tape::Id> z(static_cast<std::size_t>(spec.dz));
  for (int i = 0; i < spec.dz; ++i) z[static_cast<std::size_t>(i)] = t.input(i);
  for (std::size_t p = 0; p < m.param_count(); ++p) t.param(static_cast<int>(p));
  const auto outs = mlp_emit(t, spec.dec(), dec_base, z);
  t.set_output(t.sum(outs));

  Matrix samples(n, spec.d);
  std::vector<double> zv(static_cast<std::size_t>(spec.dz));
  for (int i = 0; i < n; ++i) {
    Rng rng(mix_seed(seed, stream::kPriorZ, static_cast<std::uint64_t>(i)));
    rng.fill_gaussian(zv, 1.0);
    t.forward(zv, m.param_values());
    auto row = samples.row(i);
    for (int j = 0; j < spec.d; ++j)
      row[static_cast<std::size_t>(j)] = t.value(outs[static_cast<std::size_t>(j)]);
  }
  return samples;
}

}  // namespace uvb
