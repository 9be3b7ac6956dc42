#pragma once

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "uvb/checkpoint.hpp"
#include "uvb/config.hpp"
#include "uvb/data.hpp"
#include "uvb/energy.hpp"
#include "uvb/io.hpp"
#include "uvb/rng.hpp"

namespace uvb {

// Counter streams: every random draw is keyed by (seed, stream, epoch,
// sample, draw), so worker scheduling cannot change any value.
namespace stream {
constexpr std::uint64_t kTrainNoise = 0x746E6F69u;
constexpr std::uint64_t kTrainEps = 0x74657073u;
constexpr std::uint64_t kTestNoise = 0x766E6F69u;
constexpr std::uint64_t kTestEps = 0x76657073u;
constexpr std::uint64_t kShuffle = 0x73687566u;
}  // namespace stream

class TrainError : public std::runtime_error {
 public:
  TrainError(const std::string& what, std::uint64_t epoch, int batch)
      : std::runtime_error(what), epoch_(epoch), batch_(batch) {}
  std::uint64_t epoch() const { return epoch_; }
  int batch() const { return batch_; }

 private:
  std::uint64_t epoch_;
  int batch_;
};

struct TrainConfig {
  std::string model = "uvb";  // uvb | deen | vae (vae = same nets, ELBO objective)
  double sigma = 0.5;
  int dz = 100;
  int k = 1;
  std::vector<int> enc_hidden = {64};
  std::vector<int> dec_hidden = {64};
  std::vector<int> f_hidden = {64, 64};
  Readout dec_readout = Readout::kLogistic;
  double lr = 1e-4;
  int batch = 128;
  int epochs = 100;
  std::uint64_t seed = 1;
  int m_draws = 1;
  bool deterministic = false;
  int threads = 1;
  std::string out_dir = "out";
  int checkpoint_every = 0;  // 0: only at the end
};

inline TrainConfig train_config_from(const Config& c) {
  TrainConfig t;
  t.model = c.get_string("model", t.model);
  if (t.model != "uvb" && t.model != "deen" && t.model != "vae")
    throw ConfigError("config: key 'model' must be uvb, deen, or vae (got '" + t.model + "')");
  t.sigma = c.get_double("sigma", t.sigma);
  if (!(t.sigma > 0.0)) throw ConfigError("config: key 'sigma' must be > 0");
  t.dz = static_cast<int>(c.get_int("dz", t.dz));
  if (t.dz < 1) throw ConfigError("config: key 'dz' must be >= 1");
  t.k = static_cast<int>(c.get_int("k_samples", t.k));
  if (t.k < 1) throw ConfigError("config: key 'k_samples' must be >= 1");
  t.enc_hidden = c.get_int_list("enc_hidden", t.enc_hidden);
  t.dec_hidden = c.get_int_list("dec_hidden", t.dec_hidden);
  t.f_hidden = c.get_int_list("f_hidden", t.f_hidden);
  const std::string readout = c.get_string("dec_readout", "logistic");
  if (readout == "logistic")
    t.dec_readout = Readout::kLogistic;
  else if (readout == "linear")
    t.dec_readout = Readout::kLinear;
  else
    throw ConfigError("config: key 'dec_readout' must be logistic or linear");
  t.lr = c.get_double("lr", t.lr);
  if (!(t.lr >= 0.0)) throw ConfigError("config: key 'lr' must be >= 0");
  t.batch = static_cast<int>(c.get_int("batch", t.batch));
  if (t.batch < 1) throw ConfigError("config: key 'batch' must be >= 1");
  t.epochs = static_cast<int>(c.get_int("epochs", t.epochs));
  if (t.epochs < 0) throw ConfigError("config: key 'epochs' must be >= 0");
  t.seed = static_cast<std::uint64_t>(c.get_int("seed", static_cast<long>(t.seed)));
  t.m_draws = static_cast<int>(c.get_int("m_draws", t.m_draws));
  if (t.m_draws < 1) throw ConfigError("config: key 'm_draws' must be >= 1");
  t.deterministic = c.get_bool("deterministic", t.deterministic);
  t.threads = static_cast<int>(c.get_int("threads", t.threads));
  if (t.threads < 1) throw ConfigError("config: key 'threads' must be >= 1");
  t.out_dir = c.get_string("out_dir", t.out_dir);
  t.checkpoint_every = static_cast<int>(c.get_int("checkpoint_every", t.checkpoint_every));
  if (t.checkpoint_every < 0)
    throw ConfigError("config: key 'checkpoint_every' must be >= 0");
  return t;
}

inline EnergyModel model_from_train_config(const TrainConfig& t, int d) {
  if (t.model == "deen") {
    DeenSpec s;
    s.d = d;
    s.hidden = t.f_hidden;
    return EnergyModel::deen(s, t.sigma);
  }
  UvbSpec s;
  s.d = d;
  s.dz = t.dz;
  s.k = t.k;
  s.enc_hidden = t.enc_hidden;
  s.dec_hidden = t.dec_hidden;
  s.dec_readout = t.dec_readout;
  return EnergyModel::uvb(s, t.sigma);
}

struct NoisyBatch {
  Matrix x, y;  // y = x + N(0, sigma^2 I); m_draws rows of y per clean row
};

inline NoisyBatch make_noisy_pairs(const Matrix& clean, double sigma, Rng& rng,
                                   int m_draws = 1) {
  NoisyBatch b;
  b.x = Matrix(clean.rows * m_draws, clean.cols);
  b.y = Matrix(clean.rows * m_draws, clean.cols);
  std::vector<double> noise(static_cast<std::size_t>(clean.cols));
  for (int i = 0; i < clean.rows; ++i)
    for (int j = 0; j < m_draws; ++j) {
      const int r = i * m_draws + j;
      const auto src = clean.row(i);
      std::copy(src.begin(), src.end(), b.x.row(r).begin());
      rng.fill_gaussian(noise, sigma);
      auto dst = b.y.row(r);
      for (int c = 0; c < clean.cols; ++c)
        dst[static_cast<std::size_t>(c)] = src[static_cast<std::size_t>(c)] + noise[static_cast<std::size_t>(c)];
    }
  return b;
}

// ---- optimizer ---------------------------------------------------------------

struct AdamState {
  std::vector<double> m, v;
  std::uint64_t t = 0;
};

inline void adam_step(std::span<double> params, std::span<const double> grad,
                      AdamState& st, double lr, double beta1 = 0.9,
                      double beta2 = 0.999, double eps = 1e-8) {
  if (params.size() != grad.size() || st.m.size() != params.size() ||
      st.v.size() != params.size())
    throw DimensionError("adam: size mismatch");
  st.t += 1;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(st.t));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(st.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    st.m[i] = beta1 * st.m[i] + (1.0 - beta1) * grad[i];
    st.v[i] = beta2 * st.v[i] + (1.0 - beta2) * grad[i] * grad[i];
    params[i] -= lr * (st.m[i] / bc1) / (std::sqrt(st.v[i] / bc2) + eps);
  }
}

// ---- batch-mean losses (evaluation helpers) -----------------------------------

// Mean total ||x - x_hat(y)||^2; per-row eps from the given key's stream.
inline double eb_loss_mean(const EnergyModel& m, const Matrix& x, const Matrix& y,
                           std::uint64_t eps_key) {
  if (x.rows != y.rows || x.cols != y.cols)
    throw DimensionError("eb_loss: x and y shapes differ");
  EbLossEval eval(m);
  std::vector<double> eps(static_cast<std::size_t>(m.eps_len()));
  double acc = 0.0;
  for (int i = 0; i < x.rows; ++i) {
    Rng rng(mix_seed(eps_key, static_cast<std::uint64_t>(i)));
    rng.fill_gaussian(eps, 1.0);
    acc += eval.loss(x.row(i), y.row(i), eps, m.param_values());
  }
  return acc / std::max(1, x.rows);
}

// Mean energy (negative ELBO) over rows of y.
inline double vae_elbo_mean(const EnergyModel& m, const Matrix& y, std::uint64_t eps_key) {
  EnergyEval eval(m);
  std::vector<double> eps(static_cast<std::size_t>(m.eps_len()));
  double acc = 0.0;
  for (int i = 0; i < y.rows; ++i) {
    Rng rng(mix_seed(eps_key, static_cast<std::uint64_t>(i)));
    rng.fill_gaussian(eps, 1.0);
    acc += eval.energy(y.row(i), eps, m.param_values());
  }
  return acc / std::max(1, y.rows);
}

// ---- the training loop ---------------------------------------------------------

struct EpochStats {
  std::uint64_t epoch = 0;
  double train_total = 0.0, test_total = 0.0;
  double kl_mean = 0.0, recon_mean = 0.0;
  double wall_seconds = 0.0;
};

class Trainer {
 public:
  Trainer(TrainConfig cfg, Matrix train_x, Matrix test_x)
      : cfg_(std::move(cfg)),
        train_x_(std::move(train_x)),
        test_x_(std::move(test_x)),
        model_(model_from_train_config(cfg_, train_x_.cols)),
        shuffle_rng_(mix_seed(cfg_.seed, stream::kShuffle)) {
    if (train_x_.rows < 1 || test_x_.rows < 1)
      throw ConfigError("train: empty train or test set");
    if (train_x_.cols != test_x_.cols)
      throw DimensionError("train: train/test dimension mismatch");
    model_.init(cfg_.seed);
    opt_.m.assign(model_.param_count(), 0.0);
    opt_.v.assign(model_.param_count(), 0.0);
  }

  const TrainConfig& config() const { return cfg_; }
  const EnergyModel& model() const { return model_; }
  EnergyModel& model() { return model_; }
  std::uint64_t epochs_done() const { return next_epoch_; }

  void restore(const Checkpoint& c) {
    if (c.params.size() != model_.param_count())
      throw CheckpointError("restore: parameter count mismatch");
    model_.params().values = c.params;
    if (c.has_opt) {
      opt_.m = c.adam_m;
      opt_.v = c.adam_v;
      opt_.t = c.adam_t;
    }
    next_epoch_ = c.epoch;
    shuffle_rng_.set_state(c.rng_state);
  }

  Checkpoint make_checkpoint(const std::string& config_echo) const {
    Checkpoint c;
    c.config_text = config_echo;
    c.layout = model_.params().layout;
    c.params = model_.params().values;
    c.has_opt = true;
    c.adam_t = opt_.t;
    c.adam_m = opt_.m;
    c.adam_v = opt_.v;
    c.epoch = next_epoch_;
    c.rng_state = shuffle_rng_.state();
    return c;
  }

  EpochStats run_epoch() {
    const auto t0 = std::chrono::steady_clock::now();
    const std::uint64_t e = next_epoch_;
    const std::size_t visits =
        static_cast<std::size_t>(train_x_.rows) * static_cast<std::size_t>(cfg_.m_draws);
    std::vector<std::uint32_t> order(visits);
    std::iota(order.begin(), order.end(), 0u);
    for (std::size_t i = visits - 1; i > 0; --i) {
      const std::size_t j = static_cast<std::size_t>(shuffle_rng_.next_u64() % (i + 1));
      std::swap(order[i], order[j]);
    }

    double loss_sum = 0.0;
    std::size_t seen = 0;
    int batch_index = 0;
    for (std::size_t start = 0; start < visits; start += static_cast<std::size_t>(cfg_.batch)) {
      const int B = static_cast<int>(std::min<std::size_t>(cfg_.batch, visits - start));
      double batch_loss;
      try {
        batch_loss = run_train_batch(e, order, start, B);
      } catch (const EvalError& err) {
        throw TrainError(std::string("training diverged (") + err.what() + ")", e, batch_index);
      }
      if (!std::isfinite(batch_loss))
        throw TrainError("training diverged (non-finite loss)", e, batch_index);
      adam_step(model_.params().values, grad_mean_, opt_, cfg_.lr);
      loss_sum += batch_loss;
      seen += static_cast<std::size_t>(B);
      ++batch_index;
    }

    EpochStats st;
    st.epoch = e;
    st.train_total = loss_sum / static_cast<double>(seen);
    try {
      run_test_pass(e, st);
    } catch (const EvalError& err) {
      throw TrainError(std::string("test evaluation diverged (") + err.what() + ")", e, -1);
    }
    next_epoch_ = e + 1;
    if (!cfg_.deterministic) {
      st.wall_seconds =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }
    return st;
  }

  // Full run: metrics CSV + final checkpoint (+ periodic ones). Returns the
  // stats of the last epoch (zeros when epochs == 0).
  EpochStats run_all(const std::string& config_echo) {
    namespace fs = std::filesystem;
    fs::create_directories(cfg_.out_dir);
    const std::vector<std::string> header = {
        "epoch",          "train_loss_total", "train_loss_per_dim",
        "test_loss_total", "test_loss_per_dim", "kl_mean",
        "recon_mean",     "wall_seconds"};
    CsvWriter csv((fs::path(cfg_.out_dir) / "metrics.csv").string(), header);
    const double d = static_cast<double>(train_x_.cols);
    EpochStats last;
    while (next_epoch_ < static_cast<std::uint64_t>(cfg_.epochs)) {
      last = run_epoch();
      csv.row(std::vector<double>{static_cast<double>(last.epoch), last.train_total,
                                  last.train_total / d, last.test_total,
                                  last.test_total / d, last.kl_mean, last.recon_mean,
                                  last.wall_seconds});
      if (cfg_.checkpoint_every > 0 && next_epoch_ % static_cast<std::uint64_t>(cfg_.checkpoint_every) == 0 &&
          next_epoch_ < static_cast<std::uint64_t>(cfg_.epochs)) {
        save_checkpoint((fs::path(cfg_.out_dir) / ("ckpt_epoch" + std::to_string(next_epoch_) + ".ckpt")).string(),
                        make_checkpoint(config_echo));
      }
    }
    save_checkpoint((fs::path(cfg_.out_dir) / "model.ckpt").string(),
                    make_checkpoint(config_echo));
    return last;
  }

 private:
  static constexpr int kChunk = 8;

  struct Worker {
    std::unique_ptr<EbLossEval> eb;
    std::unique_ptr<EnergyEval> en;
    std::vector<double> grad_scratch, y, eps;
  };

  void ensure_workers() {
    const int want = std::max(1, cfg_.threads);
    if (static_cast<int>(workers_.size()) == want) return;
    workers_.clear();
    workers_.resize(static_cast<std::size_t>(want));
    for (auto& w : workers_) {
      if (cfg_.model == "vae")
        w.en = std::make_unique<EnergyEval>(model_);
      else
        w.eb = std::make_unique<EbLossEval>(model_);
      w.grad_scratch.assign(model_.param_count(), 0.0);
      w.y.assign(static_cast<std::size_t>(train_x_.cols), 0.0);
      w.eps.assign(static_cast<std::size_t>(model_.eps_len()), 0.0);
    }
  }

  // One optimizer batch. Gradients are summed per fixed-size chunk of the
  // visit order, chunks combined in index order — the result is independent
  // of the worker count, so parallel runs match serial runs bit for bit.
  double run_train_batch(std::uint64_t e, const std::vector<std::uint32_t>& order,
                         std::size_t start, int B) {
    ensure_workers();
    const std::size_t P = model_.param_count();
    const int n_chunks = (B + kChunk - 1) / kChunk;
    chunk_grad_.resize(static_cast<std::size_t>(n_chunks));
    chunk_loss_.assign(static_cast<std::size_t>(n_chunks), 0.0);
    for (auto& g : chunk_grad_) g.assign(P, 0.0);

    const int m = cfg_.m_draws;
    auto process_chunk = [&](Worker& w, int c) {
      const std::size_t lo = start + static_cast<std::size_t>(c) * kChunk;
      const std::size_t hi = std::min(start + static_cast<std::size_t>(B),
                                      lo + static_cast<std::size_t>(kChunk));
      auto& cg = chunk_grad_[static_cast<std::size_t>(c)];
      double closs = 0.0;
      for (std::size_t pos = lo; pos < hi; ++pos) {
        const std::uint32_t v = order[pos];
        const std::uint64_t i = v / static_cast<std::uint32_t>(m);
        const std::uint64_t j = v % static_cast<std::uint32_t>(m);
        const auto x = train_x_.row(static_cast<int>(i));
        Rng noise(mix_seed(cfg_.seed, stream::kTrainNoise, e, i, j));
        noise.fill_gaussian(w.y, cfg_.sigma);
        for (std::size_t q = 0; q < w.y.size(); ++q) w.y[q] += x[q];
        if (!w.eps.empty()) {
          Rng erng(mix_seed(cfg_.seed, stream::kTrainEps, e, i, j));
          erng.fill_gaussian(w.eps, 1.0);
        }
        double l;
        if (w.eb)
          l = w.eb->loss_param_grad(x, w.y, w.eps, model_.param_values(), w.grad_scratch);
        else
          l = w.en->energy_param_grad(w.y, w.eps, model_.param_values(), w.grad_scratch);
        closs += l;
        for (std::size_t q = 0; q < P; ++q) cg[q] += w.grad_scratch[q];
      }
      chunk_loss_[static_cast<std::size_t>(c)] = closs;
    };

    run_chunks(n_chunks, process_chunk);

    grad_mean_.assign(P, 0.0);
    double loss = 0.0;
    for (int c = 0; c < n_chunks; ++c) {
      const auto& cg = chunk_grad_[static_cast<std::size_t>(c)];
      for (std::size_t q = 0; q < P; ++q) grad_mean_[q] += cg[q];
      loss += chunk_loss_[static_cast<std::size_t>(c)];
    }
    const double inv = 1.0 / static_cast<double>(B);
    for (auto& g : grad_mean_) g *= inv;
    return loss;
  }

  // Test noise is keyed by sample only (not epoch): the held-out noisy set
  // is fixed for the whole run, so per-epoch test rows are comparable and a
  // frozen model scores identically every epoch.
  void run_test_pass(std::uint64_t, EpochStats& st) {
    ensure_workers();
    const int n = test_x_.rows;
    const int n_chunks = (n + kChunk - 1) / kChunk;
    chunk_loss_.assign(static_cast<std::size_t>(n_chunks), 0.0);
    chunk_kl_.assign(static_cast<std::size_t>(n_chunks), 0.0);
    chunk_recon_.assign(static_cast<std::size_t>(n_chunks), 0.0);

    auto process_chunk = [&](Worker& w, int c) {
      const int lo = c * kChunk, hi = std::min(n, lo + kChunk);
      double closs = 0.0, ckl = 0.0, crecon = 0.0;
      for (int i = lo; i < hi; ++i) {
        const auto x = test_x_.row(i);
        Rng noise(mix_seed(cfg_.seed, stream::kTestNoise, static_cast<std::uint64_t>(i)));
        noise.fill_gaussian(w.y, cfg_.sigma);
        for (std::size_t q = 0; q < w.y.size(); ++q) w.y[q] += x[q];
        if (!w.eps.empty()) {
          Rng erng(mix_seed(cfg_.seed, stream::kTestEps, static_cast<std::uint64_t>(i)));
          erng.fill_gaussian(w.eps, 1.0);
        }
        if (w.eb) {
          closs += w.eb->loss(x, w.y, w.eps, model_.param_values());
          ckl += w.eb->kl_value();
          crecon += w.eb->recon_value();
        } else {
          closs += w.en->energy(w.y, w.eps, model_.param_values());
          ckl += w.en->kl_value();
          crecon += w.en->recon_value();
        }
      }
      chunk_loss_[static_cast<std::size_t>(c)] = closs;
      chunk_kl_[static_cast<std::size_t>(c)] = ckl;
      chunk_recon_[static_cast<std::size_t>(c)] = crecon;
    };

    run_chunks(n_chunks, process_chunk);

    double loss = 0.0, kl = 0.0, recon = 0.0;
    for (int c = 0; c < n_chunks; ++c) {
      loss += chunk_loss_[static_cast<std::size_t>(c)];
      kl += chunk_kl_[static_cast<std::size_t>(c)];
      recon += chunk_recon_[static_cast<std::size_t>(c)];
    }
    st.test_total = loss / n;
    st.kl_mean = kl / n;
    st.recon_mean = recon / n;
  }

  template <class Fn>
  void run_chunks(int n_chunks, Fn&& process_chunk) {
    const int W = std::min<int>(static_cast<int>(workers_.size()), n_chunks);
    if (W <= 1) {
      for (int c = 0; c < n_chunks; ++c) process_chunk(workers_[0], c);
      return;
    }
    std::atomic<int> next{0};
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(W));
    std::vector<std::thread> threads;
    threads.reserve(static_cast<std::size_t>(W));
    for (int wi = 0; wi < W; ++wi) {
      threads.emplace_back([&, wi] {
        try {
          for (int c = next.fetch_add(1); c < n_chunks; c = next.fetch_add(1))
            process_chunk(workers_[static_cast<std::size_t>(wi)], c);
        } catch (...) {
          errors[static_cast<std::size_t>(wi)] = std::current_exception();
        }
      });
    }
    for (auto& t : threads) t.join();
    for (const auto& err : errors)
      if (err) std::rethrow_exception(err);
  }

  TrainConfig cfg_;
  Matrix train_x_, test_x_;
  EnergyModel model_;
  AdamState opt_;
  Rng shuffle_rng_;
  std::uint64_t next_epoch_ = 0;
  std::vector<Worker> workers_;
  std::vector<std::vector<double>> chunk_grad_;
  std::vector<double> chunk_loss_, chunk_kl_, chunk_recon_, grad_mean_;
};

// Dataset assembly from config: synthetic mixture, CSV pair, or IDX images.
inline Dataset dataset_from_config(const Config& c) {
  const std::string kind = c.get_string("data", "gmm");
  Dataset ds;
  if (kind == "gmm") {
    const GmmSpec spec = gmm_from_config(c);
    const int n_train = static_cast<int>(c.get_int("n_train", 4096));
    const int n_test = static_cast<int>(c.get_int("n_test", 2048));
    if (n_train < 1 || n_test < 1)
      throw ConfigError("config: n_train and n_test must be >= 1");
    const std::uint64_t data_seed =
        static_cast<std::uint64_t>(c.get_int("data_seed", 7));
    Rng rng(mix_seed(data_seed, 0x64617461ull));
    ds.train = gmm_sample(spec, n_train, rng);
    ds.test = gmm_sample(spec, n_test, rng);
  } else if (kind == "csv") {
    ds.train = read_csv(c.require_string("train_csv"));
    ds.test = read_csv(c.require_string("test_csv"));
    if (ds.train.cols != ds.test.cols)
      throw ConfigError("config: train_csv and test_csv disagree on dimension");
  } else if (kind == "idx") {
    const auto imgs = load_idx_images(c.require_string("idx_images"),
                                      static_cast<int>(c.get_int("idx_limit", 0)));
    const double fraction = c.get_double("test_fraction", 0.2);
    auto [test, train] = split(imgs.pixels, fraction,
                               static_cast<std::uint64_t>(c.get_int("data_seed", 7)));
    ds.train = std::move(train);
    ds.test = std::move(test);
    ds.img_rows = imgs.img_rows;
    ds.img_cols = imgs.img_cols;
  } else {
    throw ConfigError("config: key 'data' must be gmm, csv, or idx (got '" + kind + "')");
  }
  return ds;
}

// Rebuilds the trained model a checkpoint describes. The data dimension is
// read off the first layer's weight shape, so no dataset is needed.
inline EnergyModel model_from_checkpoint(const Checkpoint& c) {
  const Config cfg = Config::from_text(c.config_text, "checkpoint config");
  const TrainConfig tc = train_config_from(cfg);
  int d = -1;
  for (const auto& e : c.layout)
    if (e.name == "enc_mu.w0" || e.name == "f.w0") {
      d = e.cols;
      break;
    }
  if (d < 1) throw CheckpointError("checkpoint: no first-layer weights in layout");
  EnergyModel m = model_from_train_config(tc, d);
  if (m.param_count() != c.params.size())
    throw CheckpointError("checkpoint: parameter count does not match its config");
  m.params().values = c.params;
  return m;
}

}  // namespace uvb
