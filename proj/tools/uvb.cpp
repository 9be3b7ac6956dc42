// Command-line front end: train energy models on noisy data, denoise inputs,
// draw walk-jump samples, and evaluate against analytic references.
#include <CLI11.hpp>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "uvb/checkpoint.hpp"
#include "uvb/config.hpp"
#include "uvb/data.hpp"
#include "uvb/energy.hpp"
#include "uvb/errors.hpp"
#include "uvb/field.hpp"
#include "uvb/io.hpp"
#include "uvb/metrics.hpp"
#include "uvb/rng.hpp"
#include "uvb/sample.hpp"
#include "uvb/train.hpp"

namespace {

namespace fs = std::filesystem;
using uvb::Config;
using uvb::Matrix;

constexpr std::uint64_t kDenoiseNoise = 0x646E6F69u;
constexpr std::uint64_t kDenoiseEps = 0x64657073u;
constexpr std::uint64_t kEvalSeed = 0x6576616Cu;
constexpr std::uint64_t kDiagNoise = 0x64676E6Fu;
constexpr std::uint64_t kDiagEps = 0x64676570u;

// Binds string-valued options to config keys; anything given on the command
// line overwrites the file value after parsing (command line wins).
class OptionBinder {
 public:
  explicit OptionBinder(CLI::App* cmd) : cmd_(cmd) {}

  void add(const std::string& flag, const std::string& key, const std::string& desc) {
    entries_.push_back(std::make_unique<Entry>());
    Entry* e = entries_.back().get();
    e->key = key;
    e->opt = cmd_->add_option(flag, e->value, desc);
  }

  void add_flag(const std::string& flag, const std::string& key, const std::string& desc) {
    entries_.push_back(std::make_unique<Entry>());
    Entry* e = entries_.back().get();
    e->key = key;
    e->is_flag = true;
    e->opt = cmd_->add_flag(flag, e->present, desc);
  }

  void apply(Config& cfg) const {
    for (const auto& e : entries_)
      if (e->opt->count() > 0) cfg.set(e->key, e->is_flag ? "true" : e->value);
  }

 private:
  struct Entry {
    std::string key, value;
    bool present = false;
    bool is_flag = false;
    CLI::Option* opt = nullptr;
  };
  CLI::App* cmd_;
  std::vector<std::unique_ptr<Entry>> entries_;
};

struct Command {
  CLI::App* cmd = nullptr;
  std::string config_path;
  std::unique_ptr<OptionBinder> binder;

  Config config() const {
    Config cfg = config_path.empty() ? Config() : Config::from_file(config_path);
    binder->apply(cfg);
    return cfg;
  }
};

Command make_command(CLI::App& app, const std::string& name, const std::string& desc) {
  Command c;
  c.cmd = app.add_subcommand(name, desc);
  c.binder = std::make_unique<OptionBinder>(c.cmd);
  c.cmd->add_option("--config", c.config_path, "config file, flat 'key = value' lines");
  c.binder->add("--seed", "seed", "RNG seed (default 1)");
  c.binder->add("--out-dir", "out_dir", "output directory (default out)");
  c.binder->add_flag("--deterministic", "deterministic",
                     "bit-reproducible outputs: zeroed wall clock, fixed reductions");
  return c;
}

bool looks_like_idx(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return false;
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  return in.gcount() == 4 && b[0] == 0 && b[1] == 0 && b[2] == 0x08 && b[3] == 0x03;
}

int square_side(int d) {
  const int s = static_cast<int>(std::lround(std::sqrt(static_cast<double>(d))));
  return (s >= 2 && s * s == d) ? s : 0;
}

// ---- train ---------------------------------------------------------------------

int run_train(const Config& cfg) {
  const uvb::TrainConfig tc = uvb::train_config_from(cfg);
  uvb::Dataset ds = uvb::dataset_from_config(cfg);
  uvb::Trainer tr(tc, std::move(ds.train), std::move(ds.test));
  const auto last = tr.run_all(cfg.to_text());
  const double d = static_cast<double>(tr.model().d());
  std::cout << "train: model=" << tc.model << " sigma=" << tc.sigma
            << " epochs=" << tc.epochs << " params=" << tr.model().param_count() << "\n";
  if (tc.epochs > 0) {
    std::cout << "final: train_loss_total=" << uvb::format_double(last.train_total)
              << " test_loss_total=" << uvb::format_double(last.test_total)
              << " test_loss_per_dim=" << uvb::format_double(last.test_total / d) << "\n";
  }
  std::cout << "wrote: " << (fs::path(tc.out_dir) / "metrics.csv").string() << ", "
            << (fs::path(tc.out_dir) / "model.ckpt").string() << "\n";
  return 0;
}

// ---- denoise -------------------------------------------------------------------

int run_denoise(const Config& cfg) {
  const auto ckpt = uvb::load_checkpoint(cfg.require_string("ckpt"));
  uvb::EnergyModel model = uvb::model_from_checkpoint(ckpt);
  const double noise_sigma = cfg.get_double("sigma", model.sigma());
  if (noise_sigma < 0.0) throw uvb::ConfigError("config: key 'sigma' must be >= 0");
  const std::uint64_t seed = static_cast<std::uint64_t>(cfg.get_int("seed", 1));
  const int limit = static_cast<int>(cfg.get_int("limit", 8));
  const std::string out_dir = cfg.get_string("out_dir", "out");

  const std::string input = cfg.require_string("input");
  Matrix x;
  int img_h = 0, img_w = 0;
  if (looks_like_idx(input)) {
    auto im = uvb::load_idx_images(input, limit);
    x = std::move(im.pixels);
    img_h = im.img_rows;
    img_w = im.img_cols;
  } else {
    x = uvb::read_csv(input);
    if (limit > 0 && x.rows > limit) {
      x.data.resize(static_cast<std::size_t>(limit) * x.cols);
      x.rows = limit;
    }
  }
  if (x.cols != model.d())
    throw uvb::DimensionError("denoise: input dimension " + std::to_string(x.cols) +
                              " != model dimension " + std::to_string(model.d()));
  if (x.rows < 1) throw uvb::ConfigError("denoise: input has no rows");

  const int n = x.rows, d = x.cols;
  uvb::ModelField field(model);
  Matrix out(4 * n, d);  // row blocks: clean x, noisy y, xhat(y), xhat(xhat(y))
  double risk1 = 0.0, risk2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const auto xi = x.row(i);
    std::copy(xi.begin(), xi.end(), out.row(i).begin());
    auto yi = out.row(n + i);
    uvb::Rng noise(uvb::mix_seed(seed, kDenoiseNoise, static_cast<std::uint64_t>(i)));
    noise.fill_gaussian(yi, noise_sigma);
    for (int j = 0; j < d; ++j) yi[static_cast<std::size_t>(j)] += xi[static_cast<std::size_t>(j)];
    uvb::two_step_denoise(field, yi, out.row(2 * n + i), out.row(3 * n + i),
                          uvb::mix_seed(seed, kDenoiseEps, static_cast<std::uint64_t>(i)));
    for (int j = 0; j < d; ++j) {
      const double e1 = xi[static_cast<std::size_t>(j)] - out.at(2 * n + i, j);
      const double e2 = xi[static_cast<std::size_t>(j)] - out.at(3 * n + i, j);
      risk1 += e1 * e1;
      risk2 += e2 * e2;
    }
  }

  fs::create_directories(out_dir);
  const auto csv_path = fs::path(out_dir) / "denoise.csv";
  uvb::write_csv(csv_path.string(), out);
  std::cout << "denoise: n=" << n << " noise_sigma=" << noise_sigma
            << " mean_sq_err_one_pass=" << uvb::format_double(risk1 / n)
            << " mean_sq_err_two_pass=" << uvb::format_double(risk2 / n) << "\n";
  std::cout << "wrote: " << csv_path.string() << " (row blocks: clean, noisy, "
               "denoised, twice-denoised)\n";

  if (img_h == 0) {
    const int s = square_side(d);
    img_h = img_w = s;
  }
  if (img_h > 0) {
    const auto pgm_path = fs::path(out_dir) / "denoise_grid.pgm";
    uvb::write_image_grid(pgm_path.string(), out, img_h, img_w, n);
    std::cout << "wrote: " << pgm_path.string() << " (rows: clean, noisy, denoised, "
                 "twice-denoised)\n";
  }
  return 0;
}

// ---- sample --------------------------------------------------------------------

int run_sample(const Config& cfg) {
  const auto ckpt = uvb::load_checkpoint(cfg.require_string("ckpt"));
  uvb::EnergyModel model = uvb::model_from_checkpoint(ckpt);
  const uvb::SampleConfig sc = uvb::sample_config_from(cfg);
  const int chains = static_cast<int>(cfg.get_int("chains", 1));
  if (chains < 1) throw uvb::ConfigError("config: key 'chains' must be >= 1");
  const std::string out_dir = cfg.get_string("out_dir", "out");

  uvb::ModelField field(model);
  Matrix jumps(0, model.d());
  for (int c = 0; c < chains; ++c) {
    const auto res = uvb::walk_jump(field, sc, c);
    jumps.data.insert(jumps.data.end(), res.jumps.data.begin(), res.jumps.data.end());
    jumps.rows += res.jumps.rows;
  }

  fs::create_directories(out_dir);
  const auto csv_path = fs::path(out_dir) / "samples.csv";
  uvb::write_csv(csv_path.string(), jumps);
  std::cout << "sample: chains=" << chains << " steps=" << sc.steps
            << " delta=" << sc.delta << " period=" << sc.period
            << " jumps=" << jumps.rows << "\n";
  std::cout << "wrote: " << csv_path.string() << "\n";

  const int s = square_side(model.d());
  if (s > 0 && jumps.rows > 0) {
    const auto pgm_path = fs::path(out_dir) / "samples_grid.pgm";
    uvb::write_image_grid(pgm_path.string(), jumps, s, s,
                          std::min(10, jumps.rows));
    std::cout << "wrote: " << pgm_path.string() << "\n";
  }
  return 0;
}

// ---- eval ----------------------------------------------------------------------

int run_eval(const Config& cfg) {
  std::vector<uvb::EnergyModel> models;
  std::vector<std::string> names;
  for (const char* key : {"ckpt", "ckpt2"}) {
    if (!cfg.has(key)) continue;
    const auto ck = uvb::load_checkpoint(cfg.require_string(key));
    models.push_back(uvb::model_from_checkpoint(ck));
    names.push_back(Config::from_text(ck.config_text).get_string("model", "uvb"));
  }
  if (models.empty()) throw uvb::ConfigError("eval: key 'ckpt' is required");
  if (cfg.has("sigma")) {
    const double want = cfg.get_double("sigma", 0.0);
    for (const auto& m : models)
      if (m.sigma() != want)
        throw uvb::ConfigError("eval: requested sigma " + std::to_string(want) +
                               " != checkpoint sigma " + std::to_string(m.sigma()));
  }
  const std::uint64_t seed = static_cast<std::uint64_t>(cfg.get_int("seed", 1));
  const int n = static_cast<int>(cfg.get_int("eval_n", 2000));
  if (n < 1) throw uvb::ConfigError("config: key 'eval_n' must be >= 1");
  const std::string out_dir = cfg.get_string("out_dir", "out");
  fs::create_directories(out_dir);

  uvb::Dataset ds = uvb::dataset_from_config(cfg);

  // Cross-model loss table (one row; both columns coincide with one model).
  const uvb::EnergyModel& a = models[0];
  const uvb::EnergyModel& b = models.size() > 1 ? models[1] : models[0];
  uvb::LossTable table;
  table.d = a.d();
  table.rows.push_back(
      uvb::loss_table_row(a, b, ds.train, ds.test, uvb::mix_seed(seed, kEvalSeed)));
  const auto& r = table.rows[0];
  uvb::write_loss_table((fs::path(out_dir) / "loss_table.csv").string(), table);
  const double dd = static_cast<double>(table.d);
  std::cout << "loss_table: sigma=" << r.sigma
            << " a_train_per_dim=" << uvb::format_double(r.a_train / dd)
            << " a_test_per_dim=" << uvb::format_double(r.a_test / dd)
            << " b_train_per_dim=" << uvb::format_double(r.b_train / dd)
            << " b_test_per_dim=" << uvb::format_double(r.b_test / dd) << "\n";

  // Analytic-reference metrics only exist for mixture data.
  if (cfg.get_string("data", "gmm") == "gmm") {
    const uvb::GmmSpec gmm = uvb::gmm_from_config(cfg);
    for (std::size_t i = 0; i < models.size(); ++i) {
      uvb::ModelField f(models[i]);
      const auto se = uvb::score_error(f, gmm, models[i].sigma(), n,
                                       uvb::mix_seed(seed, kEvalSeed, i, 1));
      const auto rg = uvb::bayes_risk_gap(f, gmm, models[i].sigma(), n,
                                          uvb::mix_seed(seed, kEvalSeed, i, 2));
      std::cout << "score_error[" << names[i] << "]: mse=" << uvb::format_double(se.mse)
                << " relative=" << uvb::format_double(se.relative) << "\n";
      std::cout << "risk[" << names[i]
                << "]: model=" << uvb::format_double(rg.model_risk)
                << " bayes=" << uvb::format_double(rg.bayes_risk)
                << " gap=" << uvb::format_double(rg.gap) << "\n";
    }
  } else {
    std::cout << "score_error: skipped (no analytic reference for this data)\n";
  }

  // Posterior diagnostics for every latent-variable model, on one shared
  // noisy copy of the test set.
  std::vector<std::string> diag_names;
  std::vector<uvb::VaeDiagnostics> diags;
  uvb::Rng noise(uvb::mix_seed(seed, kDiagNoise));
  const uvb::NoisyBatch nb = uvb::make_noisy_pairs(ds.test, a.sigma(), noise);
  for (std::size_t i = 0; i < models.size(); ++i) {
    if (models[i].variant() != uvb::Variant::kUvb) continue;
    diags.push_back(uvb::vae_diagnostics(models[i], nb.y, uvb::mix_seed(seed, kDiagEps)));
    diag_names.push_back(names[i]);
    std::cout << "diagnostics[" << names[i]
              << "]: kl_mean=" << uvb::format_double(diags.back().kl_mean)
              << " recon_mean=" << uvb::format_double(diags.back().recon_mean) << "\n";
  }
  if (!diags.empty()) {
    uvb::write_diagnostics_table((fs::path(out_dir) / "diagnostics.csv").string(),
                                 diag_names, diags);
    std::cout << "wrote: " << (fs::path(out_dir) / "diagnostics.csv").string() << "\n";
  }
  std::cout << "wrote: " << (fs::path(out_dir) / "loss_table.csv").string() << "\n";
  return 0;
}

// ---- gen-data ------------------------------------------------------------------

int run_gen_data(const Config& cfg) {
  uvb::Dataset ds = uvb::dataset_from_config(cfg);
  const std::string out_dir = cfg.get_string("out_dir", "out");
  fs::create_directories(out_dir);
  const auto train_path = fs::path(out_dir) / "train.csv";
  const auto test_path = fs::path(out_dir) / "test.csv";
  uvb::write_csv(train_path.string(), ds.train);
  uvb::write_csv(test_path.string(), ds.test);
  std::cout << "gen-data: n_train=" << ds.train.rows << " n_test=" << ds.test.rows
            << " d=" << ds.train.cols << "\n";
  std::cout << "wrote: " << train_path.string() << ", " << test_path.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Energy models of noisy data: empirical-Bayes training, denoising, "
               "walk-jump sampling, and oracle-based evaluation"};
  app.require_subcommand(1);

  Command train = make_command(app, "train", "train a model; writes metrics.csv and model.ckpt");
  train.binder->add("--model", "model", "uvb | deen | vae (default uvb)");
  train.binder->add("--sigma", "sigma", "noise standard deviation (default 0.5)");
  train.binder->add("--dz", "dz", "latent dimension (default 100)");
  train.binder->add("--k-samples", "k_samples", "latent draws per energy evaluation (default 1)");
  train.binder->add("--lr", "lr", "Adam learning rate (default 1e-4)");
  train.binder->add("--batch", "batch", "batch size (default 128)");
  train.binder->add("--epochs", "epochs", "training epochs (default 100)");
  train.binder->add("--threads", "threads", "worker threads (default 1)");

  Command denoise = make_command(app, "denoise", "corrupt inputs and denoise them; writes "
                                                 "denoise.csv (+ PGM grid for images)");
  denoise.binder->add("--ckpt", "ckpt", "trained checkpoint");
  denoise.binder->add("--input", "input", "clean inputs: CSV matrix or IDX images");
  denoise.binder->add("--sigma", "sigma", "corruption noise level (default: checkpoint sigma)");
  denoise.binder->add("--limit", "limit", "max input rows, 0 = all (default 8)");

  Command sample = make_command(app, "sample", "walk-jump sampling from a trained energy; "
                                               "writes samples.csv (+ PGM grid for images)");
  sample.binder->add("--ckpt", "ckpt", "trained checkpoint");
  sample.binder->add("--steps", "steps", "walk steps per chain (default 5000)");
  sample.binder->add("--delta", "delta", "Langevin step size (default 0.2)");
  sample.binder->add("--period", "period", "steps between jumps, 0 = none (default 10)");
  sample.binder->add("--warmup", "warmup", "steps before the first jump (default 0)");
  sample.binder->add("--chains", "chains", "independent chains (default 1)");
  sample.binder->add("--threads", "threads", "worker threads (default 1)");

  Command eval = make_command(app, "eval", "loss table, oracle score error, Bayes-risk gap, "
                                           "posterior diagnostics; writes CSV tables");
  eval.binder->add("--ckpt", "ckpt", "first checkpoint (latent-variable column)");
  eval.binder->add("--ckpt2", "ckpt2", "second checkpoint (plain-network column)");
  eval.binder->add("--sigma", "sigma", "require this sigma; mismatch with a checkpoint fails");
  eval.binder->add("--eval-n", "eval_n", "evaluation points for oracle metrics (default 2000)");

  Command gen = make_command(app, "gen-data", "sample a mixture dataset to train.csv/test.csv");

  CLI11_PARSE(app, argc, argv);

  try {
    if (train.cmd->parsed()) return run_train(train.config());
    if (denoise.cmd->parsed()) return run_denoise(denoise.config());
    if (sample.cmd->parsed()) return run_sample(sample.config());
    if (eval.cmd->parsed()) return run_eval(eval.config());
    if (gen.cmd->parsed()) return run_gen_data(gen.config());
  } catch (const uvb::TrainError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const uvb::ChainError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
