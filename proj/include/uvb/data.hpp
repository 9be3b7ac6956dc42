#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <numbers>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "uvb/errors.hpp"
#include "uvb/rng.hpp"

namespace uvb {

struct Matrix {
  int rows = 0, cols = 0;
  std::vector<double> data;  // row-major

  Matrix() = default;
  Matrix(int r, int c) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, 0.0) {}

  std::span<double> row(int i) {
    return {data.data() + static_cast<std::size_t>(i) * cols, static_cast<std::size_t>(cols)};
  }
  std::span<const double> row(int i) const {
    return {data.data() + static_cast<std::size_t>(i) * cols, static_cast<std::size_t>(cols)};
  }
  double& at(int i, int j) { return data[static_cast<std::size_t>(i) * cols + j]; }
  double at(int i, int j) const { return data[static_cast<std::size_t>(i) * cols + j]; }
};

struct Dataset {
  Matrix train, test;
  double lo = 0.0, hi = 1.0;       // value range metadata
  int img_rows = 0, img_cols = 0;  // nonzero when rows are images
};

// Isotropic Gaussian mixture: shared per-component variance `var` (0 for
// point masses). The smoothed law of y = x + N(0, sigma^2 I) is the same
// mixture with variance var + sigma^2, which keeps the oracle closed-form.
struct GmmSpec {
  std::vector<double> weights;
  std::vector<std::vector<double>> means;
  double var = 0.0;

  int dim() const { return means.empty() ? 0 : static_cast<int>(means[0].size()); }

  void validate() const {
    if (weights.empty() || weights.size() != means.size())
      throw ConfigError("gmm: weights and means must be nonempty and equal length");
    double sum = 0.0;
    for (double w : weights) {
      if (!(w > 0.0)) throw ConfigError("gmm: weights must be positive");
      sum += w;
    }
    if (std::abs(sum - 1.0) > 1e-12)
      throw ConfigError("gmm: weights must sum to 1 (got " + std::to_string(sum) + ")");
    for (const auto& m : means) {
      if (m.size() != means[0].size())
        throw ConfigError("gmm: means must share one dimension");
      for (double v : m)
        if (!std::isfinite(v)) throw ConfigError("gmm: means must be finite");
    }
    if (var < 0.0) throw ConfigError("gmm: component variance must be >= 0");
  }
};

inline Matrix gmm_sample(const GmmSpec& spec, int n, Rng& rng) {
  spec.validate();
  const int d = spec.dim();
  Matrix m(n, d);
  const double sd = std::sqrt(spec.var);
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    std::size_t c = 0;
    double acc = 0.0;
    for (; c + 1 < spec.weights.size(); ++c) {
      acc += spec.weights[c];
      if (u < acc) break;
    }
    auto row = m.row(i);
    rng.fill_gaussian(row, sd);
    for (int j = 0; j < d; ++j) row[j] += spec.means[c][j];
  }
  return m;
}

struct OracleOut {
  double log_density = 0.0;  // of the smoothed law, normalization included
  std::vector<double> score;
  std::vector<double> bayes_mean;
};

// Exact score and posterior mean of y = x + N(0, sigma^2 I) when x follows
// the mixture. Responsibilities via log-sum-exp.
inline OracleOut gmm_smoothed_oracle(const GmmSpec& spec, double sigma,
                                     std::span<const double> y) {
  spec.validate();
  const int d = spec.dim();
  if (static_cast<int>(y.size()) != d)
    throw DimensionError("oracle: y length != mixture dimension");
  const double s = spec.var + sigma * sigma;
  if (!(s > 0.0)) throw ConfigError("oracle: var + sigma^2 must be > 0");

  const std::size_t n_c = spec.weights.size();
  std::vector<double> logits(n_c);
  double max_logit = -std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < n_c; ++c) {
    double sq = 0.0;
    for (int j = 0; j < d; ++j) {
      const double r = y[j] - spec.means[c][j];
      sq += r * r;
    }
    logits[c] = std::log(spec.weights[c]) - sq / (2.0 * s);
    max_logit = std::max(max_logit, logits[c]);
  }
  double z = 0.0;
  for (std::size_t c = 0; c < n_c; ++c) z += std::exp(logits[c] - max_logit);

  OracleOut out;
  out.log_density = max_logit + std::log(z) -
                    0.5 * d * std::log(2.0 * std::numbers::pi * s);
  out.score.assign(static_cast<std::size_t>(d), 0.0);
  for (std::size_t c = 0; c < n_c; ++c) {
    const double r_c = std::exp(logits[c] - max_logit) / z;
    for (int j = 0; j < d; ++j)
      out.score[static_cast<std::size_t>(j)] += r_c * (spec.means[c][j] - y[j]) / s;
  }
  out.bayes_mean.assign(y.begin(), y.end());
  for (int j = 0; j < d; ++j)
    out.bayes_mean[static_cast<std::size_t>(j)] += sigma * sigma * out.score[static_cast<std::size_t>(j)];
  return out;
}

// Seed-reproducible shuffle split; the first returned side holds a
// `fraction` share of the rows, the second the rest.
inline std::pair<Matrix, Matrix> split(const Matrix& m, double fraction,
                                       std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0))
    throw ConfigError("split: fraction must be in (0,1)");
  const int n_train = static_cast<int>(std::llround(fraction * m.rows));
  if (n_train < 1 || n_train >= m.rows)
    throw ConfigError("split: a side would be empty");
  std::vector<int> idx(static_cast<std::size_t>(m.rows));
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(mix_seed(seed, 0x73706C6974ull));  // "split" stream
  for (int i = m.rows - 1; i > 0; --i) {
    const int j = static_cast<int>(rng.next_u64() % static_cast<std::uint64_t>(i + 1));
    std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
  }
  Matrix train(n_train, m.cols), test(m.rows - n_train, m.cols);
  for (int i = 0; i < n_train; ++i) {
    const auto src = m.row(idx[static_cast<std::size_t>(i)]);
    std::copy(src.begin(), src.end(), train.row(i).begin());
  }
  for (int i = n_train; i < m.rows; ++i) {
    const auto src = m.row(idx[static_cast<std::size_t>(i)]);
    std::copy(src.begin(), src.end(), test.row(i - n_train).begin());
  }
  return {std::move(train), std::move(test)};
}

// ---- IDX ingestion ---------------------------------------------------------

class IdxError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {
inline std::uint32_t read_be32(std::istream& in, const std::string& what) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4))
    throw IdxError("idx: truncated while reading " + what);
  return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
         (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}
inline void write_be32(std::ostream& out, std::uint32_t v) {
  const unsigned char b[4] = {
      static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
      static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
  out.write(reinterpret_cast<const char*>(b), 4);
}
}  // namespace detail

struct IdxImages {
  Matrix pixels;  // n x (rows*cols), scaled to [0,1] by /255
  int img_rows = 0, img_cols = 0;
};

// Big-endian IDX, unsigned-byte pixels, magic 2051. `limit` > 0 keeps only
// the first `limit` images.
inline IdxImages load_idx_images(const std::string& path, int limit = 0) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IdxError("idx: cannot open " + path);
  const std::uint32_t magic = detail::read_be32(in, "magic");
  if (magic != 2051)
    throw IdxError("idx: bad image magic " + std::to_string(magic) + " in " + path);
  const std::uint32_t n = detail::read_be32(in, "count");
  const std::uint32_t rows = detail::read_be32(in, "rows");
  const std::uint32_t cols = detail::read_be32(in, "cols");
  std::uint32_t keep = n;
  if (limit > 0 && static_cast<std::uint32_t>(limit) < n)
    keep = static_cast<std::uint32_t>(limit);
  IdxImages out;
  out.img_rows = static_cast<int>(rows);
  out.img_cols = static_cast<int>(cols);
  out.pixels = Matrix(static_cast<int>(keep), static_cast<int>(rows * cols));
  std::vector<unsigned char> buf(rows * cols);
  for (std::uint32_t i = 0; i < keep; ++i) {
    if (!in.read(reinterpret_cast<char*>(buf.data()), buf.size()))
      throw IdxError("idx: truncated pixel data in " + path);
    auto row = out.pixels.row(static_cast<int>(i));
    for (std::size_t j = 0; j < buf.size(); ++j) row[j] = buf[j] / 255.0;
  }
  return out;
}

inline std::vector<int> load_idx_labels(const std::string& path, int limit = 0) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IdxError("idx: cannot open " + path);
  const std::uint32_t magic = detail::read_be32(in, "magic");
  if (magic != 2049)
    throw IdxError("idx: bad label magic " + std::to_string(magic) + " in " + path);
  const std::uint32_t n = detail::read_be32(in, "count");
  std::uint32_t keep = n;
  if (limit > 0 && static_cast<std::uint32_t>(limit) < n)
    keep = static_cast<std::uint32_t>(limit);
  std::vector<int> labels(keep);
  for (std::uint32_t i = 0; i < keep; ++i) {
    char c;
    if (!in.get(c)) throw IdxError("idx: truncated label data in " + path);
    labels[i] = static_cast<unsigned char>(c);
  }
  return labels;
}

// Test-fixture writer; pixel doubles are mapped back by rounding v*255.
inline void write_idx_images(const std::string& path, const Matrix& pixels,
                             int img_rows, int img_cols) {
  if (pixels.cols != img_rows * img_cols)
    throw DimensionError("idx write: cols != img_rows*img_cols");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IdxError("idx: cannot create " + path);
  detail::write_be32(out, 2051);
  detail::write_be32(out, static_cast<std::uint32_t>(pixels.rows));
  detail::write_be32(out, static_cast<std::uint32_t>(img_rows));
  detail::write_be32(out, static_cast<std::uint32_t>(img_cols));
  for (int i = 0; i < pixels.rows; ++i)
    for (double v : pixels.row(i)) {
      const double clamped = std::min(1.0, std::max(0.0, v));
      out.put(static_cast<char>(static_cast<unsigned char>(std::lround(clamped * 255.0))));
    }
}

inline void write_idx_labels(const std::string& path, std::span<const int> labels) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IdxError("idx: cannot create " + path);
  detail::write_be32(out, 2049);
  detail::write_be32(out, static_cast<std::uint32_t>(labels.size()));
  for (int v : labels) out.put(static_cast<char>(static_cast<unsigned char>(v)));
}

}  // namespace uvb
