#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <span>

namespace uvb {

// splitmix64 step; also used as the seed expander for Rng.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Folds an arbitrary list of 64-bit tags into one seed. Used for the
// counter-based noise streams: every (epoch, sample, draw) triple gets its
// own reproducible stream regardless of evaluation order or thread count.
inline std::uint64_t mix_seed(std::uint64_t seed) {
  std::uint64_t s = seed;
  return splitmix64(s);
}

template <typename... Rest>
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t tag, Rest... rest) {
  std::uint64_t s = seed ^ (tag + 0x9e3779b97f4a7c15ULL + (seed << 6) + (seed >> 2));
  return mix_seed(splitmix64(s), rest...);
}

// xoshiro256++ with splitmix64 seeding. std::mt19937_64 would work equally
// well as an engine, but the standard *distributions* are
// implementation-defined, so all transforms to uniform/Gaussian live here.
// State is four words, which keeps checkpoints trivial.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) { reseed(seed); }

  void reseed(std::uint64_t seed) {
    std::uint64_t sm = seed;
    for (auto& word : s_) word = splitmix64(sm);
  }

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  // uniform in [0, 1), 53 bits
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Box-Muller. Generates a pair and discards the second half; fill_gaussian
  // below uses both. No cached state, so serialization is just the four words.
  double gaussian() {
    double z0, z1;
    gaussian_pair(z0, z1);
    return z0;
  }

  void fill_gaussian(std::span<double> out, double stddev = 1.0) {
    std::size_t i = 0;
    while (i + 1 < out.size()) {
      double z0, z1;
      gaussian_pair(z0, z1);
      out[i++] = stddev * z0;
      out[i++] = stddev * z1;
    }
    if (i < out.size()) out[i] = stddev * gaussian();
  }

  void fill_uniform(std::span<double> out, double lo = 0.0, double hi = 1.0) {
    for (auto& v : out) v = uniform(lo, hi);
  }

  std::array<std::uint64_t, 4> state() const { return s_; }
  void set_state(const std::array<std::uint64_t, 4>& s) { s_ = s; }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

  void gaussian_pair(double& z0, double& z1) {
    // 1 - u keeps the log argument in (0, 1]
    const double u1 = 1.0 - uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    constexpr double two_pi = 6.283185307179586476925286766559;
    z0 = r * std::cos(two_pi * u2);
    z1 = r * std::sin(two_pi * u2);
  }

  std::array<std::uint64_t, 4> s_{};
};

}  // namespace uvb
