#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "uvb/errors.hpp"
#include "uvb/rng.hpp"
#include "uvb/tape.hpp"

namespace uvb {

enum class Readout { kLinear, kLogistic };

inline const char* readout_name(Readout r) {
  return r == Readout::kLinear ? "linear" : "logistic";
}

// Fully connected net: silu hidden activations, linear or logistic readout.
struct MlpSpec {
  int in = 0;
  std::vector<int> hidden;
  int out = 0;
  Readout readout = Readout::kLinear;
};

struct LayerShape {
  int fan_in = 0, fan_out = 0;
};

inline std::vector<LayerShape> mlp_layers(const MlpSpec& s) {
  if (s.in < 1 || s.out < 1)
    throw DimensionError("mlp: in/out dims must be >= 1");
  std::vector<LayerShape> layers;
  int prev = s.in;
  for (int w : s.hidden) {
    if (w < 1) throw DimensionError("mlp: hidden width must be >= 1");
    layers.push_back({prev, w});
    prev = w;
  }
  layers.push_back({prev, s.out});
  return layers;
}

inline std::size_t mlp_param_count(const MlpSpec& s) {
  std::size_t n = 0;
  for (const auto& l : mlp_layers(s))
    n += static_cast<std::size_t>(l.fan_in) * l.fan_out + l.fan_out;
  return n;
}

// One named block (weight matrix or bias vector) inside the flat vector.
struct ParamEntry {
  std::string name;
  std::size_t offset = 0;
  int rows = 0, cols = 0;  // bias vectors have cols == 1
  bool is_bias = false;
};

struct ParamSet {
  std::vector<double> values;
  std::vector<ParamEntry> layout;
};

struct NamedMlp {
  std::string name;
  MlpSpec spec;
};

// Layout per layer L: weight "name.wL" (out x in, row-major), then bias
// "name.bL" (out x 1). Networks in list order. The layout is a pure function
// of the specs, which is what makes checkpoints self-describing.
inline ParamSet make_param_set(std::span<const NamedMlp> nets) {
  ParamSet ps;
  std::size_t off = 0;
  for (const auto& net : nets) {
    const auto layers = mlp_layers(net.spec);
    for (std::size_t li = 0; li < layers.size(); ++li) {
      const auto [fi, fo] = layers[li];
      ps.layout.push_back({net.name + ".w" + std::to_string(li), off, fo, fi, false});
      off += static_cast<std::size_t>(fi) * fo;
      ps.layout.push_back({net.name + ".b" + std::to_string(li), off, fo, 1, true});
      off += static_cast<std::size_t>(fo);
    }
  }
  ps.values.assign(off, 0.0);
  return ps;
}

// Weights uniform in +/- sqrt(6/(fan_in+fan_out)), biases zero. Sequential
// fill over the deterministic layout, so (nets, seed) fixes every bit.
inline ParamSet init_params(std::span<const NamedMlp> nets, std::uint64_t seed) {
  ParamSet ps = make_param_set(nets);
  Rng rng(mix_seed(seed, 0x696E6974ull));  // "init" stream
  for (const auto& e : ps.layout) {
    if (e.is_bias) continue;
    const double bound = std::sqrt(6.0 / (e.rows + e.cols));
    rng.fill_uniform(
        std::span<double>(ps.values.data() + e.offset,
                          static_cast<std::size_t>(e.rows) * e.cols),
        -bound, bound);
  }
  return ps;
}

// Records the net into the tape. Parameter slots are param_base + the same
// flat layout make_param_set produces for this spec alone.
inline std::vector<Tape::Id> mlp_emit(Tape& t, const MlpSpec& s,
                                      std::size_t param_base,
                                      std::span<const Tape::Id> x) {
  if (static_cast<int>(x.size()) != s.in)
    throw DimensionError("mlp_emit: input length " + std::to_string(x.size()) +
                         " != spec input dim " + std::to_string(s.in));
  std::vector<Tape::Id> cur(x.begin(), x.end());
  const auto layers = mlp_layers(s);
  std::size_t off = param_base;
  for (std::size_t li = 0; li < layers.size(); ++li) {
    const auto [fi, fo] = layers[li];
    const std::size_t w_off = off, b_off = off + static_cast<std::size_t>(fi) * fo;
    std::vector<Tape::Id> nxt(static_cast<std::size_t>(fo));
    for (int j = 0; j < fo; ++j) {
      Tape::Id acc = t.param(static_cast<int>(b_off + j));
      for (int i = 0; i < fi; ++i)
        acc = t.fma(t.param(static_cast<int>(w_off + static_cast<std::size_t>(j) * fi + i)),
                    cur[static_cast<std::size_t>(i)], acc);
      nxt[static_cast<std::size_t>(j)] = acc;
    }
    off = b_off + static_cast<std::size_t>(fo);
    if (li + 1 < layers.size()) {
      for (auto& id : nxt) id = t.silu(id);
    } else if (s.readout == Readout::kLogistic) {
      for (auto& id : nxt) id = t.sigmoid(id);
    }
    cur = std::move(nxt);
  }
  return cur;
}

}  // namespace uvb
