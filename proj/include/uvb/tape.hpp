#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace uvb {

// Forward evaluation produced a non-finite value; `node` is the first
// offending node index.
class EvalError : public std::runtime_error {
 public:
  EvalError(std::size_t node, const std::string& what)
      : std::runtime_error(what), node_(node) {}
  std::size_t node() const { return node_; }

 private:
  std::size_t node_;
};

// Gradient requested before forward(), or slot buffers of the wrong length.
class StateError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class UnsupportedOpError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Scalar computation graph with reverse-mode differentiation.
//
// The op set is deliberately tiny and closed under differentiation: every
// local partial of every op is itself expressible with these ops. That is
// what makes the second-order path work — emit_input_gradients() runs the
// reverse sweep symbolically, appending nodes that compute df/dinput, and
// the extended tape is again an ordinary tape. One numeric backward() over
// it then yields mixed second-order derivatives (d/dparams of an expression
// containing df/dinputs).
//
// Node indices are topologically ordered by construction: an op only ever
// references previously created nodes.
class Tape {
 public:
  using Id = std::int32_t;

  enum class Op : std::uint8_t {
    kConst,
    kInput,
    kParam,
    kAdd,
    kSub,
    kMul,
    kDiv,
    kNeg,
    kSquare,
    kExp,
    kLog,
    kSqrt,
    kSigmoid,
    kFma,  // a*b + c
  };

  struct Node {
    Op op;
    Id a = -1, b = -1, c = -1;
    double aux = 0.0;  // kConst: value; kInput/kParam: slot index
  };

  // ---- graph construction ------------------------------------------------

  Id constant(double v) {
    auto it = const_cache_.find(v);
    if (it != const_cache_.end()) return it->second;
    Id id = push({Op::kConst, -1, -1, -1, v});
    const_cache_.emplace(v, id);
    return id;
  }

  // Idempotent per slot: repeated calls return the same node, so a slot's
  // gradient is read off a single adjoint.
  Id input(int slot) { return slot_node(Op::kInput, input_nodes_, slot); }
  Id param(int slot) { return slot_node(Op::kParam, param_nodes_, slot); }

  Id add(Id a, Id b) { return push({Op::kAdd, a, b, -1, 0.0}); }
  Id sub(Id a, Id b) { return push({Op::kSub, a, b, -1, 0.0}); }
  Id mul(Id a, Id b) { return push({Op::kMul, a, b, -1, 0.0}); }
  Id div(Id a, Id b) { return push({Op::kDiv, a, b, -1, 0.0}); }
  Id neg(Id a) { return push({Op::kNeg, a, -1, -1, 0.0}); }
  Id square(Id a) { return push({Op::kSquare, a, -1, -1, 0.0}); }
  Id exp(Id a) { return push({Op::kExp, a, -1, -1, 0.0}); }
  Id log(Id a) { return push({Op::kLog, a, -1, -1, 0.0}); }
  Id sqrt(Id a) { return push({Op::kSqrt, a, -1, -1, 0.0}); }
  Id sigmoid(Id a) { return push({Op::kSigmoid, a, -1, -1, 0.0}); }
  Id fma(Id a, Id b, Id c) { return push({Op::kFma, a, b, c, 0.0}); }

  // silu(x) = x * sigmoid(x); C-infinity, so the double-backprop chain stays
  // well defined (a kink like relu would not admit a second derivative).
  Id silu(Id a) { return mul(a, sigmoid(a)); }

  Id scale(Id a, double k) { return mul(constant(k), a); }

  Id sum(std::span<const Id> ids) {
    if (ids.empty()) return constant(0.0);
    Id acc = ids[0];
    for (std::size_t i = 1; i < ids.size(); ++i) acc = add(acc, ids[i]);
    return acc;
  }

  void set_output(Id id) { output_ = id; }
  Id output() const { return output_; }

  std::size_t size() const { return nodes_.size(); }
  int num_inputs() const { return static_cast<int>(input_nodes_.size()); }
  int num_params() const { return static_cast<int>(param_nodes_.size()); }
  const Node& node(Id id) const { return nodes_[static_cast<std::size_t>(id)]; }

  // ---- evaluation ----------------------------------------------------------

  // Replays the tape. Deterministic: identical tapes and buffers give
  // bit-identical values. Throws EvalError with the first non-finite node.
  double forward(std::span<const double> inputs, std::span<const double> params) {
    if (inputs.size() != input_nodes_.size())
      throw StateError("forward: input length " + std::to_string(inputs.size()) +
                       " != slot count " + std::to_string(input_nodes_.size()));
    if (params.size() != param_nodes_.size())
      throw StateError("forward: param length " + std::to_string(params.size()) +
                       " != slot count " + std::to_string(param_nodes_.size()));
    value_.resize(nodes_.size());
    const std::size_t n = nodes_.size();
    for (std::size_t i = 0; i < n; ++i) {
      const Node& nd = nodes_[i];
      double v;
      switch (nd.op) {
        case Op::kConst: v = nd.aux; break;
        case Op::kInput: v = inputs[static_cast<std::size_t>(nd.a)]; break;
        case Op::kParam: v = params[static_cast<std::size_t>(nd.a)]; break;
        case Op::kAdd: v = value_[idx(nd.a)] + value_[idx(nd.b)]; break;
        case Op::kSub: v = value_[idx(nd.a)] - value_[idx(nd.b)]; break;
        case Op::kMul: v = value_[idx(nd.a)] * value_[idx(nd.b)]; break;
        case Op::kDiv: v = value_[idx(nd.a)] / value_[idx(nd.b)]; break;
        case Op::kNeg: v = -value_[idx(nd.a)]; break;
        case Op::kSquare: {
          const double x = value_[idx(nd.a)];
          v = x * x;
          break;
        }
        case Op::kExp: v = std::exp(value_[idx(nd.a)]); break;
        case Op::kLog: v = std::log(value_[idx(nd.a)]); break;
        case Op::kSqrt: v = std::sqrt(value_[idx(nd.a)]); break;
        case Op::kSigmoid: v = stable_sigmoid(value_[idx(nd.a)]); break;
        case Op::kFma:
          v = value_[idx(nd.a)] * value_[idx(nd.b)] + value_[idx(nd.c)];
          break;
        default: throw UnsupportedOpError("forward: unknown op");
      }
      if (!std::isfinite(v))
        throw EvalError(i, "forward: non-finite value at node " + std::to_string(i));
      value_[i] = v;
    }
    evaluated_ = true;
    if (output_ < 0) throw StateError("forward: no output set");
    return value_[idx(output_)];
  }

  double value(Id id) const { return value_[idx(id)]; }
  bool evaluated() const { return evaluated_; }

  // Numeric reverse sweep seeding d(root)/d(root) = 1. Visits every node
  // exactly once in reverse index order (= reverse topological order), so
  // accumulation order is fixed and results are bit-reproducible.
  void backward_from(Id root) {
    if (!evaluated_) throw StateError("backward: forward has not been run");
    adjoint_.assign(nodes_.size(), 0.0);
    adjoint_[idx(root)] = 1.0;
    for (Id i = root; i >= 0; --i) {
      const double g = adjoint_[idx(i)];
      if (g == 0.0) continue;
      const Node& nd = nodes_[idx(i)];
      switch (nd.op) {
        case Op::kConst:
        case Op::kInput:
        case Op::kParam: break;
        case Op::kAdd:
          adjoint_[idx(nd.a)] += g;
          adjoint_[idx(nd.b)] += g;
          break;
        case Op::kSub:
          adjoint_[idx(nd.a)] += g;
          adjoint_[idx(nd.b)] -= g;
          break;
        case Op::kMul:
          adjoint_[idx(nd.a)] += g * value_[idx(nd.b)];
          adjoint_[idx(nd.b)] += g * value_[idx(nd.a)];
          break;
        case Op::kDiv: {
          const double vb = value_[idx(nd.b)];
          adjoint_[idx(nd.a)] += g / vb;
          adjoint_[idx(nd.b)] -= g * value_[idx(i)] / vb;
          break;
        }
        case Op::kNeg: adjoint_[idx(nd.a)] -= g; break;
        case Op::kSquare: adjoint_[idx(nd.a)] += g * 2.0 * value_[idx(nd.a)]; break;
        case Op::kExp: adjoint_[idx(nd.a)] += g * value_[idx(i)]; break;
        case Op::kLog: adjoint_[idx(nd.a)] += g / value_[idx(nd.a)]; break;
        case Op::kSqrt: adjoint_[idx(nd.a)] += g * 0.5 / value_[idx(i)]; break;
        case Op::kSigmoid: {
          const double s = value_[idx(i)];
          adjoint_[idx(nd.a)] += g * s * (1.0 - s);
          break;
        }
        case Op::kFma:
          adjoint_[idx(nd.a)] += g * value_[idx(nd.b)];
          adjoint_[idx(nd.b)] += g * value_[idx(nd.a)];
          adjoint_[idx(nd.c)] += g;
          break;
        default: throw UnsupportedOpError("backward: unknown op");
      }
    }
  }

  void backward() { backward_from(output_); }

  double adjoint(Id id) const { return adjoint_[idx(id)]; }

  // df/dinput for every input slot, in slot order.
  std::vector<double> grad_inputs() {
    backward();
    std::vector<double> g(input_nodes_.size(), 0.0);
    for (std::size_t s = 0; s < input_nodes_.size(); ++s)
      if (input_nodes_[s] >= 0) g[s] = adjoint_[idx(input_nodes_[s])];
    return g;
  }

  // dL/dparam for every param slot; root defaults to the tape output.
  void grad_params(std::span<double> out, Id root = -1) {
    backward_from(root < 0 ? output_ : root);
    if (out.size() != param_nodes_.size())
      throw StateError("grad_params: buffer length mismatch");
    for (std::size_t s = 0; s < param_nodes_.size(); ++s)
      out[s] = param_nodes_[s] >= 0 ? adjoint_[idx(param_nodes_[s])] : 0.0;
  }

  void grad_inputs_into(std::span<double> out, Id root = -1) {
    backward_from(root < 0 ? output_ : root);
    if (out.size() != input_nodes_.size())
      throw StateError("grad_inputs: buffer length mismatch");
    for (std::size_t s = 0; s < input_nodes_.size(); ++s)
      out[s] = input_nodes_[s] >= 0 ? adjoint_[idx(input_nodes_[s])] : 0.0;
  }

  // ---- gradient-of-graph extension ----------------------------------------

  // Runs the reverse sweep symbolically: appends nodes computing
  // d(root)/d(input slot) for every input slot and returns their ids
  // (slot order). Only paths that actually reach an input are materialized;
  // parameter-only subgraphs contribute nothing to input gradients and get
  // no adjoint nodes. The emitted rules use only ops from the closed set,
  // so the extended tape supports a further backward() — that second sweep
  // is what supplies d/dparams of a loss built from these gradient nodes.
  std::vector<Id> emit_input_gradients(Id root) {
    const std::size_t n_orig = nodes_.size();
    std::vector<char> reaches_input(n_orig, 0);
    for (std::size_t i = 0; i < n_orig; ++i) {
      const Node& nd = nodes_[i];
      if (nd.op == Op::kInput) {
        reaches_input[i] = 1;
        continue;
      }
      const bool r = (nd.a >= 0 && reaches_input[idx(nd.a)]) ||
                     (nd.b >= 0 && reaches_input[idx(nd.b)]) ||
                     (nd.c >= 0 && reaches_input[idx(nd.c)]);
      reaches_input[i] = r ? 1 : 0;
    }

    std::vector<Id> adj(n_orig, -1);
    adj[idx(root)] = constant(1.0);
    auto contribute = [&](Id pred, Id contribution) {
      if (!reaches_input[idx(pred)]) return;
      adj[idx(pred)] = adj[idx(pred)] < 0 ? contribution : add(adj[idx(pred)], contribution);
    };

    for (Id i = root; i >= 0; --i) {
      const Id g = adj[idx(i)];
      if (g < 0 || !reaches_input[idx(i)]) continue;
      const Node nd = nodes_[idx(i)];  // copy: push() may reallocate
      switch (nd.op) {
        case Op::kConst:
        case Op::kInput:
        case Op::kParam: break;
        case Op::kAdd:
          contribute(nd.a, g);
          contribute(nd.b, g);
          break;
        case Op::kSub:
          contribute(nd.a, g);
          if (reaches_input[idx(nd.b)]) contribute(nd.b, neg(g));
          break;
        case Op::kMul:
          if (reaches_input[idx(nd.a)]) contribute(nd.a, mul(g, nd.b));
          if (reaches_input[idx(nd.b)]) contribute(nd.b, mul(g, nd.a));
          break;
        case Op::kDiv:
          if (reaches_input[idx(nd.a)]) contribute(nd.a, div(g, nd.b));
          if (reaches_input[idx(nd.b)]) contribute(nd.b, neg(mul(g, div(i, nd.b))));
          break;
        case Op::kNeg: contribute(nd.a, neg(g)); break;
        case Op::kSquare:
          if (reaches_input[idx(nd.a)]) contribute(nd.a, mul(g, add(nd.a, nd.a)));
          break;
        case Op::kExp:
          if (reaches_input[idx(nd.a)]) contribute(nd.a, mul(g, i));
          break;
        case Op::kLog:
          if (reaches_input[idx(nd.a)]) contribute(nd.a, div(g, nd.a));
          break;
        case Op::kSqrt:
          if (reaches_input[idx(nd.a)]) contribute(nd.a, mul(g, div(constant(0.5), i)));
          break;
        case Op::kSigmoid:
          if (reaches_input[idx(nd.a)])
            contribute(nd.a, mul(g, mul(i, sub(constant(1.0), i))));
          break;
        case Op::kFma:
          if (reaches_input[idx(nd.a)]) contribute(nd.a, mul(g, nd.b));
          if (reaches_input[idx(nd.b)]) contribute(nd.b, mul(g, nd.a));
          contribute(nd.c, g);
          break;
        default:
          throw UnsupportedOpError("emit_input_gradients: op without a derivative rule");
      }
    }

    std::vector<Id> grads(input_nodes_.size(), -1);
    for (std::size_t s = 0; s < input_nodes_.size(); ++s) {
      const Id node_id = input_nodes_[s];
      grads[s] = (node_id >= 0 && adj[idx(node_id)] >= 0) ? adj[idx(node_id)]
                                                          : constant(0.0);
    }
    evaluated_ = false;  // tape grew; previous values are stale
    return grads;
  }

 private:
  static std::size_t idx(Id id) { return static_cast<std::size_t>(id); }

  static double stable_sigmoid(double x) {
    if (x >= 0.0) {
      const double e = std::exp(-x);
      return 1.0 / (1.0 + e);
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
  }

  Id push(Node nd) {
    nodes_.push_back(nd);
    evaluated_ = false;
    return static_cast<Id>(nodes_.size() - 1);
  }

  Id slot_node(Op op, std::vector<Id>& table, int slot) {
    if (slot < 0) throw StateError("slot must be nonnegative");
    if (static_cast<std::size_t>(slot) >= table.size())
      table.resize(static_cast<std::size_t>(slot) + 1, -1);
    Id& entry = table[static_cast<std::size_t>(slot)];
    if (entry < 0) entry = push({op, static_cast<Id>(slot), -1, -1, 0.0});
    return entry;
  }

  std::vector<Node> nodes_;
  std::vector<double> value_, adjoint_;
  std::vector<Id> input_nodes_, param_nodes_;  // slot -> node id
  std::unordered_map<double, Id> const_cache_;
  Id output_ = -1;
  bool evaluated_ = false;
};

}  // namespace uvb
