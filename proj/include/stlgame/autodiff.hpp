#pragma once

// Reverse-mode autodiff over scalars recorded on an append-only tape.
// Forward values are computed eagerly; backward() replays the tape in
// reverse and accumulates adjoints for every `var` entry.

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace stlgame::ad {

class TapeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Op : std::uint8_t {
  Const,
  Var,
  Add,
  Sub,
  Mul,
  Div,
  Neg,
  Exp,
  Log,
  Tanh,
  Sigmoid,
  Sin,
  Cos,
  Tan,
  Pow,        // aux = exponent (constant)
  LogSumExp,  // n-ary, parents in arena, aux = cached max shift
  Dot         // n pairs, arena holds a0,b0,a1,b1,...
};

class Tape;

// Handle into a tape. Valid only until the owning tape is reset.
class Value {
 public:
  Value() = default;
  Value(Tape* tape, std::uint32_t index, std::uint64_t generation)
      : tape_(tape), index_(index), generation_(generation) {}

  double value() const;
  Tape* tape() const { return tape_; }
  std::uint32_t index() const { return index_; }
  std::uint64_t generation() const { return generation_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape* tape_ = nullptr;
  std::uint32_t index_ = 0;
  std::uint64_t generation_ = 0;
};

class Tape {
 public:
  struct Node {
    Op op;
    std::uint32_t a = 0;  // parent index, or arena offset for n-ary ops
    std::uint32_t b = 0;  // parent index, or arena count
    double val = 0.0;
    double aux = 0.0;
  };

  Value constant(double v) { return push(Op::Const, 0, 0, check_finite(v)); }

  Value var(double v) {
    Value out = push(Op::Var, 0, 0, check_finite(v));
    vars_.push_back(out.index());
    return out;
  }

  std::size_t size() const { return nodes_.size(); }
  std::size_t num_vars() const { return vars_.size(); }
  std::uint64_t generation() const { return generation_; }
  double value_at(std::uint32_t i) const { return nodes_[i].val; }

  // Invalidates all outstanding Values; storage is kept for reuse.
  void reset() {
    nodes_.clear();
    arena_.clear();
    vars_.clear();
    ++generation_;
  }

  Value add(Value x, Value y) { return binary(Op::Add, x, y, x.value() + y.value()); }
  Value sub(Value x, Value y) { return binary(Op::Sub, x, y, x.value() - y.value()); }
  Value mul(Value x, Value y) { return binary(Op::Mul, x, y, x.value() * y.value()); }

  Value div(Value x, Value y) {
    if (y.value() == 0.0) throw TapeError("div: zero denominator");
    return binary(Op::Div, x, y, x.value() / y.value());
  }

  Value neg(Value x) { return unary(Op::Neg, x, -x.value()); }
  Value exp(Value x) { return unary(Op::Exp, x, std::exp(x.value())); }

  Value log(Value x) {
    if (x.value() <= 0.0) throw TapeError("log: non-positive argument");
    return unary(Op::Log, x, std::log(x.value()));
  }

  Value tanh(Value x) { return unary(Op::Tanh, x, std::tanh(x.value())); }

  Value sigmoid(Value x) {
    double v = 1.0 / (1.0 + std::exp(-x.value()));
    return unary(Op::Sigmoid, x, v);
  }

  Value sin(Value x) { return unary(Op::Sin, x, std::sin(x.value())); }
  Value cos(Value x) { return unary(Op::Cos, x, std::cos(x.value())); }
  Value tan(Value x) { return unary(Op::Tan, x, std::tan(x.value())); }

  Value pow(Value x, double e) {
    check(x);
    Node n{Op::Pow, x.index(), 0, check_finite(std::pow(x.value(), e)), e};
    nodes_.push_back(n);
    return Value(this, static_cast<std::uint32_t>(nodes_.size() - 1), generation_);
  }

  // Max-shifted log-sum-exp; stable for widely spread arguments.
  Value logsumexp(std::span<const Value> xs) {
    if (xs.empty()) throw TapeError("logsumexp: empty argument list");
    double m = -HUGE_VAL;
    for (Value x : xs) {
      check(x);
      m = std::max(m, x.value());
    }
    double s = 0.0;
    for (Value x : xs) s += std::exp(x.value() - m);
    std::uint32_t off = static_cast<std::uint32_t>(arena_.size());
    for (Value x : xs) arena_.push_back(x.index());
    Node n{Op::LogSumExp, off, static_cast<std::uint32_t>(xs.size()),
           check_finite(m + std::log(s)), m};
    nodes_.push_back(n);
    return Value(this, static_cast<std::uint32_t>(nodes_.size() - 1), generation_);
  }

  // Fused inner product; the workhorse of recurrent-cell evaluation.
  Value dot(std::span<const Value> xs, std::span<const Value> ys) {
    if (xs.size() != ys.size() || xs.empty()) throw TapeError("dot: size mismatch");
    double s = 0.0;
    std::uint32_t off = static_cast<std::uint32_t>(arena_.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
      check(xs[i]);
      check(ys[i]);
      s += xs[i].value() * ys[i].value();
      arena_.push_back(xs[i].index());
      arena_.push_back(ys[i].index());
    }
    Node n{Op::Dot, off, static_cast<std::uint32_t>(xs.size()), check_finite(s), 0.0};
    nodes_.push_back(n);
    return Value(this, static_cast<std::uint32_t>(nodes_.size() - 1), generation_);
  }

  // Adjoint of every `var` entry w.r.t. `output`, in var creation order.
  std::vector<double> backward(Value output) const {
    check(output);
    std::vector<double> adj(nodes_.size(), 0.0);
    adj[output.index()] = 1.0;
    for (std::uint32_t i = static_cast<std::uint32_t>(nodes_.size()); i-- > 0;) {
      const Node& n = nodes_[i];
      double g = adj[i];
      if (g == 0.0) continue;
      switch (n.op) {
        case Op::Const:
        case Op::Var:
          break;
        case Op::Add:
          adj[n.a] += g;
          adj[n.b] += g;
          break;
        case Op::Sub:
          adj[n.a] += g;
          adj[n.b] -= g;
          break;
        case Op::Mul:
          adj[n.a] += g * nodes_[n.b].val;
          adj[n.b] += g * nodes_[n.a].val;
          break;
        case Op::Div:
          adj[n.a] += g / nodes_[n.b].val;
          adj[n.b] -= g * n.val / nodes_[n.b].val;
          break;
        case Op::Neg:
          adj[n.a] -= g;
          break;
        case Op::Exp:
          adj[n.a] += g * n.val;
          break;
        case Op::Log:
          adj[n.a] += g / nodes_[n.a].val;
          break;
        case Op::Tanh:
          adj[n.a] += g * (1.0 - n.val * n.val);
          break;
        case Op::Sigmoid:
          adj[n.a] += g * n.val * (1.0 - n.val);
          break;
        case Op::Sin:
          adj[n.a] += g * std::cos(nodes_[n.a].val);
          break;
        case Op::Cos:
          adj[n.a] -= g * std::sin(nodes_[n.a].val);
          break;
        case Op::Tan:
          adj[n.a] += g * (1.0 + n.val * n.val);
          break;
        case Op::Pow:
          adj[n.a] += g * n.aux * std::pow(nodes_[n.a].val, n.aux - 1.0);
          break;
        case Op::LogSumExp: {
          // softmax weights relative to the cached shift
          double denom = std::exp(n.val - n.aux);
          for (std::uint32_t j = 0; j < n.b; ++j) {
            std::uint32_t p = arena_[n.a + j];
            adj[p] += g * std::exp(nodes_[p].val - n.aux) / denom;
          }
          break;
        }
        case Op::Dot:
          for (std::uint32_t j = 0; j < n.b; ++j) {
            std::uint32_t px = arena_[n.a + 2 * j];
            std::uint32_t py = arena_[n.a + 2 * j + 1];
            adj[px] += g * nodes_[py].val;
            adj[py] += g * nodes_[px].val;
          }
          break;
      }
    }
    std::vector<double> grads(vars_.size());
    for (std::size_t i = 0; i < vars_.size(); ++i) grads[i] = adj[vars_[i]];
    return grads;
  }

 private:
  friend class Value;

  void check(Value v) const {
    if (v.tape() != this) throw TapeError("value belongs to a different tape");
    if (v.generation() != generation_) throw TapeError("stale value: tape was reset");
  }

  static double check_finite(double v) {
    if (!std::isfinite(v)) throw TapeError("non-finite value recorded");
    return v;
  }

  Value push(Op op, std::uint32_t a, std::uint32_t b, double val, double aux = 0.0) {
    nodes_.push_back(Node{op, a, b, val, aux});
    return Value(this, static_cast<std::uint32_t>(nodes_.size() - 1), generation_);
  }

  Value unary(Op op, Value x, double val) {
    check(x);
    return push(op, x.index(), 0, check_finite(val));
  }

  Value binary(Op op, Value x, Value y, double val) {
    check(x);
    check(y);
    return push(op, x.index(), y.index(), check_finite(val));
  }

  std::vector<Node> nodes_;
  std::vector<std::uint32_t> arena_;
  std::vector<std::uint32_t> vars_;
  std::uint64_t generation_ = 0;
};

inline double Value::value() const {
  tape_->check(*this);
  return tape_->value_at(index_);
}

// Operator sugar so templated numeric code works on Value and double alike.
inline Value operator+(Value x, Value y) { return x.tape()->add(x, y); }
inline Value operator-(Value x, Value y) { return x.tape()->sub(x, y); }
inline Value operator*(Value x, Value y) { return x.tape()->mul(x, y); }
inline Value operator/(Value x, Value y) { return x.tape()->div(x, y); }
inline Value operator-(Value x) { return x.tape()->neg(x); }
inline Value operator+(Value x, double c) { return x + x.tape()->constant(c); }
inline Value operator+(double c, Value x) { return x.tape()->constant(c) + x; }
inline Value operator-(Value x, double c) { return x - x.tape()->constant(c); }
inline Value operator-(double c, Value x) { return x.tape()->constant(c) - x; }
inline Value operator*(Value x, double c) { return x * x.tape()->constant(c); }
inline Value operator*(double c, Value x) { return x.tape()->constant(c) * x; }
inline Value operator/(Value x, double c) { return x / x.tape()->constant(c); }
inline Value operator/(double c, Value x) { return x.tape()->constant(c) / x; }

inline Value exp(Value x) { return x.tape()->exp(x); }
inline Value log(Value x) { return x.tape()->log(x); }
inline Value tanh(Value x) { return x.tape()->tanh(x); }
inline Value sigmoid(Value x) { return x.tape()->sigmoid(x); }
inline Value sin(Value x) { return x.tape()->sin(x); }
inline Value cos(Value x) { return x.tape()->cos(x); }
inline Value tan(Value x) { return x.tape()->tan(x); }
inline Value pow(Value x, double e) { return x.tape()->pow(x, e); }

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Saturation with the subgradient convention: outside the bound the result
// is a constant, so no gradient flows.
inline double clamp(double v, double lo, double hi) {
  return v < lo ? lo : (v > hi ? hi : v);
}
inline Value clamp(Value v, double lo, double hi) {
  if (v.value() < lo) return v.tape()->constant(lo);
  if (v.value() > hi) return v.tape()->constant(hi);
  return v;
}

inline double scalar_value(double v) { return v; }
inline double scalar_value(Value v) { return v.value(); }

// Central finite differences against backward(); returns the max relative
// error over all variables with denominator max(|analytic|, |numeric|, 1e-8).
template <typename F>
double grad_check(F&& f, std::span<const double> point, double eps) {
  Tape tape;
  std::vector<Value> xs;
  xs.reserve(point.size());
  for (double p : point) xs.push_back(tape.var(p));
  Value out = f(tape, std::span<const Value>(xs));
  std::vector<double> analytic = tape.backward(out);

  double worst = 0.0;
  std::vector<double> shifted(point.begin(), point.end());
  for (std::size_t i = 0; i < point.size(); ++i) {
    auto eval = [&](double x) {
      Tape t;
      std::vector<Value> vs;
      vs.reserve(point.size());
      for (std::size_t j = 0; j < point.size(); ++j)
        vs.push_back(t.var(j == i ? x : shifted[j]));
      return f(t, std::span<const Value>(vs)).value();
    };
    double numeric = (eval(point[i] + eps) - eval(point[i] - eps)) / (2.0 * eps);
    double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-8});
    worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
  }
  return worst;
}

}  // namespace stlgame::ad
