#pragma once

// Qualitative (Boolean), quantitative (hard robustness), and smooth
// (differentiable) STL semantics over finite traces.

#include <cmath>
#include <limits>
#include <span>

#include "stlgame/autodiff.hpp"
#include "stlgame/formula.hpp"

namespace stlgame::stl {

// Saturating stand-in for rho(True) = +inf; kept finite so downstream
// arithmetic stays well defined.
inline constexpr double kTrueRobustness = 1e9;

inline void check_length(const Formula& phi, int trace_len, int k) {
  if (k < 0 || k + horizon(phi) > trace_len - 1)
    throw FormulaError("trace too short: need steps up to " +
                       std::to_string(k + horizon(phi)) + ", trace ends at " +
                       std::to_string(trace_len - 1));
}

inline const Predicate& lookup(const PredicateTable& preds, const std::string& name) {
  auto it = preds.find(name);
  if (it == preds.end()) throw FormulaError("unknown predicate: " + name);
  return it->second;
}

namespace detail {

inline bool eval_bool_rec(const Formula& phi, const Trace& trace,
                          const PredicateTable& preds, int k) {
  switch (phi.kind) {
    case Kind::True:
      return true;
    case Kind::Pred:
      return lookup(preds, phi.pred).mu(trace.states[k]) >= 0.0;
    case Kind::Not:
      return !eval_bool_rec(*phi.left, trace, preds, k);
    case Kind::And:
      return eval_bool_rec(*phi.left, trace, preds, k) &&
             eval_bool_rec(*phi.right, trace, preds, k);
    case Kind::Or:
      return eval_bool_rec(*phi.left, trace, preds, k) ||
             eval_bool_rec(*phi.right, trace, preds, k);
    case Kind::Implies:
      return !eval_bool_rec(*phi.left, trace, preds, k) ||
             eval_bool_rec(*phi.right, trace, preds, k);
    case Kind::Until:
      for (int kp = k + phi.lo; kp <= k + phi.hi; ++kp) {
        if (!eval_bool_rec(*phi.right, trace, preds, kp)) continue;
        bool hold = true;
        for (int kpp = k; kpp <= kp && hold; ++kpp)
          hold = eval_bool_rec(*phi.left, trace, preds, kpp);
        if (hold) return true;
      }
      return false;
    case Kind::Eventually:
      for (int kp = k + phi.lo; kp <= k + phi.hi; ++kp)
        if (eval_bool_rec(*phi.left, trace, preds, kp)) return true;
      return false;
    case Kind::Always:
      for (int kp = k + phi.lo; kp <= k + phi.hi; ++kp)
        if (!eval_bool_rec(*phi.left, trace, preds, kp)) return false;
      return true;
  }
  throw FormulaError("unreachable");
}

inline double rob_rec(const Formula& phi, const Trace& trace,
                      const PredicateTable& preds, int k) {
  switch (phi.kind) {
    case Kind::True:
      return kTrueRobustness;
    case Kind::Pred:
      return lookup(preds, phi.pred).mu(trace.states[k]);
    case Kind::Not:
      return -rob_rec(*phi.left, trace, preds, k);
    case Kind::And:
      return std::min(rob_rec(*phi.left, trace, preds, k),
                      rob_rec(*phi.right, trace, preds, k));
    case Kind::Or:
      return std::max(rob_rec(*phi.left, trace, preds, k),
                      rob_rec(*phi.right, trace, preds, k));
    case Kind::Implies:
      return std::max(-rob_rec(*phi.left, trace, preds, k),
                      rob_rec(*phi.right, trace, preds, k));
    case Kind::Until: {
      double best = -std::numeric_limits<double>::infinity();
      for (int kp = k + phi.lo; kp <= k + phi.hi; ++kp) {
        double inner = rob_rec(*phi.right, trace, preds, kp);
        for (int kpp = k; kpp <= kp; ++kpp)
          inner = std::min(inner, rob_rec(*phi.left, trace, preds, kpp));
        best = std::max(best, inner);
      }
      return best;
    }
    case Kind::Eventually: {
      double best = -std::numeric_limits<double>::infinity();
      for (int kp = k + phi.lo; kp <= k + phi.hi; ++kp)
        best = std::max(best, rob_rec(*phi.left, trace, preds, kp));
      return best;
    }
    case Kind::Always: {
      double worst = std::numeric_limits<double>::infinity();
      for (int kp = k + phi.lo; kp <= k + phi.hi; ++kp)
        worst = std::min(worst, rob_rec(*phi.left, trace, preds, kp));
      return worst;
    }
  }
  throw FormulaError("unreachable");
}

}  // namespace detail

inline bool eval_boolean(const Formula& phi, const Trace& trace,
                         const PredicateTable& preds, int k = 0) {
  check_length(phi, trace.length(), k);
  return detail::eval_bool_rec(phi, trace, preds, k);
}

inline double robustness(const Formula& phi, const Trace& trace,
                         const PredicateTable& preds, int k = 0) {
  check_length(phi, trace.length(), k);
  return detail::rob_rec(phi, trace, preds, k);
}

// --- smooth semantics ------------------------------------------------------

// softmax_tau(x) = tau * log sum exp(x_i / tau); upper-bounds max by at most
// tau * log n. softmin is the negation dual.
inline ad::Value soft_max(ad::Tape& tape, std::span<const ad::Value> xs, double tau) {
  if (xs.size() == 1) return xs[0];
  std::vector<ad::Value> scaled;
  scaled.reserve(xs.size());
  for (ad::Value x : xs) scaled.push_back(x / tau);
  return tape.logsumexp(scaled) * tau;
}

inline ad::Value soft_min(ad::Tape& tape, std::span<const ad::Value> xs, double tau) {
  if (xs.size() == 1) return xs[0];
  std::vector<ad::Value> scaled;
  scaled.reserve(xs.size());
  for (ad::Value x : xs) scaled.push_back(-(x / tau));
  return -(tape.logsumexp(scaled) * tau);
}

namespace detail {

inline ad::Value smooth_rec(const Formula& phi, ad::Tape& tape, const TapeTrace& trace,
                            const PredicateTable& preds, int k, double tau) {
  switch (phi.kind) {
    case Kind::True:
      // True should normally be simplified away before building the graph;
      // the max-shifted logsumexp keeps the sentinel safe if it survives.
      return tape.constant(kTrueRobustness);
    case Kind::Pred:
      return lookup(preds, phi.pred).mu_ad(trace[k]);
    case Kind::Not:
      return -smooth_rec(*phi.left, tape, trace, preds, k, tau);
    case Kind::And: {
      ad::Value xs[2] = {smooth_rec(*phi.left, tape, trace, preds, k, tau),
                         smooth_rec(*phi.right, tape, trace, preds, k, tau)};
      return soft_min(tape, xs, tau);
    }
    case Kind::Or: {
      ad::Value xs[2] = {smooth_rec(*phi.left, tape, trace, preds, k, tau),
                         smooth_rec(*phi.right, tape, trace, preds, k, tau)};
      return soft_max(tape, xs, tau);
    }
    case Kind::Implies: {
      ad::Value xs[2] = {-smooth_rec(*phi.left, tape, trace, preds, k, tau),
                         smooth_rec(*phi.right, tape, trace, preds, k, tau)};
      return soft_max(tape, xs, tau);
    }
    case Kind::Until: {
      std::vector<ad::Value> outer;
      outer.reserve(phi.hi - phi.lo + 1);
      for (int kp = k + phi.lo; kp <= k + phi.hi; ++kp) {
        std::vector<ad::Value> inner;
        inner.reserve(kp - k + 2);
        inner.push_back(smooth_rec(*phi.right, tape, trace, preds, kp, tau));
        for (int kpp = k; kpp <= kp; ++kpp)
          inner.push_back(smooth_rec(*phi.left, tape, trace, preds, kpp, tau));
        outer.push_back(soft_min(tape, inner, tau));
      }
      return soft_max(tape, outer, tau);
    }
    case Kind::Eventually: {
      std::vector<ad::Value> xs;
      xs.reserve(phi.hi - phi.lo + 1);
      for (int kp = k + phi.lo; kp <= k + phi.hi; ++kp)
        xs.push_back(smooth_rec(*phi.left, tape, trace, preds, kp, tau));
      return soft_max(tape, xs, tau);
    }
    case Kind::Always: {
      std::vector<ad::Value> xs;
      xs.reserve(phi.hi - phi.lo + 1);
      for (int kp = k + phi.lo; kp <= k + phi.hi; ++kp)
        xs.push_back(smooth_rec(*phi.left, tape, trace, preds, kp, tau));
      return soft_min(tape, xs, tau);
    }
  }
  throw FormulaError("unreachable");
}

}  // namespace detail

// Removes True subtrees (And(True, p) -> p, Eventually is its own kind so
// the True-until expansion never reaches the smooth graph).
inline FormulaPtr simplify(const FormulaPtr& phi) {
  switch (phi->kind) {
    case Kind::True:
    case Kind::Pred:
      return phi;
    case Kind::Not: {
      FormulaPtr a = simplify(phi->left);
      return a == phi->left ? phi : f_not(a);
    }
    case Kind::And: {
      FormulaPtr a = simplify(phi->left);
      FormulaPtr b = simplify(phi->right);
      if (a->kind == Kind::True) return b;
      if (b->kind == Kind::True) return a;
      if (a == phi->left && b == phi->right) return phi;
      return f_and(a, b);
    }
    case Kind::Or: {
      FormulaPtr a = simplify(phi->left);
      FormulaPtr b = simplify(phi->right);
      if (a->kind == Kind::True || b->kind == Kind::True) return f_true();
      if (a == phi->left && b == phi->right) return phi;
      return f_or(a, b);
    }
    case Kind::Implies: {
      FormulaPtr a = simplify(phi->left);
      FormulaPtr b = simplify(phi->right);
      if (a->kind == Kind::True) return b;
      if (b->kind == Kind::True) return f_true();
      if (a == phi->left && b == phi->right) return phi;
      return f_implies(a, b);
    }
    case Kind::Until: {
      FormulaPtr a = simplify(phi->left);
      FormulaPtr b = simplify(phi->right);
      if (a->kind == Kind::True) return f_eventually(phi->lo, phi->hi, b);
      if (a == phi->left && b == phi->right) return phi;
      return f_until(phi->lo, phi->hi, a, b);
    }
    case Kind::Eventually: {
      FormulaPtr a = simplify(phi->left);
      return a == phi->left ? phi : f_eventually(phi->lo, phi->hi, a);
    }
    case Kind::Always: {
      FormulaPtr a = simplify(phi->left);
      return a == phi->left ? phi : f_always(phi->lo, phi->hi, a);
    }
  }
  throw FormulaError("unreachable");
}

inline ad::Value smooth_robustness(const Formula& phi, ad::Tape& tape,
                                   const TapeTrace& trace, const PredicateTable& preds,
                                   int k, double tau) {
  if (tau <= 0.0) throw FormulaError("temperature must be positive");
  check_length(phi, static_cast<int>(trace.size()), k);
  return detail::smooth_rec(phi, tape, trace, preds, k, tau);
}

// Worst-case |smooth - hard| bound: D * tau * log W, with D the nesting
// depth of min/max operators and W the widest operator encountered.
inline void soft_error_shape(const Formula& phi, int& depth, int& width) {
  int dl = 0, wl = 1, dr = 0, wr = 1;
  if (phi.left) soft_error_shape(*phi.left, dl, wl);
  if (phi.right) soft_error_shape(*phi.right, dr, wr);
  width = std::max(wl, wr);
  depth = std::max(dl, dr);
  switch (phi.kind) {
    case Kind::And:
    case Kind::Or:
    case Kind::Implies:
      depth += 1;
      width = std::max(width, 2);
      break;
    case Kind::Eventually:
    case Kind::Always:
      depth += 1;
      width = std::max(width, phi.hi - phi.lo + 1);
      break;
    case Kind::Until:
      depth += 2;  // outer softmax over k', inner softmin over [k, k'] chain
      width = std::max({width, phi.hi - phi.lo + 1, phi.hi + 2});
      break;
    default:
      break;
  }
}

inline double soft_error_bound(const Formula& phi, double tau) {
  int depth = 0, width = 1;
  soft_error_shape(phi, depth, width);
  if (depth == 0 || width < 2) return 0.0;
  return depth * tau * std::log(static_cast<double>(width));
}

}  // namespace stlgame::stl
