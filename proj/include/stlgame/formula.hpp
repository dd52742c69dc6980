#pragma once

// STL formula AST, predicate tables, traces, and the horizon computation.

#include <algorithm>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "stlgame/autodiff.hpp"

namespace stlgame::stl {

class FormulaError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Real-valued predicate function over a joint state vector, evaluable both
// in plain arithmetic and on an autodiff tape.
struct Predicate {
  std::string name;
  std::function<double(std::span<const double>)> mu;
  std::function<ad::Value(std::span<const ad::Value>)> mu_ad;
};

// Builds both evaluation paths from one generic callable.
template <typename F>
Predicate make_predicate(std::string name, F f) {
  return Predicate{
      std::move(name),
      [f](std::span<const double> s) { return f(s); },
      [f](std::span<const ad::Value> s) { return f(s); },
  };
}

using PredicateTable = std::map<std::string, Predicate>;

enum class Kind {
  True,
  Pred,
  Not,
  And,
  Or,
  Implies,
  Until,       // interval [lo, hi]
  Eventually,  // interval [lo, hi]
  Always       // interval [lo, hi]
};

struct Formula;
using FormulaPtr = std::shared_ptr<const Formula>;

struct Formula {
  Kind kind;
  int lo = 0;
  int hi = 0;
  std::string pred;  // predicate name, Kind::Pred only
  FormulaPtr left;
  FormulaPtr right;
};

inline FormulaPtr f_true() { return std::make_shared<Formula>(Formula{Kind::True}); }
inline FormulaPtr f_pred(std::string name) {
  return std::make_shared<Formula>(Formula{Kind::Pred, 0, 0, std::move(name)});
}
inline FormulaPtr f_not(FormulaPtr a) {
  return std::make_shared<Formula>(Formula{Kind::Not, 0, 0, {}, std::move(a)});
}
inline FormulaPtr f_and(FormulaPtr a, FormulaPtr b) {
  return std::make_shared<Formula>(Formula{Kind::And, 0, 0, {}, std::move(a), std::move(b)});
}
inline FormulaPtr f_or(FormulaPtr a, FormulaPtr b) {
  return std::make_shared<Formula>(Formula{Kind::Or, 0, 0, {}, std::move(a), std::move(b)});
}
inline FormulaPtr f_implies(FormulaPtr a, FormulaPtr b) {
  return std::make_shared<Formula>(Formula{Kind::Implies, 0, 0, {}, std::move(a), std::move(b)});
}

inline void check_interval(int lo, int hi) {
  if (lo < 0 || hi < 0 || lo > hi)
    throw FormulaError("malformed interval [" + std::to_string(lo) + "," +
                       std::to_string(hi) + "]: need 0 <= a <= b");
}

inline FormulaPtr f_until(int lo, int hi, FormulaPtr a, FormulaPtr b) {
  check_interval(lo, hi);
  return std::make_shared<Formula>(Formula{Kind::Until, lo, hi, {}, std::move(a), std::move(b)});
}
inline FormulaPtr f_eventually(int lo, int hi, FormulaPtr a) {
  check_interval(lo, hi);
  return std::make_shared<Formula>(Formula{Kind::Eventually, lo, hi, {}, std::move(a)});
}
inline FormulaPtr f_always(int lo, int hi, FormulaPtr a) {
  check_interval(lo, hi);
  return std::make_shared<Formula>(Formula{Kind::Always, lo, hi, {}, std::move(a)});
}

// Number of future steps needed to decide the formula from a given start.
inline int horizon(const Formula& phi) {
  switch (phi.kind) {
    case Kind::True:
    case Kind::Pred:
      return 0;
    case Kind::Not:
      return horizon(*phi.left);
    case Kind::And:
    case Kind::Or:
    case Kind::Implies:
      return std::max(horizon(*phi.left), horizon(*phi.right));
    case Kind::Until:
      return phi.hi + std::max(horizon(*phi.left), horizon(*phi.right));
    case Kind::Eventually:
    case Kind::Always:
      return phi.hi + horizon(*phi.left);
  }
  throw FormulaError("unreachable");
}

inline void collect_predicates(const Formula& phi, std::vector<std::string>& out) {
  if (phi.kind == Kind::Pred) out.push_back(phi.pred);
  if (phi.left) collect_predicates(*phi.left, out);
  if (phi.right) collect_predicates(*phi.right, out);
}

// Finite time-indexed sequence of joint states; semantics index by step,
// dt is metadata only.
struct Trace {
  std::vector<std::vector<double>> states;
  double dt = 0.1;

  int length() const { return static_cast<int>(states.size()); }
  int max_time() const { return length() - 1; }
};

using TapeTrace = std::vector<std::vector<ad::Value>>;

}  // namespace stlgame::stl
