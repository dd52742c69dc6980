#pragma once

// Recursive-descent parser for the STL formula grammar, plus a formatter
// such that parse(format(ast)) reproduces the AST.
//
// Grammar (EBNF):
//   formula  = implies ;
//   implies  = or , [ "->" , implies ] ;
//   or       = and , { "|" , and } ;
//   and      = until , { "&" , until } ;
//   until    = unary , [ "U" , interval , unary ] ;
//   unary    = "!" , unary
//            | "G" , interval , "(" , formula , ")"
//            | "F" , interval , "(" , formula , ")"
//            | "(" , formula , ")"
//            | "true"
//            | identifier ;
//   interval = "[" , integer , "," , integer , "]" ;

#include <cctype>
#include <string>
#include <string_view>

#include "stlgame/formula.hpp"

namespace stlgame::stl {

class ParseError : public FormulaError {
 public:
  ParseError(const std::string& msg, int line, int col)
      : FormulaError(std::to_string(line) + ":" + std::to_string(col) + ": " + msg),
        line(line),
        col(col) {}
  int line;
  int col;
};

namespace detail {

class Parser {
 public:
  Parser(std::string_view text, const PredicateTable* preds)
      : text_(text), preds_(preds) {}

  FormulaPtr parse() {
    FormulaPtr f = implies();
    skip_ws();
    if (pos_ < text_.size()) fail("unexpected trailing input");
    return f;
  }

 private:
  FormulaPtr implies() {
    FormulaPtr l = disjunction();
    skip_ws();
    if (match("->")) return f_implies(l, implies());
    return l;
  }

  FormulaPtr disjunction() {
    FormulaPtr l = conjunction();
    skip_ws();
    while (peek() == '|') {
      ++pos_;
      ++col_;
      l = f_or(l, conjunction());
      skip_ws();
    }
    return l;
  }

  FormulaPtr conjunction() {
    FormulaPtr l = until();
    skip_ws();
    while (peek() == '&') {
      ++pos_;
      ++col_;
      l = f_and(l, until());
      skip_ws();
    }
    return l;
  }

  FormulaPtr until() {
    FormulaPtr l = unary();
    skip_ws();
    if (peek() == 'U' && peek_at(1) == '[') {
      ++pos_;
      ++col_;
      auto [a, b] = interval();
      return f_until(a, b, l, unary());
    }
    return l;
  }

  FormulaPtr unary() {
    skip_ws();
    char c = peek();
    if (c == '!') {
      ++pos_;
      ++col_;
      return f_not(unary());
    }
    if ((c == 'G' || c == 'F') && peek_at(1) == '[') {
      ++pos_;
      ++col_;
      auto [a, b] = interval();
      skip_ws();
      expect('(');
      FormulaPtr body = implies();
      skip_ws();
      expect(')');
      return c == 'G' ? f_always(a, b, body) : f_eventually(a, b, body);
    }
    if (c == '(') {
      ++pos_;
      ++col_;
      FormulaPtr body = implies();
      skip_ws();
      expect(')');
      return body;
    }
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      int at_line = line_, at_col = col_;
      std::string name = identifier();
      if (name == "true") return f_true();
      if (preds_ && !preds_->count(name))
        throw ParseError("unknown predicate: " + name, at_line, at_col);
      return f_pred(name);
    }
    fail("expected formula");
    return nullptr;
  }

  std::pair<int, int> interval() {
    skip_ws();
    expect('[');
    int a = integer();
    skip_ws();
    expect(',');
    int b = integer();
    skip_ws();
    expect(']');
    if (a > b)
      throw ParseError("malformed interval [" + std::to_string(a) + "," +
                           std::to_string(b) + "]: need a <= b",
                       line_, col_);
    return {a, b};
  }

  int integer() {
    skip_ws();
    int at_line = line_, at_col = col_;
    if (peek() == '-') throw ParseError("interval bounds must be non-negative", at_line, at_col);
    if (!std::isdigit(static_cast<unsigned char>(peek()))) fail("expected integer");
    long v = 0;
    while (std::isdigit(static_cast<unsigned char>(peek()))) {
      v = v * 10 + (peek() - '0');
      if (v > 1'000'000) throw ParseError("interval bound too large", at_line, at_col);
      ++pos_;
      ++col_;
    }
    if (peek() == '.') throw ParseError("interval bounds must be integers", at_line, at_col);
    return static_cast<int>(v);
  }

  std::string identifier() {
    std::string out;
    while (std::isalnum(static_cast<unsigned char>(peek())) || peek() == '_') {
      out.push_back(peek());
      ++pos_;
      ++col_;
    }
    return out;
  }

  void skip_ws() {
    while (pos_ < text_.size()) {
      char c = text_[pos_];
      if (c == '\n') {
        ++line_;
        col_ = 1;
        ++pos_;
      } else if (c == ' ' || c == '\t' || c == '\r') {
        ++col_;
        ++pos_;
      } else {
        break;
      }
    }
  }

  char peek() const { return pos_ < text_.size() ? text_[pos_] : '\0'; }
  char peek_at(std::size_t d) const {
    return pos_ + d < text_.size() ? text_[pos_ + d] : '\0';
  }

  bool match(std::string_view tok) {
    if (text_.substr(pos_, tok.size()) == tok) {
      pos_ += tok.size();
      col_ += static_cast<int>(tok.size());
      return true;
    }
    return false;
  }

  void expect(char c) {
    skip_ws();
    if (peek() != c) fail(std::string("expected '") + c + "'");
    ++pos_;
    ++col_;
  }

  [[noreturn]] void fail(const std::string& msg) const {
    throw ParseError(msg + (peek() ? std::string(" (found '") + peek() + "')"
                                   : " (at end of input)"),
                     line_, col_);
  }

  std::string_view text_;
  const PredicateTable* preds_;
  std::size_t pos_ = 0;
  int line_ = 1;
  int col_ = 1;
};

}  // namespace detail

inline FormulaPtr parse_formula(std::string_view text, const PredicateTable& preds) {
  return detail::Parser(text, &preds).parse();
}

// Parse without predicate-name validation.
inline FormulaPtr parse_formula(std::string_view text) {
  return detail::Parser(text, nullptr).parse();
}

inline std::string format(const Formula& phi);

namespace detail {
inline std::string paren(const Formula& phi) {
  if (phi.kind == Kind::True || phi.kind == Kind::Pred) return format(phi);
  return "(" + format(phi) + ")";
}
}  // namespace detail

inline std::string format(const Formula& phi) {
  auto iv = [&] {
    return "[" + std::to_string(phi.lo) + "," + std::to_string(phi.hi) + "]";
  };
  switch (phi.kind) {
    case Kind::True:
      return "true";
    case Kind::Pred:
      return phi.pred;
    case Kind::Not:
      return "!" + detail::paren(*phi.left);
    case Kind::And:
      return detail::paren(*phi.left) + " & " + detail::paren(*phi.right);
    case Kind::Or:
      return detail::paren(*phi.left) + " | " + detail::paren(*phi.right);
    case Kind::Implies:
      return detail::paren(*phi.left) + " -> " + detail::paren(*phi.right);
    case Kind::Until:
      return detail::paren(*phi.left) + " U" + iv() + " " + detail::paren(*phi.right);
    case Kind::Eventually:
      return "F" + iv() + "(" + format(*phi.left) + ")";
    case Kind::Always:
      return "G" + iv() + "(" + format(*phi.left) + ")";
  }
  throw FormulaError("unreachable");
}

}  // namespace stlgame::stl
