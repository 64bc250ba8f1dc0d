#pragma once

// Smooth scalar formulas over x1..xn: parser, printer, evaluator and
// forward-mode gradients.

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <memory>
#include <string>
#include <string_view>
#include <system_error>
#include <utility>
#include <vector>

#include "dcjac/error.hpp"
#include "dcjac/types.hpp"

namespace dcjac {

enum class Op { Constant, Variable, Neg, Sin, Cos, Exp, Log, Sqrt, Add, Sub, Mul, Div, Pow };

inline bool is_function(Op op) {
  return op == Op::Sin || op == Op::Cos || op == Op::Exp || op == Op::Log || op == Op::Sqrt;
}

inline bool is_binary(Op op) {
  return op == Op::Add || op == Op::Sub || op == Op::Mul || op == Op::Div || op == Op::Pow;
}

// Immutable expression tree. Copies share nodes.
class Expr {
 public:
  static Expr constant(double value) { return Expr(Node{Op::Constant, value, 0, {}}); }
  static Expr variable(std::size_t index) { return Expr(Node{Op::Variable, 0.0, index, {}}); }
  static Expr unary(Op op, Expr arg) { return Expr(Node{op, 0.0, 0, {std::move(arg)}}); }
  static Expr binary(Op op, Expr lhs, Expr rhs) {
    return Expr(Node{op, 0.0, 0, {std::move(lhs), std::move(rhs)}});
  }

  Op op() const { return node_->op; }
  double value() const { return node_->value; }
  std::size_t index() const { return node_->index; }
  std::size_t arity() const { return node_->children.size(); }
  const Expr& child(std::size_t i) const { return node_->children.at(i); }

  friend bool operator==(const Expr& a, const Expr& b) {
    if (a.node_ == b.node_) return true;
    if (a.op() != b.op() || a.arity() != b.arity()) return false;
    if (a.op() == Op::Constant && a.value() != b.value()) return false;
    if (a.op() == Op::Variable && a.index() != b.index()) return false;
    for (std::size_t i = 0; i < a.arity(); ++i)
      if (!(a.child(i) == b.child(i))) return false;
    return true;
  }

 private:
  struct Node {
    Op op;
    double value;
    std::size_t index;
    std::vector<Expr> children;
  };

  explicit Expr(Node node) : node_(std::make_shared<const Node>(std::move(node))) {}

  std::shared_ptr<const Node> node_;
};

inline bool depends_on_variables(const Expr& e) {
  if (e.op() == Op::Variable) return true;
  for (std::size_t i = 0; i < e.arity(); ++i)
    if (depends_on_variables(e.child(i))) return true;
  return false;
}

inline std::size_t max_variable_index(const Expr& e, std::size_t acc = 0) {
  if (e.op() == Op::Variable) acc = std::max(acc, e.index() + 1);
  for (std::size_t i = 0; i < e.arity(); ++i) acc = max_variable_index(e.child(i), acc);
  return acc;
}

namespace detail {

inline const char* function_name(Op op) {
  switch (op) {
    case Op::Sin: return "sin";
    case Op::Cos: return "cos";
    case Op::Exp: return "exp";
    case Op::Log: return "log";
    case Op::Sqrt: return "sqrt";
    default: return "?";
  }
}

inline int precedence(const Expr& e) {
  switch (e.op()) {
    case Op::Add:
    case Op::Sub: return 1;
    case Op::Mul:
    case Op::Div: return 2;
    case Op::Neg: return 3;
    case Op::Pow: return 4;
    default: return 5;
  }
}

inline std::string format_number(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc{}) return "nan";
  return std::string(buf, end);
}

inline std::string parenthesize(std::string s) { return "(" + s + ")"; }

}  // namespace detail

// Prints with the minimum parentheses needed for parse() to rebuild the same tree.
inline std::string to_string(const Expr& e) {
  using detail::parenthesize;
  using detail::precedence;
  switch (e.op()) {
    case Op::Constant: {
      std::string s = detail::format_number(e.value());
      return std::signbit(e.value()) ? parenthesize(s) : s;
    }
    case Op::Variable: return "x" + std::to_string(e.index() + 1);
    case Op::Neg: {
      std::string s = to_string(e.child(0));
      return "-" + (precedence(e.child(0)) < 3 ? parenthesize(s) : s);
    }
    case Op::Pow: {
      std::string base = to_string(e.child(0));
      std::string exponent = to_string(e.child(1));
      if (precedence(e.child(0)) <= 4) base = parenthesize(base);
      if (precedence(e.child(1)) < 3) exponent = parenthesize(exponent);
      return base + "^" + exponent;
    }
    case Op::Add:
    case Op::Sub:
    case Op::Mul:
    case Op::Div: {
      const int p = precedence(e);
      std::string lhs = to_string(e.child(0));
      std::string rhs = to_string(e.child(1));
      if (precedence(e.child(0)) < p) lhs = parenthesize(lhs);
      if (precedence(e.child(1)) <= p) rhs = parenthesize(rhs);
      const char* sym = e.op() == Op::Add ? " + " : e.op() == Op::Sub ? " - " : e.op() == Op::Mul ? "*" : "/";
      return lhs + sym + rhs;
    }
    default: return std::string(detail::function_name(e.op())) + "(" + to_string(e.child(0)) + ")";
  }
}

namespace detail {

// Recursive descent over
//   expr  := term (('+'|'-') term)*
//   term  := unary (('*'|'/') unary)*
//   unary := '-' unary | power
//   power := atom ('^' unary)?
//   atom  := number | ident | ident '(' expr ')' | '(' expr ')'
// so that '^' binds tighter than unary minus and associates to the right.
class Parser {
 public:
  Parser(std::string_view text, std::size_t dim) : text_(text), dim_(dim) {}

  Expr run() {
    Expr e = expr();
    skip_space();
    if (pos_ != text_.size()) fail("unexpected character '" + std::string(1, text_[pos_]) + "'");
    return e;
  }

 private:
  [[noreturn]] void fail(const std::string& what) const { throw ParseError(what, pos_); }
  [[noreturn]] void fail_at(const std::string& what, std::size_t at) const { throw ParseError(what, at); }

  void skip_space() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  bool accept(char c) {
    skip_space();
    if (pos_ < text_.size() && text_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  void expect(char c) {
    if (!accept(c)) fail(std::string("expected '") + c + "'");
  }

  Expr expr() {
    Expr lhs = term();
    for (;;) {
      if (accept('+')) lhs = Expr::binary(Op::Add, lhs, term());
      else if (accept('-')) lhs = Expr::binary(Op::Sub, lhs, term());
      else return lhs;
    }
  }

  Expr term() {
    Expr lhs = unary();
    for (;;) {
      if (accept('*')) lhs = Expr::binary(Op::Mul, lhs, unary());
      else if (accept('/')) lhs = Expr::binary(Op::Div, lhs, unary());
      else return lhs;
    }
  }

  Expr unary() {
    if (accept('-')) return Expr::unary(Op::Neg, unary());
    return power();
  }

  Expr power() {
    Expr base = atom();
    if (accept('^')) {
      skip_space();
      const std::size_t at = pos_;
      Expr exponent = unary();
      if (depends_on_variables(exponent)) fail_at("pow exponent must be constant", at);
      return Expr::binary(Op::Pow, base, exponent);
    }
    return base;
  }

  Expr atom() {
    skip_space();
    if (pos_ >= text_.size()) fail("unexpected end of input");
    const char c = text_[pos_];
    if (c == '(') {
      ++pos_;
      Expr e = expr();
      expect(')');
      return e;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return number();
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') return identifier();
    fail("unexpected character '" + std::string(1, c) + "'");
  }

  Expr number() {
    const std::size_t start = pos_;
    auto digits = [&] {
      std::size_t n = 0;
      while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) ++pos_, ++n;
      return n;
    };
    std::size_t mantissa = digits();
    if (pos_ < text_.size() && text_[pos_] == '.') {
      ++pos_;
      mantissa += digits();
    }
    if (mantissa == 0) fail_at("malformed number", start);
    if (pos_ < text_.size() && (text_[pos_] == 'e' || text_[pos_] == 'E')) {
      ++pos_;
      if (pos_ < text_.size() && (text_[pos_] == '+' || text_[pos_] == '-')) ++pos_;
      if (digits() == 0) fail_at("malformed exponent", start);
    }
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(text_.data() + start, text_.data() + pos_, value);
    if (ec != std::errc{} || ptr != text_.data() + pos_) fail_at("malformed number", start);
    return Expr::constant(value);
  }

  Expr identifier() {
    const std::size_t start = pos_;
    while (pos_ < text_.size() &&
           (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_'))
      ++pos_;
    const std::string_view name = text_.substr(start, pos_ - start);

    if (name.size() > 1 && name[0] == 'x' &&
        name.find_first_not_of("0123456789", 1) == std::string_view::npos) {
      std::size_t one_based = 0;
      auto [ptr, ec] = std::from_chars(name.data() + 1, name.data() + name.size(), one_based);
      if (ec != std::errc{} || one_based == 0 || one_based > dim_)
        fail_at("variable index out of range: '" + std::string(name) + "' (dimension " +
                    std::to_string(dim_) + ")",
                start);
      return Expr::variable(one_based - 1);
    }

    Op op;
    if (name == "sin") op = Op::Sin;
    else if (name == "cos") op = Op::Cos;
    else if (name == "exp") op = Op::Exp;
    else if (name == "log") op = Op::Log;
    else if (name == "sqrt") op = Op::Sqrt;
    else fail_at("unknown identifier '" + std::string(name) + "'", start);

    if (!accept('(')) fail("expected '(' after '" + std::string(name) + "'");
    Expr arg = expr();
    expect(')');
    return Expr::unary(op, arg);
  }

  std::string_view text_;
  std::size_t dim_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline Expr parse(std::string_view text, std::size_t dim) { return detail::Parser(text, dim).run(); }

// Value plus one directional derivative, for forward-mode sweeps.
struct Dual {
  double v = 0.0;
  double d = 0.0;
};

namespace detail {

inline bool is_integer(double c) { return std::isfinite(c) && std::floor(c) == c; }

inline double eval_constant(const Expr& e);

template <typename Scalar>
Scalar lift(double v) {
  if constexpr (std::is_same_v<Scalar, Dual>) return Dual{v, 0.0};
  else return v;
}

inline double primal(double v) { return v; }
inline double primal(const Dual& v) { return v.v; }

template <typename Scalar>
Scalar evaluate(const Expr& e, const Vector& x, std::size_t seed) {
  constexpr bool dual = std::is_same_v<Scalar, Dual>;
  auto domain = [&](const char* what) -> DomainError { return DomainError(what, to_string(e)); };

  switch (e.op()) {
    case Op::Constant: return lift<Scalar>(e.value());
    case Op::Variable: {
      if constexpr (dual) return Dual{x[Eigen::Index(e.index())], e.index() == seed ? 1.0 : 0.0};
      else return x[Eigen::Index(e.index())];
    }
    case Op::Neg: {
      Scalar a = evaluate<Scalar>(e.child(0), x, seed);
      if constexpr (dual) return Dual{-a.v, -a.d};
      else return -a;
    }
    case Op::Sin: {
      Scalar a = evaluate<Scalar>(e.child(0), x, seed);
      if constexpr (dual) return Dual{std::sin(a.v), std::cos(a.v) * a.d};
      else return std::sin(a);
    }
    case Op::Cos: {
      Scalar a = evaluate<Scalar>(e.child(0), x, seed);
      if constexpr (dual) return Dual{std::cos(a.v), -std::sin(a.v) * a.d};
      else return std::cos(a);
    }
    case Op::Exp: {
      Scalar a = evaluate<Scalar>(e.child(0), x, seed);
      if constexpr (dual) {
        const double ev = std::exp(a.v);
        return Dual{ev, ev * a.d};
      } else {
        return std::exp(a);
      }
    }
    case Op::Log: {
      Scalar a = evaluate<Scalar>(e.child(0), x, seed);
      if (!(primal(a) > 0.0)) throw domain("log of non-positive value");
      if constexpr (dual) return Dual{std::log(a.v), a.d / a.v};
      else return std::log(a);
    }
    case Op::Sqrt: {
      Scalar a = evaluate<Scalar>(e.child(0), x, seed);
      if (!(primal(a) >= 0.0)) throw domain("sqrt of negative value");
      if constexpr (dual) {
        if (!(a.v > 0.0)) throw domain("sqrt is not differentiable at 0");
        const double r = std::sqrt(a.v);
        return Dual{r, a.d / (2.0 * r)};
      } else {
        return std::sqrt(a);
      }
    }
    case Op::Add:
    case Op::Sub:
    case Op::Mul:
    case Op::Div: {
      Scalar a = evaluate<Scalar>(e.child(0), x, seed);
      Scalar b = evaluate<Scalar>(e.child(1), x, seed);
      if (e.op() == Op::Div && primal(b) == 0.0) throw domain("division by zero");
      if constexpr (dual) {
        switch (e.op()) {
          case Op::Add: return Dual{a.v + b.v, a.d + b.d};
          case Op::Sub: return Dual{a.v - b.v, a.d - b.d};
          case Op::Mul: return Dual{a.v * b.v, a.d * b.v + a.v * b.d};
          default: return Dual{a.v / b.v, (a.d * b.v - a.v * b.d) / (b.v * b.v)};
        }
      } else {
        switch (e.op()) {
          case Op::Add: return a + b;
          case Op::Sub: return a - b;
          case Op::Mul: return a * b;
          default: return a / b;
        }
      }
    }
    case Op::Pow: {
      Scalar base = evaluate<Scalar>(e.child(0), x, seed);
      const double c = eval_constant(e.child(1));
      const double b = primal(base);
      if (!is_integer(c) && !(b > 0.0)) throw domain("non-integer power of non-positive base");
      if (b == 0.0 && c < 0.0) throw domain("division by zero");
      const double value = std::pow(b, c);
      if constexpr (dual) {
        const double slope = c == 0.0 ? 0.0 : c * std::pow(b, c - 1.0);
        return Dual{value, slope * base.d};
      } else {
        return value;
      }
    }
  }
  return lift<Scalar>(0.0);
}

inline double eval_constant(const Expr& e) {
  if (depends_on_variables(e)) throw Error("pow exponent must be constant: '" + to_string(e) + "'");
  return evaluate<double>(e, Vector(), 0);
}

}  // namespace detail

// A C1 scalar function of `dim` variables.
class SmoothFn {
 public:
  SmoothFn(Expr expr, std::size_t dim) : expr_(std::move(expr)), dim_(dim) {
    if (dim_ == 0) throw Error("dimension must be positive");
    if (max_variable_index(expr_) > dim_) throw Error("variable index exceeds dimension");
  }

  static SmoothFn parse(std::string_view text, std::size_t dim) {
    return SmoothFn(dcjac::parse(text, dim), dim);
  }

  const Expr& expr() const { return expr_; }
  std::size_t dim() const { return dim_; }

  double eval(const Vector& x) const {
    check_size(x);
    return detail::evaluate<double>(expr_, x, 0);
  }

  // One dual-number sweep per coordinate.
  Vector grad(const Vector& x) const {
    check_size(x);
    Vector g(static_cast<Eigen::Index>(dim_));
    for (std::size_t l = 0; l < dim_; ++l) g[Eigen::Index(l)] = detail::evaluate<Dual>(expr_, x, l).d;
    return g;
  }

 private:
  void check_size(const Vector& x) const {
    if (std::size_t(x.size()) != dim_)
      throw Error("point has length " + std::to_string(x.size()) + ", expected " + std::to_string(dim_));
  }

  Expr expr_;
  std::size_t dim_;
};

}  // namespace dcjac
