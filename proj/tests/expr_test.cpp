#include <cmath>
#include <cstring>

#include <gtest/gtest.h>

#include "dcjac/expr.hpp"
#include "test_support.hpp"

namespace dcjac {
namespace {

Expr var(std::size_t i) { return Expr::variable(i); }
Expr num(double v) { return Expr::constant(v); }
Expr bin(Op op, Expr a, Expr b) { return Expr::binary(op, std::move(a), std::move(b)); }
Expr un(Op op, Expr a) { return Expr::unary(op, std::move(a)); }

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  std::copy(v.begin(), v.end(), out.begin());
  return out;
}

TEST(ExprParse, SingleVariable) { EXPECT_EQ(parse("x1", 1), var(0)); }

TEST(ExprParse, SumOfProductAndPower) {
  EXPECT_EQ(parse("2*x1 + x2^2", 2), bin(Op::Add, bin(Op::Mul, num(2), var(0)), bin(Op::Pow, var(1), num(2))));
}

TEST(ExprParse, FunctionsAndConstant) {
  EXPECT_EQ(parse("sin(x1)*exp(x2) - 3", 2),
            bin(Op::Sub, bin(Op::Mul, un(Op::Sin, var(0)), un(Op::Exp, var(1))), num(3)));
}

TEST(ExprParse, PowerBindsTighterThanUnaryMinus) {
  EXPECT_EQ(parse("-x1^2", 1), un(Op::Neg, bin(Op::Pow, var(0), num(2))));
  EXPECT_DOUBLE_EQ(SmoothFn::parse("-x1^2", 1).eval(vec({3})), -9.0);
}

TEST(ExprParse, PowerIsRightAssociative) {
  EXPECT_EQ(parse("2^3^2", 1), bin(Op::Pow, num(2), bin(Op::Pow, num(3), num(2))));
  EXPECT_DOUBLE_EQ(SmoothFn::parse("2^3^2", 1).eval(vec({0})), 512.0);
}

TEST(ExprParse, SubtractionAndDivisionAreLeftAssociative) {
  EXPECT_DOUBLE_EQ(SmoothFn::parse("10 - 4 - 3", 1).eval(vec({0})), 3.0);
  EXPECT_DOUBLE_EQ(SmoothFn::parse("12 / 3 / 2", 1).eval(vec({0})), 2.0);
}

TEST(ExprParse, NegativeExponent) { EXPECT_DOUBLE_EQ(SmoothFn::parse("x1^-2", 1).eval(vec({2})), 0.25); }

TEST(ExprParse, NumbersWithExponents) {
  EXPECT_EQ(parse("1.5e-3", 1), num(1.5e-3));
  EXPECT_EQ(parse(".25", 1), num(0.25));
  EXPECT_EQ(parse("3.", 1), num(3.0));
  EXPECT_EQ(parse("2E2", 1), num(200.0));
}

TEST(ExprParse, SyntaxErrorCarriesOffset) {
  try {
    parse("2 * * x1", 1);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.offset(), 4u);
  }
  try {
    parse("x1 + 1)", 1);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.offset(), 6u);
  }
  EXPECT_THROW(parse("", 1), ParseError);
  EXPECT_THROW(parse("(x1", 1), ParseError);
  EXPECT_THROW(parse("1e", 1), ParseError);
  EXPECT_THROW(parse("sin x1", 1), ParseError);
}

TEST(ExprParse, UnknownIdentifier) {
  try {
    parse("x1 + tan(x1)", 1);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.offset(), 5u);
    EXPECT_NE(std::strstr(e.what(), "unknown identifier 'tan'"), nullptr);
  }
  EXPECT_THROW(parse("y1", 1), ParseError);
}

TEST(ExprParse, VariableIndexOutOfRange) {
  EXPECT_THROW(parse("x3", 2), ParseError);
  EXPECT_THROW(parse("x0", 2), ParseError);
  EXPECT_NO_THROW(parse("x2", 2));
}

TEST(ExprParse, ExponentMustBeConstant) {
  try {
    parse("x1^x2", 2);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.offset(), 3u);
  }
  EXPECT_NO_THROW(parse("x1^(1/3)", 1));
}

TEST(ExprEval, Examples) {
  EXPECT_DOUBLE_EQ(SmoothFn::parse("x1^2", 1).eval(vec({3})), 9.0);
  EXPECT_DOUBLE_EQ(SmoothFn::parse("x1 - x2", 2).eval(vec({5, 5})), 0.0);
}

TEST(ExprEval, SineAgreesWithIndependentSeries) {
  const double v = SmoothFn::parse("sin(x1)", 1).eval(vec({0.7}));
  EXPECT_NEAR(v, double(testing::taylor_sin(0.7L)), 1e-12);
}

TEST(ExprEval, DomainErrorsNameTheSubexpression) {
  try {
    SmoothFn::parse("1 + log(x1)", 1).eval(vec({0}));
    FAIL() << "expected DomainError";
  } catch (const DomainError& e) {
    EXPECT_EQ(e.subexpression(), "log(x1)");
  }
  try {
    SmoothFn::parse("x2/(x1 - 1)", 2).eval(vec({1, 2}));
    FAIL() << "expected DomainError";
  } catch (const DomainError& e) {
    EXPECT_EQ(e.subexpression(), "x2/(x1 - 1)");
  }
  EXPECT_THROW(SmoothFn::parse("sqrt(x1)", 1).eval(vec({-1})), DomainError);
  EXPECT_THROW(SmoothFn::parse("x1^0.5", 1).eval(vec({-1})), DomainError);
  EXPECT_THROW(SmoothFn::parse("x1^0.5", 1).eval(vec({0})), DomainError);
  EXPECT_THROW(SmoothFn::parse("x1^-1", 1).eval(vec({0})), DomainError);
  EXPECT_DOUBLE_EQ(SmoothFn::parse("x1^3", 1).eval(vec({-2})), -8.0);
}

TEST(ExprEval, SqrtAtZeroHasValueButNoGradient) {
  const SmoothFn f = SmoothFn::parse("sqrt(x1)", 1);
  EXPECT_DOUBLE_EQ(f.eval(vec({0})), 0.0);
  EXPECT_THROW(f.grad(vec({0})), DomainError);
}

TEST(ExprEval, WrongPointLength) { EXPECT_THROW(SmoothFn::parse("x1", 2).eval(vec({1})), Error); }

TEST(ExprGrad, Examples) {
  EXPECT_DOUBLE_EQ(SmoothFn::parse("x1^2", 1).grad(vec({3}))[0], 6.0);
  const Vector g = SmoothFn::parse("2*x1 + x2^2", 2).grad(vec({1, 2}));
  EXPECT_DOUBLE_EQ(g[0], 2.0);
  EXPECT_DOUBLE_EQ(g[1], 4.0);
}

TEST(ExprGrad, PowerEdgeCases) {
  EXPECT_DOUBLE_EQ(SmoothFn::parse("x1^0", 1).grad(vec({0}))[0], 0.0);
  EXPECT_DOUBLE_EQ(SmoothFn::parse("x1^1", 1).grad(vec({0}))[0], 1.0);
  EXPECT_DOUBLE_EQ(SmoothFn::parse("x1^2", 1).grad(vec({0}))[0], 0.0);
  EXPECT_DOUBLE_EQ(SmoothFn::parse("x1^3", 1).grad(vec({-1}))[0], 3.0);
}

TEST(ExprGrad, RandomPolynomialsMatchCentralDifferences) {
  Rng rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t dim = std::size_t(rng.integer(1, 3));
    const SmoothFn f = SmoothFn::parse(testing::random_polynomial(rng, dim), dim);
    const Vector x = testing::random_point(rng, dim);
    const Vector g = f.grad(x);
    for (Eigen::Index l = 0; l < g.size(); ++l) {
      const double fd = testing::central_difference([&](const Vector& p) { return f.eval(p); }, x, l);
      EXPECT_LE(std::abs(g[l] - fd), 1e-6 * (1.0 + std::abs(g[l]))) << to_string(f.expr());
    }
  }
}

TEST(ExprGrad, RandomExpressionsMatchCentralDifferences) {
  Rng rng(11);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t dim = std::size_t(rng.integer(1, 4));
    const SmoothFn f(testing::random_expr(rng, dim, 4), dim);
    const Vector x = testing::random_point(rng, dim);
    const Vector g = f.grad(x);
    for (Eigen::Index l = 0; l < g.size(); ++l) {
      const double fd = testing::central_difference([&](const Vector& p) { return f.eval(p); }, x, l);
      ASSERT_LE(std::abs(g[l] - fd), 1e-6 * (1.0 + std::abs(g[l]))) << to_string(f.expr());
    }
  }
}

TEST(ExprProperty, PrintParseRoundTrip) {
  Rng rng(3);
  for (int trial = 0; trial < 1000; ++trial) {
    const Expr e = testing::random_expr(rng, 3, 5);
    const std::string text = to_string(e);
    EXPECT_EQ(parse(text, 3), e) << text;
  }
  for (const char* text : {"-x1^2", "(-x1)^2", "x1 - (x2 - x3)", "x1/(x2*x3)", "--x1", "2^-x1^0+1", "x1*-x2"}) {
    SCOPED_TRACE(text);
    try {
      const Expr e = parse(text, 3);
      EXPECT_EQ(parse(to_string(e), 3), e);
    } catch (const ParseError&) {
      EXPECT_STREQ(text, "2^-x1^0+1");  // variable exponent, rejected
    }
  }
}

TEST(ExprProperty, EvaluationIsBitwiseDeterministic) {
  Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const SmoothFn f(testing::random_expr(rng, 2, 5), 2);
    const Vector x = testing::random_point(rng, 2);
    const SmoothFn copy = SmoothFn::parse(to_string(f.expr()), 2);
    const double a = f.eval(x), b = copy.eval(x);
    EXPECT_EQ(std::memcmp(&a, &b, sizeof a), 0);
    const Vector ga = f.grad(x), gb = f.grad(x);
    EXPECT_EQ(std::memcmp(ga.data(), gb.data(), sizeof(double) * std::size_t(ga.size())), 0);
  }
}

}  // namespace
}  // namespace dcjac
