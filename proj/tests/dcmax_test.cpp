#include <cmath>
#include <string>

#include <gtest/gtest.h>

#include "dcjac/dcmax.hpp"
#include "test_support.hpp"

namespace dcjac {
namespace {

using nlohmann::json;

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  std::copy(v.begin(), v.end(), out.begin());
  return out;
}

MaxFn max_of(std::initializer_list<const char*> pieces, std::size_t n) {
  std::vector<SmoothFn> out;
  for (const char* p : pieces) out.push_back(SmoothFn::parse(p, n));
  return MaxFn(std::move(out));
}

DCMaxFn abs_problem() { return load_problem(json::parse(R"J({"n":1,"m":1,"components":[{"g":["x1","-x1"],"h":["0"]}]})J")); }

// Affine pieces kept as raw coefficients so tests can evaluate them without the library.
struct AffinePiece {
  double c;
  std::vector<double> a;
  double at(const Vector& x) const {
    double v = c;
    for (std::size_t l = 0; l < a.size(); ++l) v += a[l] * x[Eigen::Index(l)];
    return v;
  }
  std::string text() const {
    std::string s = std::to_string(int(c));
    for (std::size_t l = 0; l < a.size(); ++l) s += " + (" + std::to_string(int(a[l])) + ")*x" + std::to_string(l + 1);
    return s;
  }
};

struct AffineInstance {
  std::size_t n, m;
  std::vector<std::vector<AffinePiece>> g, h;
  DCMaxFn build() const {
    json comps = json::array();
    for (std::size_t i = 0; i < m; ++i) {
      json gl = json::array(), hl = json::array();
      for (const auto& p : g[i]) gl.push_back(p.text());
      for (const auto& p : h[i]) hl.push_back(p.text());
      comps.push_back({{"g", gl}, {"h", hl}});
    }
    return load_problem({{"n", n}, {"m", m}, {"components", comps}});
  }
  Vector direct(const Vector& x) const {
    Vector out(static_cast<Eigen::Index>(m));
    for (std::size_t i = 0; i < m; ++i) {
      double gm = -INFINITY, hm = -INFINITY;
      for (const auto& p : g[i]) gm = std::max(gm, p.at(x));
      for (const auto& p : h[i]) hm = std::max(hm, p.at(x));
      out[Eigen::Index(i)] = gm - hm;
    }
    return out;
  }
};

AffineInstance random_affine(Rng& rng) {
  AffineInstance inst{std::size_t(rng.integer(1, 4)), std::size_t(rng.integer(1, 3)), {}, {}};
  auto pieces = [&] {
    std::vector<AffinePiece> out(std::size_t(rng.integer(1, 5)));
    for (auto& p : out) {
      p.c = double(rng.integer(-1, 0));
      p.a.resize(inst.n);
      for (auto& a : p.a) a = double(rng.integer(-5, 5));
    }
    return out;
  };
  for (std::size_t i = 0; i < inst.m; ++i) {
    inst.g.push_back(pieces());
    inst.h.push_back(pieces());
  }
  return inst;
}

TEST(LoadProblem, AbsoluteValue) {
  const DCMaxFn F = abs_problem();
  EXPECT_EQ(F.n(), 1u);
  EXPECT_EQ(F.m(), 1u);
  EXPECT_DOUBLE_EQ(eval_F(F, vec({-3}))[0], 3.0);
  EXPECT_DOUBLE_EQ(eval_F(F, vec({2}))[0], 2.0);
}

TEST(LoadProblem, SingletonListsGiveSingletonActiveSets) {
  const DCMaxFn F = load_problem(json::parse(
      R"J({"n":2,"m":2,"components":[{"g":["x1*x2"],"h":["x1"]},{"g":["sin(x1)"],"h":["x2^2"]}]})J"));
  for (const auto& c : F.components()) {
    EXPECT_EQ(active_set(c.g, vec({0.3, 0.4})).indices.size(), 1u);
    EXPECT_EQ(active_set(c.h, vec({0.3, 0.4})).indices.size(), 1u);
  }
}

TEST(LoadProblem, MissingHDefaultsToZero) {
  const DCMaxFn F = load_problem(json::parse(R"J({"n":1,"m":1,"components":[{"g":["x1","-x1"]}]})J"));
  ASSERT_EQ(F.component(0).h.size(), 1u);
  EXPECT_EQ(F.component(0).h.piece(0).expr(), Expr::constant(0.0));
  EXPECT_DOUBLE_EQ(eval_F(F, vec({-4}))[0], 4.0);
}

TEST(LoadProblem, EmptyPieceListIsRejected) {
  try {
    load_problem(json::parse(R"J({"n":1,"m":1,"components":[{"g":[],"h":["0"]}]})J"));
    FAIL() << "expected SchemaError";
  } catch (const SchemaError& e) {
    EXPECT_NE(std::string(e.what()).find("empty piece list"), std::string::npos);
  }
  EXPECT_THROW(MaxFn({}), SchemaError);
}

TEST(LoadProblem, SchemaViolations) {
  EXPECT_THROW(load_problem(json::parse(R"J([1,2])J")), SchemaError);
  EXPECT_THROW(load_problem(json::parse(R"J({"m":1,"components":[]})J")), SchemaError);
  EXPECT_THROW(load_problem(json::parse(R"J({"n":0,"m":1,"components":[{"g":["0"]}]})J")), SchemaError);
  EXPECT_THROW(load_problem(json::parse(R"J({"n":1,"m":2,"components":[{"g":["x1"]}]})J")), SchemaError);
  EXPECT_THROW(load_problem(json::parse(R"J({"n":1,"m":1,"components":[{"g":[3]}]})J")), SchemaError);
  EXPECT_THROW(load_problem(json::parse(R"J({"n":1,"m":1,"components":[{"h":["x1"]}]})J")), SchemaError);
  EXPECT_THROW(load_problem(json::parse(R"J({"n":1,"m":1,"components":[{"g":"x1"}]})J")), SchemaError);
}

TEST(LoadProblem, DiagnosticsNameEveryBadPiece) {
  try {
    load_problem(json::parse(R"J({"n":1,"m":2,"components":[{"g":["x2"]},{"g":["x1"],"h":["foo"]}]})J"));
    FAIL() << "expected SchemaError";
  } catch (const SchemaError& e) {
    const std::string what = e.what();
    EXPECT_NE(what.find("components[0].g[0]"), std::string::npos) << what;
    EXPECT_NE(what.find("components[1].h[0]"), std::string::npos) << what;
  }
}

TEST(LoadProblem, JsonRoundTrip) {
  Rng rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    const AffineInstance inst = random_affine(rng);
    const DCMaxFn F = inst.build();
    const DCMaxFn G = load_problem(to_json(F));
    const Vector x = testing::random_point(rng, inst.n);
    EXPECT_EQ(eval_F(F, x), eval_F(G, x));
  }
}

TEST(EvalF, Examples) {
  EXPECT_DOUBLE_EQ(eval_F(abs_problem(), vec({-3}))[0], 3.0);
  const DCMaxFn F = load_problem(json::parse(R"J({"n":1,"m":1,"components":[{"g":["x1","2*x1"],"h":["x1"]}]})J"));
  EXPECT_DOUBLE_EQ(eval_F(F, vec({1}))[0], 1.0);
}

TEST(EvalF, RandomAffineMatchesDirectEvaluation) {
  Rng rng(21);
  for (int trial = 0; trial < 100; ++trial) {
    const AffineInstance inst = random_affine(rng);
    const DCMaxFn F = inst.build();
    for (int p = 0; p < 5; ++p) {
      const Vector x = testing::random_point(rng, inst.n, -3, 3);
      EXPECT_LE((eval_F(F, x) - inst.direct(x)).cwiseAbs().maxCoeff(), 1e-12);
    }
  }
}

TEST(EvalF, DomainErrorsPropagate) {
  const DCMaxFn F = load_problem(json::parse(R"J({"n":1,"m":1,"components":[{"g":["log(x1)","0"]}]})J"));
  EXPECT_THROW(eval_F(F, vec({-1})), DomainError);
}

TEST(ActiveSet, Examples) {
  const MaxFn f = max_of({"x1", "-x1"}, 1);
  EXPECT_EQ(active_set(f, vec({0})).indices, (std::vector<std::size_t>{0, 1}));
  EXPECT_EQ(active_set(f, vec({1}), 1e-9).indices, (std::vector<std::size_t>{0}));
  const MaxFn near = max_of({"x1 + 1e-12", "x1"}, 1);
  const ActiveSet act = active_set(near, vec({0}), 1e-9);
  EXPECT_EQ(act.indices, (std::vector<std::size_t>{0, 1}));
  EXPECT_DOUBLE_EQ(act.max_value, 1e-12);
  EXPECT_EQ(active_set(near, vec({0}), 0.0).indices, (std::vector<std::size_t>{0}));
}

TEST(ActiveSet, HybridToleranceScalesWithMagnitude) {
  // threshold 1e-9 * (1 + 1e6) ~ 1e-3
  const MaxFn close = max_of({"1e6", "1e6 - 1e-4"}, 1);
  EXPECT_EQ(active_set(close, vec({0}), 1e-9).indices.size(), 2u);
  const MaxFn f = max_of({"1e6", "1e6 - 1e-2"}, 1);
  EXPECT_EQ(active_set(f, vec({0}), 1e-9).indices.size(), 1u);
  EXPECT_EQ(active_set(f, vec({0}), 1e-7).indices.size(), 2u);
  EXPECT_THROW(active_set(f, vec({0}), -1.0), Error);
}

TEST(ActiveSet, NeverEmptyAndMatchesThreshold) {
  Rng rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    const AffineInstance inst = random_affine(rng);
    const DCMaxFn F = inst.build();
    const Vector x = testing::random_point(rng, inst.n);
    for (const auto& c : F.components()) {
      const ActiveSet act = active_set(c.g, x);
      ASSERT_FALSE(act.indices.empty());
      const Vector v = c.g.values(x);
      for (Eigen::Index j = 0; j < v.size(); ++j) {
        const bool in = std::find(act.indices.begin(), act.indices.end(), std::size_t(j)) != act.indices.end();
        EXPECT_EQ(in, v[j] >= act.max_value - act.tolerance_used);
      }
    }
  }
}

TEST(DirectionalDerivative, AbsoluteValueAtOrigin) {
  const MaxFn f = max_of({"x1", "-x1"}, 1);
  EXPECT_DOUBLE_EQ(dd_max(f, vec({0}), vec({1})), 1.0);
  EXPECT_DOUBLE_EQ(dd_max(f, vec({0}), vec({-1})), 1.0);
}

TEST(DirectionalDerivative, SmoothCaseIsGradientDotDirection) {
  const MaxFn f = max_of({"x1^2*x2 + sin(x2)"}, 2);
  const Vector x = vec({0.4, -1.1}), y = vec({2.0, 0.5});
  EXPECT_DOUBLE_EQ(dd_max(f, x, y), f.piece(0).grad(x).dot(y));
}

TEST(DirectionalDerivative, DifferenceOfAbsoluteValues) {
  const DCMaxFn F = load_problem(json::parse(R"J({"n":1,"m":1,"components":[{"g":["x1","-x1"],"h":["2*x1","-2*x1"]}]})J"));
  EXPECT_DOUBLE_EQ(dd_F(F, vec({0}), vec({1}))[0], -1.0);
  EXPECT_DOUBLE_EQ(dd_F(F, vec({0}), vec({-3}))[0], -3.0);
}

TEST(DirectionalDerivative, RandomAffineMatchesForwardDifference) {
  Rng rng(31);
  for (int trial = 0; trial < 200; ++trial) {
    const AffineInstance inst = random_affine(rng);
    const DCMaxFn F = inst.build();
    const Vector x = Vector::Zero(Eigen::Index(inst.n));
    const Vector y = testing::random_point(rng, inst.n, -1, 1);
    const double t = 1e-7;
    const Vector fd = (inst.direct(x + t * y) - inst.direct(x)) / t;
    EXPECT_LE((dd_F(F, x, y) - fd).cwiseAbs().maxCoeff(), 1e-5);
    for (std::size_t i = 0; i < inst.m; ++i) {
      const double fd_g = (F.component(i).g.eval(x + t * y) - F.component(i).g.eval(x)) / t;
      EXPECT_NEAR(dd_max(F.component(i).g, x, y), fd_g, 1e-5);
    }
  }
}

TEST(DirectionalDerivative, PositivelyHomogeneousAndConvex) {
  Rng rng(41);
  for (int trial = 0; trial < 200; ++trial) {
    const AffineInstance inst = random_affine(rng);
    const DCMaxFn F = inst.build();
    const Vector x = Vector::Zero(Eigen::Index(inst.n));
    const Vector y1 = testing::random_point(rng, inst.n, -1, 1);
    const Vector y2 = testing::random_point(rng, inst.n, -1, 1);
    const double t = rng.uniform(0.1, 10.0);
    for (const auto& c : F.components()) {
      const double a = dd_max(c.g, x, y1);
      EXPECT_LE(std::abs(dd_max(c.g, x, t * y1) - t * a), 1e-12 * (1.0 + std::abs(t * a)));
      EXPECT_LE(dd_max(c.g, x, 0.5 * (y1 + y2)), 0.5 * (a + dd_max(c.g, x, y2)) + 1e-10);
    }
  }
}

TEST(DirectionalDerivative, SmoothInstanceRecoversJacobianColumns) {
  const DCMaxFn F = load_problem(json::parse(
      R"J({"n":2,"m":2,"components":[{"g":["x1*x2 + exp(x1)"],"h":["x2^3"]},{"g":["cos(x1 - x2)"],"h":["x1/(1 + x2^2)"]}]})J"));
  const Vector x = vec({0.3, -0.8});
  auto jac = classical_jacobian(F, x);
  ASSERT_TRUE(jac.has_value());
  for (Eigen::Index l = 0; l < 2; ++l) {
    const Vector e = Vector::Unit(2, l);
    EXPECT_LE((dd_F(F, x, e) - jac->jacobian.col(l)).cwiseAbs().maxCoeff(), 1e-14);
  }
}

TEST(ClassicalJacobian, NonDifferentiablePointIsRejected) {
  EXPECT_FALSE(classical_jacobian(abs_problem(), vec({0})).has_value());
  auto j = classical_jacobian(abs_problem(), vec({-0.5}));
  ASSERT_TRUE(j.has_value());
  EXPECT_DOUBLE_EQ(j->jacobian(0, 0), -1.0);
  EXPECT_EQ(j->profile.front().first, 1u);
}

TEST(ClassicalJacobian, DuplicatePiecesCountAsDifferentiable) {
  const DCMaxFn F = load_problem(json::parse(R"J({"n":1,"m":1,"components":[{"g":["2*x1","2*x1"],"h":["0"]}]})J"));
  auto j = classical_jacobian(F, vec({0}));
  ASSERT_TRUE(j.has_value());
  EXPECT_EQ(j->profile.front().first, 0u);
}

}  // namespace
}  // namespace dcjac
