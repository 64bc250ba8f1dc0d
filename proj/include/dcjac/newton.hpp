#pragma once

// Local semismooth Newton iteration x+ = x - xi^{-1} F(x) with xi taken from
// algorithm_a1, plus a builder for linear complementarity problems written as
// min(x, Mx + q) = 0.

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include <json.hpp>

#include "dcjac/dcmax.hpp"
#include "dcjac/expr.hpp"
#include "dcjac/jacobian.hpp"
#include "dcjac/types.hpp"

namespace dcjac {

enum class NewtonStatus { Converged, MaxIters, Singular, Diverged };

inline std::string_view to_string(NewtonStatus s) {
  switch (s) {
    case NewtonStatus::Converged: return "converged";
    case NewtonStatus::MaxIters: return "max_iters";
    case NewtonStatus::Singular: return "singular";
    case NewtonStatus::Diverged: return "diverged";
  }
  return "?";
}

struct NewtonIterate {
  Vector x;
  Vector F;
  double residual = 0.0;  // |F(x)|_inf
  // Empty on the last iterate, where no step was taken.
  Matrix xi;
  Vector step;
  std::string convention;
  double linear_residual = 0.0;  // |xi step + F|_inf
};

struct NewtonTrace {
  std::vector<NewtonIterate> iterates;
  NewtonStatus status = NewtonStatus::MaxIters;
  std::size_t steps() const { return iterates.empty() ? 0 : iterates.size() - 1; }
  const Vector& solution() const { return iterates.back().x; }
};

struct NewtonOptions {
  double tol = 1e-10;
  std::size_t max_iters = 50;
  A1Options a1;
};

namespace detail {

// Dense LU with partial pivoting; nullopt when some pivot is below
// 1e-12 * max|A| (or A is zero).
inline std::optional<Vector> solve_pivoted(const Matrix& A, const Vector& b) {
  const double scale = A.size() ? A.cwiseAbs().maxCoeff() : 0.0;
  if (scale == 0.0) return std::nullopt;
  Eigen::PartialPivLU<Matrix> lu(A);
  const Matrix& U = lu.matrixLU();
  for (Eigen::Index d = 0; d < U.rows(); ++d)
    if (!(std::abs(U(d, d)) >= 1e-12 * scale)) return std::nullopt;
  return Vector(lu.solve(b));
}

}  // namespace detail

inline NewtonTrace newton_solve(const DCMaxFn& F, const Vector& x0, const NewtonOptions& opt = {}) {
  if (F.m() != F.n()) throw Error("Newton needs a square system (m = n)");
  if (!(opt.tol > 0.0)) throw Error("tol must be positive");
  if (std::size_t(x0.size()) != F.n()) throw Error("starting point length does not match n");

  NewtonTrace trace;
  Vector x = x0;
  double initial = 0.0;
  std::size_t blown_up = 0;
  for (std::size_t k = 0;; ++k) {
    NewtonIterate it;
    it.x = x;
    it.F = eval_F(F, x);
    it.residual = it.F.cwiseAbs().maxCoeff();
    if (k == 0) initial = it.residual;

    if (it.residual <= opt.tol) {
      trace.iterates.push_back(std::move(it));
      trace.status = NewtonStatus::Converged;
      return trace;
    }
    blown_up = it.residual > 10.0 * initial ? blown_up + 1 : 0;
    if (blown_up >= 5) {
      trace.iterates.push_back(std::move(it));
      trace.status = NewtonStatus::Diverged;
      return trace;
    }
    if (k == opt.max_iters) {
      trace.iterates.push_back(std::move(it));
      trace.status = NewtonStatus::MaxIters;
      return trace;
    }

    A1Options a1 = opt.a1;
    Matrix xi = algorithm_a1(F, x, a1).xi;
    std::optional<Vector> d = detail::solve_pivoted(xi, -it.F);
    if (!d) {
      a1.convention = opposite(a1.convention);
      xi = algorithm_a1(F, x, a1).xi;
      d = detail::solve_pivoted(xi, -it.F);
    }
    if (!d) {
      it.xi = xi;
      trace.iterates.push_back(std::move(it));
      trace.status = NewtonStatus::Singular;
      return trace;
    }
    it.xi = xi;
    it.step = *d;
    it.convention = std::string(to_string(a1.convention));
    it.linear_residual = (xi * *d + it.F).cwiseAbs().maxCoeff();
    x += *d;
    trace.iterates.push_back(std::move(it));
  }
}

// Component i is 0 - max(-x_i, -(Mx + q)_i) = min(x_i, (Mx + q)_i).
inline DCMaxFn build_ncp(const Matrix& M, const Vector& q) {
  if (M.rows() != M.cols() || M.rows() != q.size() || M.rows() == 0)
    throw Error("NCP needs a square M and matching q");
  const std::size_t n = std::size_t(M.rows());
  std::vector<Component> comps;
  for (std::size_t i = 0; i < n; ++i) {
    Expr affine = Expr::constant(std::abs(q[Eigen::Index(i)]));
    if (std::signbit(q[Eigen::Index(i)])) affine = Expr::unary(Op::Neg, affine);
    for (std::size_t l = 0; l < n; ++l) {
      const double a = M(Eigen::Index(i), Eigen::Index(l));
      if (a == 0.0) continue;
      Expr term = Expr::binary(Op::Mul, Expr::constant(std::abs(a)), Expr::variable(l));
      affine = Expr::binary(a < 0.0 ? Op::Sub : Op::Add, affine, term);
    }
    std::vector<SmoothFn> h{SmoothFn(Expr::unary(Op::Neg, Expr::variable(i)), n),
                            SmoothFn(Expr::unary(Op::Neg, affine), n)};
    comps.push_back({MaxFn({SmoothFn(Expr::constant(0.0), n)}), MaxFn(std::move(h))});
  }
  return DCMaxFn(n, std::move(comps));
}

// max of |min(x,0)|, |min(w,0)| and |x.w| with w = Mx + q.
inline double complementarity_residual(const Matrix& M, const Vector& q, const Vector& x) {
  const Vector w = M * x + q;
  return std::max({(-x).cwiseMax(0.0).maxCoeff(), (-w).cwiseMax(0.0).maxCoeff(), std::abs(x.dot(w))});
}

// One JSON object per iterate, then a status line.
inline std::vector<nlohmann::json> trace_lines(const NewtonTrace& trace) {
  std::vector<nlohmann::json> lines;
  for (std::size_t k = 0; k < trace.iterates.size(); ++k) {
    const auto& it = trace.iterates[k];
    nlohmann::json j{{"iter", k}, {"x", to_json(it.x)}, {"F", to_json(it.F)}, {"residual", it.residual}};
    if (it.xi.size()) j["xi"] = to_json(it.xi);
    if (it.step.size()) {
      j["step"] = to_json(it.step);
      j["convention"] = it.convention;
    }
    lines.push_back(std::move(j));
  }
  lines.push_back({{"status", std::string(to_string(trace.status))},
                   {"iterations", trace.steps()},
                   {"x", to_json(trace.solution())},
                   {"residual", trace.iterates.back().residual}});
  return lines;
}

}  // namespace dcjac
