#pragma once

// Lexicographic gradient selection and the element xi of the Clarke
// generalized Jacobian it produces, together with the certificate pieces
// (Gamma set, witness direction) and runtime checks of the cone on which
// F'(x; .) is linear.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "dcjac/dcmax.hpp"
#include "dcjac/error.hpp"
#include "dcjac/random.hpp"
#include "dcjac/types.hpp"

namespace dcjac {

inline constexpr double kDefaultTolTie = 1e-9;

// Which extremum each filtration step keeps. Min pairs with a witness
// direction of all-negative weights, Max with all-positive.
enum class Convention { Min, Max };

inline std::string_view to_string(Convention c) { return c == Convention::Min ? "min" : "max"; }

inline Convention parse_convention(std::string_view s) {
  if (s == "min") return Convention::Min;
  if (s == "max") return Convention::Max;
  throw Error("unknown convention '" + std::string(s) + "' (expected min or max)");
}

inline Convention opposite(Convention c) { return c == Convention::Min ? Convention::Max : Convention::Min; }

using IndexSet = std::vector<std::size_t>;

// Nested filtration T^0 ⊇ T^1 ⊇ ... ⊇ T^n over positions in `grads`.
// Step l keeps the positions whose l-th component is within
// tol_tie * (1 + |extremum|) of the smallest (Min) or largest (Max)
// l-th component among the survivors of step l-1.
inline std::vector<IndexSet> s1_chain(std::span<const Vector> grads, Convention convention,
                                      double tol_tie = kDefaultTolTie) {
  if (grads.empty()) throw Error("s1_select needs at least one gradient");
  if (tol_tie < 0.0) throw Error("tol_tie must be non-negative");
  const Eigen::Index n = grads.front().size();
  for (const auto& g : grads)
    if (g.size() != n) throw Error("gradients disagree on length");

  std::vector<IndexSet> chain(1);
  for (std::size_t t = 0; t < grads.size(); ++t) chain[0].push_back(t);

  for (Eigen::Index l = 0; l < n; ++l) {
    const IndexSet& prev = chain.back();
    double extremum = grads[prev.front()][l];
    for (std::size_t t : prev)
      extremum = convention == Convention::Min ? std::min(extremum, grads[t][l]) : std::max(extremum, grads[t][l]);
    IndexSet next;
    for (std::size_t t : prev)
      if (within_hybrid(grads[t][l], extremum, extremum, tol_tie)) next.push_back(t);
    chain.push_back(std::move(next));
  }
  return chain;
}

inline IndexSet s1_select(std::span<const Vector> grads, Convention convention, double tol_tie = kDefaultTolTie) {
  return s1_chain(grads, convention, tol_tie).back();
}

struct ComponentSelection {
  ActiveSet g_active;
  ActiveSet h_active;
  // Chains in piece indices; front() is the active set, back() the final set.
  std::vector<IndexSet> t_chain;
  std::vector<IndexSet> s_chain;
  std::size_t j = 0;
  std::size_t k = 0;

  const IndexSet& T() const { return t_chain.back(); }
  const IndexSet& S() const { return s_chain.back(); }
};

struct SelectionResult {
  Convention convention = Convention::Min;
  std::vector<ComponentSelection> components;
};

struct JacobianElement {
  Matrix xi;
  SelectionResult selection;
};

struct A1Options {
  double tol_act = kDefaultTolAct;
  double tol_tie = kDefaultTolTie;
  Convention convention = Convention::Min;
};

namespace detail {

inline std::vector<IndexSet> select_chain(const MaxFn& f, const Vector& x, const ActiveSet& act, Convention convention,
                                          double tol_tie) {
  std::vector<Vector> grads;
  grads.reserve(act.indices.size());
  for (std::size_t j : act.indices) grads.push_back(f.piece(j).grad(x));
  std::vector<IndexSet> chain = s1_chain(grads, convention, tol_tie);
  for (auto& level : chain)
    for (auto& pos : level) pos = act.indices[pos];
  return chain;
}

}  // namespace detail

// Runs the selection on every g_i and h_i with one shared convention and
// builds xi row by row as grad g_{i,j_i}(x) - grad h_{i,k_i}(x), with j_i and
// k_i the smallest surviving indices.
inline JacobianElement algorithm_a1(const DCMaxFn& F, const Vector& x, const A1Options& opt = {}) {
  if (std::size_t(x.size()) != F.n()) throw Error("point length does not match n");
  JacobianElement out{Matrix(Eigen::Index(F.m()), Eigen::Index(F.n())), {opt.convention, {}}};
  for (std::size_t i = 0; i < F.m(); ++i) {
    const Component& c = F.component(i);
    ComponentSelection sel;
    sel.g_active = active_set(c.g, x, opt.tol_act);
    sel.h_active = active_set(c.h, x, opt.tol_act);
    sel.t_chain = detail::select_chain(c.g, x, sel.g_active, opt.convention, opt.tol_tie);
    sel.s_chain = detail::select_chain(c.h, x, sel.h_active, opt.convention, opt.tol_tie);
    sel.j = *std::min_element(sel.T().begin(), sel.T().end());
    sel.k = *std::min_element(sel.S().begin(), sel.S().end());
    out.xi.row(Eigen::Index(i)) = (c.g.piece(sel.j).grad(x) - c.h.piece(sel.k).grad(x)).transpose();
    out.selection.components.push_back(std::move(sel));
  }
  return out;
}

// xi for an arbitrary admissible choice j_i in T_i, k_i in S_i.
inline Matrix xi_for_choice(const DCMaxFn& F, const Vector& x, std::span<const std::size_t> j,
                            std::span<const std::size_t> k) {
  if (j.size() != F.m() || k.size() != F.m()) throw Error("one index per component required");
  Matrix xi(static_cast<Eigen::Index>(F.m()), static_cast<Eigen::Index>(F.n()));
  for (std::size_t i = 0; i < F.m(); ++i)
    xi.row(Eigen::Index(i)) =
        (F.component(i).g.piece(j[i]).grad(x) - F.component(i).h.piece(k[i]).grad(x)).transpose();
  return xi;
}

// Largest amount by which the surviving gradients of any T_i or S_i differ
// in some coordinate, divided by (1 + magnitude). Zero when all coincide.
inline double max_gradient_spread(const DCMaxFn& F, const Vector& x, const SelectionResult& sel) {
  double worst = 0.0;
  auto scan = [&](const MaxFn& f, const IndexSet& set) {
    Vector lo = f.piece(set.front()).grad(x), hi = lo;
    for (std::size_t a = 1; a < set.size(); ++a) {
      const Vector g = f.piece(set[a]).grad(x);
      lo = lo.cwiseMin(g);
      hi = hi.cwiseMax(g);
    }
    for (Eigen::Index l = 0; l < lo.size(); ++l) {
      const double mag = std::max(std::abs(lo[l]), std::abs(hi[l]));
      worst = std::max(worst, (hi[l] - lo[l]) / (1.0 + mag));
    }
  };
  for (std::size_t i = 0; i < F.m(); ++i) {
    scan(F.component(i).g, sel.components.at(i).T());
    scan(F.component(i).h, sel.components.at(i).S());
  }
  return worst;
}

// --- certificate ----------------------------------------------------------

struct GammaSet {
  std::vector<Vector> vectors;
  bool empty() const { return vectors.empty(); }
  std::size_t size() const { return vectors.size(); }
};

inline constexpr std::size_t kNoIndex = std::numeric_limits<std::size_t>::max();

inline std::size_t first_nonzero(const Vector& a) {
  for (Eigen::Index l = 0; l < a.size(); ++l)
    if (a[l] != 0.0) return std::size_t(l);
  return kNoIndex;
}

// Differences grad(rejected) - grad(selected) over every active-but-rejected
// piece and every surviving piece, for all g_i and h_i. Components the
// selection treated as ties (within tol_tie) are stored as exact zeros so the
// sign structure matches the selection. Duplicates within 1e-12 are dropped.
inline GammaSet gamma_set(const DCMaxFn& F, const Vector& x, const SelectionResult& sel,
                          double tol_tie = kDefaultTolTie) {
  GammaSet out;
  auto add = [&](const Vector& rejected, const Vector& kept) {
    Vector a = rejected - kept;
    for (Eigen::Index l = 0; l < a.size(); ++l) {
      const double scale = std::max(std::abs(rejected[l]), std::abs(kept[l]));
      if (std::abs(a[l]) <= tol_tie * (1.0 + scale)) a[l] = 0.0;
    }
    for (const auto& v : out.vectors)
      if ((v - a).cwiseAbs().maxCoeff() <= 1e-12) return;
    out.vectors.push_back(std::move(a));
  };
  auto collect = [&](const MaxFn& f, const IndexSet& active, const IndexSet& kept) {
    for (std::size_t r : active) {
      if (std::find(kept.begin(), kept.end(), r) != kept.end()) continue;
      const Vector gr = f.piece(r).grad(x);
      for (std::size_t t : kept) add(gr, f.piece(t).grad(x));
    }
  };
  for (std::size_t i = 0; i < F.m(); ++i) {
    const ComponentSelection& c = sel.components.at(i);
    collect(F.component(i).g, c.g_active.indices, c.T());
    collect(F.component(i).h, c.h_active.indices, c.S());
  }
  return out;
}

// Direction y_bar with alpha . y_bar < 0 for every alpha in Gamma, built from
// geometrically decaying weights lambda.
struct WitnessDirection {
  Vector y_bar;
  double epsilon = 1.0;
  double M = 2.0;
  Vector lambda;
  Convention convention = Convention::Min;
};

// epsilon = half the smallest first-nonzero magnitude over Gamma (1 if empty),
// M = 2 max(1, largest |component|), lambda_1 = 1 and
// lambda_{l+1} = lambda_l * r / 2 with r = (eps/M) / (1 + eps/M).
inline WitnessDirection witness_direction(const GammaSet& gamma, std::size_t n, Convention convention) {
  if (n == 0) throw Error("dimension must be positive");
  double min_lead = std::numeric_limits<double>::infinity();
  double max_abs = 0.0;
  for (const auto& a : gamma.vectors) {
    if (std::size_t(a.size()) != n) throw Error("Gamma vector has wrong length");
    const std::size_t k = first_nonzero(a);
    if (k == kNoIndex) throw SelectionError("Gamma contains a zero vector");
    const double lead = a[Eigen::Index(k)];
    if ((convention == Convention::Min) != (lead > 0.0))
      throw SelectionError("Gamma vector with leading component " + std::to_string(lead) +
                           " does not match the " + std::string(to_string(convention)) + " convention");
    min_lead = std::min(min_lead, std::abs(lead));
    max_abs = std::max(max_abs, a.cwiseAbs().maxCoeff());
  }

  WitnessDirection w;
  w.convention = convention;
  w.epsilon = gamma.empty() ? 1.0 : 0.5 * min_lead;
  w.M = 2.0 * std::max(1.0, max_abs);
  const double q = w.epsilon / w.M;
  const double ratio = 0.5 * q / (1.0 + q);
  w.lambda.resize(Eigen::Index(n));
  w.lambda[0] = 1.0;
  for (Eigen::Index l = 1; l < Eigen::Index(n); ++l) w.lambda[l] = w.lambda[l - 1] * ratio;
  w.y_bar = convention == Convention::Min ? Vector(-w.lambda) : Vector(w.lambda);
  return w;
}

struct WitnessCheck {
  std::size_t checked = 0;
  std::size_t failures = 0;
  // Smallest observed -alpha.y_bar divided by the guaranteed margin; >= 1 when valid.
  double worst_margin_ratio = std::numeric_limits<double>::infinity();
  bool ok() const { return failures == 0; }
};

// Each alpha must satisfy alpha . y_bar < 0 with
// -alpha . y_bar >= lambda_k (|alpha_k| - eps) (1 - 1e-9), k its leading index.
inline WitnessCheck check_witness(const GammaSet& gamma, const WitnessDirection& w) {
  WitnessCheck out;
  for (const auto& a : gamma.vectors) {
    ++out.checked;
    const std::size_t k = first_nonzero(a);
    const double value = a.dot(w.y_bar);
    if (k == kNoIndex) {
      ++out.failures;
      continue;
    }
    const Eigen::Index kk = Eigen::Index(k);
    const double required = w.lambda[kk] * (std::abs(a[kk]) - w.epsilon) * (1.0 - 1e-9);
    if (!(value < 0.0) || !(required > 0.0) || -value < required) ++out.failures;
    if (required > 0.0) out.worst_margin_ratio = std::min(out.worst_margin_ratio, -value / required);
  }
  return out;
}

inline bool in_cone(const GammaSet& gamma, const Vector& y) {
  for (const auto& a : gamma.vectors)
    if (!(a.dot(y) < 0.0)) return false;
  return true;
}

// --- runtime verifiers ----------------------------------------------------

struct ConeOptions {
  std::size_t samples = 200;
  std::uint64_t seed = 42;
  double radius = 0.5;  // relative to |y_bar|
  double tol_act = kDefaultTolAct;
};

struct ConeLinearityReport {
  std::size_t requested = 0;
  std::size_t kept = 0;
  std::size_t attempts = 0;
  double final_radius = 0.0;
  double max_discrepancy = 0.0;
  // max over kept y and components of |dd_F(x,y)_i - (xi y)_i| / (1 + |y|)
  double max_scaled_discrepancy = 0.0;
  bool inconclusive = false;
  bool pass = false;
};

// Draws directions around y_bar, keeps those inside the open cone
// U = {y : alpha . y < 0 for all alpha in Gamma} and compares the
// directional derivative with xi y. The perturbation radius shrinks tenfold
// whenever a batch lands entirely outside U.
inline ConeLinearityReport verify_cone_linearity(const DCMaxFn& F, const Vector& x, const JacobianElement& je,
                                                 const GammaSet& gamma, const WitnessDirection& w,
                                                 const ConeOptions& opt = {}) {
  constexpr double kTol = 1e-8;
  ConeLinearityReport rep;
  rep.requested = opt.samples;
  Rng rng(opt.seed);
  double radius = opt.radius * w.y_bar.norm();
  const std::size_t batch = std::max<std::size_t>(opt.samples, 1);
  const std::size_t max_attempts = 50 * batch;
  std::size_t kept_in_batch = 0;

  while (rep.kept < opt.samples && rep.attempts < max_attempts) {
    const Vector y = w.y_bar + rng.in_ball(w.y_bar.size(), radius);
    ++rep.attempts;
    if (in_cone(gamma, y)) {
      ++rep.kept;
      ++kept_in_batch;
      const Vector diff = (dd_F(F, x, y, opt.tol_act) - je.xi * y).cwiseAbs();
      rep.max_discrepancy = std::max(rep.max_discrepancy, diff.maxCoeff());
      rep.max_scaled_discrepancy = std::max(rep.max_scaled_discrepancy, diff.maxCoeff() / (1.0 + y.norm()));
    }
    if (rep.attempts % batch == 0) {
      if (kept_in_batch == 0) radius *= 0.1;
      kept_in_batch = 0;
    }
  }
  rep.final_radius = radius;
  rep.inconclusive = rep.kept == 0;
  rep.pass = !rep.inconclusive && rep.max_scaled_discrepancy <= kTol;
  return rep;
}

struct LimitPoint {
  double t = 0.0;
  bool degenerate = false;
  double distance = 0.0;  // Frobenius, when not degenerate
};

struct LimitInclusionReport {
  std::vector<LimitPoint> points;
  double tolerance = 0.0;
  double final_distance = 0.0;
  double max_distance = 0.0;
  bool all_degenerate = true;
  bool monotone = true;
  bool pass = false;
};

inline std::vector<double> default_t_schedule() { return {1e-2, 1e-3, 1e-4, 1e-5, 1e-6}; }

// Classical Jacobians at x + t y_bar along a decreasing schedule must approach
// xi. Points where some max has non-coinciding active gradients are skipped.
inline LimitInclusionReport verify_limit_inclusion(const DCMaxFn& F, const Vector& x, const Matrix& xi,
                                                   const Vector& y_bar,
                                                   const std::vector<double>& t_schedule = default_t_schedule(),
                                                   double tol_act = kDefaultTolAct) {
  for (std::size_t a = 0; a < t_schedule.size(); ++a) {
    if (!(t_schedule[a] > 0.0)) throw Error("t schedule must be positive");
    if (a > 0 && !(t_schedule[a] < t_schedule[a - 1])) throw Error("t schedule must be decreasing");
  }
  LimitInclusionReport rep;
  // Magnitude of the Jacobians and their rate of change along the ray; the
  // distance at t is bounded by that rate times t.
  double scale = xi.size() ? xi.cwiseAbs().maxCoeff() : 0.0;
  std::optional<double> previous;
  std::optional<std::pair<double, Matrix>> last;
  for (double t : t_schedule) {
    LimitPoint pt{t, true, 0.0};
    if (auto sp = classical_jacobian(F, x + t * y_bar, tol_act)) {
      pt.degenerate = false;
      pt.distance = (sp->jacobian - xi).norm();
      scale = std::max(scale, sp->jacobian.cwiseAbs().maxCoeff());
      if (last) scale = std::max(scale, (sp->jacobian - last->second).norm() / (last->first - t));
      last.emplace(t, sp->jacobian);
      rep.all_degenerate = false;
      rep.max_distance = std::max(rep.max_distance, pt.distance);
      rep.final_distance = pt.distance;
    }
    rep.points.push_back(pt);
  }
  rep.tolerance = 1e-6 * (1.0 + scale);
  for (const auto& pt : rep.points) {
    if (pt.degenerate) continue;
    if (previous && pt.distance > *previous + rep.tolerance) rep.monotone = false;
    previous = pt.distance;
  }
  rep.pass = !rep.all_degenerate && rep.monotone && rep.final_distance <= rep.tolerance;
  return rep;
}

}  // namespace dcjac
