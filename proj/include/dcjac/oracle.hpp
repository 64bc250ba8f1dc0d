#pragma once

// Brute-force checks that a matrix belongs to the Clarke generalized
// Jacobian: sampled limiting Jacobians near x, exhaustive enumeration of
// the full-dimensional linearity cones of piecewise-affine F, and a
// min-norm-point convex hull membership test.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <future>
#include <limits>
#include <map>
#include <optional>
#include <vector>

#include <json.hpp>

#include "dcjac/dcmax.hpp"
#include "dcjac/error.hpp"
#include "dcjac/random.hpp"
#include "dcjac/types.hpp"

namespace dcjac {

inline constexpr double kDefaultHullTol = 1e-8;

// --- min-norm point ---------------------------------------------------------

struct MinNormResult {
  Vector point;
  std::vector<double> weights;  // convex weights over the input points
  // Certified lower bound on the distance from the origin to the hull:
  // min_i <x, p_i> / |x| for the final iterate x.
  double lower_bound = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
};

// Wolfe's algorithm. `stop_above` ends the search early once the lower bound
// exceeds it (the caller only needs to know the origin is that far away).
inline MinNormResult min_norm_point(const std::vector<Vector>& pts, std::size_t max_iterations,
                                    double stop_above = std::numeric_limits<double>::infinity()) {
  if (pts.empty()) throw Error("min_norm_point needs at least one point");
  const std::size_t np = pts.size();
  double max_sq = 0.0;
  for (const auto& p : pts) max_sq = std::max(max_sq, p.squaredNorm());

  std::vector<std::size_t> corral;
  std::vector<double> lam;
  {
    std::size_t best = 0;
    for (std::size_t i = 1; i < np; ++i)
      if (pts[i].squaredNorm() < pts[best].squaredNorm()) best = i;
    corral.push_back(best);
    lam.push_back(1.0);
  }

  MinNormResult out;
  Vector x = pts[corral[0]];
  auto combine = [&] {
    x.setZero(pts[0].size());
    for (std::size_t s = 0; s < corral.size(); ++s) x += lam[s] * pts[corral[s]];
  };
  auto finish = [&](bool converged) {
    out.point = x;
    out.weights.assign(np, 0.0);
    for (std::size_t s = 0; s < corral.size(); ++s) out.weights[corral[s]] += lam[s];
    const double norm = x.norm();
    if (norm == 0.0) {
      out.lower_bound = 0.0;
    } else {
      double min_dot = std::numeric_limits<double>::infinity();
      for (const auto& p : pts) min_dot = std::min(min_dot, x.dot(p));
      out.lower_bound = std::max(0.0, min_dot / norm);
    }
    out.converged = converged;
    return out;
  };

  constexpr double kGap = 1e-16;
  constexpr double kPos = 1e-14;
  for (;;) {
    if (x.squaredNorm() == 0.0) return finish(true);
    std::size_t j = 0;
    double min_dot = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < np; ++i) {
      const double d = x.dot(pts[i]);
      if (d < min_dot) min_dot = d, j = i;
    }
    if (min_dot > 0.0 && min_dot / x.norm() > stop_above) return finish(true);
    if (x.squaredNorm() - min_dot <= kGap * max_sq) return finish(true);
    if (std::find(corral.begin(), corral.end(), j) != corral.end()) return finish(true);
    corral.push_back(j);
    lam.push_back(0.0);

    for (;;) {
      if (++out.iterations > max_iterations) return finish(false);
      const Eigen::Index k = Eigen::Index(corral.size());
      Matrix A = Matrix::Zero(k + 1, k + 1);
      for (Eigen::Index a = 0; a < k; ++a) {
        for (Eigen::Index b = 0; b < k; ++b) A(a, b) = pts[corral[a]].dot(pts[corral[b]]);
        A(a, k) = A(k, a) = 1.0;
      }
      Vector rhs = Vector::Zero(k + 1);
      rhs[k] = 1.0;
      Eigen::FullPivLU<Matrix> lu(A);
      if (lu.rank() < k + 1) {
        // Affinely dependent corral; the newest point adds nothing.
        corral.pop_back();
        lam.pop_back();
        combine();
        return finish(true);
      }
      const Vector mu = lu.solve(rhs);
      bool interior = true;
      for (Eigen::Index s = 0; s < k; ++s)
        if (mu[s] <= kPos) interior = false;
      if (interior) {
        for (Eigen::Index s = 0; s < k; ++s) lam[std::size_t(s)] = mu[s];
        combine();
        break;
      }
      double theta = 1.0;
      for (Eigen::Index s = 0; s < k; ++s) {
        const double l = lam[std::size_t(s)];
        if (mu[s] <= kPos && l - mu[s] > 0.0) theta = std::min(theta, l / (l - mu[s]));
      }
      for (Eigen::Index s = 0; s < k; ++s) lam[std::size_t(s)] = theta * mu[s] + (1.0 - theta) * lam[std::size_t(s)];
      std::vector<std::size_t> keep_c;
      std::vector<double> keep_l;
      for (std::size_t s = 0; s < corral.size(); ++s)
        if (lam[s] > kPos) keep_c.push_back(corral[s]), keep_l.push_back(lam[s]);
      if (keep_c.empty()) {
        // Cannot happen in exact arithmetic; keep the heaviest point.
        const auto it = std::max_element(lam.begin(), lam.end());
        keep_c.push_back(corral[std::size_t(it - lam.begin())]);
        keep_l.push_back(1.0);
      }
      double sum = 0.0;
      for (double l : keep_l) sum += l;
      for (double& l : keep_l) l /= sum;
      corral = std::move(keep_c);
      lam = std::move(keep_l);
      combine();
    }
  }
}

// --- hull membership --------------------------------------------------------

struct HullCertificate {
  bool member = false;
  bool inconclusive = false;
  std::vector<double> weights;  // over the candidates as given; empty unless member
  double distance = 0.0;        // Frobenius distance from query to the best combination found
  double violation = 0.0;       // certified lower bound on the distance; > tol when not member
  std::size_t iterations = 0;
};

inline Vector flatten(const Matrix& a) { return Eigen::Map<const Vector>(a.data(), a.size()); }

// Decides whether `query` lies within `tol` (Frobenius) of co(candidates).
// Duplicated candidates are merged before the search; their weight is
// reported on the first occurrence.
inline HullCertificate hull_membership(const Matrix& query, const std::vector<Matrix>& candidates,
                                       double tol = kDefaultHullTol, std::size_t max_iterations = 0) {
  if (candidates.empty()) throw Error("hull_membership needs at least one candidate");
  std::vector<Vector> pts;
  std::vector<std::size_t> origin_of;  // unique point -> first candidate index
  for (std::size_t c = 0; c < candidates.size(); ++c) {
    if (candidates[c].rows() != query.rows() || candidates[c].cols() != query.cols())
      throw Error("candidate shape does not match query");
    Vector p = flatten(candidates[c]) - flatten(query);
    bool seen = false;
    for (const auto& q : pts)
      if (q == p) seen = true;
    if (!seen) {
      pts.push_back(std::move(p));
      origin_of.push_back(c);
    }
  }
  if (max_iterations == 0)
    max_iterations = std::max<std::size_t>(100, 10 * candidates.size() * std::size_t(query.size()));

  const MinNormResult r = min_norm_point(pts, max_iterations, tol);
  HullCertificate cert;
  cert.iterations = r.iterations;
  cert.distance = r.point.norm();
  cert.violation = r.lower_bound;
  if (cert.distance <= tol) {
    cert.member = true;
    cert.weights.assign(candidates.size(), 0.0);
    for (std::size_t u = 0; u < pts.size(); ++u) cert.weights[origin_of[u]] = r.weights[u];
  } else if (!r.converged && r.lower_bound <= tol) {
    cert.inconclusive = true;
  }
  return cert;
}

// --- sampling ---------------------------------------------------------------

struct LimitingSample {
  Vector point;
  Matrix jacobian;
  std::vector<std::pair<std::size_t, std::size_t>> profile;
};

struct SamplingOptions {
  double radius = 1e-3;
  std::size_t count = 4096;
  std::uint64_t seed = 42;
  double tol_act = kDefaultTolAct;
  unsigned workers = 1;
};

struct LimitingSampleSet {
  std::vector<LimitingSample> samples;  // one per distinct active profile, in discovery order
  std::size_t drawn = 0;
  std::size_t kept = 0;  // draws that landed on a differentiability point
};

namespace detail {

inline constexpr std::size_t kChunk = 512;

struct ChunkResult {
  std::vector<LimitingSample> firsts;
  std::size_t kept = 0;
};

inline ChunkResult sample_chunk(const DCMaxFn& F, const Vector& x, const SamplingOptions& opt, std::size_t chunk) {
  ChunkResult out;
  Rng rng = Rng::substream(opt.seed, chunk);
  std::map<std::vector<std::pair<std::size_t, std::size_t>>, bool> seen;
  const std::size_t begin = chunk * kChunk;
  const std::size_t end = std::min(opt.count, begin + kChunk);
  for (std::size_t s = begin; s < end; ++s) {
    const Vector p = x + rng.in_ball(x.size(), opt.radius);
    auto sp = classical_jacobian(F, p, opt.tol_act);
    if (!sp) continue;
    ++out.kept;
    if (seen.emplace(sp->profile, true).second)
      out.firsts.push_back({p, std::move(sp->jacobian), std::move(sp->profile)});
  }
  return out;
}

}  // namespace detail

// Uniform draws in B(x, radius), kept where F is classically differentiable,
// deduplicated by active profile. Draws are split into fixed chunks with
// their own substreams, so the result does not depend on `workers`.
inline LimitingSampleSet sample_limiting_jacobians(const DCMaxFn& F, const Vector& x, const SamplingOptions& opt = {}) {
  if (!(opt.radius > 0.0)) throw Error("sampling radius must be positive");
  if (opt.count == 0) throw Error("sample count must be at least 1");
  if (std::size_t(x.size()) != F.n()) throw Error("point length does not match n");

  const std::size_t chunks = (opt.count + detail::kChunk - 1) / detail::kChunk;
  std::vector<detail::ChunkResult> results(chunks);
  const unsigned workers = std::max(1u, opt.workers);
  for (std::size_t first = 0; first < chunks; first += workers) {
    std::vector<std::future<detail::ChunkResult>> jobs;
    for (std::size_t c = first; c < std::min(chunks, first + workers); ++c) {
      if (workers == 1) results[c] = detail::sample_chunk(F, x, opt, c);
      else jobs.push_back(std::async(std::launch::async, [&, c] { return detail::sample_chunk(F, x, opt, c); }));
    }
    for (std::size_t a = 0; a < jobs.size(); ++a) results[first + a] = jobs[a].get();
  }

  LimitingSampleSet out;
  out.drawn = opt.count;
  std::map<std::vector<std::pair<std::size_t, std::size_t>>, bool> seen;
  for (auto& r : results) {
    out.kept += r.kept;
    for (auto& s : r.firsts)
      if (seen.emplace(s.profile, true).second) out.samples.push_back(std::move(s));
  }
  return out;
}

// --- brute-force subdifferential for piecewise-affine F ---------------------

struct BruteForceOptions {
  double probe_radius = 1e-3;
  std::size_t probe_count = 4096;
  std::uint64_t seed = 42;
  double tol_act = kDefaultTolAct;
  unsigned workers = 1;
  // Upper bound on the number of joint selections tried by the enumeration.
  std::size_t max_enumerated = 200000;
};

struct SubdifferentialEstimate {
  std::vector<Matrix> jacobians;  // distinct within 1e-10
  std::size_t profiles_found = 0;    // distinct profiles from sampling
  std::size_t samples_kept = 0;
  bool enumerated = false;
  std::size_t enumerated_profiles = 0;  // feasible cones from enumeration
};

inline bool is_affine(const DCMaxFn& F, const Vector& x, std::uint64_t seed = 42) {
  Rng rng(seed ^ 0xA5A5A5A5ULL);
  std::vector<Vector> probes;
  for (int a = 0; a < 3; ++a) probes.push_back(x + rng.in_ball(x.size(), 1.0));
  auto check = [&](const MaxFn& f) {
    for (const auto& piece : f.pieces()) {
      const Vector g0 = piece.grad(x);
      for (const auto& p : probes) {
        Vector g;
        try {
          g = piece.grad(p);
        } catch (const DomainError&) {
          return false;
        }
        if ((g - g0).cwiseAbs().maxCoeff() > 1e-10) return false;
      }
    }
    return true;
  };
  for (const auto& c : F.components())
    if (!check(c.g) || !check(c.h)) return false;
  return true;
}

namespace detail {

// Distinct active gradients of one max at x.
inline std::vector<Vector> distinct_active_gradients(const MaxFn& f, const Vector& x, double tol_act) {
  std::vector<Vector> out;
  for (std::size_t j : active_set(f, x, tol_act).indices) {
    Vector g = f.piece(j).grad(x);
    bool seen = false;
    for (const auto& o : out)
      if ((o - g).cwiseAbs().maxCoeff() <= 1e-12) seen = true;
    if (!seen) out.push_back(std::move(g));
  }
  return out;
}

// Open cone {d : (a - a_sel) . d < 0 for every other a} for all chosen
// selections is nonempty iff 0 is not in the hull of those difference rows
// (Gordan's alternative).
inline bool cone_nonempty(const std::vector<Vector>& rows) {
  if (rows.empty()) return true;
  double scale = 0.0;
  for (const auto& r : rows) scale = std::max(scale, r.cwiseAbs().maxCoeff());
  const double threshold = 1e-9 * (1.0 + scale);
  const MinNormResult r = min_norm_point(rows, 1000 * rows.size(), threshold);
  return r.lower_bound > threshold;
}

inline void add_distinct(std::vector<Matrix>& set, Matrix m) {
  for (const auto& o : set)
    if ((o - m).cwiseAbs().maxCoeff() <= 1e-10) return;
  set.push_back(std::move(m));
}

}  // namespace detail

// Jacobians of the selection functions that are active on full-dimensional
// regions touching x. Uses dense sampling in B(x, probe_radius) plus, when
// the number of joint selections is within max_enumerated, an exact
// enumeration of the linearity cones of the local piecewise-linear model.
inline SubdifferentialEstimate brute_force_subdifferential(const DCMaxFn& F, const Vector& x,
                                                           const BruteForceOptions& opt = {}) {
  if (!is_affine(F, x, opt.seed)) throw NonAffineError("brute-force subdifferential requires affine pieces");
  SubdifferentialEstimate out;

  const LimitingSampleSet sampled =
      sample_limiting_jacobians(F, x, {opt.probe_radius, opt.probe_count, opt.seed, opt.tol_act, opt.workers});
  out.profiles_found = sampled.samples.size();
  out.samples_kept = sampled.kept;
  for (const auto& s : sampled.samples) detail::add_distinct(out.jacobians, s.jacobian);

  // Per component, all (g class, h class) pairs.
  struct Choice {
    Vector row;
    std::vector<Vector> constraints;
  };
  std::vector<std::vector<Choice>> per_component;
  std::size_t combos = 1;
  for (const auto& c : F.components()) {
    const auto gs = detail::distinct_active_gradients(c.g, x, opt.tol_act);
    const auto hs = detail::distinct_active_gradients(c.h, x, opt.tol_act);
    std::vector<Choice> choices;
    for (std::size_t a = 0; a < gs.size(); ++a) {
      for (std::size_t b = 0; b < hs.size(); ++b) {
        Choice ch{gs[a] - hs[b], {}};
        for (std::size_t o = 0; o < gs.size(); ++o)
          if (o != a) ch.constraints.push_back(gs[o] - gs[a]);
        for (std::size_t o = 0; o < hs.size(); ++o)
          if (o != b) ch.constraints.push_back(hs[o] - hs[b]);
        choices.push_back(std::move(ch));
      }
    }
    combos = std::min<std::size_t>(combos * choices.size(), opt.max_enumerated + 1);
    per_component.push_back(std::move(choices));
  }
  if (combos > opt.max_enumerated) return out;

  out.enumerated = true;
  std::vector<std::size_t> pick(F.m(), 0);
  for (;;) {
    std::vector<Vector> rows;
    Matrix jac(static_cast<Eigen::Index>(F.m()), static_cast<Eigen::Index>(F.n()));
    for (std::size_t i = 0; i < F.m(); ++i) {
      const Choice& ch = per_component[i][pick[i]];
      jac.row(Eigen::Index(i)) = ch.row.transpose();
      rows.insert(rows.end(), ch.constraints.begin(), ch.constraints.end());
    }
    if (detail::cone_nonempty(rows)) {
      ++out.enumerated_profiles;
      detail::add_distinct(out.jacobians, std::move(jac));
    }
    std::size_t i = 0;
    while (i < F.m() && ++pick[i] == per_component[i].size()) pick[i++] = 0;
    if (i == F.m()) break;
  }
  return out;
}

// --- finite differences -----------------------------------------------------

struct FiniteDiffResult {
  Vector value;                  // estimate at the smallest t
  std::vector<Vector> estimates;  // one per schedule entry
  double convergence = 0.0;       // max |last - second to last|, 0 for a single t
};

inline FiniteDiffResult finite_diff_dd(const DCMaxFn& F, const Vector& x, const Vector& y,
                                       const std::vector<double>& t_schedule) {
  if (t_schedule.empty()) throw Error("t schedule must not be empty");
  for (std::size_t a = 0; a < t_schedule.size(); ++a) {
    if (!(t_schedule[a] > 0.0)) throw Error("t schedule must be positive");
    if (a > 0 && !(t_schedule[a] < t_schedule[a - 1])) throw Error("t schedule must be decreasing");
  }
  FiniteDiffResult out;
  const Vector f0 = eval_F(F, x);
  for (double t : t_schedule) out.estimates.push_back((eval_F(F, x + t * y) - f0) / t);
  out.value = out.estimates.back();
  if (out.estimates.size() > 1)
    out.convergence = (out.estimates.back() - out.estimates[out.estimates.size() - 2]).cwiseAbs().maxCoeff();
  return out;
}

inline nlohmann::json hull_report(const HullCertificate& cert, const SubdifferentialEstimate& est) {
  return {{"member", cert.member},
          {"inconclusive", cert.inconclusive},
          {"weights", cert.weights},
          {"distance", cert.distance},
          {"violation", cert.member ? 0.0 : cert.violation},
          {"profiles_found", est.profiles_found},
          {"samples_kept", est.samples_kept},
          {"enumerated", est.enumerated},
          {"enumerated_profiles", est.enumerated_profiles},
          {"candidates", est.jacobians.size()}};
}

}  // namespace dcjac
