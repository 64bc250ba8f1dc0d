#pragma once

// F = G - H where every component of G and H is a pointwise max of
// finitely many smooth pieces.

#include <algorithm>
#include <cstddef>
#include <fstream>
#include <limits>
#include <optional>
#include <utility>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dcjac/error.hpp"
#include "dcjac/expr.hpp"
#include "dcjac/types.hpp"

namespace dcjac {

inline constexpr double kDefaultTolAct = 1e-9;

class MaxFn {
 public:
  explicit MaxFn(std::vector<SmoothFn> pieces) : pieces_(std::move(pieces)) {
    if (pieces_.empty()) throw SchemaError("empty piece list");
    for (const auto& p : pieces_)
      if (p.dim() != pieces_.front().dim()) throw SchemaError("pieces disagree on dimension");
  }

  std::size_t size() const { return pieces_.size(); }
  std::size_t dim() const { return pieces_.front().dim(); }
  const SmoothFn& piece(std::size_t j) const { return pieces_.at(j); }
  const std::vector<SmoothFn>& pieces() const { return pieces_; }

  Vector values(const Vector& x) const {
    Vector v(static_cast<Eigen::Index>(size()));
    for (std::size_t j = 0; j < size(); ++j) v[Eigen::Index(j)] = pieces_[j].eval(x);
    return v;
  }

  double eval(const Vector& x) const { return values(x).maxCoeff(); }

 private:
  std::vector<SmoothFn> pieces_;
};

// Pieces within tolerance_used of the maximum. Never empty.
struct ActiveSet {
  std::vector<std::size_t> indices;
  double max_value = 0.0;
  double tolerance_used = 0.0;
};

// Keeps j with v_j >= v_max - tol_act * (1 + |v_max|).
inline ActiveSet active_set_from_values(const Vector& values, double tol_act) {
  if (tol_act < 0.0) throw Error("tol_act must be non-negative");
  ActiveSet out;
  out.max_value = values.maxCoeff();
  out.tolerance_used = tol_act * (1.0 + std::abs(out.max_value));
  for (Eigen::Index j = 0; j < values.size(); ++j)
    if (values[j] >= out.max_value - out.tolerance_used) out.indices.push_back(std::size_t(j));
  return out;
}

inline ActiveSet active_set(const MaxFn& f, const Vector& x, double tol_act = kDefaultTolAct) {
  return active_set_from_values(f.values(x), tol_act);
}

// f'(x; y) = max over active j of grad f_j(x) . y
inline double dd_max(const MaxFn& f, const Vector& x, const Vector& y, double tol_act = kDefaultTolAct) {
  if (y.size() != x.size()) throw Error("direction length does not match point");
  const ActiveSet act = active_set(f, x, tol_act);
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t j : act.indices) best = std::max(best, f.piece(j).grad(x).dot(y));
  return best;
}

struct Component {
  MaxFn g;
  MaxFn h;
};

class DCMaxFn {
 public:
  DCMaxFn(std::size_t n, std::vector<Component> components) : n_(n), components_(std::move(components)) {
    if (n_ == 0) throw SchemaError("n must be positive");
    if (components_.empty()) throw SchemaError("m must be positive");
    for (const auto& c : components_)
      if (c.g.dim() != n_ || c.h.dim() != n_) throw SchemaError("dimension mismatch between n and pieces");
  }

  std::size_t n() const { return n_; }
  std::size_t m() const { return components_.size(); }
  const Component& component(std::size_t i) const { return components_.at(i); }
  const std::vector<Component>& components() const { return components_; }

 private:
  std::size_t n_;
  std::vector<Component> components_;
};

inline Vector eval_F(const DCMaxFn& F, const Vector& x) {
  if (std::size_t(x.size()) != F.n()) throw Error("point length does not match n");
  Vector out(static_cast<Eigen::Index>(F.m()));
  for (std::size_t i = 0; i < F.m(); ++i)
    out[Eigen::Index(i)] = F.component(i).g.eval(x) - F.component(i).h.eval(x);
  return out;
}

inline Vector dd_F(const DCMaxFn& F, const Vector& x, const Vector& y, double tol_act = kDefaultTolAct) {
  if (std::size_t(x.size()) != F.n()) throw Error("point length does not match n");
  Vector out(static_cast<Eigen::Index>(F.m()));
  for (std::size_t i = 0; i < F.m(); ++i)
    out[Eigen::Index(i)] = dd_max(F.component(i).g, x, y, tol_act) - dd_max(F.component(i).h, x, y, tol_act);
  return out;
}

// Jacobian at a point where every component is classically differentiable,
// which we detect as: all active g-gradients coincide and all active
// h-gradients coincide. The profile records the smallest active index
// of each max, so identical duplicate pieces map to one profile.
struct SmoothPoint {
  Matrix jacobian;
  std::vector<std::pair<std::size_t, std::size_t>> profile;
};

namespace detail {

inline std::optional<std::pair<std::size_t, Vector>> coinciding_gradient(const MaxFn& f, const Vector& p,
                                                                         double tol_act, double coincide_tol) {
  const ActiveSet act = active_set(f, p, tol_act);
  Vector first = f.piece(act.indices.front()).grad(p);
  for (std::size_t a = 1; a < act.indices.size(); ++a) {
    const Vector other = f.piece(act.indices[a]).grad(p);
    for (Eigen::Index l = 0; l < first.size(); ++l)
      if (!within_hybrid(first[l], other[l], first[l], coincide_tol)) return std::nullopt;
  }
  return std::make_pair(act.indices.front(), std::move(first));
}

}  // namespace detail

inline std::optional<SmoothPoint> classical_jacobian(const DCMaxFn& F, const Vector& p,
                                                     double tol_act = kDefaultTolAct, double coincide_tol = 1e-12) {
  SmoothPoint out{Matrix(Eigen::Index(F.m()), Eigen::Index(F.n())), {}};
  for (std::size_t i = 0; i < F.m(); ++i) {
    auto g = detail::coinciding_gradient(F.component(i).g, p, tol_act, coincide_tol);
    if (!g) return std::nullopt;
    auto h = detail::coinciding_gradient(F.component(i).h, p, tol_act, coincide_tol);
    if (!h) return std::nullopt;
    out.jacobian.row(Eigen::Index(i)) = (g->second - h->second).transpose();
    out.profile.emplace_back(g->first, h->first);
  }
  return out;
}

inline nlohmann::json to_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

inline nlohmann::json to_json(const Matrix& a) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < a.rows(); ++i) rows.push_back(to_json(Vector(a.row(i).transpose())));
  return rows;
}

// --- problem files ---------------------------------------------------------

namespace detail {

inline MaxFn load_max(const nlohmann::json& list, std::size_t n, const std::string& where,
                      std::vector<std::string>& diagnostics) {
  if (!list.is_array()) {
    diagnostics.push_back(where + ": expected an array of expression strings");
    return MaxFn({SmoothFn(Expr::constant(0.0), n)});
  }
  if (list.empty()) {
    diagnostics.push_back(where + ": empty piece list");
    return MaxFn({SmoothFn(Expr::constant(0.0), n)});
  }
  std::vector<SmoothFn> pieces;
  for (std::size_t j = 0; j < list.size(); ++j) {
    const std::string at = where + "[" + std::to_string(j) + "]";
    if (!list[j].is_string()) {
      diagnostics.push_back(at + ": expected a string");
      continue;
    }
    try {
      pieces.push_back(SmoothFn::parse(list[j].get<std::string>(), n));
    } catch (const ParseError& e) {
      diagnostics.push_back(at + ": " + e.what());
    }
  }
  if (pieces.size() != list.size()) return MaxFn({SmoothFn(Expr::constant(0.0), n)});
  return MaxFn(std::move(pieces));
}

inline std::size_t positive_int(const nlohmann::json& doc, const char* key, std::vector<std::string>& diagnostics) {
  if (!doc.contains(key)) {
    diagnostics.push_back(std::string("missing field '") + key + "'");
    return 0;
  }
  const auto& v = doc[key];
  if (!v.is_number_integer() || v.get<long long>() <= 0) {
    diagnostics.push_back(std::string("'") + key + "' must be a positive integer");
    return 0;
  }
  return std::size_t(v.get<long long>());
}

inline std::string join(const std::vector<std::string>& lines) {
  std::string out;
  for (const auto& l : lines) out += (out.empty() ? "" : "\n") + l;
  return out;
}

}  // namespace detail

// Validates the whole document and reports every problem found at once.
inline DCMaxFn load_problem(const nlohmann::json& doc) {
  std::vector<std::string> diagnostics;
  if (!doc.is_object()) throw SchemaError("problem document must be a JSON object");
  const std::size_t n = detail::positive_int(doc, "n", diagnostics);
  const std::size_t m = detail::positive_int(doc, "m", diagnostics);
  if (!diagnostics.empty()) throw SchemaError(detail::join(diagnostics));

  if (!doc.contains("components") || !doc["components"].is_array())
    throw SchemaError("missing array 'components'");
  const auto& comps = doc["components"];
  if (comps.size() != m)
    throw SchemaError("dimension mismatch: m = " + std::to_string(m) + " but " + std::to_string(comps.size()) +
                      " components given");

  std::vector<Component> components;
  for (std::size_t i = 0; i < m; ++i) {
    const std::string where = "components[" + std::to_string(i) + "]";
    const auto& c = comps[i];
    if (!c.is_object() || !c.contains("g")) {
      diagnostics.push_back(where + ": expected an object with a 'g' list");
      continue;
    }
    MaxFn g = detail::load_max(c["g"], n, where + ".g", diagnostics);
    MaxFn h = c.contains("h") ? detail::load_max(c["h"], n, where + ".h", diagnostics)
                              : MaxFn({SmoothFn(Expr::constant(0.0), n)});
    components.push_back({std::move(g), std::move(h)});
  }
  if (!diagnostics.empty()) throw SchemaError(detail::join(diagnostics));
  return DCMaxFn(n, std::move(components));
}

inline DCMaxFn load_problem_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open problem file '" + path + "'");
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw SchemaError(path + ": " + e.what());
  }
  return load_problem(doc);
}

inline nlohmann::json to_json(const DCMaxFn& F) {
  nlohmann::json comps = nlohmann::json::array();
  for (const auto& c : F.components()) {
    nlohmann::json g = nlohmann::json::array(), h = nlohmann::json::array();
    for (const auto& p : c.g.pieces()) g.push_back(to_string(p.expr()));
    for (const auto& p : c.h.pieces()) h.push_back(to_string(p.expr()));
    comps.push_back({{"g", g}, {"h", h}});
  }
  return {{"n", F.n()}, {"m", F.m()}, {"components", comps}};
}

}  // namespace dcjac
