#pragma once

// dcjac command-line front end: jac | verify | newton | dd.

#include <charconv>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "dcjac/dcmax.hpp"
#include "dcjac/error.hpp"
#include "dcjac/jacobian.hpp"
#include "dcjac/newton.hpp"
#include "dcjac/oracle.hpp"
#include "dcjac/random_instance.hpp"

namespace dcjac::cli {

enum ExitCode : int {
  kOk = 0,
  kCheckFailed = 1,
  kBadInput = 2,
  kDomain = 3,
  kSingular = 4,
  kNotConverged = 5,
};

struct RunConfig {
  std::string command;
  std::string problem;
  std::string random;
  std::string point;
  std::string direction;
  double tol_act = kDefaultTolAct;
  double tol_tie = kDefaultTolTie;
  double hull_tol = kDefaultHullTol;
  std::string convention = "min";
  std::uint64_t seed = 42;
  bool json = false;
  // verify
  double radius = 1e-3;
  std::size_t samples = 4096;
  std::size_t cone_samples = 200;
  // newton
  std::string x0;
  double tol = 1e-10;
  std::size_t max_iters = 50;
  std::vector<std::string> ncp;
};

// Comma-separated decimals.
inline Vector parse_point(const std::string& text) {
  std::vector<double> values;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    if (b == std::string::npos) throw SchemaError("empty coordinate in point '" + text + "'");
    const std::string tok = item.substr(b, e - b + 1);
    double v = 0.0;
    const char* first = tok.data();
    if (*first == '+') ++first;
    auto [ptr, ec] = std::from_chars(first, tok.data() + tok.size(), v);
    if (ec != std::errc{} || ptr != tok.data() + tok.size())
      throw SchemaError("bad coordinate '" + tok + "' in point '" + text + "'");
    values.push_back(v);
  }
  if (values.empty()) throw SchemaError("empty point");
  return Eigen::Map<Vector>(values.data(), Eigen::Index(values.size()));
}

inline std::vector<std::vector<double>> read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open '" + path + "'");
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const Vector r = parse_point(line.substr(0, line.find_last_not_of("\r") + 1));
    rows.emplace_back(r.data(), r.data() + r.size());
  }
  if (rows.empty()) throw SchemaError("'" + path + "' holds no numbers");
  return rows;
}

inline std::pair<Matrix, Vector> load_ncp(const std::string& m_path, const std::string& q_path) {
  const auto m_rows = read_csv(m_path);
  const std::size_t n = m_rows.size();
  Matrix M(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    if (m_rows[i].size() != n) throw SchemaError("M must be square");
    for (std::size_t l = 0; l < n; ++l) M(Eigen::Index(i), Eigen::Index(l)) = m_rows[i][l];
  }
  std::vector<double> q_flat;
  for (const auto& r : read_csv(q_path)) q_flat.insert(q_flat.end(), r.begin(), r.end());
  if (q_flat.size() != n) throw SchemaError("q must have " + std::to_string(n) + " entries");
  return {M, Eigen::Map<Vector>(q_flat.data(), Eigen::Index(n))};
}

inline void check_config(const RunConfig& cfg) {
  if (!(cfg.tol_act > 0.0) || !(cfg.tol_tie > 0.0) || !(cfg.hull_tol > 0.0) || !(cfg.tol > 0.0))
    throw SchemaError("tolerances must be positive");
  if (!(cfg.radius > 0.0)) throw SchemaError("--radius must be positive");
  if (cfg.samples == 0 || cfg.cone_samples == 0) throw SchemaError("sample counts must be positive");
  if (cfg.convention != "min" && cfg.convention != "max") throw SchemaError("--convention must be min or max");
}

inline DCMaxFn load_from_config(const RunConfig& cfg) {
  if (!cfg.random.empty()) {
    try {
      return random_affine_instance(parse_random_spec(cfg.random));
    } catch (const SchemaError&) {
      throw;
    } catch (const Error& e) {
      throw SchemaError(e.what());
    }
  }
  if (cfg.problem.empty()) throw SchemaError("a problem file (-p) or --random spec is required");
  return load_problem_file(cfg.problem);
}

inline Vector point_for(const RunConfig& cfg, const DCMaxFn& F, const std::string& text) {
  if (text.empty()) {
    if (!cfg.random.empty()) return Vector::Zero(Eigen::Index(F.n()));
    throw SchemaError("a point (-x) is required");
  }
  Vector x = parse_point(text);
  if (std::size_t(x.size()) != F.n())
    throw SchemaError("point has " + std::to_string(x.size()) + " coordinates, problem has n = " +
                      std::to_string(F.n()));
  return x;
}

inline A1Options a1_options(const RunConfig& cfg) {
  return {cfg.tol_act, cfg.tol_tie, parse_convention(cfg.convention)};
}

inline nlohmann::json selection_json(const SelectionResult& sel) {
  nlohmann::json comps = nlohmann::json::array();
  for (const auto& c : sel.components) {
    comps.push_back({{"g_active", c.g_active.indices},
                     {"h_active", c.h_active.indices},
                     {"g_max", c.g_active.max_value},
                     {"h_max", c.h_active.max_value},
                     {"t_chain", c.t_chain},
                     {"s_chain", c.s_chain},
                     {"j", c.j},
                     {"k", c.k}});
  }
  return {{"convention", std::string(to_string(sel.convention))}, {"components", comps}};
}

namespace detail {

inline std::string join_indices(const IndexSet& s) {
  std::string out = "{";
  for (std::size_t a = 0; a < s.size(); ++a) out += (a ? "," : "") + std::to_string(s[a]);
  return out + "}";
}

inline std::string format_row(const Vector& v) {
  std::ostringstream os;
  os.precision(17);
  os << "[";
  for (Eigen::Index l = 0; l < v.size(); ++l) os << (l ? ", " : "") << v[l];
  os << "]";
  return os.str();
}

}  // namespace detail

inline int cmd_jac(const RunConfig& cfg, std::ostream& out) {
  const DCMaxFn F = load_from_config(cfg);
  const Vector x = point_for(cfg, F, cfg.point);
  const JacobianElement je = algorithm_a1(F, x, a1_options(cfg));
  const GammaSet gamma = gamma_set(F, x, je.selection, cfg.tol_tie);
  const WitnessDirection w = witness_direction(gamma, F.n(), je.selection.convention);

  if (cfg.json) {
    nlohmann::json j{{"xi", to_json(je.xi)},
                     {"selection", selection_json(je.selection)},
                     {"gamma_count", gamma.size()},
                     {"y_bar", to_json(w.y_bar)},
                     {"epsilon", w.epsilon},
                     {"M", w.M},
                     {"lambda", to_json(w.lambda)}};
    out << j.dump(2) << "\n";
    return kOk;
  }
  out << "convention: " << cfg.convention << "\n";
  for (std::size_t i = 0; i < F.m(); ++i) {
    const auto& c = je.selection.components[i];
    out << "component " << i << ": J = " << detail::join_indices(c.g_active.indices)
        << " T = " << detail::join_indices(c.T()) << " j = " << c.j
        << "; K = " << detail::join_indices(c.h_active.indices) << " S = " << detail::join_indices(c.S())
        << " k = " << c.k << "\n";
  }
  out << "xi:\n";
  for (Eigen::Index i = 0; i < je.xi.rows(); ++i) out << "  " << detail::format_row(je.xi.row(i).transpose()) << "\n";
  out << "gamma_count: " << gamma.size() << "\n";
  out << "y_bar: " << detail::format_row(w.y_bar) << "\n";
  return kOk;
}

inline int cmd_verify(const RunConfig& cfg, std::ostream& out) {
  const DCMaxFn F = load_from_config(cfg);
  const Vector x = point_for(cfg, F, cfg.point);
  const JacobianElement je = algorithm_a1(F, x, a1_options(cfg));

  nlohmann::json checks = nlohmann::json::array();
  std::vector<std::string> failed, inconclusive;
  auto record = [&](const std::string& name, const std::string& status, nlohmann::json details) {
    details["name"] = name;
    details["status"] = status;
    if (status == "fail") failed.push_back(name);
    if (status == "inconclusive") inconclusive.push_back(name);
    checks.push_back(std::move(details));
  };

  const double spread = max_gradient_spread(F, x, je.selection);
  record("gradient_coincidence", spread <= 1e-9 ? "pass" : "fail", {{"max_spread", spread}});

  const GammaSet gamma = gamma_set(F, x, je.selection, cfg.tol_tie);
  std::optional<WitnessDirection> w;
  try {
    w = witness_direction(gamma, F.n(), je.selection.convention);
    const WitnessCheck wc = check_witness(gamma, *w);
    record("witness_validity", wc.ok() ? "pass" : "fail",
           {{"gamma_count", gamma.size()},
            {"failures", wc.failures},
            {"worst_margin_ratio", gamma.empty() ? nlohmann::json(nullptr) : nlohmann::json(wc.worst_margin_ratio)},
            {"y_bar", to_json(w->y_bar)}});
  } catch (const SelectionError& e) {
    record("witness_validity", "fail", {{"error", e.what()}});
  }

  if (w) {
    const ConeLinearityReport cr = verify_cone_linearity(F, x, je, gamma, *w, {cfg.cone_samples, cfg.seed, 0.5, cfg.tol_act});
    record("cone_linearity", cr.inconclusive ? "inconclusive" : cr.pass ? "pass" : "fail",
           {{"kept", cr.kept},
            {"attempts", cr.attempts},
            {"max_discrepancy", cr.max_discrepancy},
            {"max_scaled_discrepancy", cr.max_scaled_discrepancy}});

    const LimitInclusionReport lr = verify_limit_inclusion(F, x, je.xi, w->y_bar, default_t_schedule(), cfg.tol_act);
    nlohmann::json pts = nlohmann::json::array();
    for (const auto& p : lr.points)
      pts.push_back(p.degenerate ? nlohmann::json{{"t", p.t}, {"skipped", "non-singleton active set"}}
                                 : nlohmann::json{{"t", p.t}, {"distance", p.distance}});
    record("limit_inclusion", lr.all_degenerate ? "inconclusive" : lr.pass ? "pass" : "fail",
           {{"points", pts}, {"tolerance", lr.tolerance}, {"final_distance", lr.final_distance}});
  } else {
    record("cone_linearity", "inconclusive", {{"reason", "no witness direction"}});
    record("limit_inclusion", "inconclusive", {{"reason", "no witness direction"}});
  }

  if (is_affine(F, x, cfg.seed)) {
    const SubdifferentialEstimate est =
        brute_force_subdifferential(F, x, {cfg.radius, cfg.samples, cfg.seed, cfg.tol_act, 1});
    if (est.jacobians.empty()) {
      record("hull_membership", "inconclusive", {{"reason", "no limiting Jacobians found"}});
    } else {
      const HullCertificate cert = hull_membership(je.xi, est.jacobians, cfg.hull_tol);
      record("hull_membership", cert.inconclusive ? "inconclusive" : cert.member ? "pass" : "fail",
             hull_report(cert, est));
    }
  } else {
    record("hull_membership", "skipped", {{"reason", "skipped: non-affine"}});
  }

  const bool pass = failed.empty();
  if (cfg.json) {
    nlohmann::json j{{"pass", pass},
                     {"xi", to_json(je.xi)},
                     {"convention", cfg.convention},
                     {"checks", checks},
                     {"failed", failed},
                     {"inconclusive", inconclusive}};
    out << j.dump(2) << "\n";
  } else {
    for (const auto& c : checks) out << c["name"].get<std::string>() << ": " << c["status"].get<std::string>() << "\n";
    out << (pass ? "PASS" : "FAIL") << "\n";
  }
  return pass ? kOk : kCheckFailed;
}

inline int cmd_newton(const RunConfig& cfg, std::ostream& out) {
  std::optional<std::pair<Matrix, Vector>> ncp;
  std::optional<DCMaxFn> F;
  if (!cfg.ncp.empty()) {
    if (cfg.ncp.size() != 2) throw SchemaError("--ncp takes M.csv and q.csv");
    ncp = load_ncp(cfg.ncp[0], cfg.ncp[1]);
    F = build_ncp(ncp->first, ncp->second);
  } else {
    F = load_from_config(cfg);
  }
  const std::string& start = cfg.x0.empty() ? cfg.point : cfg.x0;
  const Vector x0 = start.empty() ? Vector(Vector::Zero(Eigen::Index(F->n()))) : point_for(cfg, *F, start);

  NewtonOptions opt;
  opt.tol = cfg.tol;
  opt.max_iters = cfg.max_iters;
  opt.a1 = a1_options(cfg);
  const NewtonTrace trace = newton_solve(*F, x0, opt);

  std::vector<nlohmann::json> lines = trace_lines(trace);
  if (ncp) lines.push_back({{"complementarity", complementarity_residual(ncp->first, ncp->second, trace.solution())}});
  if (cfg.json) {
    for (const auto& l : lines) out << l.dump() << "\n";
  } else {
    for (std::size_t k = 0; k < trace.iterates.size(); ++k)
      out << "iter " << k << ": x = " << detail::format_row(trace.iterates[k].x)
          << " |F| = " << trace.iterates[k].residual << "\n";
    out << "status: " << to_string(trace.status) << " after " << trace.steps() << " steps\n";
    if (ncp) out << "complementarity residual: " << lines.back()["complementarity"].get<double>() << "\n";
  }
  switch (trace.status) {
    case NewtonStatus::Converged: return kOk;
    case NewtonStatus::Singular: return kSingular;
    default: return kNotConverged;
  }
}

inline int cmd_dd(const RunConfig& cfg, std::ostream& out) {
  const DCMaxFn F = load_from_config(cfg);
  const Vector x = point_for(cfg, F, cfg.point);
  if (cfg.direction.empty()) throw SchemaError("a direction (-y) is required");
  const Vector y = parse_point(cfg.direction);
  if (y.size() != x.size()) throw SchemaError("direction length does not match n");
  const Vector dd = dd_F(F, x, y, cfg.tol_act);
  const FiniteDiffResult fd = finite_diff_dd(F, x, y, {1e-3, 1e-4, 1e-5, 1e-6, 1e-7});
  if (cfg.json) {
    out << nlohmann::json{{"dd", to_json(dd)}, {"finite_difference", to_json(fd.value)}, {"fd_convergence", fd.convergence}}
               .dump(2)
        << "\n";
  } else {
    out << "dd: " << detail::format_row(dd) << "\n";
    out << "finite difference: " << detail::format_row(fd.value) << "\n";
  }
  return kOk;
}

inline void add_common(CLI::App* sub, RunConfig& cfg) {
  sub->add_option("-p,--problem", cfg.problem, "problem JSON file");
  sub->add_option("--random", cfg.random, "random affine instance, e.g. n=3,m=2,pieces=4,seed=7");
  sub->add_option("-x,--point", cfg.point, "point, comma-separated");
  sub->add_option("--tol-act", cfg.tol_act, "active-set tolerance");
  sub->add_option("--tol-tie", cfg.tol_tie, "selection tie tolerance");
  sub->add_option("--convention", cfg.convention, "selection convention: min or max");
  sub->add_option("--seed", cfg.seed, "random seed");
  sub->add_flag("--json", cfg.json, "emit JSON");
}

inline int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  RunConfig cfg;
  CLI::App app{"Clarke generalized Jacobian elements of difference-of-max functions", "dcjac"};
  app.require_subcommand(1);

  auto* jac = app.add_subcommand("jac", "compute xi and its certificate");
  add_common(jac, cfg);

  auto* verify = app.add_subcommand("verify", "run all correctness checks on xi");
  add_common(verify, cfg);
  verify->add_option("--radius", cfg.radius, "oracle probe radius");
  verify->add_option("--samples", cfg.samples, "oracle probe count");
  verify->add_option("--cone-samples", cfg.cone_samples, "directions for the cone-linearity check");
  verify->add_option("--hull-tol", cfg.hull_tol, "hull membership tolerance (Frobenius)");

  auto* newton = app.add_subcommand("newton", "semismooth Newton iteration");
  add_common(newton, cfg);
  newton->add_option("--x0", cfg.x0, "starting point, comma-separated");
  newton->add_option("--tol", cfg.tol, "residual tolerance (inf-norm)");
  newton->add_option("--max-iters", cfg.max_iters, "iteration limit");
  newton->add_option("--ncp", cfg.ncp, "M.csv q.csv: solve min(x, Mx+q) = 0")->expected(2);

  auto* dd = app.add_subcommand("dd", "directional derivative F'(x; y)");
  add_common(dd, cfg);
  dd->add_option("-y,--direction", cfg.direction, "direction, comma-separated");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    std::ostringstream o, r;
    const int code = app.exit(e, o, r);
    out << o.str();
    err << r.str();
    return code == 0 ? kOk : kBadInput;
  }

  try {
    check_config(cfg);
    if (*jac) return cmd_jac(cfg, out);
    if (*verify) return cmd_verify(cfg, out);
    if (*newton) return cmd_newton(cfg, out);
    return cmd_dd(cfg, out);
  } catch (const DomainError& e) {
    err << "domain error: " << e.what() << "\n";
    return kDomain;
  } catch (const SchemaError& e) {
    err << "error: " << e.what() << "\n";
    return kBadInput;
  } catch (const ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kBadInput;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kBadInput;
  }
}

}  // namespace dcjac::cli
