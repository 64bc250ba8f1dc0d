#pragma once

// Random piecewise-affine problems with small integer data, built so that
// ties at the origin (and repeated gradients among tied pieces) are common.

#include <charconv>
#include <cstdint>
#include <string>
#include <string_view>

#include <json.hpp>

#include "dcjac/dcmax.hpp"
#include "dcjac/error.hpp"
#include "dcjac/random.hpp"

namespace dcjac {

struct RandomSpec {
  std::size_t n = 2;
  std::size_t m = 1;
  std::size_t pieces = 3;  // at most this many pieces per max
  std::uint64_t seed = 42;
};

// "n=3,m=2,pieces=4,seed=7"; keys may be omitted or reordered.
inline RandomSpec parse_random_spec(std::string_view text) {
  RandomSpec spec;
  while (!text.empty()) {
    const auto comma = text.find(',');
    const std::string_view item = text.substr(0, comma);
    text = comma == std::string_view::npos ? std::string_view{} : text.substr(comma + 1);
    const auto eq = item.find('=');
    if (eq == std::string_view::npos) throw Error("random spec item '" + std::string(item) + "' lacks '='");
    const std::string_view key = item.substr(0, eq), val = item.substr(eq + 1);
    std::uint64_t v = 0;
    auto [ptr, ec] = std::from_chars(val.data(), val.data() + val.size(), v);
    if (ec != std::errc{} || ptr != val.data() + val.size())
      throw Error("random spec value '" + std::string(val) + "' is not a non-negative integer");
    if (key == "n") spec.n = v;
    else if (key == "m") spec.m = v;
    else if (key == "pieces") spec.pieces = v;
    else if (key == "seed") spec.seed = v;
    else throw Error("unknown random spec key '" + std::string(key) + "'");
  }
  if (spec.n == 0 || spec.m == 0 || spec.pieces == 0) throw Error("random spec needs n, m, pieces >= 1");
  return spec;
}

namespace detail {

inline std::string affine_text(long constant, const std::vector<long>& coef) {
  std::string s = std::to_string(constant);
  for (std::size_t l = 0; l < coef.size(); ++l) {
    if (coef[l] == 0) continue;
    s += coef[l] < 0 ? " - " : " + ";
    s += std::to_string(std::labs(coef[l])) + "*x" + std::to_string(l + 1);
  }
  return s;
}

inline nlohmann::json random_max(Rng& rng, std::size_t n, std::size_t max_pieces) {
  const std::size_t count = std::size_t(rng.integer(1, long(max_pieces)));
  std::vector<std::vector<long>> grads;
  nlohmann::json list = nlohmann::json::array();
  for (std::size_t j = 0; j < count; ++j) {
    std::vector<long> coef(n);
    if (!grads.empty() && rng.uniform() < 0.25) {
      coef = grads[std::size_t(rng.integer(0, long(grads.size()) - 1))];
    } else {
      for (auto& a : coef) a = rng.integer(-5, 5);
    }
    const long constant = rng.uniform() < 0.75 ? 0 : -1;
    grads.push_back(coef);
    list.push_back(affine_text(constant, coef));
  }
  return list;
}

}  // namespace detail

// Coefficients in [-5, 5], constants in {-1, 0} (mostly 0), and a quarter of
// the pieces reuse an earlier gradient.
inline nlohmann::json random_affine_document(const RandomSpec& spec) {
  Rng rng(spec.seed);
  nlohmann::json comps = nlohmann::json::array();
  for (std::size_t i = 0; i < spec.m; ++i) {
    nlohmann::json g = detail::random_max(rng, spec.n, spec.pieces);
    nlohmann::json h = detail::random_max(rng, spec.n, spec.pieces);
    comps.push_back({{"g", g}, {"h", h}});
  }
  return {{"n", spec.n}, {"m", spec.m}, {"components", comps}};
}

inline DCMaxFn random_affine_instance(const RandomSpec& spec) { return load_problem(random_affine_document(spec)); }

}  // namespace dcjac
