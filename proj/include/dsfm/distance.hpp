#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <vector>

#include "dsfm/core.hpp"

namespace dsfm {

namespace detail {

inline void require_distribution(std::span<const double> p, const char* what, double tol = 1e-9) {
  double total = 0.0;
  for (double v : p) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw ValueError(std::string(what) + ": weights must be finite and nonnegative");
    total += v;
  }
  if (std::abs(total - 1.0) > tol) throw ValueError(std::string(what) + ": weights must sum to 1");
}

}  // namespace detail

/// Jensen-Shannon divergence with natural log. Zero-probability terms
/// contribute nothing; the result lies in [0, ln 2].
inline double js_divergence(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw ShapeError("js_divergence: distributions differ in length");
  detail::require_distribution(p, "js_divergence");
  detail::require_distribution(q, "js_divergence");
  double js = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double m = 0.5 * (p[i] + q[i]);
    if (p[i] > 0.0) js += 0.5 * p[i] * std::log(p[i] / m);
    if (q[i] > 0.0) js += 0.5 * q[i] * std::log(q[i] / m);
  }
  return std::max(js, 0.0);
}

/// 1-Wasserstein distance under |x - y| between two weighted point sets on
/// the real line: the integral of |F_P - F_Q| over the merged support.
/// Locations need not be sorted or shared; cost is O(n log n).
inline double wasserstein_1d(std::span<const double> p_loc, std::span<const double> p_w, std::span<const double> q_loc,
                             std::span<const double> q_w) {
  if (p_loc.size() != p_w.size() || q_loc.size() != q_w.size())
    throw ShapeError("wasserstein_1d: locations and weights differ in length");
  if (p_loc.empty() || q_loc.empty()) throw ValueError("wasserstein_1d: empty distribution");
  detail::require_distribution(p_w, "wasserstein_1d");
  detail::require_distribution(q_w, "wasserstein_1d");
  for (double x : p_loc)
    if (!std::isfinite(x)) throw ValueError("wasserstein_1d: non-finite location");
  for (double x : q_loc)
    if (!std::isfinite(x)) throw ValueError("wasserstein_1d: non-finite location");

  // Signed mass events: +w for P, -w for Q, swept in location order.
  struct Event {
    double x;
    double dw;
  };
  std::vector<Event> ev;
  ev.reserve(p_loc.size() + q_loc.size());
  for (std::size_t i = 0; i < p_loc.size(); ++i) ev.push_back({p_loc[i], p_w[i]});
  for (std::size_t i = 0; i < q_loc.size(); ++i) ev.push_back({q_loc[i], -q_w[i]});
  std::sort(ev.begin(), ev.end(), [](const Event& a, const Event& b) { return a.x < b.x; });

  double cdf_gap = 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i + 1 < ev.size(); ++i) {
    cdf_gap += ev[i].dw;
    total += std::abs(cdf_gap) * (ev[i + 1].x - ev[i].x);
  }
  return total;
}

/// Both distributions on the same support.
inline double wasserstein_1d(std::span<const double> loc, std::span<const double> p, std::span<const double> q) {
  return wasserstein_1d(loc, p, loc, q);
}

}  // namespace dsfm
