#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "spdelab/grid.hpp"

namespace spdelab {

/// Path of signed measures stored as node densities with respect to Lebesgue:
/// frame k, node i holds w_k(y_i), and the measure of cell [y_i, y_{i+1}] is
/// approximately w_k(y_i) * dx. The beta tag records the ambient weighted
/// topology the path lives in.
struct SignedMeasurePath {
  std::vector<Field> densities;
  double beta = 1.0;

  size_t num_frames() const { return densities.size(); }
  const Field& operator[](size_t k) const { return densities[k]; }
  Field& operator[](size_t k) { return densities[k]; }
};

/// Distribution function -> signed density: forward difference over dx.
/// The last node carries no cell and gets density zero; cumulative summation
/// reconstructs the field up to its left boundary value.
inline Field field_to_measure(const Field& v, const Grid& g) {
  require_size(v, g, "field_to_measure");
  Field w(v.size(), 0.0);
  for (size_t i = 0; i + 1 < v.size(); ++i) w[i] = (v[i + 1] - v[i]) / g.dx;
  return w;
}

/// Inverse of field_to_measure given the left boundary value.
inline Field measure_to_field(const Field& w, const Grid& g, double left_value = 0.0) {
  require_size(w, g, "measure_to_field");
  Field v(w.size());
  v[0] = left_value;
  for (size_t i = 0; i + 1 < w.size(); ++i) v[i + 1] = v[i] + w[i] * g.dx;
  return v;
}

inline SignedMeasurePath path_to_measure_path(const FieldPath& v, const Grid& g,
                                              double beta = 1.0) {
  SignedMeasurePath out;
  out.beta = beta;
  out.densities.reserve(v.frames.size());
  for (const Field& f : v.frames) out.densities.push_back(field_to_measure(f, g));
  return out;
}

/// Duality pairing <mu, f> = sum f * w * dx.
inline double pair_measure(const Field& w, const Field& f, const Grid& g) {
  if (w.size() != f.size()) throw std::invalid_argument("pair_measure: size mismatch");
  double s = 0.0;
  for (size_t i = 0; i < w.size(); ++i) s += f[i] * w[i];
  return s * g.dx;
}

inline double measure_mass(const Field& w, const Grid& g) {
  double s = 0.0;
  for (double x : w) s += x;
  return s * g.dx;
}

/// Weighted total variation: integral of e^(-beta |y|) |w|.
inline double weighted_tv(const Field& w, const Grid& g, double beta) {
  require_size(w, g, "weighted_tv");
  double s = 0.0;
  for (int i = 0; i <= g.nx; ++i) s += std::exp(-beta * std::abs(g.node(i))) * std::abs(w[static_cast<size_t>(i)]);
  return s * g.dx;
}

namespace detail {

/// Concave piecewise-linear function on [x.front(), x.back()], stored as its
/// vertex list with strictly increasing abscissae.
struct ConcavePL {
  std::vector<double> x;
  std::vector<double> v;

  void push(double xx, double vv) {
    if (!x.empty() && xx <= x.back()) {
      v.back() = std::max(v.back(), vv);
      return;
    }
    x.push_back(xx);
    v.push_back(vv);
  }

  double eval(double xx) const {
    if (xx <= x.front()) return v.front();
    if (xx >= x.back()) return v.back();
    size_t hi = static_cast<size_t>(std::upper_bound(x.begin(), x.end(), xx) - x.begin());
    size_t lo = hi - 1;
    double t = (xx - x[lo]) / (x[hi] - x[lo]);
    return v[lo] + t * (v[hi] - v[lo]);
  }

  double max_value() const {
    double m = v.front();
    for (double vv : v) m = std::max(m, vv);
    return m;
  }
};

/// M(f) = max { V(g) : |g - f| <= r }, then restrict to [lo, hi].
inline ConcavePL box_max_clip(const ConcavePL& V, double r, double lo, double hi) {
  size_t lmax = 0, rmax = 0;
  double best = V.v[0];
  for (size_t i = 1; i < V.v.size(); ++i)
    if (V.v[i] > best) {
      best = V.v[i];
      lmax = rmax = i;
    }
  for (size_t i = V.v.size(); i-- > 0;)
    if (V.v[i] == best) {
      rmax = std::max(rmax, i);
      break;
    }
  ConcavePL wide;
  for (size_t i = 0; i < lmax; ++i) wide.push(V.x[i] - r, V.v[i]);
  wide.push(V.x[lmax] - r, best);
  wide.push(V.x[rmax] + r, best);
  for (size_t i = rmax + 1; i < V.x.size(); ++i) wide.push(V.x[i] + r, V.v[i]);
  ConcavePL out;
  out.push(lo, wide.eval(lo));
  for (size_t i = 0; i < wide.x.size(); ++i)
    if (wide.x[i] > lo && wide.x[i] < hi) out.push(wide.x[i], wide.v[i]);
  out.push(hi, wide.eval(hi));
  return out;
}

}  // namespace detail

/// Dual bounded-Lipschitz distance between two density frames:
///   sup { sum_i f_i e^(-beta |y_i|) (mu_i - nu_i) dx : |f_i| <= 1,
///         |f_{i+1} - f_i| <= dx }.
/// Solved exactly by dynamic programming over the node chain: the value
/// function in f_i is concave piecewise linear, and the chain constraint is a
/// sliding-window maximum (preserves concavity), so the optimum is exact up to
/// floating-point rounding.
inline double rho_beta(const Field& mu, const Field& nu, const Grid& g, double beta) {
  require_size(mu, g, "rho_beta");
  require_size(nu, g, "rho_beta");
  const int n = g.num_nodes();
  std::vector<double> c(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i)
    c[static_cast<size_t>(i)] = std::exp(-beta * std::abs(g.node(i))) *
                                (mu[static_cast<size_t>(i)] - nu[static_cast<size_t>(i)]) * g.dx;
  detail::ConcavePL V;
  V.push(-1.0, -c[0]);
  V.push(1.0, c[0]);
  for (int i = 1; i < n; ++i) {
    V = detail::box_max_clip(V, g.dx, -1.0, 1.0);
    for (size_t j = 0; j < V.x.size(); ++j) V.v[j] += c[static_cast<size_t>(i)] * V.x[j];
  }
  return V.max_value();
}

inline double rho_beta(const Field& mu, const Field& nu, const Grid& g) {
  return rho_beta(mu, nu, g, 1.0);
}

}  // namespace spdelab
