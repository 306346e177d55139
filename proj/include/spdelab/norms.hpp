#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "spdelab/grid.hpp"

namespace spdelab {

/// Exponential-weight and Holder exponents used by the weighted norms.
/// beta0 < beta1 < beta orders the spaces so that embeddings go the right way;
/// alpha is the Holder exponent of the seminorm term.
struct WeightParams {
  double beta = 1.0;
  double beta0 = 0.25;
  double beta1 = 0.5;
  double alpha = 0.4;
};

inline void validate(const WeightParams& wp) {
  if (!(wp.beta0 > 0.0 && wp.beta1 > wp.beta0 && wp.beta > wp.beta1))
    throw std::invalid_argument("WeightParams: need 0 < beta0 < beta1 < beta");
  if (!(wp.alpha > 0.0 && wp.alpha < 0.5))
    throw std::invalid_argument("WeightParams: need alpha in (0, 1/2)");
}

/// sup_i e^(-beta*|y_i|) |f(y_i)|
inline double weighted_sup_norm(const Field& f, const Grid& g, double beta) {
  require_size(f, g, "weighted_sup_norm");
  double m = 0.0;
  for (int i = 0; i <= g.nx; ++i)
    m = std::max(m, std::exp(-beta * std::abs(g.node(i))) * std::abs(f[static_cast<size_t>(i)]));
  return m;
}

/// Window norm ||u||_{m}: weighted sup over all nodes plus the Holder
/// quotient sup over node pairs inside |y| <= m, damped by e^(-beta*m).
inline double holder_window_norm(const Field& d, const Grid& g, const WeightParams& wp, int m) {
  double norm = weighted_sup_norm(d, g, wp.beta);
  int lo = g.node_index(-static_cast<double>(m));
  int hi = g.node_index(static_cast<double>(m));
  double quot = 0.0;
  for (int i = lo; i <= hi; ++i) {
    for (int j = i + 1; j <= hi; ++j) {
      double gap = std::abs(d[static_cast<size_t>(i)] - d[static_cast<size_t>(j)]);
      if (gap == 0.0) continue;
      quot = std::max(quot, gap / std::pow((j - i) * g.dx, wp.alpha));
    }
  }
  return norm + quot * std::exp(-wp.beta * m);
}

/// Complete metric on the weighted Holder space:
///   d(u, v) = sum_{m=1..m_max} 2^(-m) * min(1, ||u - v||_m),
/// truncated at m_max = floor(L) when m_max <= 0 (tail below 2^(-m_max)).
inline double holder_metric(const Field& u, const Field& v, const Grid& g,
                            const WeightParams& wp, int m_max = 0) {
  require_size(u, g, "holder_metric");
  require_size(v, g, "holder_metric");
  validate(wp);
  if (m_max <= 0) m_max = std::max(1, static_cast<int>(std::floor(g.L)));
  Field d(u.size());
  for (size_t i = 0; i < u.size(); ++i) d[i] = u[i] - v[i];
  double total = 0.0;
  for (int m = 1; m <= m_max; ++m)
    total += std::ldexp(std::min(1.0, holder_window_norm(d, g, wp, m)), -m);
  return total;
}

}  // namespace spdelab
