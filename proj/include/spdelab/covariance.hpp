#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "spdelab/grid.hpp"
#include "spdelab/heat.hpp"
#include "spdelab/model.hpp"
#include "spdelab/stats.hpp"

namespace spdelab {

namespace detail {

/// Mean state at time s evaluated at an off-grid point: closed form for the
/// named initial states, linear interpolation of the propagated row otherwise.
inline double mean_state_at(const ModelSpec& m, const Grid& g, double s, double y,
                            const Field& row) {
  if (m.initial != InitialKind::kCustomInit) return initial_cdf(m.initial, m.kind, s, y);
  double x = (y + g.L) / g.dx;
  int i = std::min(g.nx - 1, std::max(0, static_cast<int>(std::floor(x))));
  double fr = std::min(1.0, std::max(0.0, x - i));
  return (1.0 - fr) * row[static_cast<size_t>(i)] + fr * row[static_cast<size_t>(i) + 1];
}

/// Midpoint s-rule over the first kt grid steps with the final step split
/// into 8 geometric slices toward t: the density-form integrand grows like
/// (t-s)^(-1/2), so uniform midpoints would miss the accumulation at s = t.
/// visit(s, weight) is called once per quadrature node.
template <typename Visit>
void time_rule_refined(const Grid& g, int kt, Visit&& visit) {
  const double t = g.dt * kt;
  for (int k = 0; k + 1 < kt; ++k) visit((k + 0.5) * g.dt, g.dt);
  double lo = t - g.dt;
  for (int j = 0; j < 8; ++j) {
    double hi = (j == 7) ? t : t - g.dt / static_cast<double>(2 << j);
    visit(0.5 * (lo + hi), hi - lo);
    lo = hi;
  }
}

inline int grid_time_index(const Grid& g, double t, const char* who) {
  int kt = static_cast<int>(std::lround(t / g.dt));
  if (kt < 1 || kt > g.nt || std::abs(g.time(kt) - t) > 1e-9 * std::max(1.0, g.T))
    throw std::invalid_argument(std::string(who) + ": t must be a positive grid time");
  return kt;
}

/// Location where a nondecreasing state row first reaches level a, by linear
/// interpolation; +/-inf stands in when the level is never/always reached.
inline double monotone_quantile(const Field& row, const Grid& g, double a) {
  if (a <= row.front()) return -std::numeric_limits<double>::infinity();
  if (a > row.back()) return std::numeric_limits<double>::infinity();
  auto it = std::lower_bound(row.begin(), row.end(), a);
  size_t i = static_cast<size_t>(it - row.begin());
  double lo = row[i - 1];
  return g.node(static_cast<int>(i) - 1) + g.dx * (a - lo) / (row[i] - lo);
}

/// Heat smoothing of the half-line indicator 1{x >= cut}: the kernel mass to
/// the right of the cut, exact in x for any smoothing time r >= 0.
inline double smoothed_right_indicator(double cut, double y, double r) {
  if (std::isinf(cut)) return cut > 0.0 ? 0.0 : 1.0;
  if (r <= 0.0) return y >= cut ? 1.0 : 0.0;
  return normal_cdf((y - cut) / std::sqrt(r));
}

}  // namespace detail

namespace detail {

/// Local intensity of the equivalent space-white forcing: the mark-integrated
/// squared coefficient for pointwise couplings, rescaled by dx for the sheet
/// coupling whose per-cell amplitude already carries the 1/dx of a spatial
/// white noise.
inline double white_intensity(const ModelSpec& m, double x, double u) {
  double q = g_l2_bound(m, x, u);
  return m.sheet_coupling ? q * m.dx : q;
}

}  // namespace detail

/// Space-white limiting covariance:
///   C(y1, y2; t) = int_0^t int q(x, s) p_r(y1 - x) p_r(y2 - x) dx ds,
/// r = t - s, with q(x, s) the local noise intensity along the mean flow
/// (the mark-integrated squared coefficient; |u0| and u0(1 - u0) for the
/// named kinds). This is the exact fluctuation covariance when the forcing
/// is white in space (sheet coupling, frozen toys); for the named models,
/// whose marks drive every location at once, it is the pointwise-intensity
/// reference and the state field's covariance is state_fluctuation_covariance
/// below. The kernel product is reduced exactly to
/// p_{2r}(y1 - y2) * p_{r/2}(x - mid) and the x-integral is a trapezoid when
/// the remaining kernel is resolvable on the lattice, or the integrand value
/// at mid when it is narrower than the lattice, so the s -> t singularity
/// never meets an unresolved kernel.
inline double gaussian_limit_covariance(const ModelSpec& m, const Grid& g, double t, double y1,
                                        double y2) {
  const int kt = detail::grid_time_index(g, t, "gaussian_limit_covariance");
  const double mid = 0.5 * (y1 + y2);
  const double gap = y1 - y2;
  double acc = 0.0;
  detail::time_rule_refined(g, kt, [&](double s, double w) {
    const double r = t - s;
    Field row = flow_at(m, g, s);
    double inner;
    if (0.5 * r >= 4.0 * g.dx * g.dx) {
      inner = 0.0;
      for (int i = 0; i <= g.nx; ++i) {
        double wt = (i == 0 || i == g.nx) ? 0.5 : 1.0;
        double x = g.node(i);
        inner += wt * heat_kernel(0.5 * r, x - mid) *
                 detail::white_intensity(m, x, row[static_cast<size_t>(i)]);
      }
      inner *= g.dx;
    } else {
      inner = detail::white_intensity(m, mid, detail::mean_state_at(m, g, s, mid, row));
    }
    acc += w * heat_kernel(2.0 * r, gap) * inner;
  });
  return acc;
}

/// Covariance of the state fluctuation field itself (the object the
/// fluctuation stepper evolves): the same frozen-coefficient stochastic
/// convolution, but smoothed before squaring because one mark drives every
/// location at once,
///   C(y1, y2; t) = int_0^t sum_j lam_j [K_r G_j](y1) [K_r G_j](y2) ds,
/// with G_j(x) = G(a_j, x, u0_s(x)), [K_r phi](y) = int p_r(y - x) phi(x) dx
/// by trapezoid, and lam_j the mark cell measure. The integrand is bounded at
/// s = t, so plain midpoints suffice; r below the lattice resolution reads
/// G_j at the probe directly.
inline double state_fluctuation_covariance(const ModelSpec& m, const Grid& g, double t, double y1,
                                           double y2) {
  const int kt = detail::grid_time_index(g, t, "state_fluctuation_covariance");
  const double lam = m.marks.cell_measure();
  const bool named = m.kind == ModelKind::kSbm || m.kind == ModelKind::kFvp;
  double acc = 0.0;
  for (int k = 0; k < kt; ++k) {
    const double s = (k + 0.5) * g.dt;
    const double r = t - s;
    Field row = flow_at(m, g, s);
    const bool resolved = r >= 4.0 * g.dx * g.dx;
    double sum = 0.0;
    if (named) {
      // The named coefficients are level-set indicators of the nondecreasing
      // mean state (minus the state itself for the probability-valued model),
      // so their smoothing reduces to the exact kernel CDF at the level's
      // quantile: no lattice sampling of a jump, stable at every r.
      double u1 = 0.0, u2 = 0.0;
      if (m.kind == ModelKind::kFvp) {
        if (resolved) {
          u1 = 0.0;
          u2 = 0.0;
          for (int i = 0; i <= g.nx; ++i) {
            double wt = (i == 0 || i == g.nx) ? 0.5 : 1.0;
            double uv = clamp01(row[static_cast<size_t>(i)]);
            double x = g.node(i);
            u1 += wt * heat_kernel(r, y1 - x) * uv;
            u2 += wt * heat_kernel(r, y2 - x) * uv;
          }
          u1 *= g.dx;
          u2 *= g.dx;
        } else {
          u1 = clamp01(detail::mean_state_at(m, g, s, y1, row));
          u2 = clamp01(detail::mean_state_at(m, g, s, y2, row));
        }
      }
      for (int j = 0; j < m.marks.na; ++j) {
        const double a = m.marks.midpoint(j);
        const double cut = detail::monotone_quantile(row, g, a);
        double k1, k2;
        if (m.kind == ModelKind::kFvp) {
          k1 = detail::smoothed_right_indicator(cut, y1, r) - u1;
          k2 = detail::smoothed_right_indicator(cut, y2, r) - u2;
        } else if (a >= 0.0) {
          k1 = detail::smoothed_right_indicator(cut, y1, r);
          k2 = detail::smoothed_right_indicator(cut, y2, r);
        } else {
          k1 = 1.0 - detail::smoothed_right_indicator(cut, y1, r);
          k2 = 1.0 - detail::smoothed_right_indicator(cut, y2, r);
        }
        sum += k1 * k2;
      }
    } else {
      for (int j = 0; j < m.marks.na; ++j) {
        const double a = m.marks.midpoint(j);
        double k1, k2;
        if (resolved) {
          k1 = 0.0;
          k2 = 0.0;
          for (int i = 0; i <= g.nx; ++i) {
            double wt = (i == 0 || i == g.nx) ? 0.5 : 1.0;
            double x = g.node(i);
            double gv = evaluate_G(m, a, x, row[static_cast<size_t>(i)]);
            k1 += wt * heat_kernel(r, y1 - x) * gv;
            k2 += wt * heat_kernel(r, y2 - x) * gv;
          }
          k1 *= g.dx;
          k2 *= g.dx;
        } else {
          k1 = evaluate_G(m, a, y1, detail::mean_state_at(m, g, s, y1, row));
          k2 = evaluate_G(m, a, y2, detail::mean_state_at(m, g, s, y2, row));
        }
        sum += k1 * k2;
      }
    }
    acc += g.dt * lam * sum;
  }
  return acc;
}

/// Gram matrix of gaussian_limit_covariance on a probe location set at one
/// time, row-major. Covariance functions of a real field are positive
/// semidefinite, so the eigenvalues of this matrix check the quadrature.
inline std::vector<double> covariance_gram(const ModelSpec& m, const Grid& g, double t,
                                           const std::vector<double>& ys) {
  const int n = static_cast<int>(ys.size());
  std::vector<double> gram(static_cast<size_t>(n) * static_cast<size_t>(n), 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = i; j < n; ++j) {
      double c = gaussian_limit_covariance(m, g, t, ys[static_cast<size_t>(i)],
                                           ys[static_cast<size_t>(j)]);
      gram[static_cast<size_t>(i) * static_cast<size_t>(n) + static_cast<size_t>(j)] = c;
      gram[static_cast<size_t>(j) * static_cast<size_t>(n) + static_cast<size_t>(i)] = c;
    }
  return gram;
}

}  // namespace spdelab
