#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "spdelab/grid.hpp"

namespace spdelab {

/// Gaussian transition density of the Laplacian semigroup exp(t*Lap/2):
/// p_t(x) = exp(-x^2/(2t)) / sqrt(2*pi*t), t > 0.
inline double heat_kernel(double t, double x) {
  if (!(t > 0.0)) throw std::invalid_argument("heat_kernel: t must be positive");
  return std::exp(-x * x / (2.0 * t)) / std::sqrt(6.283185307179586476925286766559 * t);
}

/// One-step convolution stencil for exp(dt*Lap/2) on the lattice.
///
/// Taps are the sampled kernel p_dt(m*dx)*dx for |m| <= half, normalized to
/// sum to one, so constants are fixed exactly away from the boundary and the
/// filter is an average (symbol magnitude <= 1, stable for every dt).
/// Sampling the kernel at spacing dx is spectrally accurate when dt >= dx^2;
/// below that the taps still average correctly but smear high frequencies.
struct HeatTaps {
  int half = 0;                 // taps cover offsets -half..half
  std::vector<double> w;        // w[m] for offset magnitude m (size half+1)
};

inline HeatTaps make_heat_taps(const Grid& g, double dt) {
  if (dt < 0.0) throw std::invalid_argument("make_heat_taps: dt must be nonnegative");
  HeatTaps taps;
  if (dt == 0.0) {
    taps.half = 0;
    taps.w = {1.0};
    return taps;
  }
  int half = static_cast<int>(std::ceil(8.0 * std::sqrt(dt) / g.dx));
  if (half > g.nx) half = g.nx;
  taps.half = half;
  taps.w.resize(static_cast<size_t>(half) + 1);
  double sum = 0.0;
  for (int m = 0; m <= half; ++m) {
    double v = heat_kernel(dt, m * g.dx) * g.dx;
    taps.w[static_cast<size_t>(m)] = v;
    sum += (m == 0) ? v : 2.0 * v;
  }
  for (double& v : taps.w) v /= sum;
  return taps;
}

/// Apply the stencil with zero padding beyond [-L, L].
inline Field apply_heat_taps(const HeatTaps& taps, const Field& f) {
  const int n = static_cast<int>(f.size());
  Field out(f.size(), 0.0);
  for (int i = 0; i < n; ++i) {
    double acc = taps.w[0] * f[static_cast<size_t>(i)];
    for (int m = 1; m <= taps.half; ++m) {
      double lo = (i - m >= 0) ? f[static_cast<size_t>(i - m)] : 0.0;
      double hi = (i + m < n) ? f[static_cast<size_t>(i + m)] : 0.0;
      acc += taps.w[static_cast<size_t>(m)] * (lo + hi);
    }
    out[static_cast<size_t>(i)] = acc;
  }
  return out;
}

/// One application of exp(dt*Lap/2) by kernel convolution (zero padding).
inline Field heat_propagate(const Field& f, const Grid& g, double dt) {
  require_size(f, g, "heat_propagate");
  return apply_heat_taps(make_heat_taps(g, dt), f);
}

}  // namespace spdelab
