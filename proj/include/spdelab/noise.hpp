#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "spdelab/grid.hpp"
#include "spdelab/rng.hpp"

namespace spdelab {

/// Uniform partition of the mark space [lo, hi] into na cells.
/// Cell j = [lo + j*da, lo + (j+1)*da] carries measure intensity*da.
struct MarkGrid {
  double lo = 0.0;
  double hi = 1.0;
  int na = 1;
  double intensity = 1.0;  // constant density of the mark measure

  double da() const { return (hi - lo) / na; }
  double midpoint(int j) const { return lo + (j + 0.5) * da(); }
  double cell_measure() const { return intensity * da(); }

  /// Number of cell midpoints strictly below a.
  int midpoints_below(double a) const {
    double s = (a - lo) / da() - 0.5;
    if (s <= 0.0) return 0;
    int c = static_cast<int>(std::floor(s)) + 1;
    // exact midpoint hits are not "below"
    if (midpoint(c - 1) >= a) --c;
    if (c < 0) c = 0;
    if (c > na) c = na;
    return c;
  }
};

inline MarkGrid make_mark_grid(double lo, double hi, int na, double intensity = 1.0) {
  if (!(hi > lo)) throw std::invalid_argument("make_mark_grid: need hi > lo");
  if (na < 1) throw std::invalid_argument("make_mark_grid: na must be at least 1");
  if (!(intensity > 0.0)) throw std::invalid_argument("make_mark_grid: intensity must be positive");
  return MarkGrid{lo, hi, na, intensity};
}

/// Addressable source of the white-noise cell increments W([t_k, t_k+dt] x cell_j).
/// Each increment is N(0, dt * cell_measure), independent across cells, and a
/// pure function of (seed, replicate, k, j), so any evaluation order and any
/// thread assignment reproduce the same bits.
struct NoiseSource {
  uint64_t seed = 0;
  uint64_t replicate = 0;
  double sd = 0.0;  // sqrt(dt * cell_measure)

  NoiseSource() = default;
  NoiseSource(uint64_t seed_, uint64_t replicate_, const Grid& g, const MarkGrid& mg)
      : seed(seed_), replicate(replicate_), sd(std::sqrt(g.dt * mg.cell_measure())) {}

  double operator()(int k, int j) const {
    return sd * counter_gaussian(seed, replicate, static_cast<uint64_t>(k),
                                 static_cast<uint64_t>(j));
  }
};

/// Materialized noise increments: increments[k][j] for k = 0..nt-1, j = 0..na-1.
struct NoiseRealization {
  uint64_t seed = 0;
  uint64_t replicate = 0;
  std::vector<std::vector<double>> increments;

  double operator()(int k, int j) const {
    return increments[static_cast<size_t>(k)][static_cast<size_t>(j)];
  }
};

inline NoiseRealization sample_white_noise(const Grid& g, const MarkGrid& mg,
                                           uint64_t seed, uint64_t replicate) {
  NoiseSource src(seed, replicate, g, mg);
  NoiseRealization nr;
  nr.seed = seed;
  nr.replicate = replicate;
  nr.increments.assign(static_cast<size_t>(g.nt), std::vector<double>(static_cast<size_t>(mg.na)));
  for (int k = 0; k < g.nt; ++k)
    for (int j = 0; j < mg.na; ++j)
      nr.increments[static_cast<size_t>(k)][static_cast<size_t>(j)] = src(k, j);
  return nr;
}

}  // namespace spdelab
