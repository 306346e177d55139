#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace spdelab {

/// Uniform space-time lattice on [-L, L] x [0, T].
///
/// Space nodes y_i = -L + i*dx for i = 0..nx (nx+1 nodes, dx = 2L/nx).
/// Time levels t_k = k*dt for k = 0..nt (dt = T/nt).
struct Grid {
  double L = 0.0;
  int nx = 0;
  double T = 0.0;
  int nt = 0;
  double dx = 0.0;
  double dt = 0.0;

  int num_nodes() const { return nx + 1; }
  double node(int i) const { return -L + i * dx; }
  double time(int k) const { return k * dt; }

  /// Index of the node nearest to y, clamped to the lattice.
  int node_index(double y) const {
    int i = static_cast<int>(std::lround((y + L) / dx));
    if (i < 0) i = 0;
    if (i > nx) i = nx;
    return i;
  }
};

inline Grid make_grid(double L, int nx, double T, int nt) {
  if (!(L > 0.0)) throw std::invalid_argument("make_grid: L must be positive");
  if (nx < 2) throw std::invalid_argument("make_grid: nx must be at least 2");
  if (!(T > 0.0)) throw std::invalid_argument("make_grid: T must be positive");
  if (nt < 1) throw std::invalid_argument("make_grid: nt must be at least 1");
  Grid g;
  g.L = L;
  g.nx = nx;
  g.T = T;
  g.nt = nt;
  g.dx = 2.0 * L / nx;
  g.dt = T / nt;
  return g;
}

/// A scalar function sampled on the space nodes of a Grid (size nx+1).
using Field = std::vector<double>;

/// A time-indexed sequence of Fields; frames[k] lives at t_k = k*dt.
struct FieldPath {
  std::vector<Field> frames;

  int num_frames() const { return static_cast<int>(frames.size()); }
  const Field& operator[](int k) const { return frames[static_cast<size_t>(k)]; }
  Field& operator[](int k) { return frames[static_cast<size_t>(k)]; }
};

inline bool all_finite(const Field& f) {
  for (double v : f)
    if (!std::isfinite(v)) return false;
  return true;
}

inline void require_finite(const Field& f, const std::string& what) {
  if (!all_finite(f)) throw std::runtime_error(what + ": non-finite entry");
}

inline void require_size(const Field& f, const Grid& g, const std::string& what) {
  if (static_cast<int>(f.size()) != g.num_nodes())
    throw std::invalid_argument(what + ": field size does not match grid (want " +
                                std::to_string(g.num_nodes()) + ", got " +
                                std::to_string(f.size()) + ")");
}

/// Trapezoid integral of f over [-L, L].
inline double trapezoid(const Field& f, const Grid& g) {
  double s = 0.5 * (f.front() + f.back());
  for (int i = 1; i < g.nx; ++i) s += f[static_cast<size_t>(i)];
  return s * g.dx;
}

/// Trapezoid integral of f restricted to the window |y| <= w.
inline double trapezoid_window(const Field& f, const Grid& g, double w) {
  int lo = g.node_index(-w);
  int hi = g.node_index(w);
  if (hi <= lo) return 0.0;
  double s = 0.5 * (f[static_cast<size_t>(lo)] + f[static_cast<size_t>(hi)]);
  for (int i = lo + 1; i < hi; ++i) s += f[static_cast<size_t>(i)];
  return s * g.dx;
}

inline double max_abs(const Field& f) {
  double m = 0.0;
  for (double v : f) m = std::max(m, std::abs(v));
  return m;
}

inline double max_abs_diff(const Field& a, const Field& b) {
  double m = 0.0;
  for (size_t i = 0; i < a.size() && i < b.size(); ++i)
    m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

/// Evaluate a sampled field at arbitrary y by linear interpolation
/// (constant extrapolation beyond the lattice).
inline double interp(const Field& f, const Grid& g, double y) {
  double s = (y + g.L) / g.dx;
  if (s <= 0.0) return f.front();
  if (s >= g.nx) return f.back();
  int i = static_cast<int>(s);
  double w = s - i;
  return (1.0 - w) * f[static_cast<size_t>(i)] + w * f[static_cast<size_t>(i + 1)];
}

}  // namespace spdelab
