#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "spdelab/grid.hpp"
#include "spdelab/heat.hpp"
#include "spdelab/model.hpp"
#include "spdelab/noise.hpp"

namespace spdelab {

/// Post-step projection of the state frame.
/// kClamp01   keeps a CDF state inside [0,1] (default for the CDF model).
/// kIsotonic  pool-adjacent-violators projection onto non-decreasing frames
///            (diagnostic for the signed cumulative model; off by default).
enum class Projection { kNone, kClamp01, kIsotonic };

struct SimScheme {
  Projection projection = Projection::kNone;
  int na = 0;  // 0 = take the mark-grid size from the model; else must agree
};

inline SimScheme default_scheme(const ModelSpec& m) {
  SimScheme s;
  if (m.kind == ModelKind::kFvp) s.projection = Projection::kClamp01;
  return s;
}

inline void validate_scheme(const SimScheme& s, const ModelSpec& m) {
  if (s.na == 0) return;
  if (s.na < 2) throw std::invalid_argument("validate_scheme: na must be at least 2");
  if (s.na != m.marks.na)
    throw std::invalid_argument("validate_scheme: na disagrees with the model mark grid");
}

/// Per-path health record filled by the stepping loop on request.
struct PathDiagnostics {
  double max_abs_state = 0.0;
  double worst_monotone_violation = 0.0;  // max over frames of max_i (u_i - u_{i+1})+
  long truncation_breaches = 0;           // nodes moved by the projection
  bool finite = true;
  int first_bad_frame = -1;
};

/// L2 projection onto non-decreasing sequences (pool adjacent violators).
inline void isotonic_project(Field& f) {
  const size_t n = f.size();
  if (n < 2) return;
  std::vector<double> level(n), weight(n);
  std::vector<size_t> count(n);
  size_t blocks = 0;
  for (size_t i = 0; i < n; ++i) {
    level[blocks] = f[i];
    weight[blocks] = 1.0;
    count[blocks] = 1;
    ++blocks;
    while (blocks > 1 && level[blocks - 2] > level[blocks - 1]) {
      double w = weight[blocks - 2] + weight[blocks - 1];
      level[blocks - 2] = (weight[blocks - 2] * level[blocks - 2] +
                           weight[blocks - 1] * level[blocks - 1]) / w;
      weight[blocks - 2] = w;
      count[blocks - 2] += count[blocks - 1];
      --blocks;
    }
  }
  size_t i = 0;
  for (size_t b = 0; b < blocks; ++b)
    for (size_t c = 0; c < count[b]; ++c) f[i++] = level[b];
}

namespace detail {

/// One stochastic Euler increment S(y_i) = prefactor * sum_j G(a_j, y_i, state_i) * dW_j.
/// The indicator families collapse the mark sum to prefix-sum differences; the
/// sheet coupling touches one cell per node; general coefficients pay the
/// dense O(nx * na) loop.
template <typename Noise>
void stochastic_increment(const ModelSpec& m, const Grid& g, const Noise& noise, int k,
                          double prefactor, const Field& state, const Field* mean_shift,
                          Field& out, std::vector<double>& row, std::vector<double>& prefix) {
  const int na = m.marks.na;
  const int nn = g.num_nodes();
  const bool dense = (m.kind == ModelKind::kCustom && !m.sheet_coupling);
  row.resize(static_cast<size_t>(na));
  for (int j = 0; j < na; ++j) row[static_cast<size_t>(j)] = noise(k, j);
  if (!dense) {
    prefix.resize(static_cast<size_t>(na) + 1);
    prefix[0] = 0.0;
    for (int j = 0; j < na; ++j)
      prefix[static_cast<size_t>(j) + 1] = prefix[static_cast<size_t>(j)] + row[static_cast<size_t>(j)];
  }
  for (int i = 0; i < nn; ++i) {
    const size_t si = static_cast<size_t>(i);
    double u = state[si] + (mean_shift ? (*mean_shift)[si] : 0.0);
    double s = 0.0;
    switch (m.kind) {
      case ModelKind::kSbm: {
        int mhi = m.marks.midpoints_below(std::max(u, 0.0));
        int mlo = m.marks.midpoints_below(std::min(u, 0.0));
        s = prefix[static_cast<size_t>(mhi)] - prefix[static_cast<size_t>(mlo)];
        break;
      }
      case ModelKind::kFvp: {
        double c = clamp01(u);
        s = prefix[static_cast<size_t>(m.marks.midpoints_below(c))] -
            c * prefix[static_cast<size_t>(na)];
        break;
      }
      case ModelKind::kCustom: {
        if (m.sheet_coupling) {
          double y = g.node(i);
          int cell = std::min(g.nx - 1, std::max(0, static_cast<int>(std::lround((y + g.L) / g.dx))));
          s = evaluate_G(m, m.marks.midpoint(cell), y, u) * row[static_cast<size_t>(cell)];
        } else {
          double y = g.node(i);
          for (int j = 0; j < na; ++j)
            s += m.custom_G(m.marks.midpoint(j), y, u) * row[static_cast<size_t>(j)];
        }
        break;
      }
    }
    out[si] = prefactor * s;
  }
}

inline void record_frame(const Field& f, int k, PathDiagnostics* diag) {
  if (!diag) return;
  for (size_t i = 0; i < f.size(); ++i) {
    diag->max_abs_state = std::max(diag->max_abs_state, std::abs(f[i]));
    if (i + 1 < f.size())
      diag->worst_monotone_violation = std::max(diag->worst_monotone_violation, f[i] - f[i + 1]);
  }
  if (diag->finite && !all_finite(f)) {
    diag->finite = false;
    diag->first_bad_frame = k;
  }
}

inline void abort_if_bad(const Field& f, int k) {
  if (!all_finite(f))
    throw std::runtime_error("simulate: non-finite state at frame " + std::to_string(k));
}

}  // namespace detail

/// Mild-form stepping of the small-noise state equation:
///   u_{k+1} = heat(u_k + sqrt(eps) * sum_j G(a_j, ., u_k) dW_{k,j}),  u_0 = F,
/// with the configured post-step projection.
template <typename Noise>
FieldPath simulate_u(const ModelSpec& m, const Grid& g, const SimScheme& scheme,
                     const Noise& noise, PathDiagnostics* diag = nullptr) {
  require_size(m.F, g, "simulate_u");
  validate_scheme(scheme, m);
  const HeatTaps taps = make_heat_taps(g, g.dt);
  const double pref = std::sqrt(m.epsilon);
  FieldPath path;
  path.frames.reserve(static_cast<size_t>(g.nt) + 1);
  path.frames.push_back(m.F);
  detail::record_frame(m.F, 0, diag);
  Field incr(static_cast<size_t>(g.num_nodes()));
  std::vector<double> row, prefix;
  Field work(static_cast<size_t>(g.num_nodes()));
  for (int k = 0; k < g.nt; ++k) {
    const Field& u = path.frames.back();
    detail::stochastic_increment(m, g, noise, k, pref, u, nullptr, incr, row, prefix);
    for (size_t i = 0; i < work.size(); ++i) work[i] = u[i] + incr[i];
    Field next = apply_heat_taps(taps, work);
    if (scheme.projection == Projection::kClamp01) {
      for (double& v : next) {
        double c = clamp01(v);
        if (c != v && diag) ++diag->truncation_breaches;
        v = c;
      }
    } else if (scheme.projection == Projection::kIsotonic) {
      Field before = diag ? next : Field();
      isotonic_project(next);
      if (diag)
        for (size_t i = 0; i < next.size(); ++i)
          if (next[i] != before[i]) ++diag->truncation_breaches;
    }
    detail::abort_if_bad(next, k + 1);
    detail::record_frame(next, k + 1, diag);
    path.frames.push_back(std::move(next));
  }
  return path;
}

/// Mild-form stepping of the fluctuation equation: the coefficient is read at
/// the reconstructed state (sqrt(eps)/a(eps)) v + u0 and the noise enters with
/// prefactor a(eps) = eps^kappa; v_0 = 0. Projections act on the reconstructed
/// state, so the path agrees with center_rescale(simulate_u) under one noise.
template <typename Noise>
FieldPath simulate_v(const ModelSpec& m, const Grid& g, const SimScheme& scheme,
                     const FieldPath& flow, const Noise& noise, PathDiagnostics* diag = nullptr) {
  validate_scheme(scheme, m);
  if (static_cast<int>(flow.num_frames()) != g.nt + 1)
    throw std::invalid_argument("simulate_v: flow must hold nt+1 frames");
  const HeatTaps taps = make_heat_taps(g, g.dt);
  const double a = m.a_eps();
  const double state_scale = std::sqrt(m.epsilon) / a;
  FieldPath path;
  path.frames.reserve(static_cast<size_t>(g.nt) + 1);
  path.frames.emplace_back(static_cast<size_t>(g.num_nodes()), 0.0);
  Field incr(static_cast<size_t>(g.num_nodes()));
  std::vector<double> row, prefix;
  Field work(static_cast<size_t>(g.num_nodes()));
  Field scaled(static_cast<size_t>(g.num_nodes()));
  for (int k = 0; k < g.nt; ++k) {
    const Field& v = path.frames.back();
    const Field& u0 = flow[static_cast<size_t>(k)];
    for (size_t i = 0; i < scaled.size(); ++i) scaled[i] = state_scale * v[i];
    detail::stochastic_increment(m, g, noise, k, a, scaled, &u0, incr, row, prefix);
    for (size_t i = 0; i < work.size(); ++i) work[i] = v[i] + incr[i];
    Field next = apply_heat_taps(taps, work);
    const Field& u0next = flow[static_cast<size_t>(k) + 1];
    if (scheme.projection == Projection::kClamp01) {
      for (size_t i = 0; i < next.size(); ++i) {
        double lo = (0.0 - u0next[i]) / state_scale;
        double hi = (1.0 - u0next[i]) / state_scale;
        double c = std::min(hi, std::max(lo, next[i]));
        if (c != next[i] && diag) ++diag->truncation_breaches;
        next[i] = c;
      }
    } else if (scheme.projection == Projection::kIsotonic) {
      Field recon(next.size());
      for (size_t i = 0; i < next.size(); ++i) recon[i] = state_scale * next[i] + u0next[i];
      isotonic_project(recon);
      for (size_t i = 0; i < next.size(); ++i) {
        double c = (recon[i] - u0next[i]) / state_scale;
        if (c != next[i] && diag) ++diag->truncation_breaches;
        next[i] = c;
      }
    }
    detail::abort_if_bad(next, k + 1);
    detail::record_frame(next, k + 1, diag);
    path.frames.push_back(std::move(next));
  }
  return path;
}

/// Framewise moderate-deviation centering: (eps^kappa / sqrt(eps)) (u - u0).
inline FieldPath center_rescale(const FieldPath& u, const FieldPath& u0, double epsilon,
                                double kappa) {
  if (u.num_frames() != u0.num_frames())
    throw std::invalid_argument("center_rescale: frame counts differ");
  const double pref = std::pow(epsilon, kappa - 0.5);
  FieldPath out;
  out.frames.reserve(u.frames.size());
  for (size_t k = 0; k < u.frames.size(); ++k) {
    if (u.frames[k].size() != u0.frames[k].size())
      throw std::invalid_argument("center_rescale: frame sizes differ");
    Field f(u.frames[k].size());
    for (size_t i = 0; i < f.size(); ++i) f[i] = pref * (u.frames[k][i] - u0.frames[k][i]);
    out.frames.push_back(std::move(f));
  }
  return out;
}

}  // namespace spdelab
