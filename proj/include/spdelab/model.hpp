#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>

#include "spdelab/grid.hpp"
#include "spdelab/heat.hpp"
#include "spdelab/noise.hpp"
#include "spdelab/rng.hpp"
#include "spdelab/stats.hpp"

namespace spdelab {

/// Noise-coefficient families.
///
/// kSbm:    G(a,y,u) = 1{0<=a<=u} + 1{u<=a<=0} on marks [-A, A];
///          the state is a signed cumulative mass anchored at y = 0.
/// kFvp:    G(a,y,u) = 1{a<u} - u on marks [0, 1]; the state is a CDF.
/// kCustom: user-supplied G(a,y,u); optionally "sheet" coupling, where mark
///          cell j feeds only lattice cell j (a discretized space-time white
///          noise with local intensity q(y), amplitude sqrt(q/(dx*da))).
enum class ModelKind { kSbm, kFvp, kCustom };

/// Named initial conditions with closed-form heat flows.
enum class InitialKind { kLebesgue, kGaussian, kPointMass, kUniform01, kCustomInit };

inline std::string to_string(ModelKind k) {
  switch (k) {
    case ModelKind::kSbm: return "sbm";
    case ModelKind::kFvp: return "fvp";
    default: return "custom";
  }
}

struct ModelSpec {
  ModelKind kind = ModelKind::kFvp;
  MarkGrid marks;
  double epsilon = 1e-3;
  double kappa = 0.25;
  InitialKind initial = InitialKind::kCustomInit;
  Field F;  // initial state sampled on the grid nodes
  std::function<double(double, double, double)> custom_G;  // (a, y, u), kCustom only
  bool sheet_coupling = false;  // kCustom: diagonal mark-to-cell coupling
  double dx = 0.0;              // lattice spacing the sheet amplitude is locked to

  /// Moderate-deviation normalization a(eps) = eps^kappa.
  double a_eps() const { return std::pow(epsilon, kappa); }
};

inline double clamp01(double u) { return std::min(1.0, std::max(0.0, u)); }

/// Initial cumulative state F for the named initial measures.
/// SBM anchors the cumulative at y = 0 (signed mass of [0, y]);
/// FVP uses the probability CDF anchored at -infinity.
inline double initial_cdf(InitialKind init, ModelKind kind, double t, double y) {
  const bool sbm = (kind == ModelKind::kSbm);
  switch (init) {
    case InitialKind::kLebesgue:
      if (!sbm) throw std::invalid_argument("initial_cdf: lebesgue-cdf needs unbounded state");
      return y;  // heat flow fixes the identity
    case InitialKind::kGaussian: {
      double c = normal_cdf(y / std::sqrt(1.0 + t));
      return sbm ? c - 0.5 : c;
    }
    case InitialKind::kPointMass:
      if (t == 0.0) return sbm ? (y > 0.0 ? 1.0 : 0.0) : (y >= 0.0 ? 1.0 : 0.0);
      return sbm ? normal_cdf(y / std::sqrt(t)) - 0.5 : normal_cdf(y / std::sqrt(t));
    case InitialKind::kUniform01: {
      if (t == 0.0) return clamp01(y);
      double st = std::sqrt(t);
      return y * normal_cdf(y / st) - (y - 1.0) * normal_cdf((y - 1.0) / st) +
             st * (normal_pdf(y / st) - normal_pdf((y - 1.0) / st));
    }
    default:
      throw std::invalid_argument("initial_cdf: no closed form for a custom initial state");
  }
}

/// Density of the heat flow of the named initial measures.
inline double initial_density(InitialKind init, double t, double y) {
  switch (init) {
    case InitialKind::kLebesgue:
      return 1.0;
    case InitialKind::kGaussian: {
      double s = 1.0 + t;
      return std::exp(-y * y / (2.0 * s)) / std::sqrt(6.283185307179586476925286766559 * s);
    }
    case InitialKind::kPointMass:
      if (t <= 0.0) throw std::invalid_argument("initial_density: point mass has no density at t=0");
      return heat_kernel(t, y);
    case InitialKind::kUniform01:
      if (t == 0.0) return (y >= 0.0 && y <= 1.0) ? 1.0 : 0.0;
      return normal_cdf(y / std::sqrt(t)) - normal_cdf((y - 1.0) / std::sqrt(t));
    default:
      throw std::invalid_argument("initial_density: no closed form for a custom initial state");
  }
}

inline Field sample_initial_cdf(InitialKind init, ModelKind kind, const Grid& g, double t = 0.0) {
  Field f(static_cast<size_t>(g.num_nodes()));
  for (int i = 0; i <= g.nx; ++i) f[static_cast<size_t>(i)] = initial_cdf(init, kind, t, g.node(i));
  return f;
}

inline Field sample_initial_density(InitialKind init, const Grid& g, double t) {
  Field f(static_cast<size_t>(g.num_nodes()));
  for (int i = 0; i <= g.nx; ++i) f[static_cast<size_t>(i)] = initial_density(init, t, g.node(i));
  return f;
}

/// Mark half-width for the signed cumulative model: covers twice the initial
/// envelope plus five standard deviations of the terminal noise spread.
inline double suggest_mark_halfwidth(const Field& F, double epsilon, double T) {
  double env = max_abs(F);
  return 2.0 * env + 5.0 * std::sqrt(std::max(epsilon * (env + 1.0) * T, 0.0)) + 1.0;
}

inline ModelSpec make_sbm_model(const Grid& g, InitialKind init, double epsilon,
                                double kappa = 0.25, double halfwidth = 0.0,
                                int na_per_unit = 32) {
  ModelSpec m;
  m.kind = ModelKind::kSbm;
  m.initial = init;
  m.epsilon = epsilon;
  m.kappa = kappa;
  m.F = sample_initial_cdf(init, ModelKind::kSbm, g);
  m.dx = g.dx;
  double A = (halfwidth > 0.0) ? halfwidth : suggest_mark_halfwidth(m.F, epsilon, g.T);
  int na = std::max(4, static_cast<int>(std::ceil(2.0 * A * na_per_unit)));
  if (na % 2 != 0) ++na;  // keep midpoints off a = 0
  m.marks = make_mark_grid(-A, A, na);
  return m;
}

inline ModelSpec make_fvp_model(const Grid& g, InitialKind init, double epsilon,
                                double kappa = 0.25, int na = 256) {
  if (init == InitialKind::kLebesgue)
    throw std::invalid_argument("make_fvp_model: initial measure must be a probability");
  ModelSpec m;
  m.kind = ModelKind::kFvp;
  m.initial = init;
  m.epsilon = epsilon;
  m.kappa = kappa;
  m.F = sample_initial_cdf(init, ModelKind::kFvp, g);
  m.dx = g.dx;
  m.marks = make_mark_grid(0.0, 1.0, na);
  return m;
}

inline ModelSpec make_custom_model(const Grid& g, MarkGrid marks,
                                   std::function<double(double, double, double)> G, Field F,
                                   double epsilon, double kappa = 0.25) {
  require_size(F, g, "make_custom_model");
  ModelSpec m;
  m.kind = ModelKind::kCustom;
  m.marks = marks;
  m.epsilon = epsilon;
  m.kappa = kappa;
  m.F = std::move(F);
  m.custom_G = std::move(G);
  m.dx = g.dx;
  return m;
}

/// Discretized space-time white noise with local intensity q(y) >= 0 and a
/// state-independent coefficient. Mark cells coincide with lattice cells, so
/// node i hears only mark cell min(i, nx-1). The amplitude sqrt(q/(dx*da))
/// is locked to this lattice; refining the grid rescales the coefficient.
inline ModelSpec make_sheet_model(const Grid& g, std::function<double(double)> q,
                                  double epsilon, double kappa = 0.25) {
  ModelSpec m;
  m.kind = ModelKind::kCustom;
  m.sheet_coupling = true;
  m.marks = make_mark_grid(-g.L, g.L, g.nx);
  m.epsilon = epsilon;
  m.kappa = kappa;
  m.F.assign(static_cast<size_t>(g.num_nodes()), 0.0);
  m.dx = g.dx;
  const double L = g.L, dx = g.dx, da = m.marks.da();
  const int nx = g.nx;
  m.custom_G = [q, L, dx, da, nx](double a, double y, double /*u*/) {
    int cell_of_a = std::min(nx - 1, std::max(0, static_cast<int>((a + L) / da)));
    int cell_of_y = std::min(nx - 1, std::max(0, static_cast<int>(std::lround((y + L) / dx))));
    if (cell_of_a != cell_of_y) return 0.0;
    return std::sqrt(std::max(q(y), 0.0) / (dx * da));
  };
  return m;
}

/// Pointwise noise coefficient G(a, y, u).
inline double evaluate_G(const ModelSpec& m, double a, double y, double u) {
  switch (m.kind) {
    case ModelKind::kSbm: {
      double g = 0.0;
      if (0.0 <= a && a <= u) g += 1.0;
      if (u <= a && a <= 0.0) g += 1.0;
      return g;
    }
    case ModelKind::kFvp: {
      double c = clamp01(u);
      return (a < c ? 1.0 : 0.0) - c;
    }
    default:
      return m.custom_G(a, y, u);
  }
}

/// lambda-integral of |G(.,y,u1) - G(.,y,u2)|^2 over the mark space.
/// Closed forms: |u1-u2| for the signed cumulative model (marks wide enough),
/// |d| - d^2 with d = u1-u2 for the CDF model; midpoint quadrature otherwise.
inline double g_l2_modulus(const ModelSpec& m, double y, double u1, double u2) {
  switch (m.kind) {
    case ModelKind::kSbm: {
      double A = m.marks.hi;
      double c1 = std::clamp(u1, -A, A), c2 = std::clamp(u2, -A, A);
      return std::abs(c1 - c2);
    }
    case ModelKind::kFvp: {
      double d = clamp01(u1) - clamp01(u2);
      return std::abs(d) - d * d;
    }
    default: {
      double s = 0.0;
      for (int j = 0; j < m.marks.na; ++j) {
        double a = m.marks.midpoint(j);
        double d = m.custom_G(a, y, u1) - m.custom_G(a, y, u2);
        s += d * d;
      }
      return s * m.marks.cell_measure();
    }
  }
}

/// lambda-integral of |G(.,y,u)|^2: |u| (signed cumulative), u(1-u) (CDF),
/// midpoint quadrature otherwise.
inline double g_l2_bound(const ModelSpec& m, double y, double u) {
  switch (m.kind) {
    case ModelKind::kSbm:
      return std::min(std::abs(u), m.marks.hi);
    case ModelKind::kFvp: {
      double c = clamp01(u);
      return c * (1.0 - c);
    }
    default: {
      double s = 0.0;
      for (int j = 0; j < m.marks.na; ++j) {
        double g = m.custom_G(m.marks.midpoint(j), y, u);
        s += g * g;
      }
      return s * m.marks.cell_measure();
    }
  }
}

/// Noise-free heat flow of the initial state: frames[k] = exp(t_k*Lap/2) F.
inline FieldPath deterministic_flow(const ModelSpec& m, const Grid& g) {
  require_size(m.F, g, "deterministic_flow");
  FieldPath path;
  path.frames.reserve(static_cast<size_t>(g.nt) + 1);
  path.frames.push_back(m.F);
  HeatTaps taps = make_heat_taps(g, g.dt);
  for (int k = 0; k < g.nt; ++k) path.frames.push_back(apply_heat_taps(taps, path.frames.back()));
  return path;
}

/// Mean state at an arbitrary time: closed form for named initial measures,
/// one-shot kernel convolution otherwise.
inline Field flow_at(const ModelSpec& m, const Grid& g, double t) {
  if (m.initial != InitialKind::kCustomInit) return sample_initial_cdf(m.initial, m.kind, g, t);
  if (t == 0.0) return m.F;
  return heat_propagate(m.F, g, t);
}

/// Mean-state path sampled from flow_at at every frame time. Unlike
/// deterministic_flow, the step propagator's zero padding never touches the
/// frames, so far-field values stay exact; preferred wherever the flow enters
/// a coefficient evaluation (rate functionals, covariance quadratures).
inline FieldPath closed_form_flow(const ModelSpec& m, const Grid& g) {
  FieldPath path;
  path.frames.reserve(static_cast<size_t>(g.nt) + 1);
  for (int k = 0; k <= g.nt; ++k) path.frames.push_back(flow_at(m, g, g.time(k)));
  return path;
}

/// Empirical worst-case ratios for the square-modulus and growth inequalities
///   mod_ratio    = integral |dG|^2 dlambda / |u1 - u2|
///   growth_ratio = integral |G|^2 dlambda / (1 + u^2 + e^(2*beta0*|y|))
struct ConditionReport {
  int samples = 0;
  double max_modulus_ratio = 0.0;
  double max_growth_ratio = 0.0;
  double worst_modulus_u1 = 0.0;
  double worst_modulus_u2 = 0.0;
  double worst_growth_u = 0.0;
  double worst_growth_y = 0.0;
};

inline ConditionReport check_conditions(const ModelSpec& m, const Grid& g, double beta0,
                                        int samples, uint64_t seed) {
  ConditionReport rep;
  rep.samples = samples;
  double ulo, uhi;
  switch (m.kind) {
    case ModelKind::kSbm: ulo = m.marks.lo; uhi = m.marks.hi; break;
    case ModelKind::kFvp: ulo = 0.0; uhi = 1.0; break;
    default: ulo = -2.0; uhi = 2.0; break;
  }
  for (int s = 0; s < samples; ++s) {
    uint64_t k = static_cast<uint64_t>(s);
    double y = (2.0 * counter_uniform(seed, 0, k, 0) - 1.0) * g.L;
    double u1 = ulo + (uhi - ulo) * counter_uniform(seed, 0, k, 1);
    double u2 = ulo + (uhi - ulo) * counter_uniform(seed, 0, k, 2);
    if (std::abs(u1 - u2) > 1e-12) {
      double r = g_l2_modulus(m, y, u1, u2) / std::abs(u1 - u2);
      if (r > rep.max_modulus_ratio) {
        rep.max_modulus_ratio = r;
        rep.worst_modulus_u1 = u1;
        rep.worst_modulus_u2 = u2;
      }
    }
    double denom = 1.0 + u1 * u1 + std::exp(2.0 * beta0 * std::abs(y));
    double r = g_l2_bound(m, y, u1) / denom;
    if (r > rep.max_growth_ratio) {
      rep.max_growth_ratio = r;
      rep.worst_growth_u = u1;
      rep.worst_growth_y = y;
    }
  }
  return rep;
}

}  // namespace spdelab
