#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "spdelab/config.hpp"
#include "spdelab/covariance.hpp"
#include "spdelab/ensemble.hpp"
#include "spdelab/measures.hpp"
#include "spdelab/model.hpp"
#include "spdelab/simulate.hpp"
#include "spdelab/stats.hpp"
#include "spdelab/variational.hpp"

namespace spdelab {

/// One verification outcome. pass is always |observed - target| <= tolerance,
/// with tolerance stated in absolute units of the observed quantity (checks
/// quoted relatively or as SE multiples resolve them before recording).
struct CheckResult {
  std::string name;
  bool pass = false;
  double observed = 0.0;
  double target = 0.0;
  double tolerance = 0.0;
  double se = 0.0;  // statistical standard error; 0 for deterministic checks
  double runtime_s = 0.0;
  std::string note;
};

namespace detail {

class Stopwatch {
 public:
  Stopwatch() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

inline CheckResult make_check(std::string name, double observed, double target, double tolerance,
                              double se, double runtime_s, std::string note = "") {
  CheckResult r;
  r.name = std::move(name);
  r.observed = observed;
  r.target = target;
  r.tolerance = tolerance;
  r.se = se;
  r.runtime_s = runtime_s;
  r.note = std::move(note);
  r.pass = std::isfinite(observed) && std::abs(observed - target) <= tolerance;
  return r;
}

inline const char* kind_name(const ModelSpec& m) {
  switch (m.kind) {
    case ModelKind::kSbm:
      return "sbm";
    case ModelKind::kFvp:
      return "fvp";
    default:
      return m.sheet_coupling ? "sheet" : "custom";
  }
}

/// SE of the mean of squared deviations: a distribution-free standard error
/// for a sample variance.
inline double variance_se(const std::vector<double>& xs) {
  if (xs.size() < 2) return 0.0;
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  std::vector<double> sq(xs.size());
  for (size_t i = 0; i < xs.size(); ++i) sq[i] = (xs[i] - mean) * (xs[i] - mean);
  return summarize(sq).se;
}

}  // namespace detail

/// Pairing of a measure frame (cell densities) with a node-sampled function:
/// sum over real cells of density * f(left node) * dx. The final slot of a
/// density field is a filler and never enters.
inline double measure_pair(const Field& w, const Field& f, const Grid& g) {
  double acc = 0.0;
  for (int i = 0; i < g.nx; ++i)
    acc += w[static_cast<size_t>(i)] * f[static_cast<size_t>(i)];
  return acc * g.dx;
}

/// Half the three-point discrete Laplacian, zero at the boundary nodes.
inline Field half_discrete_laplacian(const Field& f, const Grid& g) {
  Field z(f.size(), 0.0);
  for (int i = 1; i < g.nx; ++i) {
    size_t si = static_cast<size_t>(i);
    z[si] = 0.5 * (f[si + 1] - 2.0 * f[si] + f[si - 1]) / (g.dx * g.dx);
  }
  return z;
}

/// Smooth compactly supported test function: the standard mollifier profile
/// exp(1 - 1/(1 - (y/width)^2)) inside |y| < width, exactly zero outside.
inline Field bump_field(const Grid& g, double width) {
  Field f(static_cast<size_t>(g.num_nodes()), 0.0);
  for (int i = 0; i <= g.nx; ++i) {
    double r = g.node(i) / width;
    if (std::abs(r) < 1.0) f[static_cast<size_t>(i)] = std::exp(1.0 - 1.0 / (1.0 - r * r));
  }
  return f;
}

/// Compare the realized quadratic variation of the pairing <mu, f> along
/// simulated state paths with the model's predicted bracket
///   eps * int (carre-du-champ of f) ds,
/// where the integrand is <mu, f^2> for the signed cumulative model and
/// <mu, f^2> - <mu, f>^2 for the probability-valued model. Per path the
/// martingale increment is the pairing increment minus the heat drift
/// <mu_k, half-Laplacian f> dt; ensemble means of both sides are compared as
/// a ratio (or as an absolute difference when the bracket degenerates to 0).
inline CheckResult martingale_qv_check(const ModelSpec& m, const Grid& g, const Field& f,
                                       int replicates, std::uint64_t seed, int threads = 0,
                                       double rel_tol = 0.05) {
  detail::Stopwatch clock;
  require_size(f, g, "martingale_qv_check");
  if (m.kind == ModelKind::kCustom)
    throw std::invalid_argument("martingale_qv_check: bracket forms exist for the named models");
  Field f2(f.size());
  for (size_t i = 0; i < f.size(); ++i) f2[i] = f[i] * f[i];
  const Field drift_f = half_discrete_laplacian(f, g);
  const SimScheme scheme = default_scheme(m);

  std::vector<double> rows =
      collect_replicates(replicates, 2, threads, [&](int r, double* out) {
        NoiseSource noise(seed, static_cast<std::uint64_t>(r), g, m.marks);
        FieldPath path = simulate_u(m, g, scheme, noise);
        double qv = 0.0, rhs = 0.0;
        Field w = field_to_measure(path.frames[0], g);
        double pair_prev = measure_pair(w, f, g);
        for (int k = 0; k < g.nt; ++k) {
          double mf2 = measure_pair(w, f2, g);
          double integrand = mf2;
          if (m.kind == ModelKind::kFvp) {
            double mf = measure_pair(w, f, g);
            integrand = mf2 - mf * mf;
          }
          rhs += m.epsilon * integrand * g.dt;
          double drift = measure_pair(w, drift_f, g) * g.dt;
          w = field_to_measure(path.frames[static_cast<size_t>(k) + 1], g);
          double pair_cur = measure_pair(w, f, g);
          double incr = pair_cur - pair_prev - drift;
          qv += incr * incr;
          pair_prev = pair_cur;
        }
        out[0] = qv;
        out[1] = rhs;
      });

  double mean_qv = 0.0, mean_rhs = 0.0;
  for (int r = 0; r < replicates; ++r) {
    mean_qv += rows[static_cast<size_t>(r) * 2];
    mean_rhs += rows[static_cast<size_t>(r) * 2 + 1];
  }
  mean_qv /= replicates;
  mean_rhs /= replicates;

  std::string name = std::string("qv-ratio-") + detail::kind_name(m);
  if (std::abs(mean_rhs) < 1e-10) {
    return detail::make_check(name, mean_qv - mean_rhs, 0.0, 1e-10, 0.0, clock.seconds(),
                              "degenerate bracket, absolute comparison");
  }
  double ratio = mean_qv / mean_rhs;
  std::vector<double> resid(static_cast<size_t>(replicates));
  for (int r = 0; r < replicates; ++r)
    resid[static_cast<size_t>(r)] =
        rows[static_cast<size_t>(r) * 2] - ratio * rows[static_cast<size_t>(r) * 2 + 1];
  double se = summarize(resid).se / std::abs(mean_rhs);
  return detail::make_check(name, ratio, 1.0, rel_tol, se, clock.seconds());
}

/// Variance of the fluctuation field at each probe location, one ensemble
/// shared by all probes. Samples are divided by the noise scale a(eps), so
/// the reported variance is the quantity whose eps -> 0 limit the covariance
/// quadratures predict.
struct ProbeVariance {
  double location = 0.0;
  double variance = 0.0;       // raw sample variance of the fluctuation
  double normalized = 0.0;     // variance / a(eps)^2
  double se_normalized = 0.0;  // SE of the normalized variance
  std::vector<double> normalized_samples;  // per-replicate values / a(eps)
};

inline std::vector<ProbeVariance> fluctuation_probe_variances(
    const ModelSpec& m, const Grid& g, double t, const std::vector<double>& locations,
    int replicates, std::uint64_t seed, int threads = 0) {
  std::vector<Probe> probes;
  probes.reserve(locations.size());
  for (double y : locations) probes.push_back(make_probe(g, t, y));
  EnsembleResult ens = run_ensemble(m, g, default_scheme(m), replicates, seed, probes,
                                    EnsembleTarget::kFluctuation, threads);
  const double a = m.a_eps();
  std::vector<ProbeVariance> out;
  out.reserve(locations.size());
  for (size_t p = 0; p < locations.size(); ++p) {
    ProbeVariance pv;
    pv.location = locations[p];
    pv.normalized_samples.resize(static_cast<size_t>(replicates));
    for (int r = 0; r < replicates; ++r)
      pv.normalized_samples[static_cast<size_t>(r)] = ens.sample(r, static_cast<int>(p)) / a;
    Summary s = summarize(pv.normalized_samples);
    pv.normalized = s.var;
    pv.variance = s.var * a * a;
    pv.se_normalized = detail::variance_se(pv.normalized_samples);
    out.push_back(std::move(pv));
  }
  return out;
}

/// The analytic eps -> 0 limit of the normalized probe variance. Space-white
/// couplings (sheet) are priced by the squared-kernel quadrature; the named
/// and custom pointwise couplings share one mark across all of space, so
/// their state field's limit is the mark-form quadrature.
inline double fluctuation_variance_limit(const ModelSpec& m, const Grid& g, double t, double y) {
  if (m.sheet_coupling) return gaussian_limit_covariance(m, g, t, y, y);
  return state_fluctuation_covariance(m, g, t, y, y);
}

/// Per probe: normalized fluctuation variance against its analytic limit,
/// passing within 3 statistical standard errors.
inline std::vector<CheckResult> fluctuation_variance_check(const ModelSpec& m, const Grid& g,
                                                           double t,
                                                           const std::vector<double>& locations,
                                                           int replicates, std::uint64_t seed,
                                                           int threads = 0) {
  detail::Stopwatch clock;
  std::vector<ProbeVariance> vars =
      fluctuation_probe_variances(m, g, t, locations, replicates, seed, threads);
  std::vector<CheckResult> out;
  for (const ProbeVariance& pv : vars) {
    double target = fluctuation_variance_limit(m, g, t, pv.location);
    std::string name = "fluct-var/" + std::string(detail::kind_name(m)) + "/y=" +
                       std::to_string(pv.location);
    double tol = 3.0 * pv.se_normalized;
    if (target == 0.0 && pv.se_normalized == 0.0) tol = 1e-12;
    out.push_back(detail::make_check(
        name, pv.normalized, target, tol, pv.se_normalized, clock.seconds(),
        m.sheet_coupling ? "variance / a(eps)^2 vs squared-kernel quadrature"
                         : "variance / a(eps)^2 vs mark-form quadrature"));
  }
  return out;
}

/// Moment scaling of fluctuation increments across dyadic spatial
/// separations: E|v(t, base + d) - v(t, base)|^n for n in {2, 4}, with
/// log-log slope fits. For space-time white noise forcing (sheet coupling)
/// the second moment scales linearly in d, the spatial regularity of the
/// stochastic heat equation.
struct MomentScanRow {
  double separation = 0.0;
  double m2 = 0.0;
  double m2_se = 0.0;
  double m4 = 0.0;
  double m4_se = 0.0;
};

struct MomentScanTable {
  double t = 0.0;
  double base = 0.0;
  std::vector<MomentScanRow> rows;
  bool fit_valid = false;  // false when some moment vanished (nothing to fit)
  LineFit m2_fit;          // slope of log m2 against log separation
  LineFit m4_fit;
  double runtime_s = 0.0;
};

inline MomentScanTable moment_scaling_scan(const ModelSpec& m, const Grid& g, double t,
                                           double base, const std::vector<double>& separations,
                                           int replicates, std::uint64_t seed, int threads = 0) {
  detail::Stopwatch clock;
  if (separations.empty())
    throw std::invalid_argument("moment_scaling_scan: need at least one separation");
  std::vector<Probe> probes;
  probes.push_back(make_probe(g, t, base));
  for (double d : separations) probes.push_back(make_probe(g, t, base + d));
  EnsembleResult ens = run_ensemble(m, g, default_scheme(m), replicates, seed, probes,
                                    EnsembleTarget::kFluctuation, threads);
  MomentScanTable table;
  table.t = t;
  table.base = base;
  std::vector<double> p2(static_cast<size_t>(replicates)), p4(static_cast<size_t>(replicates));
  for (size_t j = 0; j < separations.size(); ++j) {
    for (int r = 0; r < replicates; ++r) {
      double d = ens.sample(r, static_cast<int>(j) + 1) - ens.sample(r, 0);
      p2[static_cast<size_t>(r)] = d * d;
      p4[static_cast<size_t>(r)] = d * d * d * d;
    }
    Summary s2 = summarize(p2), s4 = summarize(p4);
    table.rows.push_back(MomentScanRow{separations[j], s2.mean, s2.se, s4.mean, s4.se});
  }
  table.fit_valid = true;
  for (const MomentScanRow& row : table.rows)
    if (!(row.m2 > 0.0) || !(row.m4 > 0.0)) table.fit_valid = false;
  if (table.fit_valid && table.rows.size() >= 2) {
    std::vector<double> xs, y2, y4;
    for (const MomentScanRow& row : table.rows) {
      xs.push_back(std::log(row.separation));
      y2.push_back(std::log(row.m2));
      y4.push_back(std::log(row.m4));
    }
    table.m2_fit = fit_line(xs, y2);
    table.m4_fit = fit_line(xs, y4);
  } else {
    table.fit_valid = false;
  }
  table.runtime_s = clock.seconds();
  return table;
}

/// Multi-epsilon consistency scan. The exponential tail statement itself is
/// out of reach on a desk: at the moderate-deviation scale the interesting
/// probabilities decay like exp(-c / a(eps)^2) and no replicate budget sees
/// them. The scan therefore verifies the three desk-scale consequences that
/// pin down the quadratic rate, and says so in its statement:
///   (a) the probe variance of v^eps, divided by a(eps)^2, is
///       eps-independent and matches the limiting covariance quadrature
///       (mark form for pointwise couplings, squared-kernel form for sheet);
///   (b) the variational hitting cost min{ rate : v_T(y) = delta } equals
///       the Gaussian dual delta^2 / (2 sigma^2) with sigma^2 from the same
///       independent quadrature;
///   (c) moderate tail frequencies of v_T(y) match the Gaussian tail implied
///       by sigma^2 within 3 SE on the log scale; thin tails (< 10 hits) are
///       reported inconclusive, never passed.
struct MdpScanResult {
  std::string statement;
  std::vector<CheckResult> rows;
};

inline MdpScanResult mdp_consistency_scan(const RunConfig& c) {
  if (c.epsilons.size() < 3)
    throw std::invalid_argument("mdp_consistency_scan: need at least three noise levels");
  Grid g = config_grid(c);
  const double t = c.probe_time > 0.0 ? c.probe_time : g.T;
  std::vector<double> locations = c.probes.empty() ? default_probes(c) : c.probes;

  MdpScanResult scan;
  scan.statement =
      "Exponential tail asymptotics are not observable at this scale: the probabilities decay "
      "like exp(-c / a(eps)^2). This scan verifies the desk-scale consequences that pin down "
      "the quadratic rate instead: (a) probe variance / a(eps)^2 is eps-independent and "
      "matches the limit quadrature, (b) the variational hitting cost equals the Gaussian dual "
      "delta^2/(2 sigma^2) from an independent quadrature, (c) moderate tail frequencies are "
      "Gaussian with variance sigma^2 a(eps)^2.";

  std::vector<double> limits;
  {
    ModelSpec m = config_model(c, c.epsilons.front());
    for (double y : locations) limits.push_back(fluctuation_variance_limit(m, g, t, y));
  }

  // One ensemble per epsilon feeds both the variance rows (a) and the tail
  // rows (c); the stored normalized samples make the reuse free.
  std::vector<std::vector<ProbeVariance>> per_eps;
  std::vector<double> per_eps_seconds;
  for (double eps : c.epsilons) {
    detail::Stopwatch clock;
    ModelSpec m = config_model(c, eps);
    per_eps.push_back(
        fluctuation_probe_variances(m, g, t, locations, c.replicates, c.seed, c.threads));
    per_eps_seconds.push_back(clock.seconds());
  }

  // (a) normalized probe variances per epsilon, plus the spread across eps.
  for (size_t e = 0; e < c.epsilons.size(); ++e) {
    for (size_t p = 0; p < locations.size(); ++p) {
      const ProbeVariance& pv = per_eps[e][p];
      double target = limits[p];
      std::string name = "mdp-var-match/eps=" + std::to_string(c.epsilons[e]) +
                         "/y=" + std::to_string(pv.location);
      double tol = c.variance_tol * std::abs(target);
      std::string note = "variance divided by the squared noise scale";
      if (target == 0.0) {
        tol = 1e-12;
        note += "; zero-coefficient target";
      }
      scan.rows.push_back(detail::make_check(name, pv.normalized, target, tol,
                                             pv.se_normalized, per_eps_seconds[e], note));
    }
  }
  for (size_t p = 0; p < locations.size(); ++p) {
    double lo = per_eps[0][p].normalized, hi = lo;
    for (const auto& vars : per_eps) {
      lo = std::min(lo, vars[p].normalized);
      hi = std::max(hi, vars[p].normalized);
    }
    double spread = (lo > 0.0) ? hi / lo - 1.0 : (hi > 0.0 ? INFINITY : 0.0);
    scan.rows.push_back(detail::make_check(
        "mdp-var-spread/y=" + std::to_string(locations[p]), spread, 0.0, c.variance_tol, 0.0,
        0.0, "relative spread of normalized variances across eps"));
  }

  // (b) variational hitting cost against the Gaussian dual, per probe.
  {
    detail::Stopwatch clock;
    ModelSpec m = config_model(c, c.epsilons.front());
    FieldPath flow = closed_form_flow(m, g);
    for (size_t p = 0; p < locations.size(); ++p) {
      double y = locations[p];
      Probe probe = make_probe(g, t, y);
      HittingReport hit = rate_min_hitting(m, flow, g, probe.k, probe.i, c.hit_delta);
      double sigma2 = limits[p];
      std::string name = "mdp-rate-duality/y=" + std::to_string(y);
      if (hit.infinite || sigma2 <= 0.0) {
        scan.rows.push_back(detail::make_check(name, hit.infinite ? INFINITY : 0.0,
                                               sigma2 <= 0.0 ? 0.0 : 1.0, 0.0, 0.0,
                                               clock.seconds(), "degenerate probe"));
        continue;
      }
      double target = c.hit_delta * c.hit_delta / (2.0 * sigma2);
      scan.rows.push_back(detail::make_check(name, hit.rate, target,
                                             c.duality_tol * std::abs(target), 0.0,
                                             clock.seconds(),
                                             "variational cost vs Gaussian dual"));
    }
  }

  // (c) moderate tail log-frequencies per epsilon, probe and band edge.
  static const double kTailZ[] = {1.2816, 1.6449, 2.0537};
  for (size_t e = 0; e < c.epsilons.size(); ++e) {
    for (size_t p = 0; p < locations.size(); ++p) {
      double sigma2 = limits[p];
      if (sigma2 <= 0.0) continue;
      double band = std::sqrt(sigma2);
      const std::vector<double>& xs = per_eps[e][p].normalized_samples;
      for (double z : kTailZ) {
        int count = 0;
        for (double x : xs)
          if (x > z * band) ++count;
        std::string name = "mdp-tail/eps=" + std::to_string(c.epsilons[e]) +
                           "/y=" + std::to_string(locations[p]) + "/z=" + std::to_string(z);
        if (count < 10) {
          CheckResult r =
              detail::make_check(name, static_cast<double>(count), 10.0, 0.0, 0.0,
                                 per_eps_seconds[e], "inconclusive: fewer than 10 tail hits");
          r.pass = false;
          scan.rows.push_back(r);
          continue;
        }
        double phat = static_cast<double>(count) / c.replicates;
        double target = -std::log(1.0 - normal_cdf(z));
        double se = std::sqrt((1.0 - phat) / (phat * c.replicates));
        scan.rows.push_back(detail::make_check(name, -std::log(phat), target, 3.0 * se, se,
                                               per_eps_seconds[e],
                                               "log tail frequency vs Gaussian tail"));
      }
    }
  }
  return scan;
}

}  // namespace spdelab
