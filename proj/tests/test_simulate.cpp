#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "spdelab/ensemble.hpp"
#include "spdelab/model.hpp"
#include "spdelab/simulate.hpp"
#include "test_util.hpp"

using namespace spdelab;
using Catch::Approx;

namespace {

double path_max_diff(const FieldPath& a, const FieldPath& b) {
  REQUIRE(a.num_frames() == b.num_frames());
  double worst = 0.0;
  for (size_t k = 0; k < a.frames.size(); ++k)
    worst = std::max(worst, max_abs_diff(a.frames[k], b.frames[k]));
  return worst;
}

}  // namespace

TEST_CASE("isotonic projection hand cases") {
  Field a = {3.0, 1.0, 2.0};
  isotonic_project(a);
  CHECK(a[0] == Approx(2.0));
  CHECK(a[1] == Approx(2.0));
  CHECK(a[2] == Approx(2.0));
  Field b = {1.0, 3.0, 2.0};
  isotonic_project(b);
  CHECK(b[0] == Approx(1.0));
  CHECK(b[1] == Approx(2.5));
  CHECK(b[2] == Approx(2.5));
  Field c = {1.0, 2.0, 3.0};
  isotonic_project(c);
  CHECK(c[1] == 2.0);  // already monotone: untouched
}

TEST_CASE("zero-noise limit reduces to the deterministic flow") {
  Grid g = make_grid(6.0, 64, 0.5, 20);
  ModelSpec m = make_fvp_model(g, InitialKind::kGaussian, 0.0);
  NoiseSource noise(11, 0, g, m.marks);
  FieldPath u = simulate_u(m, g, SimScheme{}, noise);
  FieldPath flow = deterministic_flow(m, g);
  CHECK(path_max_diff(u, flow) < 1e-12);
}

TEST_CASE("CDF state stays in the unit interval under clamping") {
  Grid g = make_grid(6.0, 64, 0.5, 40);
  ModelSpec m = make_fvp_model(g, InitialKind::kPointMass, 0.5);  // large noise
  PathDiagnostics diag;
  NoiseSource noise(12, 3, g, m.marks);
  FieldPath u = simulate_u(m, g, default_scheme(m), noise, &diag);
  for (const Field& f : u.frames)
    for (double x : f) {
      CHECK(x >= 0.0);
      CHECK(x <= 1.0);
    }
  CHECK(diag.finite);
  CHECK(diag.max_abs_state <= 1.0);
}

TEST_CASE("materialized and streamed noise drive identical paths") {
  Grid g = make_grid(4.0, 32, 0.25, 10);
  ModelSpec m = make_sbm_model(g, InitialKind::kGaussian, 1e-2);
  NoiseSource src(21, 5, g, m.marks);
  NoiseRealization mat = sample_white_noise(g, m.marks, 21, 5);
  FieldPath a = simulate_u(m, g, SimScheme{}, src);
  FieldPath b = simulate_u(m, g, SimScheme{}, mat);
  CHECK(path_max_diff(a, b) == 0.0);
}

TEST_CASE("indicator fast path agrees with the dense mark loop") {
  Grid g = make_grid(4.0, 32, 0.25, 10);

  ModelSpec fvp = make_fvp_model(g, InitialKind::kGaussian, 1e-2, 0.25, 64);
  ModelSpec fvp_dense = make_custom_model(
      g, fvp.marks,
      [](double a, double, double u) { return (a < clamp01(u) ? 1.0 : 0.0) - clamp01(u); },
      fvp.F, fvp.epsilon);
  NoiseSource n1(31, 2, g, fvp.marks);
  CHECK(path_max_diff(simulate_u(fvp, g, SimScheme{}, n1),
                      simulate_u(fvp_dense, g, SimScheme{}, n1)) < 1e-13);

  ModelSpec sbm = make_sbm_model(g, InitialKind::kGaussian, 1e-2, 0.25, 2.0, 16);
  ModelSpec sbm_dense = make_custom_model(
      g, sbm.marks,
      [](double a, double, double u) {
        double s = 0.0;
        if (0.0 <= a && a <= u) s += 1.0;
        if (u <= a && a <= 0.0) s += 1.0;
        return s;
      },
      sbm.F, sbm.epsilon);
  NoiseSource n2(31, 3, g, sbm.marks);
  CHECK(path_max_diff(simulate_u(sbm, g, SimScheme{}, n2),
                      simulate_u(sbm_dense, g, SimScheme{}, n2)) < 1e-13);
}

TEST_CASE("sheet fast path agrees with the dense mark loop") {
  Grid g = make_grid(3.0, 24, 0.25, 10);
  auto q = [](double y) { return std::exp(-y * y); };
  ModelSpec sheet = make_sheet_model(g, q, 1e-2);
  ModelSpec dense = make_custom_model(g, sheet.marks, sheet.custom_G, sheet.F, sheet.epsilon);
  NoiseSource noise(41, 7, g, sheet.marks);
  CHECK(path_max_diff(simulate_u(sheet, g, SimScheme{}, noise),
                      simulate_u(dense, g, SimScheme{}, noise)) < 1e-13);
}

TEST_CASE("centering is affine with prefactor eps^(kappa-1/2)") {
  Grid g = make_grid(4.0, 32, 0.25, 5);
  ModelSpec m = make_fvp_model(g, InitialKind::kGaussian, 1e-4, 0.25);
  FieldPath u0 = deterministic_flow(m, g);
  CHECK(std::pow(m.epsilon, m.kappa - 0.5) == Approx(10.0).epsilon(1e-13));

  FieldPath zero = center_rescale(u0, u0, m.epsilon, m.kappa);
  for (const Field& f : zero.frames)
    for (double x : f) CHECK(x == 0.0);

  FieldPath shifted = u0;
  Field w = testutil::smooth_field(g, 5);
  for (Field& f : shifted.frames)
    for (size_t i = 0; i < f.size(); ++i) f[i] += 0.25 * w[i];
  FieldPath v = center_rescale(shifted, u0, m.epsilon, m.kappa);
  double worst = 0.0;
  for (const Field& f : v.frames)
    for (size_t i = 0; i < f.size(); ++i)
      worst = std::max(worst, std::abs(f[i] - 10.0 * 0.25 * w[i]));
  CHECK(worst < 1e-9);
}

TEST_CASE("zero coefficient yields the zero fluctuation") {
  Grid g = make_grid(4.0, 32, 0.25, 10);
  ModelSpec m = make_custom_model(g, make_mark_grid(0.0, 1.0, 8),
                                  [](double, double, double) { return 0.0; },
                                  Field(static_cast<size_t>(g.num_nodes()), 0.0), 1e-3);
  FieldPath flow = deterministic_flow(m, g);
  NoiseSource noise(51, 0, g, m.marks);
  FieldPath v = simulate_v(m, g, SimScheme{}, flow, noise);
  for (const Field& f : v.frames)
    for (double x : f) CHECK(x == 0.0);
}

TEST_CASE("fluctuation recursion matches centered state recursion pathwise") {
  Grid g = make_grid(5.0, 48, 0.5, 25);

  SECTION("state-independent linear coefficient, no projection") {
    Field F(static_cast<size_t>(g.num_nodes()));
    for (int i = 0; i <= g.nx; ++i) F[static_cast<size_t>(i)] = std::tanh(g.node(i));
    ModelSpec m = make_custom_model(
        g, make_mark_grid(0.0, 1.0, 16),
        [](double a, double y, double) { return a * std::exp(-0.5 * y * y); }, F, 1e-3);
    FieldPath flow = deterministic_flow(m, g);
    NoiseSource noise(61, 4, g, m.marks);
    FieldPath u = simulate_u(m, g, SimScheme{}, noise);
    FieldPath direct = simulate_v(m, g, SimScheme{}, flow, noise);
    FieldPath centered = center_rescale(u, flow, m.epsilon, m.kappa);
    CHECK(path_max_diff(direct, centered) < 1e-11);
  }

  SECTION("CDF model with matching clamps") {
    ModelSpec m = make_fvp_model(g, InitialKind::kGaussian, 1e-3);
    SimScheme scheme = default_scheme(m);
    FieldPath flow = deterministic_flow(m, g);
    NoiseSource noise(62, 9, g, m.marks);
    FieldPath u = simulate_u(m, g, scheme, noise);
    FieldPath direct = simulate_v(m, g, scheme, flow, noise);
    FieldPath centered = center_rescale(u, flow, m.epsilon, m.kappa);
    CHECK(path_max_diff(direct, centered) < 1e-10);
  }
}

TEST_CASE("ensemble replicates are deterministic, extendable, and thread-stable") {
  Grid g = make_grid(4.0, 32, 0.25, 10);
  ModelSpec m = make_fvp_model(g, InitialKind::kGaussian, 1e-3, 0.25, 64);
  std::vector<Probe> probes = {make_probe(g, 0.25, 0.0), make_probe(g, 0.25, 1.0)};
  EnsembleResult a = run_ensemble(m, g, default_scheme(m), 40, 99, probes);
  EnsembleResult b = run_ensemble(m, g, default_scheme(m), 80, 99, probes);
  for (int r = 0; r < 40; ++r)
    for (int p = 0; p < 2; ++p) CHECK(a.sample(r, p) == b.sample(r, p));
  EnsembleResult c = run_ensemble(m, g, default_scheme(m), 40, 99, probes,
                                  EnsembleTarget::kFluctuation, 3);
  CHECK(c.samples == a.samples);
  CHECK(c.stats[0].mean == a.stats[0].mean);
  CHECK(c.cov(0, 1) == a.cov(0, 1));
}

TEST_CASE("single replicate leaves the variance undefined") {
  Grid g = make_grid(4.0, 32, 0.25, 5);
  ModelSpec m = make_fvp_model(g, InitialKind::kGaussian, 1e-3, 0.25, 32);
  EnsembleResult e = run_ensemble(m, g, default_scheme(m), 1, 7, {make_probe(g, 0.25, 0.0)});
  CHECK(e.stats[0].n == 1);
  CHECK_FALSE(variance_defined(e.stats[0]));
}

TEST_CASE("fluctuation ensemble is centered and symmetric for a linear coefficient") {
  Grid g = make_grid(5.0, 48, 0.5, 25);
  Field F(static_cast<size_t>(g.num_nodes()));
  for (int i = 0; i <= g.nx; ++i) F[static_cast<size_t>(i)] = std::tanh(g.node(i));
  ModelSpec m = make_custom_model(
      g, make_mark_grid(0.0, 1.0, 16),
      [](double a, double y, double) { return a * std::exp(-0.5 * y * y); }, F, 1e-3);
  std::vector<Probe> probes = {make_probe(g, 0.5, 0.0)};
  EnsembleResult e = run_ensemble(m, g, SimScheme{}, 500, 123, probes);
  const Summary& s = e.stats[0];
  CHECK(std::abs(s.mean) < 3.0 * s.se);
  // exactly Gaussian marginal: skewness sampling sd ~ sqrt(6/N)
  CHECK(std::abs(s.skewness) < 3.0 * std::sqrt(6.0 / 500.0));
  CHECK(s.var > 0.0);
}

TEST_CASE("terminal total mass is conserved in the mean for the signed cumulative model") {
  Grid g = make_grid(8.0, 64, 0.5, 25);
  ModelSpec m = make_sbm_model(g, InitialKind::kGaussian, 0.05, 0.25, 3.0, 16);
  std::vector<Probe> probes = {make_probe(g, 0.5, 8.0), make_probe(g, 0.5, -8.0)};
  EnsembleResult e = run_ensemble(m, g, SimScheme{}, 400, 321, probes, EnsembleTarget::kState);
  double mass0 = m.F.back() - m.F.front();
  double mass_mean = e.stats[0].mean - e.stats[1].mean;
  double var_diff = e.stats[0].var + e.stats[1].var - 2.0 * e.cov(0, 1);
  double se = std::sqrt(std::max(var_diff, 0.0) / 400.0);
  // allow the deterministic zero-padding leak on top of three standard errors
  FieldPath flow = deterministic_flow(m, g);
  double leak = std::abs((flow[25].back() - flow[25].front()) - mass0);
  CHECK(std::abs(mass_mean - mass0) < 3.0 * se + leak + 1e-12);
}

TEST_CASE("probe construction rejects off-grid points") {
  Grid g = make_grid(4.0, 32, 0.25, 5);
  CHECK_THROWS_AS(make_probe(g, 0.13, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(make_probe(g, 0.25, 0.07), std::invalid_argument);
  Probe p = make_probe(g, 0.2, -4.0);
  CHECK(p.k == 4);
  CHECK(p.i == 0);
}
