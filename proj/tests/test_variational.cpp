#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <functional>
#include <vector>

#include "spdelab/measures.hpp"
#include "spdelab/model.hpp"
#include "spdelab/variational.hpp"
#include "test_util.hpp"
#include "witnesses.hpp"

using namespace spdelab;
using Catch::Approx;

namespace {

constexpr double kPi = 3.14159265358979323846;

// Smooth deterministic control: a few low-frequency modes in time and mark,
// tapered to zero at the edges of the given mark window (defaults to the
// whole mark range) and zero outside it.
Control smooth_control(const Grid& g, const MarkGrid& marks, int variant, double window_lo,
                       double window_hi) {
  Control h = make_control(g, marks);
  double span = window_hi - window_lo;
  for (int k = 0; k < g.nt; ++k) {
    double s = (k + 0.5) * g.dt / g.T;
    double ts = 0.8 + 0.4 * std::sin(kPi * s + 0.3 * variant);
    for (int j = 0; j < marks.na; ++j) {
      double a = marks.midpoint(j);
      double x = (a - window_lo) / span;
      if (x <= 0.0 || x >= 1.0) continue;
      double taper = std::pow(4.0 * x * (1.0 - x), 2);
      double profile = std::cos(kPi * (2.0 * x - 1.0) / 2.0) + 0.3 * std::sin(2.0 * kPi * x + variant);
      h.at(k, j) = ts * taper * profile;
    }
  }
  return h;
}

Control smooth_control(const Grid& g, const MarkGrid& marks, int variant) {
  return smooth_control(g, marks, variant, marks.lo, marks.hi);
}

Control random_control(const Grid& g, const MarkGrid& marks, uint64_t seed) {
  Control h = make_control(g, marks);
  for (int k = 0; k < g.nt; ++k)
    for (int j = 0; j < marks.na; ++j)
      h.at(k, j) = counter_gaussian(seed, 1000, static_cast<uint64_t>(k),
                                    static_cast<uint64_t>(j), RngStream::kWitness);
  return h;
}

FieldPath random_path(const Grid& g, uint64_t seed, bool zero_first) {
  FieldPath p;
  for (int k = 0; k <= g.nt; ++k) {
    if (k == 0 && zero_first) {
      p.frames.emplace_back(static_cast<size_t>(g.num_nodes()), 0.0);
      continue;
    }
    p.frames.push_back(testutil::smooth_field(g, seed + static_cast<uint64_t>(k)));
  }
  return p;
}

double frame_sup_path(const FieldPath& p) {
  double m = 0.0;
  for (const auto& f : p.frames) m = std::max(m, max_abs(f));
  return m;
}

}  // namespace

TEST_CASE("controlled flow is linear and kills constant-in-mark controls") {
  Grid g = make_grid(4.0, 32, 0.5, 10);
  ModelSpec m = make_fvp_model(g, InitialKind::kGaussian, 1e-3, 0.25, 64);
  FieldPath flow = deterministic_flow(m, g);

  Control zero = make_control(g, m.marks);
  FieldPath v0 = solve_controlled(zero, m, flow, g);
  CHECK(frame_sup_path(v0) == 0.0);

  Control h1 = random_control(g, m.marks, 5);
  Control h2 = random_control(g, m.marks, 6);
  Control combo = make_control(g, m.marks);
  for (size_t i = 0; i < combo.values.size(); ++i)
    combo.values[i] = 2.0 * h1.values[i] - 0.5 * h2.values[i];
  FieldPath va = solve_controlled(combo, m, flow, g);
  FieldPath vb = solve_controlled(h1, m, flow, g);
  FieldPath vc = solve_controlled(h2, m, flow, g);
  double worst = 0.0;
  for (size_t k = 0; k < va.frames.size(); ++k)
    for (size_t i = 0; i < va.frames[k].size(); ++i)
      worst = std::max(worst, std::abs(va.frames[k][i] -
                                       (2.0 * vb.frames[k][i] - 0.5 * vc.frames[k][i])));
  CHECK(worst < 1e-12);

  Control ones = make_control(g, m.marks);
  for (double& x : ones.values) x = 1.0;
  FieldPath vone = solve_controlled(ones, m, flow, g);
  CHECK(frame_sup_path(vone) < m.marks.da());  // null direction up to midpoint error
}

TEST_CASE("forward and adjoint maps satisfy the inner-product identity") {
  Grid g = make_grid(3.0, 24, 0.25, 6);

  auto check_model = [&](const ModelSpec& m) {
    FieldPath flow = deterministic_flow(m, g);
    Control h = random_control(g, m.marks, 17);
    FieldPath xi = random_path(g, 400, false);
    double lhs = path_inner(solve_controlled(h, m, flow, g), xi, g);
    double rhs = control_inner(h, adjoint_controlled(xi, m, flow, g), g.dt);
    CHECK(lhs == Approx(rhs).epsilon(1e-12).margin(1e-14));
  };

  check_model(make_sbm_model(g, InitialKind::kGaussian, 1e-3, 0.25, 1.5, 8));
  check_model(make_fvp_model(g, InitialKind::kGaussian, 1e-3, 0.25, 48));
  check_model(make_sheet_model(g, [](double y) { return 1.0 + 0.5 * std::sin(y); }, 1e-3));
  check_model(make_custom_model(
      g, make_mark_grid(-1.0, 1.0, 12),
      [](double a, double y, double u) { return std::sin(a + y) + 0.1 * u; },
      testutil::smooth_field(g, 2), 1e-3));
}

TEST_CASE("variational rate recovers witnesses on a coarse lattice") {
  Grid g = make_grid(4.0, 32, 0.5, 8);
  ModelSpec m = make_fvp_model(g, InitialKind::kGaussian, 1e-3, 0.25, 8);
  FieldPath flow = deterministic_flow(m, g);

  SECTION("zero target") {
    FieldPath zero;
    zero.frames.assign(static_cast<size_t>(g.nt) + 1,
                       Field(static_cast<size_t>(g.num_nodes()), 0.0));
    RateReport rep = rate_general(zero, m, flow, g);
    CHECK_FALSE(rep.infinite);
    CHECK(rep.value == 0.0);
    CHECK(rep.iterations == 0);
  }

  SECTION("attainable target is priced at or under its witness") {
    Control hw = random_control(g, m.marks, 23);
    FieldPath v = solve_controlled(hw, m, flow, g);
    RateReport rep = rate_general(v, m, flow, g, 1e-9);
    REQUIRE_FALSE(rep.infinite);
    CHECK(rep.residual <= 1e-9 * (1.0 + path_norm(v, g)));
    CHECK(rep.value <= control_energy(hw, g.dt) + 1e-9);

    // quadratic scaling under target dilation
    FieldPath v3 = v;
    for (auto& f : v3.frames)
      for (double& x : f) x *= 3.0;
    RateReport rep3 = rate_general(v3, m, flow, g, 1e-9);
    REQUIRE_FALSE(rep3.infinite);
    CHECK(rep3.value == Approx(9.0 * rep.value).epsilon(1e-6));
  }

  SECTION("constant-in-mark controls are null directions") {
    // A control that is constant across marks drives the CDF state only
    // through the midpoint staircase error, so its image shrinks like the
    // mark spacing: bounded at na = 256 and halving when na doubles.
    auto image_sup = [&](int na) {
      ModelSpec mf = make_fvp_model(g, InitialKind::kGaussian, 1e-3, 0.25, na);
      FieldPath flowf = deterministic_flow(mf, g);
      Control ones = make_control(g, mf.marks);
      for (double& x : ones.values) x = 1.0;
      return frame_sup_path(solve_controlled(ones, mf, flowf, g));
    };
    double coarse = image_sup(128);
    double fine = image_sup(256);
    CHECK(fine <= 1e-2);
    CHECK(coarse / fine == Approx(2.0).epsilon(0.5));
  }
}

TEST_CASE("unreachable targets trip the infinity flag") {
  Grid g = make_grid(2.0, 16, 0.25, 4);
  ModelSpec m = make_custom_model(g, make_mark_grid(0.0, 1.0, 4),
                                  [](double, double, double) { return 0.0; },
                                  Field(static_cast<size_t>(g.num_nodes()), 0.0), 1e-3);
  FieldPath flow = deterministic_flow(m, g);
  FieldPath v = random_path(g, 900, true);
  RateReport rep = rate_general(v, m, flow, g);
  CHECK(rep.infinite);
  CHECK(rep.residual > 0.0);
}

TEST_CASE("generalized density of a linearly growing copy of the reference") {
  Grid g = make_grid(4.0, 32, 1.0, 8);
  ModelSpec m = make_sbm_model(g, InitialKind::kLebesgue, 1e-3, 0.25, 2.0, 8);
  SignedMeasurePath mu0 = model_density_path(m, g);
  SignedMeasurePath omega;
  omega.beta = 1.0;
  for (int k = 0; k <= g.nt; ++k) {
    Field w = mu0.densities[static_cast<size_t>(k)];
    for (double& x : w) x *= g.time(k);
    omega.densities.push_back(std::move(w));
  }
  RnReport rn = rn_derivative(omega, mu0, g);
  CHECK(rn.defect == 0.0);
  for (const Field& f : rn.derivative.frames)
    for (size_t i = 0; i + 1 < f.size(); ++i)  // final slot is the cell filler
      CHECK(f[i] == Approx(1.0).margin(1e-12));

  RateReport rate = rate_sbm(omega, mu0, g);
  double window = 2.0 * g.L;  // total cell measure of the lattice
  CHECK(rate.value == Approx(0.5 * window * g.T).epsilon(1e-12));

  CMReport cm = cameron_martin_check(omega, mu0, ModelKind::kSbm, g);
  CHECK(cm.starts_at_zero);
  CHECK(cm.abs_cont_time);
  CHECK(cm.abs_cont_measure);
  CHECK(cm.finite_energy);
  CHECK(cm.energy == Approx(window * g.T).epsilon(1e-12));
}

TEST_CASE("zero deviation has zero rate and passes every membership proxy") {
  Grid g = make_grid(4.0, 32, 1.0, 8);
  ModelSpec m = make_fvp_model(g, InitialKind::kGaussian, 1e-3, 0.25, 16);
  SignedMeasurePath mu0 = model_density_path(m, g);
  SignedMeasurePath omega;
  omega.densities.assign(static_cast<size_t>(g.nt) + 1,
                         Field(static_cast<size_t>(g.num_nodes()), 0.0));
  CHECK(rate_fvp(omega, mu0, g).value == 0.0);
  CHECK(rate_sbm(omega, mu0, g).value == 0.0);
  CMReport cm = cameron_martin_check(omega, mu0, ModelKind::kFvp, g);
  CHECK(cm.starts_at_zero);
  CHECK(cm.abs_cont_time);
  CHECK(cm.abs_cont_measure);
  CHECK(cm.energy == 0.0);
  CHECK(cm.centered);
}

TEST_CASE("mass off the reference support is flagged, not priced") {
  Grid g = make_grid(4.0, 32, 1.0, 8);
  // reference measure lives on [0, 1] for all time
  SignedMeasurePath mu0;
  mu0.densities.assign(static_cast<size_t>(g.nt) + 1,
                       Field(static_cast<size_t>(g.num_nodes()), 0.0));
  for (int k = 0; k <= g.nt; ++k)
    for (int i = 0; i <= g.nx; ++i)
      if (g.node(i) >= 0.0 && g.node(i) <= 1.0)
        mu0.densities[static_cast<size_t>(k)][static_cast<size_t>(i)] = 1.0;
  // deviation grows on [-3, -2], far from the support
  SignedMeasurePath omega;
  omega.densities.assign(static_cast<size_t>(g.nt) + 1,
                         Field(static_cast<size_t>(g.num_nodes()), 0.0));
  for (int k = 0; k <= g.nt; ++k)
    for (int i = 0; i <= g.nx; ++i) {
      double y = g.node(i);
      if (y >= -3.0 && y <= -2.0)
        omega.densities[static_cast<size_t>(k)][static_cast<size_t>(i)] = g.time(k);
    }
  RnReport rn = rn_derivative(omega, mu0, g);
  CHECK(rn.defect > 0.0);
  RateReport rep = rate_sbm(omega, mu0, g);
  CHECK(rep.infinite);
  CMReport cm = cameron_martin_check(omega, mu0, ModelKind::kSbm, g);
  CHECK_FALSE(cm.abs_cont_measure);
}

TEST_CASE("a single-step jump fails the time-regularity proxy") {
  Grid g = make_grid(4.0, 32, 1.0, 16);
  ModelSpec m = make_sbm_model(g, InitialKind::kLebesgue, 1e-3, 0.25, 2.0, 8);
  SignedMeasurePath mu0 = model_density_path(m, g);
  SignedMeasurePath omega;
  Field bump(static_cast<size_t>(g.num_nodes()), 0.0);
  for (int i = 0; i <= g.nx; ++i)
    bump[static_cast<size_t>(i)] = std::exp(-g.node(i) * g.node(i));
  for (int k = 0; k <= g.nt; ++k)
    omega.densities.push_back(k >= g.nt / 2 ? bump
                                            : Field(static_cast<size_t>(g.num_nodes()), 0.0));
  CMReport cm = cameron_martin_check(omega, mu0, ModelKind::kSbm, g);
  CHECK(cm.starts_at_zero);
  CHECK_FALSE(cm.abs_cont_time);
  CHECK(cm.time_concentration > 0.9);
}

TEST_CASE("closed-form rates are quadratic in the deviation") {
  Grid g = make_grid(4.0, 32, 1.0, 8);
  ModelSpec m = make_sbm_model(g, InitialKind::kLebesgue, 1e-3, 0.25, 2.0, 16);
  FieldPath flow = deterministic_flow(m, g);
  SignedMeasurePath mu0 = model_density_path(m, g);
  Control h = smooth_control(g, m.marks, 1);
  FieldPath v = solve_controlled(h, m, flow, g);
  SignedMeasurePath omega = path_to_measure_path(v, g);
  SignedMeasurePath omega2 = omega;
  for (auto& f : omega2.densities)
    for (double& x : f) x *= 2.0;
  double r1 = rate_sbm(omega, mu0, g).value;
  double r2 = rate_sbm(omega2, mu0, g).value;
  CHECK(r1 > 0.0);
  CHECK(r2 == Approx(4.0 * r1).epsilon(1e-12));
}

TEST_CASE("variational and closed-form rates agree for the signed cumulative model") {
  // The closed-form price reads the density ratio through equal-mass windows
  // matched to the noise cells; the variational price inverts the forward map.
  // Both must land on the energy of the control that generated the path.
  Grid g = make_grid(4.0, 32, 0.375, 8);
  ModelSpec m = make_sbm_model(g, InitialKind::kLebesgue, 1e-3, 0.25, 2.0, 2.0);
  FieldPath flow = closed_form_flow(m, g);
  SignedMeasurePath mu0 = path_to_measure_path(flow, g);
  for (uint64_t seed : {1u, 2u, 3u}) {
    Control h = testutil::witness_control(g, m, seed);
    FieldPath v = solve_controlled(h, m, flow, g);
    RateReport general = rate_general(v, m, flow, g, 1e-9);
    REQUIRE_FALSE(general.infinite);
    RateReport closed =
        rate_sbm(path_to_measure_path(v, g), mu0, g, 1e-8, 1e-6, m.marks.cell_measure());
    REQUIRE_FALSE(closed.infinite);
    CHECK(general.value == Approx(control_energy(h, g.dt)).epsilon(1e-5));
    CHECK(closed.value == Approx(general.value).epsilon(1e-3));
  }
}

TEST_CASE("variational and closed-form rates agree for the CDF model") {
  Grid g = make_grid(5.0, 32, 0.375, 8);
  ModelSpec m = make_fvp_model(g, InitialKind::kGaussian, 1e-3, 0.25, 8);
  FieldPath flow = closed_form_flow(m, g);
  SignedMeasurePath mu0 = path_to_measure_path(flow, g);
  for (uint64_t seed : {1u, 2u, 3u}) {
    Control h = testutil::witness_control(g, m, seed);
    FieldPath v = solve_controlled(h, m, flow, g);
    RateReport general = rate_general(v, m, flow, g, 1e-9);
    REQUIRE_FALSE(general.infinite);
    RateReport closed =
        rate_fvp(path_to_measure_path(v, g), mu0, g, 1e-8, 1e-6, m.marks.cell_measure());
    REQUIRE_FALSE(closed.infinite);
    CHECK(general.value == Approx(control_energy(h, g.dt)).epsilon(1e-5));
    CHECK(closed.value == Approx(general.value).epsilon(1e-3));
    CHECK(closed.centering_defect <= 1e-10);
  }
}

TEST_CASE("reference-proportional drift is centered out of the CDF rate") {
  // The CDF price holds the total mass fixed by centering the density ratio
  // per frame. A drift proportional to the reference density shifts every
  // averaging window by the same amount, registers in the pre-centering
  // defect, and leaves the price unchanged.
  Grid g = make_grid(5.0, 32, 0.375, 8);
  ModelSpec m = make_fvp_model(g, InitialKind::kGaussian, 1e-3, 0.25, 8);
  FieldPath flow = closed_form_flow(m, g);
  SignedMeasurePath mu0 = path_to_measure_path(flow, g);
  const double wm = m.marks.cell_measure();
  Control h = testutil::witness_control(g, m, 7);
  FieldPath v1 = solve_controlled(h, m, flow, g);
  SignedMeasurePath om1 = path_to_measure_path(v1, g);
  SignedMeasurePath om2 = om1;
  // Propagate the drift with the same row-renormalized cell step the
  // extraction inverts, so the perturbation injects exactly 0.8 * reference
  // density of flux per unit time and nothing else.
  const HeatTaps taps = make_heat_taps(g, g.dt);
  const int nc = g.num_nodes() - 1;
  Field s(static_cast<size_t>(g.num_nodes()), 0.0);
  for (int k = 0; k < g.nt; ++k) {
    Field seeded = s;
    for (int i = 0; i < nc; ++i)
      seeded[static_cast<size_t>(i)] +=
          0.8 * g.dt * mu0.densities[static_cast<size_t>(k)][static_cast<size_t>(i)];
    for (int i = 0; i < nc; ++i) {
      double acc = 0.0, norm = 0.0;
      for (int o = -taps.half; o <= taps.half; ++o) {
        int l = i + o;
        if (l < 0 || l >= nc) continue;
        double wt = taps.w[static_cast<size_t>(std::abs(o))];
        acc += wt * seeded[static_cast<size_t>(l)];
        norm += wt;
      }
      s[static_cast<size_t>(i)] = acc / norm;
    }
    for (int i = 0; i < nc; ++i)
      om2.densities[static_cast<size_t>(k) + 1][static_cast<size_t>(i)] +=
          s[static_cast<size_t>(i)];
  }
  RateReport r1 = rate_fvp(om1, mu0, g, 1e-8, 1e-6, wm);
  RateReport r2 = rate_fvp(om2, mu0, g, 1e-8, 1e-6, wm);
  REQUIRE_FALSE(r1.infinite);
  REQUIRE_FALSE(r2.infinite);
  CHECK(r1.centering_defect <= 1e-10);
  CHECK(r2.centering_defect == Approx(0.8).epsilon(1e-6));
  CHECK(r2.value == Approx(r1.value).epsilon(1e-8));
}

TEST_CASE("one-point hitting problem closes the duality loop") {
  Grid g = make_grid(4.0, 32, 0.5, 10);
  ModelSpec m = make_fvp_model(g, InitialKind::kGaussian, 1e-3, 0.25, 32);
  FieldPath flow = deterministic_flow(m, g);
  const double delta = 0.3;
  HittingReport hit = rate_min_hitting(m, flow, g, g.nt, g.node_index(0.0), delta);
  REQUIRE_FALSE(hit.infinite);
  CHECK(hit.variance > 0.0);
  CHECK(hit.rate == Approx(delta * delta / (2.0 * hit.variance)).epsilon(1e-13));

  // the optimal control actually hits the target value
  FieldPath v = solve_controlled(hit.minimizer, m, flow, g);
  CHECK(v.frames.back()[static_cast<size_t>(g.node_index(0.0))] ==
        Approx(delta).epsilon(1e-10));

  // and the generic solver prices that target identically
  RateReport rep = rate_general(v, m, flow, g, 1e-10);
  REQUIRE_FALSE(rep.infinite);
  CHECK(rep.value == Approx(hit.rate).epsilon(1e-4));
}

TEST_CASE("mark-to-space substitution identity") {
  SECTION("unit control against a Gaussian CDF") {
    Grid g = make_grid(8.0, 512, 1.0, 1);
    MarkGrid marks = make_mark_grid(0.0, 1.0, 64);
    Field u0(static_cast<size_t>(g.num_nodes())), m0(static_cast<size_t>(g.num_nodes()));
    for (int i = 0; i <= g.nx; ++i) {
      u0[static_cast<size_t>(i)] = normal_cdf(g.node(i));
      m0[static_cast<size_t>(i)] = normal_pdf(g.node(i));
    }
    double res = change_of_variables_residual([](double) { return 1.0; }, marks, u0, m0, g);
    CHECK(res <= 1e-4);
  }
  SECTION("linear control against the identity state") {
    Grid g = make_grid(2.0, 64, 1.0, 1);
    MarkGrid marks = make_mark_grid(0.0, 1.0, 64);
    Field u0(static_cast<size_t>(g.num_nodes())), m0(static_cast<size_t>(g.num_nodes()), 1.0);
    for (int i = 0; i <= g.nx; ++i) u0[static_cast<size_t>(i)] = g.node(i);
    double res = change_of_variables_residual([](double a) { return a; }, marks, u0, m0, g);
    CHECK(res <= 1e-3);
    // both sides individually near 1/3
    double left = 0.0;
    for (int j = 0; j <= marks.na; ++j) {
      double a = marks.lo + j * marks.da();
      left += ((j == 0 || j == marks.na) ? 0.5 : 1.0) * a * a;
    }
    left *= marks.da();
    CHECK(left == Approx(1.0 / 3.0).margin(1e-3));
  }
  SECTION("zero control") {
    Grid g = make_grid(2.0, 32, 1.0, 1);
    MarkGrid marks = make_mark_grid(0.0, 1.0, 16);
    Field u0(static_cast<size_t>(g.num_nodes())), m0(static_cast<size_t>(g.num_nodes()), 1.0);
    for (int i = 0; i <= g.nx; ++i) u0[static_cast<size_t>(i)] = g.node(i);
    CHECK(change_of_variables_residual([](double) { return 0.0; }, marks, u0, m0, g) == 0.0);
  }
  SECTION("non-monotone state is rejected") {
    Grid g = make_grid(2.0, 32, 1.0, 1);
    MarkGrid marks = make_mark_grid(0.0, 1.0, 16);
    Field u0(static_cast<size_t>(g.num_nodes()), 0.0), m0(static_cast<size_t>(g.num_nodes()), 1.0);
    u0[5] = 1.0;
    u0[6] = 0.2;
    CHECK_THROWS_AS(change_of_variables_residual([](double) { return 1.0; }, marks, u0, m0, g),
                    std::invalid_argument);
  }
}
