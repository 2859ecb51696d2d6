// Diagnostics tests: jets, vector-field words and their norms, the energy
// functional, decay fitting, free-flow comparison, and the error ODE bound.

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <utility>
#include <vector>

#include "rsw/diagnostics.hpp"

using Catch::Approx;
using namespace rsw;

namespace {

ScalarField bump(const GridSpec& g, double w, double amp, double cx, double cy) {
  return dealias(ScalarField::sample(g, [=](double x, double y) {
    const double dx = x - cx, dy = y - cy;
    return amp * std::exp(-(dx * dx + dy * dy) / (w * w));
  }));
}

SymState test_sym(const GridSpec& g, double amp) {
  return SymState{bump(g, 2.0, amp, 1.0, -0.5),
                  VectorField(bump(g, 1.7, -0.8 * amp, -1.2, 0.8),
                              bump(g, 2.3, 0.6 * amp, 0.4, 1.5)),
                  0.0};
}

double max_triple_diff(const Triple& a, const Triple& b) {
  Triple d = a - b;
  return d.max_abs();
}

ScalarField coordinate_field(const GridSpec& g, int axis) {
  return ScalarField::sample(g, [&](double x, double y) {
    return (axis == 0 ? x : y) - g.center();
  });
}

}  // namespace

// ---------------------------------------------------------------------------
// Jets
// ---------------------------------------------------------------------------

TEST_CASE("jets report their depth and reject unsupported depths") {
  const GridSpec g = make_grid(32, 16.0);
  SymState s = test_sym(g, 0.05);
  REQUIRE(make_jet(s, 0).depth() == 0);
  REQUIRE(make_jet(s, 3).depth() == 3);
  REQUIRE_THROWS_AS(make_jet(s, 4), UnsupportedOrderError);
  REQUIRE_THROWS_AS(make_jet(s, -1), UnsupportedOrderError);
}

TEST_CASE("the jet's first level is the evolution right-hand side") {
  const GridSpec g = make_grid(64, 32.0);
  SymState s = test_sym(g, 0.05);
  Triple U = to_triple(s);

  Triple dt_full = vf_apply(VfGen::dt, s);
  REQUIRE(max_triple_diff(dt_full, dealias(sym_rhs_triple(U))) == 0.0);

  Triple dt_lin = vf_apply(VfGen::dt, s, true);
  REQUIRE(max_triple_diff(dt_lin, dealias(apply_L(U))) == 0.0);
}

TEST_CASE("the boost generator at time zero is coordinate times the time derivative") {
  const GridSpec g = make_grid(64, 32.0);
  SymState s = test_sym(g, 0.05);
  Triple dtU = sym_rhs_triple(to_triple(s));

  for (int axis = 0; axis < 2; ++axis) {
    ScalarField xf = coordinate_field(g, axis);
    Triple expect(pointwise_product(xf, dtU[0], true), pointwise_product(xf, dtU[1], true),
                  pointwise_product(xf, dtU[2], true));
    Triple got = vf_apply(axis == 0 ? VfGen::L1 : VfGen::L2, s);
    REQUIRE(max_triple_diff(got, expect) < 1e-13);
  }
}

TEST_CASE("the rotation generator annihilates radial states") {
  // Widths near sqrt(L / k_cut) keep both the dealias-mask truncation and the
  // periodic-wrap tail at rounding level, so the sampled bumps are radial to
  // full precision as band-limited functions.
  const GridSpec g = make_grid(64, 32.0);
  SymState s{bump(g, 2.8, 0.1, 0.0, 0.0),
             VectorField(bump(g, 2.7, 0.07, 0.0, 0.0), bump(g, 2.9, -0.05, 0.0, 0.0)), 0.0};
  Triple rot = vf_apply(VfGen::omega12, s);
  REQUIRE(rot.max_abs() < 1e-10);

  // and acts as the angular derivative in general
  SymState off = test_sym(g, 0.1);
  ScalarField x1 = coordinate_field(g, 0), x2 = coordinate_field(g, 1);
  Triple U = to_triple(off);
  Triple expect = dealias(Triple(pointwise_product(x1, deriv(U[0], 1), true) -
                                     pointwise_product(x2, deriv(U[0], 0), true),
                                 pointwise_product(x1, deriv(U[1], 1), true) -
                                     pointwise_product(x2, deriv(U[1], 0), true),
                                 pointwise_product(x1, deriv(U[2], 1), true) -
                                     pointwise_product(x2, deriv(U[2], 0), true)));
  REQUIRE(max_triple_diff(vf_apply(VfGen::omega12, off), expect) < 1e-12);
}

// ---------------------------------------------------------------------------
// Word norms
// ---------------------------------------------------------------------------

TEST_CASE("order-zero word norm is the plain L2 norm of the state") {
  const GridSpec g = make_grid(64, 32.0);
  SymState s = test_sym(g, 0.08);
  const double direct = weighted_norm(to_triple(s), NormSpec::sobolev(0.0));
  REQUIRE(vf_norm(s, 0, 2) == Approx(direct).epsilon(1e-12));
}

TEST_CASE("word norms grow with the order and validate their arguments") {
  const GridSpec g = make_grid(64, 32.0);
  SymState s = test_sym(g, 0.08);
  const double n0 = vf_norm(s, 0, 2);
  const double n1 = vf_norm(s, 1, 2);
  const double n2 = vf_norm(s, 2, 2);
  REQUIRE(n0 > 0.0);
  REQUIRE(n1 > n0);
  REQUIRE(n2 > n1);
  REQUIRE_THROWS_AS(vf_norm(s, 3, 2), UnsupportedOrderError);
  REQUIRE_THROWS_AS(vf_norm(s, -1, 2), UnsupportedOrderError);
  REQUIRE_THROWS_AS(vf_norm(s, 1, 1), Error);
}

TEST_CASE("the sup-form weight moves the norm in the expected direction") {
  const GridSpec g = make_grid(64, 32.0);
  SymState s = test_sym(g, 0.08);
  const double flat = vf_norm(s, 1, 0, 0.0);
  const double damped = vf_norm(s, 1, 0, 1.0);   // (1+t+|x|)^{-1} <= 1
  const double boosted = vf_norm(s, 1, 0, -1.0); // (1+t+|x|) >= 1
  REQUIRE(damped < flat);
  REQUIRE(boosted > flat);
}

TEST_CASE("the size proxy is the weighted sup plus the two order-2 word sums") {
  const GridSpec g = make_grid(64, 32.0);
  PrimitiveState p = to_primitive(test_sym(g, 0.08));
  SymState s = to_sym(p);  // same conversion path the record uses
  DiagnosticsRecord rec = compute_diagnostics(p, DiagnosticsOptions{});
  const double expect = vf_norm(s, 2, 0, -1.0) + vf_norm(s, 2, 2) + rec.l2_dU;
  REQUIRE(x_proxy(s) == Approx(expect).epsilon(1e-13));
}

// ---------------------------------------------------------------------------
// Energy functional
// ---------------------------------------------------------------------------

TEST_CASE("energy coefficients report the exact entry bound") {
  const GridSpec g = make_grid(64, 32.0);
  SymState s = test_sym(g, 0.1);
  EnergyResult e = energy_F(s, 0);
  const double expect =
      std::max({s.u.u1.max_abs(), s.u.u2.max_abs(), 0.5 * s.m.max_abs()});
  REQUIRE(e.max_coeff_inf == expect);
}

TEST_CASE("energy scales quadratically at small amplitude and stays positive") {
  const GridSpec g = make_grid(64, 32.0);
  auto value = [&](double amp) { return energy_F(test_sym(g, amp), 1).value; };
  const double v1 = value(0.04);
  const double v2 = value(0.02);
  REQUIRE(v1 > 0.0);
  REQUIRE(v2 > 0.0);
  // ratio 4 up to the cubic coefficient correction, O(amp)
  REQUIRE(v1 / v2 == Approx(4.0).epsilon(0.05));
}

// ---------------------------------------------------------------------------
// Decay fitting
// ---------------------------------------------------------------------------

TEST_CASE("fitting recovers exact power laws") {
  for (double q : {0.0, 0.5, 1.0, 2.0}) {
    std::vector<std::pair<double, double>> series;
    for (double t = 0.0; t <= 10.0 + 1e-9; t += 0.5)
      series.emplace_back(t, 3.7 * std::pow(1.0 + t, -q));
    FitResult fit = fit_decay(series, 1.0, 9.0);
    REQUIRE(fit.exponent == Approx(q).margin(1e-10));
    REQUIRE(fit.prefactor == Approx(3.7).epsilon(1e-10));
    REQUIRE(fit.residual < 1e-12);
    REQUIRE(fit.samples == 17);
  }
}

TEST_CASE("fitting tolerates small multiplicative perturbations") {
  std::vector<std::pair<double, double>> series;
  for (double t = 0.0; t <= 20.0 + 1e-9; t += 0.5)
    series.emplace_back(t, 2.0 * std::pow(1.0 + t, -1.0) * (1.0 + 0.01 * std::sin(3.0 * t)));
  FitResult fit = fit_decay(series, 1.0, 19.0);
  REQUIRE(fit.exponent == Approx(1.0).margin(0.05));
  REQUIRE(fit.residual < 0.02);
}

TEST_CASE("fitting rejects bad windows and bad values") {
  std::vector<std::pair<double, double>> series;
  for (double t = 0.0; t <= 10.0 + 1e-9; t += 1.0) series.emplace_back(t, 1.0 / (1.0 + t));
  REQUIRE_THROWS_AS(fit_decay(series, 5.0, 5.0), FitError);
  REQUIRE_THROWS_AS(fit_decay(series, 9.5, 20.0), FitError);  // one sample only

  series[3].second = 0.0;
  REQUIRE_THROWS_AS(fit_decay(series, 0.0, 10.0), FitError);
  series[3].second = -1.0;
  REQUIRE_THROWS_AS(fit_decay(series, 0.0, 10.0), FitError);
}

// ---------------------------------------------------------------------------
// Free-flow comparison
// ---------------------------------------------------------------------------

namespace {

Trajectory wave_trajectory(const GridSpec& g, bool linear_only) {
  PrimitiveState raw{bump(g, 2.0, 0.05, 1.0, -0.5),
                     VectorField(bump(g, 1.7, -0.04, -1.2, 0.8), bump(g, 2.3, 0.03, 0.4, 1.5)),
                     0.0};
  PrimitiveState k = project_zero_rv(raw).K;
  k.time = 0.0;
  IntegratorConfig cfg;
  cfg.t_end = 4.0;
  cfg.checkpoint_interval = 1.0;
  cfg.linear_only = linear_only;
  return integrate(k, cfg);
}

}  // namespace

TEST_CASE("the free-flow difference vanishes at the matching time") {
  const GridSpec g = make_grid(64, 32.0);
  Trajectory traj = wave_trajectory(g, false);
  std::vector<ScatterPoint> pts = scattering_diagnostic(traj, 2.0, {1.0, 2.0, 3.0});
  REQUIRE(pts.size() == 3);
  REQUIRE(pts[1].time == 2.0);
  // rounding only: the matched free flow is the same state up to a transform
  // round trip
  REQUIRE(pts[1].diff_U < 1e-12);
  REQUIRE(pts[1].diff_Ut < 1e-12);
  REQUIRE(pts[0].diff_U > 0.0);
  REQUIRE(pts[2].diff_U > 0.0);
}

TEST_CASE("a linear-only trajectory matches its free flow at every checkpoint") {
  const GridSpec g = make_grid(64, 32.0);
  Trajectory traj = wave_trajectory(g, true);
  std::vector<ScatterPoint> pts = scattering_diagnostic(traj, 2.0, {0.0, 1.0, 3.0, 4.0});
  for (const ScatterPoint& p : pts) {
    REQUIRE(p.diff_U < 1e-9);
    REQUIRE(p.diff_Ut < 1e-9);
  }
}

TEST_CASE("free-flow comparison validates its sample times and order") {
  const GridSpec g = make_grid(64, 32.0);
  Trajectory traj = wave_trajectory(g, false);
  REQUIRE_THROWS_AS(scattering_diagnostic(traj, 2.0, {1.25}), RangeError);
  REQUIRE_THROWS_AS(scattering_diagnostic(traj, 2.3, {1.0}), RangeError);
  REQUIRE_THROWS_AS(scattering_diagnostic(traj, 2.0, {1.0}, 0.5), Error);
}

// ---------------------------------------------------------------------------
// Error ODE bound
// ---------------------------------------------------------------------------

TEST_CASE("the ODE bound starts at the initial error and validates inputs") {
  OdeBound b = error_ode_bound(1.5, 0.3, 0.02, 0.0);
  REQUIRE_FALSE(b.blown_up);
  REQUIRE(b.value == Approx(0.02).epsilon(1e-14));
  REQUIRE_THROWS_AS(error_ode_bound(-1.0, 0.3, 0.02, 1.0), Error);
  REQUIRE_THROWS_AS(error_ode_bound(1.0, -0.3, 0.02, 1.0), Error);
  REQUIRE_THROWS_AS(error_ode_bound(1.0, 0.3, 0.0, 1.0), Error);
  REQUIRE_THROWS_AS(error_ode_bound(1.0, 0.3, 0.02, -1.0), Error);
}

TEST_CASE("with no forcing the bound reduces to the Riccati closed form") {
  const double C = 2.0, e0 = 0.05;
  for (double t : {0.5, 2.0, 6.0}) {
    OdeBound b = error_ode_bound(C, 0.0, e0, t);
    REQUIRE_FALSE(b.blown_up);
    REQUIRE(b.value == Approx(e0 / (1.0 - C * e0 * t)).epsilon(1e-12));
  }
  // root of 1 - C e0 t at t = 10
  REQUIRE(ode_lifespan(C, 0.0, e0) == Approx(10.0).epsilon(1e-12));
  REQUIRE(error_ode_bound(C, 0.0, e0, 9.999).blown_up == false);
  REQUIRE(error_ode_bound(C, 0.0, e0, 10.0).blown_up == true);
}

TEST_CASE("the closed form solves the comparison ODE") {
  // e' = C e (e + delta/(1+t)) integrated with a fine scalar RK4 against the
  // closed form, which is exact for this Bernoulli equation.
  const double C = 1.0, delta = 0.1, e0 = 0.01, T = 2.0;
  auto f = [&](double t, double e) { return C * e * (e + delta / (1.0 + t)); };
  double e = e0, t = 0.0;
  const double dt = 1e-4;
  const int n = static_cast<int>(std::round(T / dt));
  for (int i = 0; i < n; ++i) {
    const double k1 = f(t, e);
    const double k2 = f(t + 0.5 * dt, e + 0.5 * dt * k1);
    const double k3 = f(t + 0.5 * dt, e + 0.5 * dt * k2);
    const double k4 = f(t + dt, e + dt * k3);
    e += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    t += dt;
  }
  OdeBound b = error_ode_bound(C, delta, e0, T);
  REQUIRE_FALSE(b.blown_up);
  REQUIRE(b.value == Approx(e).epsilon(1e-8));
}

TEST_CASE("the bound's lifespan is consistent and monotone") {
  REQUIRE(std::isinf(ode_lifespan(0.0, 0.3, 0.05)));
  const double T = ode_lifespan(2.0, 0.3, 0.05);
  REQUIRE(T > 0.0);
  REQUIRE_FALSE(error_ode_bound(2.0, 0.3, 0.05, T * (1.0 - 1e-9)).blown_up);
  REQUIRE(error_ode_bound(2.0, 0.3, 0.05, T * (1.0 + 1e-6)).blown_up);

  REQUIRE(ode_lifespan(3.0, 0.3, 0.05) < T);
  REQUIRE(ode_lifespan(2.0, 0.3, 0.10) < T);
  REQUIRE_THROWS_AS(ode_lifespan(2.0, -0.1, 0.05), Error);
  REQUIRE_THROWS_AS(ode_lifespan(2.0, 0.3, 0.0), Error);
}

// ---------------------------------------------------------------------------
// Per-checkpoint record
// ---------------------------------------------------------------------------

TEST_CASE("the combined record agrees with the standalone diagnostics") {
  const GridSpec g = make_grid(64, 32.0);
  PrimitiveState p = to_primitive(test_sym(g, 0.08));
  SymState s = to_sym(p);  // same conversion path the record uses
  DiagnosticsOptions opt;
  DiagnosticsRecord rec = compute_diagnostics(p, opt);

  Triple U = to_triple(s);
  REQUIRE(rec.time == p.time);
  REQUIRE(rec.sup_norm == U.max_abs());
  REQUIRE(rec.theta_max == relative_vorticity(p).max_abs());
  REQUIRE(rec.theta_integral == relative_vorticity(p).integral());
  REQUIRE(rec.l2_U == Approx(vf_norm(s, 2, 2)).epsilon(1e-14));
  REQUIRE(rec.energy_F == Approx(energy_F(s, 2).value).epsilon(1e-14));
  REQUIRE(rec.x_proxy == Approx(x_proxy(s)).epsilon(1e-14));
  const double sr = std::max(
      {support_radius(U[0], opt.support_threshold), support_radius(U[1], opt.support_threshold),
       support_radius(U[2], opt.support_threshold)});
  REQUIRE(rec.support_radius == sr);
  REQUIRE(rec.l2_dU > 0.0);
  REQUIRE(rec.max_coeff_inf ==
          std::max({s.u.u1.max_abs(), s.u.u2.max_abs(), 0.5 * s.m.max_abs()}));
}

TEST_CASE("state distance is symmetric, definite, and matches the norm route") {
  const GridSpec g = make_grid(64, 32.0);
  SymState sa = test_sym(g, 0.08);
  SymState sb = test_sym(g, 0.05);
  PrimitiveState a = to_primitive(sa), b = to_primitive(sb);

  REQUIRE(h3_difference(a, a) == 0.0);
  REQUIRE(h3_difference(a, b) == h3_difference(b, a));
  const double direct =
      weighted_norm(state_triple(a) - state_triple(b), NormSpec::sobolev(3.0));
  REQUIRE(h3_difference(a, b) == direct);

  const GridSpec other = make_grid(32, 32.0);
  PrimitiveState c{ScalarField::zero(other),
                   VectorField(ScalarField::zero(other), ScalarField::zero(other)), 0.0};
  REQUIRE_THROWS_AS(h3_difference(a, c), GridMismatchError);
}
