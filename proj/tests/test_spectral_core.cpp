// Fourier infrastructure tests: transform conventions, operators, dealiasing,
// quadrature, and the weighted norms.

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <complex>

#include "rsw/core.hpp"
#include "rsw/norms.hpp"

using Catch::Approx;
using namespace rsw;

namespace {

ScalarField gaussian(const GridSpec& g, double w, double amp = 1.0, double cx = 0.0,
                     double cy = 0.0) {
  return ScalarField::sample(g, [=](double x, double y) {
    const double dx = x - cx, dy = y - cy;
    return amp * std::exp(-(dx * dx + dy * dy) / (w * w));
  });
}

double max_field_diff(const ScalarField& a, const ScalarField& b) {
  const RealArray &x = a.phys(), &y = b.phys();
  double m = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) m = std::max(m, std::abs(x[i] - y[i]));
  return m;
}

}  // namespace

TEST_CASE("grid validation rejects bad parameters") {
  REQUIRE_THROWS_AS(make_grid(3, 10.0), InvalidGridError);
  REQUIRE_THROWS_AS(make_grid(2, 10.0), InvalidGridError);
  REQUIRE_THROWS_AS(make_grid(64, -1.0), InvalidGridError);
  REQUIRE_THROWS_AS(make_grid(64, 10.0, 0.0), InvalidGridError);
  REQUIRE_THROWS_AS(make_grid(64, 10.0, 1.5), InvalidGridError);
  REQUIRE_NOTHROW(make_grid(4, 1.0, 1.0));
}

TEST_CASE("grid coordinate and wavenumber conventions") {
  const GridSpec g = make_grid(8, 16.0);
  REQUIRE(g.h() == Approx(2.0));
  REQUIRE(g.x(0) == Approx(-8.0));
  REQUIRE(g.x(4) == Approx(0.0).margin(1e-15));  // box center lies on the grid
  REQUIRE(g.k(1) == Approx(2.0 * M_PI / 16.0));
  REQUIRE(g.k(7) == Approx(-2.0 * M_PI / 16.0));
  REQUIRE(g.k(4) == Approx(-4.0 * 2.0 * M_PI / 16.0));  // unpaired Nyquist mode
  REQUIRE(g.k_deriv(4) == 0.0);                         // dropped for derivatives
  REQUIRE(g.k_max_sq() == Approx(2.0 * std::pow(2.0 * M_PI / 16.0 * 4, 2)));
}

TEST_CASE("plane wave lands on the expected coefficient pair") {
  const int n = 32;
  const double L = 10.0;
  const GridSpec g = make_grid(n, L);
  const double k1 = g.dk() * 3.0, k2 = g.dk() * -2.0;
  ScalarField f = ScalarField::sample(
      g, [&](double x, double y) { return std::cos(k1 * x + k2 * y); });
  const CplxArray& c = f.spec();
  // cos = (e^{i k.x} + e^{-i k.x})/2: exactly two hot coefficients of 1/2.
  // The expansion references the first sample x = -L/2, so the coefficient
  // carries e^{i k . (-L/2, -L/2)}.
  const cplx phase = std::exp(cplx(0.0, -0.5 * L * (k1 + k2)));
  const std::size_t hot = static_cast<std::size_t>(3) * n + (n - 2);
  REQUIRE(std::abs(c[hot] - 0.5 * phase) < 1e-12);
  double rest = 0.0;
  for (std::size_t i = 0; i < c.size(); ++i) {
    const std::size_t mirror = static_cast<std::size_t>(n - 3) * n + 2;
    if (i != hot && i != mirror) rest = std::max(rest, std::abs(c[i]));
  }
  REQUIRE(rest < 1e-12);
}

TEST_CASE("transform round trip is exact to rounding") {
  const GridSpec g = make_grid(64, 32.0);
  ScalarField f = gaussian(g, 2.0, 1.3, 1.0, -2.0);
  ScalarField back = ScalarField::from_spectral(g, CplxArray(f.spec()));
  REQUIRE(max_field_diff(f, back) < 1e-13);
}

TEST_CASE("Parseval ties quadrature to coefficient sums") {
  const GridSpec g = make_grid(64, 32.0);
  ScalarField f = gaussian(g, 2.0, 0.7, -1.5, 0.5);
  const CplxArray& c = f.spec();
  long double s = 0.0L;
  for (const cplx& v : c) s += static_cast<long double>(std::norm(v));
  const double L = g.box_length();
  const double spectral = L * L * static_cast<double>(s);
  const double quadrature = f.l2() * f.l2();
  REQUIRE(spectral == Approx(quadrature).epsilon(1e-12));
}

TEST_CASE("derivative of a trigonometric mode is exact") {
  const GridSpec g = make_grid(32, 2.0 * M_PI);
  ScalarField f = ScalarField::sample(
      g, [](double x, double y) { return std::sin(3.0 * x) * std::cos(2.0 * y); });
  ScalarField d1 = deriv(f, 0);
  ScalarField expect1 = ScalarField::sample(
      g, [](double x, double y) { return 3.0 * std::cos(3.0 * x) * std::cos(2.0 * y); });
  REQUIRE(max_field_diff(d1, expect1) < 1e-12);
  ScalarField d2 = deriv(f, 1);
  ScalarField expect2 = ScalarField::sample(
      g, [](double x, double y) { return -2.0 * std::sin(3.0 * x) * std::sin(2.0 * y); });
  REQUIRE(max_field_diff(d2, expect2) < 1e-12);
}

TEST_CASE("derivative of a compactly supported bump matches the analytic one") {
  const GridSpec g = make_grid(128, 32.0);
  const double w = 2.0;
  ScalarField f = gaussian(g, w);
  ScalarField d1 = deriv(f, 0);
  ScalarField expect = ScalarField::sample(g, [w](double x, double y) {
    return -2.0 * x / (w * w) * std::exp(-(x * x + y * y) / (w * w));
  });
  REQUIRE(max_field_diff(d1, expect) < 1e-10);
}

TEST_CASE("pure Nyquist content differentiates to zero") {
  const int n = 16;
  const GridSpec g = make_grid(n, 8.0);
  CplxArray c(g.size(), cplx(0.0, 0.0));
  c[static_cast<std::size_t>(n / 2) * n] = cplx(1.0, 0.0);  // j1 = n/2, j2 = 0
  ScalarField f = ScalarField::from_spectral(g, std::move(c));
  REQUIRE(deriv(f, 0).max_abs() == 0.0);
}

TEST_CASE("multiplier with identity symbol preserves coefficients") {
  const GridSpec g = make_grid(32, 16.0);
  ScalarField f = gaussian(g, 2.0);
  ScalarField same = fourier_multiplier(f, [](double, double) { return 1.0; });
  const CplxArray &a = f.spec(), &b = same.spec();
  for (std::size_t i = 0; i < a.size(); ++i) REQUIRE(a[i] == b[i]);
}

TEST_CASE("singular symbols are rejected") {
  const GridSpec g = make_grid(16, 8.0);
  ScalarField f = gaussian(g, 1.5);
  REQUIRE_THROWS_AS(
      fourier_multiplier(f, [](double k1, double k2) { return 1.0 / (k1 * k1 + k2 * k2); }),
      SingularSymbolError);
  REQUIRE_NOTHROW(
      fourier_multiplier(f, [](double k1, double k2) { return -1.0 / (1.0 + k1 * k1 + k2 * k2); }));
}

TEST_CASE("dealias zeroes exactly the modes beyond the cutoff") {
  const int n = 32;
  const GridSpec g = make_grid(n, 16.0);
  const double cut = g.dealias_cutoff();
  ScalarField f = ScalarField::sample(g, [&](double x, double y) {
    return std::cos(g.dk() * 5.0 * x) + std::cos(g.dk() * 12.0 * y);
  });
  ScalarField fd = dealias(f);
  const CplxArray& c = fd.spec();
  for (int j1 = 0; j1 < n; ++j1)
    for (int j2 = 0; j2 < n; ++j2) {
      const double a = std::max(std::abs(g.k(j1)), std::abs(g.k(j2)));
      const cplx v = c[static_cast<std::size_t>(j1) * n + j2];
      if (a > cut)
        REQUIRE(std::abs(v) == 0.0);
      else
        REQUIRE(std::abs(v - f.spec()[static_cast<std::size_t>(j1) * n + j2]) == 0.0);
    }
  REQUIRE(g.dk() * 5.0 <= cut);
  REQUIRE(g.dk() * 12.0 > cut);
}

TEST_CASE("dealias is idempotent bitwise") {
  const GridSpec g = make_grid(64, 32.0);
  ScalarField once = dealias(gaussian(g, 1.0));
  ScalarField twice = dealias(once);
  const CplxArray &a = once.spec(), &b = twice.spec();
  for (std::size_t i = 0; i < a.size(); ++i) REQUIRE(a[i] == b[i]);
}

TEST_CASE("dealiased products stay band-limited") {
  const GridSpec g = make_grid(64, 32.0);
  ScalarField f = dealias(gaussian(g, 1.0, 1.0, 2.0, 0.0));
  ScalarField h = dealias(gaussian(g, 1.5, -0.8, -1.0, 1.0));
  ScalarField p = pointwise_product(f, h, true);
  ScalarField p2 = dealias(p);
  const CplxArray &a = p.spec(), &b = p2.spec();
  for (std::size_t i = 0; i < a.size(); ++i) REQUIRE(a[i] == b[i]);
}

TEST_CASE("vector calculus identities hold on the grid") {
  const GridSpec g = make_grid(64, 32.0);
  ScalarField f = gaussian(g, 2.0, 1.1, 0.5, -0.3);
  // curl grad = 0
  REQUIRE(curl(grad(f)).max_abs() < 1e-12);
  // div grad = laplacian
  REQUIRE(max_field_diff(div(grad(f)), laplacian(f)) < 1e-12);
  // div perp u = -curl u
  VectorField u(gaussian(g, 1.5, 0.9, 1.0, 0.0), gaussian(g, 2.5, -0.4, 0.0, 1.0));
  REQUIRE(max_field_diff(div(perp(u)), -1.0 * curl(u)) < 1e-12);
  // perp rotates by +pi/2: perp(u) = (-u2, u1)
  REQUIRE(max_field_diff(perp(u).u1, -1.0 * u.u2) == 0.0);
  REQUIRE(max_field_diff(perp(u).u2, u.u1) == 0.0);
}

TEST_CASE("integral and L2 norm of a bump match closed forms") {
  const GridSpec g = make_grid(128, 32.0);
  const double w = 2.0, amp = 0.7;
  ScalarField f = gaussian(g, w, amp);
  // integral of amp*exp(-r^2/w^2) over the plane = amp*pi*w^2
  REQUIRE(f.integral() == Approx(amp * M_PI * w * w).epsilon(1e-12));
  // L2 norm squared = amp^2 * pi * w^2 / 2
  REQUIRE(f.l2() * f.l2() == Approx(amp * amp * M_PI * w * w / 2.0).epsilon(1e-12));
  // inner(f, f) is the same quadrature
  REQUIRE(inner(f, f) == Approx(f.l2() * f.l2()).epsilon(1e-13));
}

TEST_CASE("operations preserve conjugate symmetry") {
  const GridSpec g = make_grid(64, 32.0);
  ScalarField f = gaussian(g, 2.0, 1.0, 0.7, -1.2);
  ScalarField chain = dealias(deriv(laplacian(f), 0) + 2.5 * deriv(f, 1));
  REQUIRE(conjugate_symmetry_defect(f) < 1e-13);
  REQUIRE(conjugate_symmetry_defect(chain) < 1e-11);
}

TEST_CASE("support radius tracks the threshold crossing of a bump") {
  const GridSpec g = make_grid(128, 32.0);
  ScalarField f = gaussian(g, 2.0);
  // |f| >= 1e-10 within radius w*sqrt(ln 1e10) ~ 9.597
  const double r = support_radius(f, 1e-10);
  REQUIRE(r > 9.0);
  REQUIRE(r < 9.597 + g.h() * std::sqrt(2.0));
  REQUIRE(support_radius(ScalarField::zero(g)) == 0.0);
}

TEST_CASE("mismatched grids are rejected in arithmetic and products") {
  const GridSpec a = make_grid(32, 16.0);
  const GridSpec b = make_grid(32, 8.0);
  ScalarField fa = gaussian(a, 1.0), fb = gaussian(b, 1.0);
  REQUIRE_THROWS_AS(fa + fb, GridMismatchError);
  REQUIRE_THROWS_AS(pointwise_product(fa, fb), GridMismatchError);
  REQUIRE_THROWS_AS(inner(fa, fb), GridMismatchError);
}

TEST_CASE("repeated construction and transforms are bitwise deterministic") {
  const GridSpec g = make_grid(64, 32.0);
  ScalarField f1 = dealias(deriv(gaussian(g, 2.0, 1.0, 0.3, 0.4), 0));
  ScalarField f2 = dealias(deriv(gaussian(g, 2.0, 1.0, 0.3, 0.4), 0));
  const CplxArray &a = f1.spec(), &b = f2.spec();
  for (std::size_t i = 0; i < a.size(); ++i) REQUIRE(a[i] == b[i]);
  const RealArray &pa = f1.phys(), &pb = f2.phys();
  for (std::size_t i = 0; i < pa.size(); ++i) REQUIRE(pa[i] == pb[i]);
}

// ---------------------------------------------------------------------------
// Weighted norms
// ---------------------------------------------------------------------------

TEST_CASE("norm spec validates its parameters") {
  REQUIRE_THROWS_AS(NormSpec(-1.0, 0.0, 2), Error);
  REQUIRE_THROWS_AS(NormSpec(1.0, -2.0, 2), Error);
  REQUIRE_THROWS_AS(NormSpec(1.0, 0.0, 3), Error);
  REQUIRE_NOTHROW(NormSpec(2.0, 1.0, 0));
}

TEST_CASE("plain L2 norm agrees with the field quadrature") {
  const GridSpec g = make_grid(64, 32.0);
  ScalarField f = gaussian(g, 2.0, 0.9, 0.4, -0.6);
  REQUIRE(weighted_norm(f, NormSpec::sobolev(0.0)) == Approx(f.l2()).epsilon(1e-14));
}

TEST_CASE("Sobolev norms of a bump match the closed form") {
  const GridSpec g = make_grid(128, 32.0);
  const double w = 2.0;
  ScalarField f = gaussian(g, w);
  // H^1 norm^2 = ||f||^2 + ||grad f||^2 = pi w^2/2 + pi (for unit amplitude,
  // each gradient component contributing pi/2).
  const double h1 = weighted_norm(f, NormSpec::sobolev(1.0));
  REQUIRE(h1 * h1 == Approx(M_PI * w * w / 2.0 + M_PI).epsilon(1e-10));
}

TEST_CASE("derivative-weight norm agrees with the explicit multiplier route") {
  const GridSpec g = make_grid(64, 32.0);
  ScalarField f = gaussian(g, 2.0, 1.2, -0.8, 0.3);
  for (double l : {1.0, 2.0, 3.0}) {
    ScalarField lifted = fourier_multiplier(f, [l](double k1, double k2) {
      return std::pow(1.0 + k1 * k1 + k2 * k2, 0.5 * l);
    });
    REQUIRE(weighted_norm(f, NormSpec::sobolev(l)) == Approx(lifted.l2()).epsilon(1e-12));
  }
}

TEST_CASE("spatially weighted L2 norm matches a direct quadrature") {
  const GridSpec g = make_grid(64, 32.0);
  ScalarField f = gaussian(g, 2.0, 1.0, 1.0, 1.0);
  const double s = 1.5;
  long double acc = 0.0L;
  const RealArray& v = f.phys();
  for (int j1 = 0; j1 < g.n(); ++j1)
    for (int j2 = 0; j2 < g.n(); ++j2) {
      const double x = g.x(j1), y = g.x(j2);
      const double wgt = std::pow(1.0 + x * x + y * y, s);
      const double val = v[static_cast<std::size_t>(j1) * g.n() + j2];
      acc += static_cast<long double>(wgt) * val * val;
    }
  const double expect = std::sqrt(static_cast<double>(acc)) * g.h();
  REQUIRE(weighted_norm(f, NormSpec(0.0, s, 2)) == Approx(expect).epsilon(1e-13));
}

TEST_CASE("sup norm picks the weighted peak") {
  const GridSpec g = make_grid(128, 32.0);
  ScalarField f = gaussian(g, 2.0);
  REQUIRE(weighted_norm(f, NormSpec(0.0, 0.0, 0)) == 1.0);  // center lies on the grid
  // with the (1+|x|^2)^{s/2} weight the peak moves off-center;
  // maximize (1+r^2)^{1/2} e^{-r^2/4} over the radial profile numerically
  double best = 0.0;
  for (int i = 0; i <= 400000; ++i) {
    const double r = 4.0 * i / 400000.0;
    best = std::max(best, std::sqrt(1.0 + r * r) * std::exp(-r * r / 4.0));
  }
  REQUIRE(weighted_norm(f, NormSpec(0.0, 1.0, 0)) == Approx(best).epsilon(1e-4));
}
