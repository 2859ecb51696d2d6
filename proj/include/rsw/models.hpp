#pragma once
// The three formulations of the rotating shallow water system:
//   * primitive perturbation form in (rho, u),
//   * symmetrized first-order form in (m, u) with m = 2(sqrt(1+rho)-1),
//   * second-order Klein-Gordon form for the triple U = (m, u1, u2),
// together with state conversions, relative vorticity, the zero-relative-
// vorticity projection, geostrophic states, and initial-data generation.
//
// Matrix notation for the triple U = (U0, U1, U2) = (m, u1, u2):
//   J1 swaps components 0/1, J2 swaps components 0/2,
//   B_a(U) = u_a I + (m/2) J_a,
//   L(U)   = (-div u, -d1 m + u2, -d2 m - u1)   (the linear propagating part),
// so the first-order system reads  dU/dt = L(U) - sum_a B_a(U) dU/dxa.
// As an operator identity L = -sum_a J_a d_a - K with K U = (0, -U2, U1).

#include <array>
#include <cmath>
#include <random>

#include "rsw/core.hpp"
#include "rsw/norms.hpp"

namespace rsw {

// ---------------------------------------------------------------------------
// States
// ---------------------------------------------------------------------------

struct PrimitiveState {
  ScalarField rho;
  VectorField u;
  double time = 0.0;

  const GridSpec& grid() const { return rho.grid(); }
};

struct SymState {
  ScalarField m;
  VectorField u;
  double time = 0.0;

  const GridSpec& grid() const { return m.grid(); }
};

// Component triple (m, u1, u2) used by the Klein-Gordon form and diagnostics.
struct Triple {
  std::array<ScalarField, 3> c;

  Triple() = default;
  Triple(ScalarField a, ScalarField b, ScalarField d) : c{std::move(a), std::move(b), std::move(d)} {}
  static Triple zero(const GridSpec& g) {
    ScalarField z = ScalarField::zero(g);
    return Triple(z, z, z);
  }
  const GridSpec& grid() const { return c[0].grid(); }
  ScalarField& operator[](int i) { return c[i]; }
  const ScalarField& operator[](int i) const { return c[i]; }

  double max_abs() const {
    return std::max({c[0].max_abs(), c[1].max_abs(), c[2].max_abs()});
  }
  bool finite() const {
    for (const ScalarField& f : c)
      for (double v : f.phys())
        if (!std::isfinite(v)) return false;
    return true;
  }
};

inline Triple operator+(const Triple& a, const Triple& b) {
  return Triple(a[0] + b[0], a[1] + b[1], a[2] + b[2]);
}
inline Triple operator-(const Triple& a, const Triple& b) {
  return Triple(a[0] - b[0], a[1] - b[1], a[2] - b[2]);
}
inline Triple operator*(double s, const Triple& a) {
  return Triple(s * a[0], s * a[1], s * a[2]);
}
inline Triple dealias(const Triple& a) {
  return Triple(dealias(a[0]), dealias(a[1]), dealias(a[2]));
}

// Product-space norms over the three components.
inline double weighted_norm(const Triple& t, const NormSpec& spec) {
  if (spec.p == 2) {
    const double a = weighted_norm(t[0], spec);
    const double b = weighted_norm(t[1], spec);
    const double d = weighted_norm(t[2], spec);
    return std::sqrt(a * a + b * b + d * d);
  }
  return std::max({weighted_norm(t[0], spec), weighted_norm(t[1], spec), weighted_norm(t[2], spec)});
}

struct KGState {
  Triple U;
  Triple Ut;
  double time = 0.0;

  const GridSpec& grid() const { return U.grid(); }
};

inline Triple to_triple(const SymState& s) { return Triple(s.m, s.u.u1, s.u.u2); }
inline SymState sym_from_triple(const Triple& t, double time) {
  return SymState{t[0], VectorField(t[1], t[2]), time};
}

// ---------------------------------------------------------------------------
// Conversions between the primitive and symmetrized variables
// ---------------------------------------------------------------------------

// m = 2(sqrt(1+rho) - 1); requires physical admissibility 1 + rho > 0.
inline ScalarField rho_to_m(const ScalarField& rho) {
  const RealArray& r = rho.phys();
  RealArray out(r.size());
  for (std::size_t i = 0; i < r.size(); ++i) {
    const double h = 1.0 + r[i];
    if (!(h > 0.0))
      throw VacuumError("rho_to_m: total height reaches zero (min 1+rho = " + std::to_string(h) +
                        ")");
    out[i] = 2.0 * (std::sqrt(h) - 1.0);
  }
  return ScalarField::from_physical(rho.grid(), std::move(out));
}

// rho = m + m^2/4, the exact inverse of rho_to_m.
inline ScalarField m_to_rho(const ScalarField& m) {
  const RealArray& v = m.phys();
  RealArray out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] + 0.25 * v[i] * v[i];
  return ScalarField::from_physical(m.grid(), std::move(out));
}

inline SymState to_sym(const PrimitiveState& s) {
  return SymState{rho_to_m(s.rho), s.u, s.time};
}
inline PrimitiveState to_primitive(const SymState& s) {
  return PrimitiveState{m_to_rho(s.m), s.u, s.time};
}

// ---------------------------------------------------------------------------
// Matrix building blocks on triples
// ---------------------------------------------------------------------------

inline Triple apply_J(int a, const Triple& w) {
  // J1 w = (w1, w0, 0), J2 w = (w2, 0, w0)
  ScalarField z = ScalarField::zero(w.grid());
  if (a == 0) return Triple(w[1], w[0], z);
  return Triple(w[2], z, w[0]);
}

inline Triple apply_K(const Triple& w) {
  // K w = (0, -w2, w1), the rotation part of L
  ScalarField z = ScalarField::zero(w.grid());
  return Triple(z, -1.0 * w[2], w[1]);
}

// B_a(V) w = v_a w + (v0/2) J_a w, with every product dealiased.
inline Triple apply_B(int a, const Triple& V, const Triple& w) {
  const ScalarField& va = V[a + 1];
  Triple jw = apply_J(a, w);
  Triple out;
  for (int i = 0; i < 3; ++i) {
    ScalarField t = pointwise_product(va, w[i], true);
    if (a == 0 && i == 2) {
      out[i] = t;  // (J1 w)2 = 0
    } else if (a == 1 && i == 1) {
      out[i] = t;  // (J2 w)1 = 0
    } else {
      out[i] = t + 0.5 * pointwise_product(V[0], jw[i], true);
    }
  }
  return out;
}

inline Triple deriv(const Triple& t, int axis) {
  return Triple(deriv(t[0], axis), deriv(t[1], axis), deriv(t[2], axis));
}

// Transport bilinear form  T(V, W) = sum_a B_a(V) d_a W.
inline Triple transport(const Triple& V, const Triple& W) {
  Triple out = apply_B(0, V, deriv(W, 0));
  Triple out2 = apply_B(1, V, deriv(W, 1));
  return out + out2;
}

// The linear propagating part L(U) = (-div u, -d1 m + u2, -d2 m - u1).
inline Triple apply_L(const Triple& U) {
  ScalarField divu = deriv(U[1], 0) + deriv(U[2], 1);
  return Triple(-1.0 * divu, U[2] - deriv(U[0], 0), -1.0 * (deriv(U[0], 1) + U[1]));
}

// First-order symmetrized right-hand side in triple form,
// G(U) = L(U) - T(U, U).
inline Triple sym_rhs_triple(const Triple& U) { return apply_L(U) - transport(U, U); }

// Directional derivative of G: dG(U)[W] = L(W) - T(W, U) - T(U, W).
inline Triple sym_rhs_derivative(const Triple& U, const Triple& W) {
  return apply_L(W) - transport(W, U) - transport(U, W);
}

// ---------------------------------------------------------------------------
// Right-hand sides
// ---------------------------------------------------------------------------

struct PrimitiveTendency {
  ScalarField drho;
  VectorField du;
};

struct SymTendency {
  ScalarField dm;
  VectorField du;
};

// d rho/dt = -div(rho u) - div u
// d u/dt   = -(u . grad) u - grad rho - perp(u)
inline PrimitiveTendency primitive_rhs(const PrimitiveState& s) {
  const ScalarField& rho = s.rho;
  const VectorField& u = s.u;
  require_same_grid(rho.grid(), u.grid(), "primitive_rhs");

  VectorField rho_u(pointwise_product(rho, u.u1, true), pointwise_product(rho, u.u2, true));
  ScalarField drho = -1.0 * (div(rho_u) + div(u));

  ScalarField d1u1 = deriv(u.u1, 0), d2u1 = deriv(u.u1, 1);
  ScalarField d1u2 = deriv(u.u2, 0), d2u2 = deriv(u.u2, 1);
  ScalarField adv1 = pointwise_product(u.u1, d1u1, true) + pointwise_product(u.u2, d2u1, true);
  ScalarField adv2 = pointwise_product(u.u1, d1u2, true) + pointwise_product(u.u2, d2u2, true);
  VectorField gr = grad(rho);
  VectorField up = perp(u);
  VectorField du(-1.0 * (adv1 + gr.u1 + up.u1), -1.0 * (adv2 + gr.u2 + up.u2));
  return PrimitiveTendency{std::move(drho), std::move(du)};
}

// Linearization of primitive_rhs at the rest state (all quadratic terms
// dropped): d rho/dt = -div u, d u/dt = -grad rho - perp(u).
inline PrimitiveTendency primitive_rhs_linear(const PrimitiveState& s) {
  ScalarField drho = -1.0 * div(s.u);
  VectorField gr = grad(s.rho);
  VectorField up = perp(s.u);
  return PrimitiveTendency{std::move(drho),
                           VectorField(-1.0 * (gr.u1 + up.u1), -1.0 * (gr.u2 + up.u2))};
}

// d m/dt = -(u . grad) m - (m/2) div u - div u
// d u/dt = -(u . grad) u - (m/2) grad m - grad m - perp(u)
inline SymTendency symmetrized_rhs(const SymState& s) {
  Triple rhs = sym_rhs_triple(to_triple(s));
  return SymTendency{rhs[0], VectorField(rhs[1], rhs[2])};
}

// ---------------------------------------------------------------------------
// Klein-Gordon coefficients and remainder
// ---------------------------------------------------------------------------

// A 3x3 matrix of scalar fields; symmetric entries share storage.
using MatrixField = std::array<std::array<ScalarField, 3>, 3>;

struct CoefficientMatrices {
  // A[a][b] for a,b in {0,1}: coefficients of d_a d_b U (A[0][1] and A[1][0]
  // are the same object). A0[a]: coefficients of d_t d_a U.
  std::array<std::array<MatrixField, 2>, 2> A;
  std::array<MatrixField, 2> A0;
};

// Coefficient matrices of the second-order form, linear in U:
//   A0a = u_a I + (m/2) J_a
//   Aab = (u_b J_a + (m/2) J_a J_b)/2 + (u_a J_b + (m/2) J_b J_a)/2
// Note on signs: these are the matrices as conventionally tabulated; in the
// verified second-order identity (see kg_residual) the space-space block
// enters with + and the space-time block with -.
inline CoefficientMatrices assemble_coefficients(const KGState& s) {
  const ScalarField& m = s.U[0];
  const ScalarField& u1 = s.U[1];
  const ScalarField& u2 = s.U[2];
  ScalarField z = ScalarField::zero(s.grid());
  ScalarField mh = 0.5 * m;     // m/2
  ScalarField mq = 0.25 * m;    // m/4
  ScalarField u1h = 0.5 * u1;   // u1/2
  ScalarField u2h = 0.5 * u2;   // u2/2

  CoefficientMatrices cm;
  // A01 = u1 I + (m/2) J1 : [[u1, m/2, 0], [m/2, u1, 0], [0, 0, u1]]
  cm.A0[0] = {{{u1, mh, z}, {mh, u1, z}, {z, z, u1}}};
  // A02 = u2 I + (m/2) J2 : [[u2, 0, m/2], [0, u2, 0], [m/2, 0, u2]]
  cm.A0[1] = {{{u2, z, mh}, {z, u2, z}, {mh, z, u2}}};
  // A11 = u1 J1 + (m/2) diag(1,1,0)
  cm.A[0][0] = {{{mh, u1, z}, {u1, mh, z}, {z, z, z}}};
  // A22 = u2 J2 + (m/2) diag(1,0,1)
  cm.A[1][1] = {{{mh, z, u2}, {z, z, z}, {u2, z, mh}}};
  // A12 = A21 = [[0, u2/2, u1/2], [u2/2, 0, m/4], [u1/2, m/4, 0]]
  MatrixField a12 = {{{z, u2h, u1h}, {u2h, z, mq}, {u1h, mq, z}}};
  cm.A[0][1] = a12;
  cm.A[1][0] = a12;  // shares the same scalar fields
  return cm;
}

// Quadratic remainder of the second-order form, assembled in closed form:
//   R = (1/4)(-m^2, d2(m^2), -d1(m^2))          (from L^2 under zero theta)
//     - T(Ut, U)                                 (first-order leftovers of N1)
//     + sum_a J_a T(d_a U, U) + K T(U, U)        (first-order leftovers of N2)
// Every term is bilinear in (U, dU), so the result is exactly homogeneous of
// degree 2.
inline Triple kg_quadratic_remainder(const KGState& s) {
  const Triple& U = s.U;
  const Triple& Ut = s.Ut;
  ScalarField m2 = pointwise_product(U[0], U[0], true);
  Triple n3(-0.25 * m2, 0.25 * deriv(m2, 1), -0.25 * deriv(m2, 0));

  Triple r = n3 - transport(Ut, U);
  r = r + apply_J(0, transport(deriv(U, 0), U));
  r = r + apply_J(1, transport(deriv(U, 1), U));
  r = r + apply_K(transport(U, U));
  return r;
}

// Residual of the second-order identity
//   Utt - Lap U + U = sum_ab Aab d_ab U - sum_a A0a d_a(Ut) + R
// with Ut = G(U) and Utt = dG(U)[Ut] computed analytically (the right-hand
// side G is quadratic, so its directional derivative is exact; no time
// differencing enters). The residual vanishes to rounding on states with zero
// relative vorticity and is O(theta) otherwise.
inline Triple kg_residual(const SymState& s) {
  Triple U = to_triple(s);
  Triple Ut = sym_rhs_triple(U);
  Triple Utt = sym_rhs_derivative(U, Ut);

  Triple lap(laplacian(U[0]), laplacian(U[1]), laplacian(U[2]));
  Triple lhs = Utt - lap + U;

  // quasilinear blocks, written with the transport form:
  //   sum_ab Aab d_ab U = sum_a J_a T(U, d_a U),  sum_a A0a d_a Ut = T(U, Ut)
  Triple quasi = apply_J(0, transport(U, deriv(U, 0))) + apply_J(1, transport(U, deriv(U, 1)));
  Triple rhs = quasi - transport(U, Ut) + kg_quadratic_remainder(KGState{U, Ut, s.time});
  return lhs - rhs;
}

// ---------------------------------------------------------------------------
// Relative vorticity and the zero-relative-vorticity projection
// ---------------------------------------------------------------------------

// theta = curl(u) - rho
inline ScalarField relative_vorticity(const PrimitiveState& s) { return curl(s.u) - s.rho; }

struct ZeroRvSplit {
  PrimitiveState K;  // zero-relative-vorticity part
  PrimitiveState E;  // complement, K + E = input exactly
};

// Complementary projection: d = (Lap - 1)^{-1} theta, E = (d, -d2 d, d1 d),
// K = input - E. The K part has relative vorticity zero by construction:
// theta_K = theta - (Lap - 1) d = 0 on the grid.
inline ZeroRvSplit project_zero_rv(const PrimitiveState& s) {
  ScalarField theta = relative_vorticity(s);
  ScalarField d =
      fourier_multiplier(theta, [](double k1, double k2) { return -1.0 / (1.0 + k1 * k1 + k2 * k2); });
  ScalarField e_u1 = -1.0 * deriv(d, 1);
  ScalarField e_u2 = deriv(d, 0);
  PrimitiveState E{d, VectorField(e_u1, e_u2), s.time};
  PrimitiveState K{s.rho - d, VectorField(s.u.u1 - e_u1, s.u.u2 - e_u2), s.time};
  return ZeroRvSplit{std::move(K), std::move(E)};
}

// Balanced state rho = a psi, u = a grad_perp psi with grad_perp = (-d2, d1):
// the linearized tendency vanishes identically because -grad rho = perp(u).
// Its relative vorticity is a (Lap psi - psi).
inline PrimitiveState geostrophic_state(const ScalarField& psi, double amplitude) {
  ScalarField rho = amplitude * psi;
  ScalarField u1 = (-amplitude) * deriv(psi, 1);
  ScalarField u2 = amplitude * deriv(psi, 0);
  double lo = 0.0;
  for (double v : rho.phys()) lo = std::min(lo, v);
  if (!(1.0 + lo > 0.0))
    throw VacuumError("geostrophic_state: amplitude drives total height to zero");
  return PrimitiveState{std::move(rho), VectorField(std::move(u1), std::move(u2)), 0.0};
}

// ---------------------------------------------------------------------------
// Initial data
// ---------------------------------------------------------------------------

struct ProfileSpec {
  double width = 2.0;  // Gaussian envelope width
};

namespace detail {

inline ScalarField gaussian_bump(const GridSpec& g, double cx, double cy, double w,
                                 double amplitude) {
  const double inv = 1.0 / (w * w);
  return ScalarField::sample(g, [=](double x, double y) {
    const double dx = x - cx, dy = y - cy;
    return amplitude * std::exp(-(dx * dx + dy * dy) * inv);
  });
}

}  // namespace detail

// Deterministic two-parameter data: a zero-relative-vorticity part of measured
// H^3 size delta (a projected superposition of Gaussian bumps) plus a
// geostrophic part whose relative vorticity has measured H^2 size epsilon.
// Both scalings are exact because projection and vorticity are linear.
inline PrimitiveState make_initial_data(double delta, double epsilon, const ProfileSpec& shape,
                                        std::uint64_t seed, const GridSpec& g) {
  if (delta < 0.0 || epsilon < 0.0)
    throw Error("make_initial_data: sizes must be nonnegative");

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> offset(-2.5, 2.5);
  std::uniform_real_distribution<double> amp(0.4, 1.0);
  std::uniform_real_distribution<double> sign(0.0, 1.0);
  auto draw_amp = [&]() { return (sign(rng) < 0.5 ? -1.0 : 1.0) * amp(rng); };

  PrimitiveState K{ScalarField::zero(g), VectorField(ScalarField::zero(g), ScalarField::zero(g)),
                   0.0};
  if (delta > 0.0) {
    // Raw smooth bumps; their projection supplies the Klein-Gordon part.
    const double cx = g.center(), cy = g.center();
    ScalarField rho_raw = detail::gaussian_bump(g, cx + offset(rng), cy + offset(rng), shape.width,
                                                draw_amp());
    ScalarField u1_raw = detail::gaussian_bump(g, cx + offset(rng), cy + offset(rng), shape.width,
                                               draw_amp());
    ScalarField u2_raw = detail::gaussian_bump(g, cx + offset(rng), cy + offset(rng), shape.width,
                                               draw_amp());
    PrimitiveState raw{dealias(rho_raw), VectorField(dealias(u1_raw), dealias(u2_raw)), 0.0};
    PrimitiveState kpart = project_zero_rv(raw).K;
    const double size =
        weighted_norm(Triple(kpart.rho, kpart.u.u1, kpart.u.u2), NormSpec::sobolev(3.0));
    if (!(size > 0.0)) throw Error("make_initial_data: degenerate raw data");
    const double scale = delta / size;
    K = PrimitiveState{scale * kpart.rho, scale * kpart.u, 0.0};
  }

  PrimitiveState G{ScalarField::zero(g), VectorField(ScalarField::zero(g), ScalarField::zero(g)),
                   0.0};
  if (epsilon > 0.0) {
    // Two offset same-sign bumps: a deliberately non-radial stream function.
    // A single radial bump rotates rigidly about its own center and its
    // vorticity field barely deforms; the asymmetric pair shears itself, so
    // the vortical part actually stirs the flow on the advective time scale.
    const double cx = g.center() + offset(rng), cy = g.center() + offset(rng);
    const double sep = 1.5 * shape.width;
    ScalarField psi = dealias(
        detail::gaussian_bump(g, cx - 0.5 * sep, cy, shape.width, 1.0) +
        detail::gaussian_bump(g, cx + 0.5 * sep, cy + 0.35 * shape.width, 0.75 * shape.width,
                              0.8));
    PrimitiveState unit = geostrophic_state(psi, 1.0);
    const double tsize = weighted_norm(relative_vorticity(unit), NormSpec::sobolev(2.0));
    if (!(tsize > 0.0)) throw Error("make_initial_data: degenerate vortical profile");
    const double a = epsilon / tsize;
    G = PrimitiveState{a * unit.rho, a * unit.u, 0.0};
  }

  PrimitiveState total{K.rho + G.rho, K.u + G.u, 0.0};
  double lo = 0.0;
  for (double v : total.rho.phys()) lo = std::min(lo, v);
  if (!(1.0 + lo > 0.0))
    throw VacuumError("make_initial_data: requested sizes drive total height to zero");
  return total;
}

}  // namespace rsw
