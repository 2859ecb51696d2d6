#pragma once
// Measured quantities: vector-field (Klainerman-type) norm sums, the size
// proxy combining weighted sup and L2 terms, the quadratic energy functional,
// decay-exponent fitting, the free-flow (scattering) comparison, and the
// closed-form error ODE bound with its lifespan root.
//
// Vector fields are applied through jets: a jet stores U and its first few
// time derivatives, all obtained from the evolution equation (never from
// finite differences). Each generator maps jets to jets:
//   d/dt   shifts the jet down one slot,
//   d/dxj  acts slotwise,
//   Lj = xj d/dt + t d/dxj   uses d/dt^r(t f) = t f^(r) + r f^(r-1),
//   O12 = x1 d/dx2 - x2 d/dx1   acts slotwise.
// Coordinate multiplications happen in physical space (box-centered) and the
// result is dealiased, which is harmless for fields supported away from the
// boundary.

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>
#include <vector>

#include "rsw/integrate.hpp"

namespace rsw {

// ---------------------------------------------------------------------------
// Jets
// ---------------------------------------------------------------------------

struct Jet {
  std::vector<Triple> d;  // d[r] = r-th time derivative of the triple
  double time = 0.0;

  int depth() const { return static_cast<int>(d.size()) - 1; }
  const GridSpec& grid() const { return d[0].grid(); }
};

// View a primitive checkpoint in the variables the jets evolve: the
// symmetrized triple, or (rho, u) itself when the run was linear-only (the
// conversions linearize in that regime).
inline Triple state_triple(const PrimitiveState& p, bool linear_only = false) {
  if (linear_only) return Triple(p.rho, p.u.u1, p.u.u2);
  SymState s = to_sym(p);
  return to_triple(s);
}

// Time derivative of a triple from its evolution equation.
inline Triple triple_time_derivative(const Triple& U, bool linear_only = false) {
  return linear_only ? apply_L(U) : sym_rhs_triple(U);
}

// Build the jet [U, U', U'', ...] to the requested depth (at most 3). The
// right-hand side is quadratic, so its directional derivatives are exact:
//   U''  = dG(U)[U'],  U''' = dG(U)[U''] - 2 T(U', U').
inline Jet make_jet(const SymState& s, int depth, bool linear_only = false) {
  if (depth < 0 || depth > 3)
    throw UnsupportedOrderError("make_jet: depth must be between 0 and 3");
  Jet jet;
  jet.time = s.time;
  Triple U = to_triple(s);
  jet.d.push_back(U);
  if (depth >= 1) jet.d.push_back(triple_time_derivative(U, linear_only));
  if (depth >= 2)
    jet.d.push_back(linear_only ? apply_L(jet.d[1]) : sym_rhs_derivative(U, jet.d[1]));
  if (depth >= 3) {
    Triple uttt = linear_only
                      ? apply_L(jet.d[2])
                      : sym_rhs_derivative(U, jet.d[2]) - 2.0 * transport(jet.d[1], jet.d[1]);
    jet.d.push_back(std::move(uttt));
  }
  return jet;
}

// ---------------------------------------------------------------------------
// Generators
// ---------------------------------------------------------------------------

enum class VfGen { dt = 0, d1 = 1, d2 = 2, L1 = 3, L2 = 4, omega12 = 5 };

namespace detail {

// Pointwise multiplication by the box-centered coordinate along an axis.
inline ScalarField coord_multiply(const ScalarField& f, int axis) {
  const GridSpec& g = f.grid();
  const RealArray& v = f.phys();
  RealArray out(v.size());
  for (int j1 = 0; j1 < g.n(); ++j1) {
    const double x1 = g.x(j1) - g.center();
    for (int j2 = 0; j2 < g.n(); ++j2) {
      const std::size_t i = static_cast<std::size_t>(j1) * g.n() + j2;
      const double c = axis == 0 ? x1 : g.x(j2) - g.center();
      out[i] = c * v[i];
    }
  }
  return ScalarField::from_physical(g, std::move(out));
}

inline Triple coord_multiply(const Triple& t, int axis) {
  return Triple(coord_multiply(t[0], axis), coord_multiply(t[1], axis),
                coord_multiply(t[2], axis));
}

}  // namespace detail

inline Jet vf_gen_apply(const Jet& in, VfGen gen) {
  const int R = in.depth();
  Jet out;
  out.time = in.time;
  switch (gen) {
    case VfGen::dt: {
      if (R < 1) throw UnsupportedOrderError("vf_gen_apply: jet too shallow for d/dt");
      out.d.assign(in.d.begin() + 1, in.d.end());
      return out;
    }
    case VfGen::d1:
    case VfGen::d2: {
      const int axis = gen == VfGen::d1 ? 0 : 1;
      out.d.reserve(R + 1);
      for (const Triple& t : in.d) out.d.push_back(deriv(t, axis));
      return out;
    }
    case VfGen::L1:
    case VfGen::L2: {
      if (R < 1) throw UnsupportedOrderError("vf_gen_apply: jet too shallow for L_j");
      const int axis = gen == VfGen::L1 ? 0 : 1;
      out.d.reserve(R);
      for (int r = 0; r < R; ++r) {
        Triple term = dealias(detail::coord_multiply(in.d[r + 1], axis));
        term = term + in.time * deriv(in.d[r], axis);
        if (r > 0) term = term + static_cast<double>(r) * deriv(in.d[r - 1], axis);
        out.d.push_back(std::move(term));
      }
      return out;
    }
    case VfGen::omega12: {
      out.d.reserve(R + 1);
      for (const Triple& t : in.d)
        out.d.push_back(dealias(detail::coord_multiply(deriv(t, 1), 0) -
                                detail::coord_multiply(deriv(t, 0), 1)));
      return out;
    }
  }
  throw Error("vf_gen_apply: unknown generator");
}

// Single application of a vector field to a state; the time derivative comes
// from the evolution equation. Output components are dealiased.
inline Triple vf_apply(VfGen gen, const SymState& s, bool linear_only = false) {
  const int need = (gen == VfGen::dt || gen == VfGen::L1 || gen == VfGen::L2) ? 1 : 0;
  Jet jet = make_jet(s, need, linear_only);
  Jet applied = vf_gen_apply(jet, gen);
  return dealias(applied.d[0]);
}

// ---------------------------------------------------------------------------
// Word sums
// ---------------------------------------------------------------------------

namespace detail {

// Visit every ordered product of generators up to max_order (the empty word
// first, then words (g), then (g1 g2) meaning g1 applied after g2), applied to
// each jet of the bundle. Enumeration order is fixed for determinism.
template <class Visit>
inline void for_each_word(const std::vector<Jet>& base, int max_order, Visit&& visit) {
  visit(base);
  if (max_order < 1) return;
  for (int g2 = 0; g2 < 6; ++g2) {
    std::vector<Jet> j1;
    j1.reserve(base.size());
    for (const Jet& b : base) j1.push_back(vf_gen_apply(b, static_cast<VfGen>(g2)));
    visit(j1);
    if (max_order < 2) continue;
    for (int g1 = 0; g1 < 6; ++g1) {
      std::vector<Jet> j2;
      j2.reserve(j1.size());
      for (const Jet& b : j1) j2.push_back(vf_gen_apply(b, static_cast<VfGen>(g1)));
      visit(j2);
    }
  }
}

// L2 norm of a triple evaluated spectrally (Parseval); agrees with the
// physical quadrature to rounding and avoids backward transforms.
inline double spectral_l2_sq(const ScalarField& f) {
  const CplxArray& c = f.spec();
  long double acc = 0.0L;
  for (const cplx& v : c)
    acc += static_cast<long double>(v.real()) * v.real() +
           static_cast<long double>(v.imag()) * v.imag();
  const double L = f.grid().box_length();
  return static_cast<double>(acc) * L * L;
}

inline double spectral_l2_sq(const Triple& t) {
  return spectral_l2_sq(t[0]) + spectral_l2_sq(t[1]) + spectral_l2_sq(t[2]);
}

// max over components of sup (1+t+|x|)^{-d} |f| (box-centered |x|).
inline double weighted_sup(const Triple& t, double time, double d) {
  const GridSpec& g = t.grid();
  double worst = 0.0;
  for (int comp = 0; comp < 3; ++comp) {
    const RealArray& v = t[comp].phys();
    for (int j1 = 0; j1 < g.n(); ++j1) {
      const double d1 = g.x(j1) - g.center();
      for (int j2 = 0; j2 < g.n(); ++j2) {
        const double d2 = g.x(j2) - g.center();
        const double w =
            d == 0.0 ? 1.0 : std::pow(1.0 + time + std::sqrt(d1 * d1 + d2 * d2), -d);
        worst = std::max(worst, w * std::abs(v[static_cast<std::size_t>(j1) * g.n() + j2]));
      }
    }
  }
  return worst;
}

// integral sum_pq A[p][q] v_q w_p (physical quadrature); zero entries skipped.
inline double matrix_inner(const MatrixField& A, const Triple& v, const Triple& w) {
  const GridSpec& g = v.grid();
  long double acc = 0.0L;
  for (int p = 0; p < 3; ++p) {
    const RealArray& wp = w[p].phys();
    for (int q = 0; q < 3; ++q) {
      if (A[p][q].max_abs() == 0.0) continue;
      const RealArray& apq = A[p][q].phys();
      const RealArray& vq = v[q].phys();
      long double cell = 0.0L;
      for (std::size_t i = 0; i < wp.size(); ++i)
        cell += static_cast<long double>(apq[i]) * vq[i] * wp[i];
      acc += cell;
    }
  }
  const double h = g.h();
  return static_cast<double>(acc) * h * h;
}

struct PassRequest {
  bool l2 = false;
  bool sup = false;
  double sup_d = 0.0;
  bool energy = false;
  const CoefficientMatrices* coeff = nullptr;  // required when energy is set
};

struct PassResult {
  double l2_sum = 0.0;      // sum over words of ||word U||_L2
  double sup_sum = 0.0;     // sum over words of the weighted sup
  double energy_quad = 0.0;  // sum over words of |dt w|^2 + |grad w|^2 + |w|^2
  double energy_a = 0.0;     // sum over words of sum_ab <A_ab da w, db w>
};

inline PassResult word_pass(const Jet& master, int max_order, const PassRequest& req) {
  PassResult out;
  long double l2_acc = 0.0L, sup_acc = 0.0L, quad_acc = 0.0L, a_acc = 0.0L;
  for_each_word(std::vector<Jet>{master}, max_order, [&](const std::vector<Jet>& jets) {
    const Jet& w = jets[0];
    const Triple& w0 = w.d[0];
    if (req.l2) l2_acc += std::sqrt(spectral_l2_sq(w0));
    if (req.sup) sup_acc += weighted_sup(w0, w.time, req.sup_d);
    if (req.energy) {
      Triple da0 = deriv(w0, 0), da1 = deriv(w0, 1);
      quad_acc += spectral_l2_sq(w.d[1]);
      quad_acc += spectral_l2_sq(da0) + spectral_l2_sq(da1);
      quad_acc += spectral_l2_sq(w0);
      const CoefficientMatrices& cm = *req.coeff;
      a_acc += matrix_inner(cm.A[0][0], da0, da0);
      a_acc += matrix_inner(cm.A[0][1], da0, da1);
      a_acc += matrix_inner(cm.A[1][0], da1, da0);
      a_acc += matrix_inner(cm.A[1][1], da1, da1);
    }
  });
  out.l2_sum = static_cast<double>(l2_acc);
  out.sup_sum = static_cast<double>(sup_acc);
  out.energy_quad = static_cast<double>(quad_acc);
  out.energy_a = static_cast<double>(a_acc);
  return out;
}

// Stacked word sum over a bundle: sum over words of the root-sum-square of the
// per-jet L2 norms (used for the derivative bundle (dtU, d1U, d2U)).
inline double word_pass_bundle_l2(const std::vector<Jet>& bundle, int max_order) {
  long double acc = 0.0L;
  for_each_word(bundle, max_order, [&](const std::vector<Jet>& jets) {
    long double sq = 0.0L;
    for (const Jet& w : jets) sq += spectral_l2_sq(w.d[0]);
    acc += std::sqrt(static_cast<double>(sq));
  });
  return static_cast<double>(acc);
}

inline void check_order(int max_order) {
  if (max_order < 0 || max_order > 2)
    throw UnsupportedOrderError("vf_norm: max_order must be between 0 and 2, got " +
                                std::to_string(max_order));
}

}  // namespace detail

// Sum over all generator words up to max_order of the L2 norm (p=2) or the
// (1+t+|x|)^{-d}-weighted sup (p=0, standing for infinity) of the word applied
// to the state's triple. The decay weight d only affects the sup form.
inline double vf_norm(const SymState& s, int max_order, int p, double d = 0.0,
                      bool linear_only = false) {
  detail::check_order(max_order);
  if (p != 2 && p != 0) throw Error("vf_norm: p must be 2 or 0 (=infinity)");
  Jet master = make_jet(s, max_order, linear_only);
  detail::PassRequest req;
  if (p == 2) {
    req.l2 = true;
    return detail::word_pass(master, max_order, req).l2_sum;
  }
  req.sup = true;
  req.sup_d = d;
  return detail::word_pass(master, max_order, req).sup_sum;
}

// Size proxy at fixed order 2: the growth-weighted sup term (d = -1, i.e.
// a (1+t+|x|) factor) plus the order-2 L2 word sums of U and of its four-
// gradient (dtU, d1U, d2U).
inline double x_proxy(const SymState& s, bool linear_only = false) {
  Jet master = make_jet(s, 3, linear_only);
  detail::PassRequest req;
  req.l2 = true;
  req.sup = true;
  req.sup_d = -1.0;
  detail::PassResult pr = detail::word_pass(master, 2, req);
  std::vector<Jet> bundle{vf_gen_apply(master, VfGen::dt), vf_gen_apply(master, VfGen::d1),
                          vf_gen_apply(master, VfGen::d2)};
  const double l2_du = detail::word_pass_bundle_l2(bundle, 2);
  return pr.sup_sum + pr.l2_sum + l2_du;
}

// ---------------------------------------------------------------------------
// Energy functional
// ---------------------------------------------------------------------------

struct EnergyResult {
  double value = 0.0;
  double max_coeff_inf = 0.0;  // measured max entry sup-norm over the A_ab
};

// F = 1/2 sum_words (|dt w|^2 + |grad w|^2 + |w|^2)
//   + 1/2 sum_words sum_ab <A_ab da w, db w>
// with the coefficient matrices evaluated at the state itself. The quadratic
// part dominates whenever the measured coefficient bound is <= 1/4.
inline EnergyResult energy_F(const SymState& s, int max_order, bool linear_only = false) {
  detail::check_order(max_order);
  Jet master = make_jet(s, max_order + 1, linear_only);
  CoefficientMatrices cm = assemble_coefficients(KGState{master.d[0], master.d[1], s.time});
  detail::PassRequest req;
  req.energy = true;
  req.coeff = &cm;
  detail::PassResult pr = detail::word_pass(master, max_order, req);
  EnergyResult out;
  out.value = 0.5 * pr.energy_quad + 0.5 * pr.energy_a;
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b)
      for (int p = 0; p < 3; ++p)
        for (int q = 0; q < 3; ++q)
          out.max_coeff_inf = std::max(out.max_coeff_inf, cm.A[a][b][p][q].max_abs());
  return out;
}

// ---------------------------------------------------------------------------
// Decay fitting
// ---------------------------------------------------------------------------

struct FitResult {
  double exponent = 0.0;
  double prefactor = 0.0;
  double t_min = 0.0;
  double t_max = 0.0;
  double residual = 0.0;
  int samples = 0;
};

// Least-squares fit of value = prefactor * (1+t)^(-exponent) over samples with
// t inside [t_min, t_max]; residual is the RMS misfit of log(value).
inline FitResult fit_decay(const std::vector<std::pair<double, double>>& series, double t_min,
                           double t_max) {
  if (!(t_min < t_max)) throw FitError("fit_decay: window must satisfy t_min < t_max");
  std::vector<double> xs, ys;
  for (const auto& [t, v] : series) {
    if (t < t_min - 1e-12 || t > t_max + 1e-12) continue;
    if (!(v > 0.0))
      throw FitError("fit_decay: nonpositive value " + std::to_string(v) + " at t=" +
                     std::to_string(t));
    xs.push_back(std::log1p(t));
    ys.push_back(std::log(v));
  }
  if (xs.size() < 5)
    throw FitError("fit_decay: only " + std::to_string(xs.size()) +
                   " samples in window; need at least 5");
  const std::size_t n = xs.size();
  long double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sx += xs[i];
    sy += ys[i];
    sxx += static_cast<long double>(xs[i]) * xs[i];
    sxy += static_cast<long double>(xs[i]) * ys[i];
  }
  const long double denom = n * sxx - sx * sx;
  if (denom <= 0) throw FitError("fit_decay: degenerate abscissae");
  const double slope = static_cast<double>((n * sxy - sx * sy) / denom);
  const double intercept = static_cast<double>((sy - slope * sx) / n);
  long double rss = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = ys[i] - (intercept + slope * xs[i]);
    rss += static_cast<long double>(r) * r;
  }
  FitResult out;
  out.exponent = -slope;
  out.prefactor = std::exp(intercept);
  out.t_min = t_min;
  out.t_max = t_max;
  out.residual = std::sqrt(static_cast<double>(rss) / n);
  out.samples = static_cast<int>(n);
  return out;
}

// ---------------------------------------------------------------------------
// Scattering comparison
// ---------------------------------------------------------------------------

struct ScatterPoint {
  double time = 0.0;
  double diff_U = 0.0;   // H^l distance between U and the matched free flow
  double diff_Ut = 0.0;  // H^{l-1} distance between the time derivatives
};

namespace detail {

inline const Checkpoint& checkpoint_at(const Trajectory& traj, double t, const char* what) {
  for (const Checkpoint& c : traj.checkpoints)
    if (std::abs(c.time - t) <= 1e-9 * std::max(1.0, std::abs(t))) return c;
  throw RangeError(std::string(what) + " " + std::to_string(t) +
                   " does not coincide with any trajectory checkpoint");
}

}  // namespace detail

// Free-flow comparison: the free solution is the linear Klein-Gordon flow
// matching (U, dtU) at match_time; returns the H^l / H^{l-1} differences at
// the requested times (each must be a trajectory checkpoint).
inline std::vector<ScatterPoint> scattering_diagnostic(const Trajectory& traj, double match_time,
                                                       const std::vector<double>& sample_times,
                                                       double l = 2.0) {
  if (l < 1.0) throw Error("scattering_diagnostic: order l must be at least 1");
  const Checkpoint& at_match = detail::checkpoint_at(traj, match_time, "match time");
  Triple Um = state_triple(at_match.state, traj.linear_only);
  Triple Utm = triple_time_derivative(Um, traj.linear_only);

  const NormSpec norm_l = NormSpec::sobolev(l);
  const NormSpec norm_lm1 = NormSpec::sobolev(l - 1.0);
  std::vector<ScatterPoint> out;
  out.reserve(sample_times.size());
  for (double t : sample_times) {
    const Checkpoint& c = detail::checkpoint_at(traj, t, "sample time");
    Triple U = state_triple(c.state, traj.linear_only);
    Triple Ut = triple_time_derivative(U, traj.linear_only);
    KGState free = linear_kg_propagator(Um, Utm, t - match_time);
    ScatterPoint p;
    p.time = t;
    p.diff_U = weighted_norm(U - free.U, norm_l);
    p.diff_Ut = weighted_norm(Ut - free.Ut, norm_lm1);
    out.push_back(p);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Error ODE bound
// ---------------------------------------------------------------------------

struct OdeBound {
  double value = 0.0;
  bool blown_up = false;
};

// Closed-form bound for e' <= C e (e + delta/(1+t)), e(0) = e0:
//   e(t) <= (1+t)^{C delta} / ( 1/e0 - C/(1+C delta) [ (1+t)^{1+C delta} - 1 ] ).
// Past the bracket's root the bound has blown up; the value is then +infinity
// and the flag is set.
inline OdeBound error_ode_bound(double C, double delta, double e0, double t) {
  if (C < 0.0 || delta < 0.0) throw Error("error_ode_bound: C and delta must be nonnegative");
  if (!(e0 > 0.0)) throw Error("error_ode_bound: e0 must be positive");
  if (t < 0.0) throw Error("error_ode_bound: t must be nonnegative");
  const double p = 1.0 + C * delta;
  const double bracket = 1.0 / e0 - (C / p) * (std::pow(1.0 + t, p) - 1.0);
  if (!(bracket > 0.0)) return {std::numeric_limits<double>::infinity(), true};
  return {std::pow(1.0 + t, C * delta) / bracket, false};
}

// Root of the bracket above: the time at which the closed-form bound blows up.
inline double ode_lifespan(double C, double delta, double e0) {
  if (delta < 0.0) throw Error("ode_lifespan: delta must be nonnegative");
  if (!(e0 > 0.0)) throw Error("ode_lifespan: e0 must be positive");
  if (C <= 0.0) return std::numeric_limits<double>::infinity();
  const double p = 1.0 + C * delta;
  return std::pow(1.0 + p / (C * e0), 1.0 / p) - 1.0;
}

// ---------------------------------------------------------------------------
// Per-checkpoint diagnostics
// ---------------------------------------------------------------------------

struct DiagnosticsOptions {
  int vf_max_order = 2;
  double support_threshold = 1e-10;
  bool linear_only = false;
};

struct DiagnosticsRecord {
  double time = 0.0;
  double sup_norm = 0.0;
  double l2_U = 0.0;
  double l2_dU = 0.0;
  double theta_max = 0.0;
  double theta_integral = 0.0;
  double energy_F = 0.0;
  double max_coeff_inf = 0.0;
  double support_radius = 0.0;
  double x_proxy = 0.0;
};

// All per-checkpoint measurements in one pass (the word applications are
// shared between the L2 sums, the weighted sup term, and the energy).
inline DiagnosticsRecord compute_diagnostics(const PrimitiveState& state,
                                             const DiagnosticsOptions& opt) {
  detail::check_order(opt.vf_max_order);
  DiagnosticsRecord rec;
  rec.time = state.time;

  ScalarField theta = relative_vorticity(state);
  rec.theta_max = theta.max_abs();
  rec.theta_integral = theta.integral();

  Triple U = state_triple(state, opt.linear_only);
  rec.sup_norm = U.max_abs();
  rec.support_radius =
      std::max({support_radius(U[0], opt.support_threshold),
                support_radius(U[1], opt.support_threshold),
                support_radius(U[2], opt.support_threshold)});

  SymState s{U[0], VectorField(U[1], U[2]), state.time};
  Jet master = make_jet(s, opt.vf_max_order + 1, opt.linear_only);
  CoefficientMatrices cm = assemble_coefficients(KGState{master.d[0], master.d[1], s.time});
  detail::PassRequest req;
  req.l2 = true;
  req.sup = true;
  req.sup_d = -1.0;
  req.energy = true;
  req.coeff = &cm;
  detail::PassResult pr = detail::word_pass(master, opt.vf_max_order, req);
  rec.l2_U = pr.l2_sum;
  rec.energy_F = 0.5 * pr.energy_quad + 0.5 * pr.energy_a;
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b)
      for (int p = 0; p < 3; ++p)
        for (int q = 0; q < 3; ++q)
          rec.max_coeff_inf = std::max(rec.max_coeff_inf, cm.A[a][b][p][q].max_abs());

  std::vector<Jet> bundle{vf_gen_apply(master, VfGen::dt), vf_gen_apply(master, VfGen::d1),
                          vf_gen_apply(master, VfGen::d2)};
  rec.l2_dU = detail::word_pass_bundle_l2(bundle, opt.vf_max_order);
  rec.x_proxy = pr.sup_sum + rec.l2_U + rec.l2_dU;
  return rec;
}

// H^3 distance between two states in the evolved variables, the error measure
// of the lifespan experiments.
inline double h3_difference(const PrimitiveState& a, const PrimitiveState& b,
                            bool linear_only = false) {
  require_same_grid(a.grid(), b.grid(), "h3_difference");
  Triple ta = state_triple(a, linear_only);
  Triple tb = state_triple(b, linear_only);
  return weighted_norm(ta - tb, NormSpec::sobolev(3.0));
}

}  // namespace rsw
