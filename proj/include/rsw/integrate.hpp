#pragma once
// Time stepping: classical RK4 for the primitive and symmetrized formulations,
// the exact linear propagators (both the coupled first-order system and the
// componentwise Klein-Gordon form), CFL-based step selection, and a trajectory
// driver with checkpoint recording, blow-up and vacuum detection.

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "rsw/models.hpp"

namespace rsw {

enum class Formulation { primitive, symmetrized };

enum class TerminationKind { completed, blowup, vacuum };

struct Termination {
  TerminationKind kind = TerminationKind::completed;
  double time = 0.0;
};

inline const char* to_string(TerminationKind k) {
  switch (k) {
    case TerminationKind::completed: return "completed";
    case TerminationKind::blowup: return "blowup";
    case TerminationKind::vacuum: return "vacuum";
  }
  return "unknown";
}

struct IntegratorConfig {
  double dt = 0.0;          // explicit step; 0 means derive from cfl_number
  double cfl_number = 0.8;  // used when dt == 0
  double t_end = 20.0;
  double checkpoint_interval = 0.5;
  double blowup_threshold = 10.0;
  Formulation formulation = Formulation::symmetrized;
  bool linear_only = false;       // drop quadratic terms, step exactly
  bool store_checkpoints = true;  // keep states in the Trajectory
};

struct Checkpoint {
  double time = 0.0;
  PrimitiveState state;
};

struct Trajectory {
  std::vector<Checkpoint> checkpoints;
  Termination termination;
  double dt_used = 0.0;
  bool linear_only = false;
};

// ---------------------------------------------------------------------------
// CFL step: dt = cfl * h / c_max with c_max combining the advective speeds
// max|u| + max|m|/2, the unit gravity-wave speed, and the fastest resolved
// oscillation <k_max> expressed as a per-cell rate.
// ---------------------------------------------------------------------------

inline double cfl_dt(const SymState& s, double cfl_number, const GridSpec& g) {
  if (!(cfl_number > 0.0)) throw Error("cfl_dt: cfl_number must be positive");
  const double kmax = std::sqrt(1.0 + g.k_max_sq());
  const double c_max =
      1.0 + std::max(s.u.u1.max_abs(), s.u.u2.max_abs()) + 0.5 * s.m.max_abs() + kmax * g.h();
  return cfl_number * g.h() / c_max;
}

inline double cfl_dt(const PrimitiveState& s, double cfl_number, const GridSpec& g) {
  return cfl_dt(SymState{rho_to_m(s.rho), s.u, s.time}, cfl_number, g);
}

// ---------------------------------------------------------------------------
// RK4 stepping
// ---------------------------------------------------------------------------

namespace detail {

inline SymState add_scaled(const SymState& s, const SymTendency& k, double a, double dt) {
  return SymState{s.m + a * k.dm, s.u + a * k.du, s.time + dt};
}
inline PrimitiveState add_scaled(const PrimitiveState& s, const PrimitiveTendency& k, double a,
                                 double dt) {
  return PrimitiveState{s.rho + a * k.drho, s.u + a * k.du, s.time + dt};
}

inline SymTendency rk4_combine(const SymTendency& k1, const SymTendency& k2, const SymTendency& k3,
                               const SymTendency& k4) {
  return SymTendency{k1.dm + 2.0 * k2.dm + 2.0 * k3.dm + k4.dm,
                     k1.du + 2.0 * k2.du + 2.0 * k3.du + k4.du};
}
inline PrimitiveTendency rk4_combine(const PrimitiveTendency& k1, const PrimitiveTendency& k2,
                                     const PrimitiveTendency& k3, const PrimitiveTendency& k4) {
  return PrimitiveTendency{k1.drho + 2.0 * k2.drho + 2.0 * k3.drho + k4.drho,
                           k1.du + 2.0 * k2.du + 2.0 * k3.du + k4.du};
}

inline SymState dealias_state(const SymState& s) {
  return SymState{dealias(s.m), dealias(s.u), s.time};
}
inline PrimitiveState dealias_state(const PrimitiveState& s) {
  return PrimitiveState{dealias(s.rho), dealias(s.u), s.time};
}

inline double state_max_abs(const SymState& s) {
  return std::max({s.m.max_abs(), s.u.u1.max_abs(), s.u.u2.max_abs()});
}
inline double state_max_abs(const PrimitiveState& s) {
  return std::max({s.rho.max_abs(), s.u.u1.max_abs(), s.u.u2.max_abs()});
}

// Total height reaching zero: 1 + rho <= 0, i.e. m <= -2 in the symmetrized
// variable since 1 + rho = (1 + m/2)^2 vanishes exactly at m = -2.
inline bool state_vacuum(const SymState& s) {
  double lo = 0.0;
  for (double v : s.m.phys()) lo = std::min(lo, v);
  return lo <= -2.0;
}
inline bool state_vacuum(const PrimitiveState& s) {
  double lo = 0.0;
  for (double v : s.rho.phys()) lo = std::min(lo, v);
  return lo <= -1.0;
}

inline bool state_finite(const SymState& s) {
  for (const ScalarField* f : {&s.m, &s.u.u1, &s.u.u2})
    for (double v : f->phys())
      if (!std::isfinite(v)) return false;
  return true;
}
inline bool state_finite(const PrimitiveState& s) {
  for (const ScalarField* f : {&s.rho, &s.u.u1, &s.u.u2})
    for (double v : f->phys())
      if (!std::isfinite(v)) return false;
  return true;
}

}  // namespace detail

// One classical RK4 step with a caller-supplied right-hand side (used by the
// convergence oracles with e.g. the linearized tendency). Every stage input is
// already band-limited because the tendencies dealias their products; the
// output is dealiased once more, which is an exact no-op in that case.
template <class State, class Rhs>
inline State rk4_step_with(const State& s, double dt, Rhs&& rhs) {
  if (!(dt > 0.0)) throw Error("rk4_step: dt must be positive");
  auto k1 = rhs(s);
  auto k2 = rhs(detail::add_scaled(s, k1, 0.5 * dt, 0.5 * dt));
  auto k3 = rhs(detail::add_scaled(s, k2, 0.5 * dt, 0.5 * dt));
  auto k4 = rhs(detail::add_scaled(s, k3, dt, dt));
  auto sum = detail::rk4_combine(k1, k2, k3, k4);
  return detail::dealias_state(detail::add_scaled(s, sum, dt / 6.0, dt));
}

inline SymState rk4_step(const SymState& s, double dt) {
  return rk4_step_with(s, dt, [](const SymState& x) { return symmetrized_rhs(x); });
}
inline PrimitiveState rk4_step(const PrimitiveState& s, double dt) {
  return rk4_step_with(s, dt, [](const PrimitiveState& x) { return primitive_rhs(x); });
}

// ---------------------------------------------------------------------------
// Exact linear propagators
// ---------------------------------------------------------------------------

// Advance (rho, u) by time t under the linearized system
//   d rho/dt = -div u,  d u/dt = -grad rho - perp(u).
// Per mode the generator M (acting on (rho, u1, u2)-hat) satisfies
// M^3 = -w^2 M with w = sqrt(1 + |k|^2), so
//   exp(tM) = I + sin(wt)/w M + (1 - cos(wt))/w^2 M^2,
// evaluated in closed form. The geostrophic kernel of M is left untouched.
inline PrimitiveState linear_system_advance(const PrimitiveState& s, double t) {
  const GridSpec& g = s.grid();
  const CplxArray& r = s.rho.spec();
  const CplxArray& v1 = s.u.u1.spec();
  const CplxArray& v2 = s.u.u2.spec();
  CplxArray nr(r.size()), n1(r.size()), n2(r.size());
  const cplx I(0.0, 1.0);
  for (int j1 = 0; j1 < g.n(); ++j1) {
    const double k1 = g.k_deriv(j1);
    for (int j2 = 0; j2 < g.n(); ++j2) {
      const double k2 = g.k_deriv(j2);
      const double w2 = 1.0 + k1 * k1 + k2 * k2;
      const double w = std::sqrt(w2);
      const double alpha = std::sin(w * t) / w;
      const double beta = (1.0 - std::cos(w * t)) / w2;
      const std::size_t i = static_cast<std::size_t>(j1) * g.n() + j2;
      const cplx a = r[i], b = v1[i], c = v2[i];
      // Mv
      const cplx ma = -I * (k1 * b + k2 * c);
      const cplx mb = -I * (k1 * a) + c;
      const cplx mc = -I * (k2 * a) - b;
      // M(Mv)
      const cplx mma = -I * (k1 * mb + k2 * mc);
      const cplx mmb = -I * (k1 * ma) + mc;
      const cplx mmc = -I * (k2 * ma) - mb;
      nr[i] = a + alpha * ma + beta * mma;
      n1[i] = b + alpha * mb + beta * mmb;
      n2[i] = c + alpha * mc + beta * mmc;
    }
  }
  return PrimitiveState{ScalarField::from_spectral(g, std::move(nr)),
                        VectorField(ScalarField::from_spectral(g, std::move(n1)),
                                    ScalarField::from_spectral(g, std::move(n2))),
                        s.time + t};
}

// Free Klein-Gordon flow, componentwise:
//   U(t)  = cos(<k>t) U0 + sin(<k>t)/<k> U1
//   Ut(t) = -<k> sin(<k>t) U0 + cos(<k>t) U1
// with <k> = sqrt(1 + |k|^2).
inline KGState linear_kg_propagator(const Triple& U0, const Triple& U1, double t) {
  require_same_grid(U0.grid(), U1.grid(), "linear_kg_propagator");
  auto cos_sym = [t](double k1, double k2) {
    return std::cos(std::sqrt(1.0 + k1 * k1 + k2 * k2) * t);
  };
  auto sinc_sym = [t](double k1, double k2) {
    const double w = std::sqrt(1.0 + k1 * k1 + k2 * k2);
    return std::sin(w * t) / w;
  };
  auto dsin_sym = [t](double k1, double k2) {
    const double w = std::sqrt(1.0 + k1 * k1 + k2 * k2);
    return -w * std::sin(w * t);
  };
  KGState out;
  for (int i = 0; i < 3; ++i) {
    out.U[i] = fourier_multiplier(U0[i], cos_sym) + fourier_multiplier(U1[i], sinc_sym);
    out.Ut[i] = fourier_multiplier(U0[i], dsin_sym) + fourier_multiplier(U1[i], cos_sym);
  }
  out.time = t;
  return out;
}

// ---------------------------------------------------------------------------
// Trajectory driver
// ---------------------------------------------------------------------------

// Called at every checkpoint; returning false stops the run at that
// checkpoint (the trajectory then terminates as completed at that time).
using CheckpointObserver = std::function<bool(const Checkpoint&)>;

namespace detail {

inline void validate(const IntegratorConfig& cfg) {
  if (cfg.dt < 0.0) throw Error("integrate: dt must be nonnegative");
  if (cfg.dt == 0.0 && !(cfg.cfl_number > 0.0))
    throw Error("integrate: cfl_number must be positive when dt is not given");
  if (cfg.t_end < 0.0) throw Error("integrate: t_end must be nonnegative");
  if (!(cfg.checkpoint_interval > 0.0))
    throw Error("integrate: checkpoint_interval must be positive");
  if (!(cfg.blowup_threshold > 0.0)) throw Error("integrate: blowup_threshold must be positive");
}

// The fixed step actually used: the largest dt <= dt0 that divides the
// checkpoint interval into a whole number of steps.
inline double snap_dt(double interval, double dt0, int* steps_out) {
  const int steps = std::max(1, static_cast<int>(std::ceil(interval / dt0 - 1e-12)));
  if (steps_out) *steps_out = steps;
  return interval / steps;
}

// Number of whole checkpoint intervals in [0, t_end] and the leftover segment.
inline int whole_intervals(double t_end, double interval, double* leftover) {
  int ni = static_cast<int>(std::floor(t_end / interval + 1e-9));
  double rem = t_end - ni * interval;
  if (rem < 1e-9 * std::max(1.0, t_end)) rem = 0.0;
  *leftover = rem;
  return ni;
}

template <class State>
inline Termination health(const State& s, double t, double threshold) {
  if (!state_finite(s)) return {TerminationKind::blowup, t};
  if (state_max_abs(s) > threshold) return {TerminationKind::blowup, t};
  if (state_vacuum(s)) return {TerminationKind::vacuum, t};
  return {TerminationKind::completed, t};
}

template <class State, class Rhs, class ToPrim>
inline Trajectory run_rk4(State state, const IntegratorConfig& cfg, double dt0,
                          const CheckpointObserver& observer, Rhs&& rhs, ToPrim&& to_prim) {
  Trajectory traj;
  traj.linear_only = false;

  const double interval = cfg.checkpoint_interval;
  double leftover = 0.0;
  const int ni = whole_intervals(cfg.t_end, interval, &leftover);

  // Freeze one dt that divides the checkpoint interval exactly so checkpoints
  // land on exact multiples of the interval (a shorter step sequence covers a
  // final partial segment if t_end is not a multiple).
  int steps_per = 0;
  const double dt = snap_dt(interval, dt0, &steps_per);
  traj.dt_used = dt;

  auto record = [&](double t, const State& s) {
    Checkpoint c{t, to_prim(s)};
    if (cfg.store_checkpoints) traj.checkpoints.push_back(c);
    return observer ? observer(c) : true;
  };

  if (!record(0.0, state)) {
    traj.termination = {TerminationKind::completed, 0.0};
    return traj;
  }
  for (int ci = 0; ci < ni + (leftover > 0.0 ? 1 : 0); ++ci) {
    const bool partial = ci == ni;
    const double seg_start = ci * interval;
    const double seg_len = partial ? leftover : interval;
    const int nsteps =
        partial ? std::max(1, static_cast<int>(std::ceil(seg_len / dt - 1e-12))) : steps_per;
    const double seg_dt = partial ? seg_len / nsteps : dt;
    for (int j = 0; j < nsteps; ++j) {
      state = rk4_step_with(state, seg_dt, rhs);
      const double t = seg_start + (j + 1) * seg_dt;
      state.time = t;
      Termination h = health(state, t, cfg.blowup_threshold);
      if (h.kind != TerminationKind::completed) {
        traj.termination = h;
        return traj;
      }
    }
    const double t_ck = partial ? cfg.t_end : (ci + 1) * interval;
    state.time = t_ck;
    if (!record(t_ck, state)) {
      traj.termination = {TerminationKind::completed, t_ck};
      return traj;
    }
  }
  traj.termination = {TerminationKind::completed, cfg.t_end};
  return traj;
}

}  // namespace detail

// Advance initial data to t_end in the configured formulation, recording a
// checkpoint every checkpoint_interval (always including t=0 and t_end).
// Stops early with the matching termination tag on blow-up (non-finite values
// or max norm beyond blowup_threshold) or vacuum (total height reaching zero).
// With linear_only set, the quadratic terms are dropped and the flow is the
// exact linear propagator applied checkpoint-to-checkpoint; the (rho, u)
// variables are then identified with (m, u) (the conversions linearize).
inline Trajectory integrate(const PrimitiveState& initial, const IntegratorConfig& cfg,
                            const CheckpointObserver& observer = nullptr) {
  detail::validate(cfg);
  const GridSpec& g = initial.grid();
  require_same_grid(initial.rho.grid(), initial.u.grid(), "integrate");

  PrimitiveState start = detail::dealias_state(initial);
  start.time = 0.0;
  if (detail::state_max_abs(start) >= cfg.blowup_threshold)
    throw Error("integrate: blowup_threshold must exceed the initial max norm");

  if (cfg.linear_only) {
    Trajectory traj;
    traj.linear_only = true;
    const double interval = cfg.checkpoint_interval;
    double leftover = 0.0;
    const int ni = detail::whole_intervals(cfg.t_end, interval, &leftover);
    traj.dt_used = interval;
    auto record = [&](const Checkpoint& c) {
      if (cfg.store_checkpoints) traj.checkpoints.push_back(c);
      return observer ? observer(c) : true;
    };
    PrimitiveState state = start;
    if (!record({0.0, start})) {
      traj.termination = {TerminationKind::completed, 0.0};
      return traj;
    }
    for (int ci = 1; ci <= ni; ++ci) {
      state = linear_system_advance(state, interval);
      state.time = ci * interval;
      if (!record({state.time, state})) {
        traj.termination = {TerminationKind::completed, state.time};
        return traj;
      }
    }
    if (leftover > 0.0) {
      state = linear_system_advance(state, leftover);
      state.time = cfg.t_end;
      if (!record({cfg.t_end, state})) {
        traj.termination = {TerminationKind::completed, cfg.t_end};
        return traj;
      }
    }
    traj.termination = {TerminationKind::completed, cfg.t_end};
    return traj;
  }

  const double dt0 = cfg.dt > 0.0 ? cfg.dt : cfl_dt(start, cfg.cfl_number, g);

  if (cfg.formulation == Formulation::symmetrized) {
    SymState s0 = to_sym(start);
    return detail::run_rk4(
        std::move(s0), cfg, dt0, observer, [](const SymState& x) { return symmetrized_rhs(x); },
        [](const SymState& x) { return to_primitive(x); });
  }
  return detail::run_rk4(
      std::move(start), cfg, dt0, observer, [](const PrimitiveState& x) { return primitive_rhs(x); },
      [](const PrimitiveState& x) { return x; });
}

}  // namespace rsw
