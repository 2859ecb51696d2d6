#pragma once
// Weighted Sobolev norms  || (1+|x|^2)^{s/2} (1-Delta)^{l/2} v ||  in L2 or sup
// form. The derivative weight acts spectrally, the spatial weight acts
// pointwise with box-centered coordinates, and the L2 norm uses the plain
// quadrature weight h^2.

#include <cmath>

#include "rsw/core.hpp"

namespace rsw {

struct NormSpec {
  double l = 0.0;  // derivative order, (1+|k|^2)^{l/2} multiplier
  double s = 0.0;  // spatial weight order, (1+|x|^2)^{s/2} factor
  int p = 2;       // 2 for L2, 0 standing in for infinity (sup norm)

  NormSpec() = default;
  NormSpec(double l_, double s_, int p_ = 2) : l(l_), s(s_), p(p_) {
    if (l < 0.0 || s < 0.0) throw Error("NormSpec: orders must be nonnegative");
    if (p != 2 && p != 0) throw Error("NormSpec: p must be 2 or 0 (=infinity)");
  }
  static NormSpec sobolev(double l_) { return NormSpec(l_, 0.0, 2); }
};

namespace detail {

inline ScalarField bessel_power(const ScalarField& f, double l) {
  if (l == 0.0) return f;
  const double half = 0.5 * l;
  return fourier_multiplier(
      f, [half](double k1, double k2) { return std::pow(1.0 + k1 * k1 + k2 * k2, half); });
}

}  // namespace detail

inline double weighted_norm(const ScalarField& f, const NormSpec& spec) {
  const GridSpec& g = f.grid();
  ScalarField smoothed = detail::bessel_power(f, spec.l);
  const RealArray& v = smoothed.phys();
  if (spec.p == 2) {
    long double acc = 0.0L;
    for (int j1 = 0; j1 < g.n(); ++j1) {
      const double d1 = g.x(j1) - g.center();
      for (int j2 = 0; j2 < g.n(); ++j2) {
        const double d2 = g.x(j2) - g.center();
        const double w = spec.s == 0.0 ? 1.0 : std::pow(1.0 + d1 * d1 + d2 * d2, spec.s);
        const double val = v[static_cast<std::size_t>(j1) * g.n() + j2];
        acc += static_cast<long double>(w) * val * val;
      }
    }
    return std::sqrt(static_cast<double>(acc)) * g.h();
  }
  double worst = 0.0;
  for (int j1 = 0; j1 < g.n(); ++j1) {
    const double d1 = g.x(j1) - g.center();
    for (int j2 = 0; j2 < g.n(); ++j2) {
      const double d2 = g.x(j2) - g.center();
      const double w =
          spec.s == 0.0 ? 1.0 : std::pow(1.0 + d1 * d1 + d2 * d2, 0.5 * spec.s);
      worst = std::max(worst, w * std::abs(v[static_cast<std::size_t>(j1) * g.n() + j2]));
    }
  }
  return worst;
}

}  // namespace rsw
