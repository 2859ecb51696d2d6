#pragma once
// Periodic-box Fourier infrastructure: grids, physical<->spectral transforms,
// Fourier multipliers, differential operators, and dealiasing.
//
// Conventions used throughout:
//   * The box is [center - L/2, center + L/2)^2 sampled on an n x n grid,
//     x_j = center - L/2 + j*(L/n).
//   * Spectral coefficients are true Fourier coefficients: c_k = FFT(f)/n^2,
//     f(x) = sum_k c_k exp(i k.(x - origin)) with k = (2*pi/L)*j and integer
//     j in [-n/2, n/2) per dimension (FFTW index order, no fftshift).
//   * Parseval: integral |f|^2 dx = L^2 * sum_k |c_k|^2.
//   * The unpaired Nyquist mode j = -n/2 gets derivative weight zero so that
//     differentiation maps real fields to real fields.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdlib>
#include <map>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <fftw3.h>

namespace rsw {

using cplx = std::complex<double>;

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct InvalidGridError : Error {
  using Error::Error;
};
struct GridMismatchError : Error {
  using Error::Error;
};
struct SingularSymbolError : Error {
  using Error::Error;
};
struct VacuumError : Error {
  using Error::Error;
};
struct UnsupportedOrderError : Error {
  using Error::Error;
};
struct FitError : Error {
  using Error::Error;
};
struct RangeError : Error {
  using Error::Error;
};
struct ConfigError : Error {
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Aligned storage (FFTW carves SIMD plans by buffer alignment; keeping every
// buffer 64-byte aligned lets one cached plan serve all of them)
// ---------------------------------------------------------------------------

template <class T>
struct AlignedAlloc {
  using value_type = T;
  static constexpr std::size_t alignment = 64;

  AlignedAlloc() = default;
  template <class U>
  AlignedAlloc(const AlignedAlloc<U>&) {}

  T* allocate(std::size_t count) {
    std::size_t bytes = (count * sizeof(T) + alignment - 1) / alignment * alignment;
    void* p = std::aligned_alloc(alignment, bytes);
    if (!p) throw std::bad_alloc();
    return static_cast<T*>(p);
  }
  void deallocate(T* p, std::size_t) noexcept { std::free(p); }

  template <class U>
  bool operator==(const AlignedAlloc<U>&) const {
    return true;
  }
};

using RealArray = std::vector<double, AlignedAlloc<double>>;
using CplxArray = std::vector<cplx, AlignedAlloc<cplx>>;

// ---------------------------------------------------------------------------
// GridSpec
// ---------------------------------------------------------------------------

class GridSpec {
 public:
  GridSpec() = default;
  GridSpec(int n, double box_length, double dealias_fraction, double center)
      : n_(n), box_length_(box_length), dealias_fraction_(dealias_fraction), center_(center) {}

  int n() const { return n_; }
  double box_length() const { return box_length_; }
  double dealias_fraction() const { return dealias_fraction_; }
  double center() const { return center_; }
  std::size_t size() const { return static_cast<std::size_t>(n_) * n_; }
  double h() const { return box_length_ / n_; }
  double dk() const { return 2.0 * M_PI / box_length_; }

  // Physical coordinate of sample j (per dimension).
  double x(int j) const { return center_ - 0.5 * box_length_ + h() * j; }

  // Wavenumber of spectral index j, FFTW ordering: 0..n/2-1, -n/2..-1.
  double k(int j) const { return dk() * (j < n_ / 2 ? j : j - n_); }

  // Wavenumber used for differentiation: the unpaired Nyquist mode is dropped.
  double k_deriv(int j) const { return j == n_ / 2 ? 0.0 : k(j); }

  // Dealiasing cutoff: modes with max(|k1|,|k2|) above this are zeroed.
  double dealias_cutoff() const { return dealias_fraction_ * (n_ / 2) * dk(); }

  // Largest resolvable |k|^2 (full Nyquist corner), used by the time-step rule.
  double k_max_sq() const {
    double knyq = dk() * (n_ / 2);
    return 2.0 * knyq * knyq;
  }

  bool operator==(const GridSpec& o) const {
    return n_ == o.n_ && box_length_ == o.box_length_ &&
           dealias_fraction_ == o.dealias_fraction_ && center_ == o.center_;
  }
  bool operator!=(const GridSpec& o) const { return !(*this == o); }

 private:
  int n_ = 0;
  double box_length_ = 0.0;
  double dealias_fraction_ = 1.0;
  double center_ = 0.0;
};

inline GridSpec make_grid(int n, double box_length, double dealias_fraction = 2.0 / 3.0,
                          double center = 0.0) {
  if (n < 4 || n % 2 != 0)
    throw InvalidGridError("make_grid: n must be even and at least 4, got " + std::to_string(n));
  if (!(box_length > 0.0))
    throw InvalidGridError("make_grid: box_length must be positive, got " +
                           std::to_string(box_length));
  if (!(dealias_fraction > 0.0) || dealias_fraction > 1.0)
    throw InvalidGridError("make_grid: dealias_fraction must lie in (0,1], got " +
                           std::to_string(dealias_fraction));
  return GridSpec(n, box_length, dealias_fraction, center);
}

inline void require_same_grid(const GridSpec& a, const GridSpec& b, const char* where) {
  if (a != b) throw GridMismatchError(std::string(where) + ": fields live on different grids");
}

// ---------------------------------------------------------------------------
// FFT engine: one forward + one backward c2c plan per grid size, created once
// under a lock, executed through the thread-safe new-array interface.
// FFTW_ESTIMATE keeps plan selection deterministic (no runtime timing).
// ---------------------------------------------------------------------------

namespace fftdetail {

struct Plans {
  fftw_plan fwd = nullptr;
  fftw_plan bwd = nullptr;
};

inline Plans& plans_for(int n) {
  static std::mutex mu;
  static std::map<int, Plans> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;

  CplxArray a(static_cast<std::size_t>(n) * n), b(static_cast<std::size_t>(n) * n);
  Plans p;
  p.fwd = fftw_plan_dft_2d(n, n, reinterpret_cast<fftw_complex*>(a.data()),
                           reinterpret_cast<fftw_complex*>(b.data()), FFTW_FORWARD, FFTW_ESTIMATE);
  p.bwd = fftw_plan_dft_2d(n, n, reinterpret_cast<fftw_complex*>(a.data()),
                           reinterpret_cast<fftw_complex*>(b.data()), FFTW_BACKWARD, FFTW_ESTIMATE);
  if (!p.fwd || !p.bwd) throw Error("fft: planner failed");
  return cache.emplace(n, p).first->second;
}

inline CplxArray& scratch(std::size_t size) {
  thread_local CplxArray buf;
  if (buf.size() < size) buf.resize(size);
  return buf;
}

}  // namespace fftdetail

// physical (real samples) -> spectral (Fourier coefficients, FFT/n^2)
inline void fft_forward(const GridSpec& g, const double* phys, cplx* spec) {
  const std::size_t sz = g.size();
  CplxArray& in = fftdetail::scratch(sz);
  for (std::size_t i = 0; i < sz; ++i) in[i] = cplx(phys[i], 0.0);
  fftw_execute_dft(fftdetail::plans_for(g.n()).fwd, reinterpret_cast<fftw_complex*>(in.data()),
                   reinterpret_cast<fftw_complex*>(spec));
  const double scale = 1.0 / static_cast<double>(sz);
  for (std::size_t i = 0; i < sz; ++i) spec[i] *= scale;
}

// spectral -> physical; the imaginary residue of a conjugate-symmetric input is
// at rounding level and is discarded.
inline void fft_backward(const GridSpec& g, const cplx* spec, double* phys) {
  const std::size_t sz = g.size();
  CplxArray& out = fftdetail::scratch(sz);
  fftw_execute_dft(fftdetail::plans_for(g.n()).bwd,
                   reinterpret_cast<fftw_complex*>(const_cast<cplx*>(spec)),
                   reinterpret_cast<fftw_complex*>(out.data()));
  for (std::size_t i = 0; i < sz; ++i) phys[i] = out[i].real();
}

// ---------------------------------------------------------------------------
// ScalarField: an immutable real field with paired physical/spectral
// representations. Whichever representation a construction provides is stored;
// the other is computed on first use and cached. Copies share storage.
// Instances are safe to hand between threads, but the lazy cache is not meant
// for concurrent first-access from several threads at once.
// ---------------------------------------------------------------------------

class ScalarField {
  struct Payload {
    GridSpec grid;
    mutable RealArray phys;
    mutable CplxArray spec;
    mutable bool has_phys = false;
    mutable bool has_spec = false;
  };

 public:
  ScalarField() = default;

  static ScalarField from_physical(const GridSpec& g, RealArray values) {
    check_size(g, values.size());
    auto p = std::make_shared<Payload>();
    p->grid = g;
    p->phys = std::move(values);
    p->has_phys = true;
    return ScalarField(std::move(p));
  }

  static ScalarField from_spectral(const GridSpec& g, CplxArray coeffs) {
    check_size(g, coeffs.size());
    auto p = std::make_shared<Payload>();
    p->grid = g;
    p->spec = std::move(coeffs);
    p->has_spec = true;
    return ScalarField(std::move(p));
  }

  // Sample an analytic function f(x1, x2) on the grid.
  template <class F>
  static ScalarField sample(const GridSpec& g, F&& f) {
    RealArray v(g.size());
    for (int j1 = 0; j1 < g.n(); ++j1)
      for (int j2 = 0; j2 < g.n(); ++j2)
        v[static_cast<std::size_t>(j1) * g.n() + j2] = f(g.x(j1), g.x(j2));
    return from_physical(g, std::move(v));
  }

  static ScalarField zero(const GridSpec& g) {
    RealArray v(g.size(), 0.0);
    return from_physical(g, std::move(v));
  }

  bool empty() const { return !p_; }
  const GridSpec& grid() const { return p_->grid; }

  const RealArray& phys() const {
    if (!p_->has_phys) {
      p_->phys.resize(p_->grid.size());
      fft_backward(p_->grid, p_->spec.data(), p_->phys.data());
      p_->has_phys = true;
    }
    return p_->phys;
  }

  const CplxArray& spec() const {
    if (!p_->has_spec) {
      p_->spec.resize(p_->grid.size());
      fft_forward(p_->grid, p_->phys.data(), p_->spec.data());
      p_->has_spec = true;
    }
    return p_->spec;
  }

  bool has_phys() const { return p_ && p_->has_phys; }
  bool has_spec() const { return p_ && p_->has_spec; }

  // max_j |f(x_j)|
  double max_abs() const {
    const RealArray& v = phys();
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
  }

  // Discrete L2 norm, sqrt(h^2 * sum f^2). Equals the spectral Parseval value
  // up to rounding; the quadrature path is the canonical one.
  double l2() const {
    const RealArray& v = phys();
    long double s = 0.0L;
    for (double x : v) s += static_cast<long double>(x) * x;
    return std::sqrt(static_cast<double>(s)) * grid().h();
  }

  // integral f dx = L^2 * c_0
  double integral() const {
    const double L = grid().box_length();
    return spec()[0].real() * L * L;
  }

 private:
  explicit ScalarField(std::shared_ptr<Payload> p) : p_(std::move(p)) {}
  static void check_size(const GridSpec& g, std::size_t got) {
    if (got != g.size())
      throw InvalidGridError("ScalarField: expected " + std::to_string(g.size()) +
                             " samples, got " + std::to_string(got));
  }
  std::shared_ptr<Payload> p_;
};

struct VectorField {
  ScalarField u1, u2;

  VectorField() = default;
  VectorField(ScalarField a, ScalarField b) : u1(std::move(a)), u2(std::move(b)) {
    require_same_grid(u1.grid(), u2.grid(), "VectorField");
  }
  const GridSpec& grid() const { return u1.grid(); }
};

// ---------------------------------------------------------------------------
// Field arithmetic (linear operations act on the spectral side when both
// operands have it cached, otherwise on the physical side; both choices are
// exact for linear combinations, and the rule is deterministic)
// ---------------------------------------------------------------------------

namespace detail {

template <class Op>
inline ScalarField combine(const ScalarField& a, const ScalarField& b, Op op) {
  require_same_grid(a.grid(), b.grid(), "field arithmetic");
  if (a.has_spec() && b.has_spec()) {
    const CplxArray &x = a.spec(), &y = b.spec();
    CplxArray r(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) r[i] = op(x[i], y[i]);
    return ScalarField::from_spectral(a.grid(), std::move(r));
  }
  const RealArray &x = a.phys(), &y = b.phys();
  RealArray r(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) r[i] = op(x[i], y[i]);
  return ScalarField::from_physical(a.grid(), std::move(r));
}

}  // namespace detail

inline ScalarField operator+(const ScalarField& a, const ScalarField& b) {
  return detail::combine(a, b, [](auto x, auto y) { return x + y; });
}
inline ScalarField operator-(const ScalarField& a, const ScalarField& b) {
  return detail::combine(a, b, [](auto x, auto y) { return x - y; });
}
inline ScalarField operator*(double s, const ScalarField& a) {
  if (a.has_spec()) {
    const CplxArray& x = a.spec();
    CplxArray r(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) r[i] = s * x[i];
    return ScalarField::from_spectral(a.grid(), std::move(r));
  }
  const RealArray& x = a.phys();
  RealArray r(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) r[i] = s * x[i];
  return ScalarField::from_physical(a.grid(), std::move(r));
}

inline VectorField operator+(const VectorField& a, const VectorField& b) {
  return VectorField(a.u1 + b.u1, a.u2 + b.u2);
}
inline VectorField operator-(const VectorField& a, const VectorField& b) {
  return VectorField(a.u1 - b.u1, a.u2 - b.u2);
}
inline VectorField operator*(double s, const VectorField& a) {
  return VectorField(s * a.u1, s * a.u2);
}

// ---------------------------------------------------------------------------
// Fourier multipliers and differential operators
// ---------------------------------------------------------------------------

// Apply a real symbol s(k1, k2) pointwise to the spectral coefficients.
// The symbol must be finite on every lattice point (so e.g. the inverse
// Helmholtz symbol -1/(1+|k|^2) is fine, while 1/|k|^2 is rejected at k=0).
template <class Symbol>
inline ScalarField fourier_multiplier(const ScalarField& f, Symbol&& symbol) {
  const GridSpec& g = f.grid();
  const CplxArray& c = f.spec();
  CplxArray r(c.size());
  for (int j1 = 0; j1 < g.n(); ++j1) {
    const double k1 = g.k(j1);
    for (int j2 = 0; j2 < g.n(); ++j2) {
      const double k2 = g.k(j2);
      const double s = symbol(k1, k2);
      if (!std::isfinite(s))
        throw SingularSymbolError("fourier_multiplier: symbol is not finite at k=(" +
                                  std::to_string(k1) + "," + std::to_string(k2) + ")");
      r[static_cast<std::size_t>(j1) * g.n() + j2] = s * c[static_cast<std::size_t>(j1) * g.n() + j2];
    }
  }
  return ScalarField::from_spectral(g, std::move(r));
}

// Partial derivative along axis (0 -> x1, 1 -> x2), spectral i*k multiplier.
inline ScalarField deriv(const ScalarField& f, int axis) {
  const GridSpec& g = f.grid();
  const CplxArray& c = f.spec();
  CplxArray r(c.size());
  for (int j1 = 0; j1 < g.n(); ++j1) {
    const double k1 = g.k_deriv(j1);
    for (int j2 = 0; j2 < g.n(); ++j2) {
      const double k2 = g.k_deriv(j2);
      const double k = axis == 0 ? k1 : k2;
      const cplx& v = c[static_cast<std::size_t>(j1) * g.n() + j2];
      // i*k*v without forming a complex temporary
      r[static_cast<std::size_t>(j1) * g.n() + j2] = cplx(-k * v.imag(), k * v.real());
    }
  }
  return ScalarField::from_spectral(g, std::move(r));
}

inline VectorField grad(const ScalarField& f) { return VectorField(deriv(f, 0), deriv(f, 1)); }

inline ScalarField div(const VectorField& v) {
  require_same_grid(v.u1.grid(), v.u2.grid(), "div");
  return deriv(v.u1, 0) + deriv(v.u2, 1);
}

// curl = d1 u2 - d2 u1
inline ScalarField curl(const VectorField& v) {
  require_same_grid(v.u1.grid(), v.u2.grid(), "curl");
  return deriv(v.u2, 0) - deriv(v.u1, 1);
}

// perp: (u1, u2) -> (-u2, u1), a pointwise rotation by +pi/2
inline VectorField perp(const VectorField& v) { return VectorField(-1.0 * v.u2, v.u1); }

inline ScalarField laplacian(const ScalarField& f) {
  return fourier_multiplier(f, [](double k1, double k2) { return -(k1 * k1 + k2 * k2); });
}

// Zero every mode with max(|k1|,|k2|) above the grid's dealias cutoff.
inline ScalarField dealias(const ScalarField& f) {
  const GridSpec& g = f.grid();
  const CplxArray& c = f.spec();
  const double cut = g.dealias_cutoff();
  CplxArray r(c.size());
  for (int j1 = 0; j1 < g.n(); ++j1) {
    const double a1 = std::abs(g.k(j1));
    for (int j2 = 0; j2 < g.n(); ++j2) {
      const double a2 = std::abs(g.k(j2));
      const std::size_t i = static_cast<std::size_t>(j1) * g.n() + j2;
      r[i] = (std::max(a1, a2) > cut) ? cplx(0.0, 0.0) : c[i];
    }
  }
  return ScalarField::from_spectral(g, std::move(r));
}

inline VectorField dealias(const VectorField& v) {
  return VectorField(dealias(v.u1), dealias(v.u2));
}

// Physical-space product, optionally dealiased afterwards.
inline ScalarField pointwise_product(const ScalarField& f, const ScalarField& g,
                                     bool dealiased = false) {
  require_same_grid(f.grid(), g.grid(), "pointwise_product");
  const RealArray &a = f.phys(), &b = g.phys();
  RealArray r(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) r[i] = a[i] * b[i];
  ScalarField out = ScalarField::from_physical(f.grid(), std::move(r));
  return dealiased ? dealias(out) : out;
}

// L2 inner product via quadrature, h^2 * sum f*g.
inline double inner(const ScalarField& f, const ScalarField& g) {
  require_same_grid(f.grid(), g.grid(), "inner");
  const RealArray &a = f.phys(), &b = g.phys();
  long double s = 0.0L;
  for (std::size_t i = 0; i < a.size(); ++i)
    s += static_cast<long double>(a[i]) * b[i];
  const double h = f.grid().h();
  return static_cast<double>(s) * h * h;
}

// Largest departure from conjugate symmetry, max_k |c(k) - conj(c(-k))|.
// Real fields should keep this at rounding level through every operation.
inline double conjugate_symmetry_defect(const ScalarField& f) {
  const GridSpec& g = f.grid();
  const CplxArray& c = f.spec();
  const int n = g.n();
  double worst = 0.0;
  for (int j1 = 0; j1 < n; ++j1) {
    const int i1 = (n - j1) % n;
    for (int j2 = 0; j2 < n; ++j2) {
      const int i2 = (n - j2) % n;
      const cplx d = c[static_cast<std::size_t>(j1) * n + j2] -
                     std::conj(c[static_cast<std::size_t>(i1) * n + i2]);
      worst = std::max(worst, std::abs(d));
    }
  }
  return worst;
}

// Smallest radius (around the box center) containing every sample with
// |value| >= threshold; 0 when the field is below threshold everywhere.
inline double support_radius(const ScalarField& f, double threshold = 1e-10) {
  const GridSpec& g = f.grid();
  const RealArray& v = f.phys();
  double r = 0.0;
  for (int j1 = 0; j1 < g.n(); ++j1) {
    const double d1 = g.x(j1) - g.center();
    for (int j2 = 0; j2 < g.n(); ++j2) {
      if (std::abs(v[static_cast<std::size_t>(j1) * g.n() + j2]) >= threshold) {
        const double d2 = g.x(j2) - g.center();
        r = std::max(r, std::sqrt(d1 * d1 + d2 * d2));
      }
    }
  }
  return r;
}

}  // namespace rsw
