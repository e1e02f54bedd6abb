#pragma once

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "tdlab/common.hpp"
#include "tdlab/dilation.hpp"

namespace tdlab {

/// Uniform periodic grid on [−L, L)^d, d ∈ {1, 2}.
struct Grid {
  int dim = 1;
  int n = 256;
  double L = 10.0;

  Grid() = default;
  Grid(int d, int points, double half_width) : dim(d), n(points), L(half_width) { validate(); }

  void validate() const {
    require(dim == 1 || dim == 2, ErrorCode::InvalidArgument, "grid dimension must be 1 or 2");
    require(n >= 4 && (n & (n - 1)) == 0, ErrorCode::InvalidArgument,
            "points per axis must be a power of two");
    require(L > 0, ErrorCode::InvalidArgument, "box half width must be positive");
  }
  double h() const { return 2 * L / n; }
  size_t size() const { return dim == 1 ? size_t(n) : size_t(n) * size_t(n); }
  double cell() const { return std::pow(h(), dim); }
  double x(int i) const { return -L + i * h(); }
  /// Dual lattice in FFT order, spanning [−π/h, π/h).
  double k(int m) const { return (m < n / 2 ? m : m - n) * pi / L; }
  double k_max() const { return pi / h(); }

  Vec point(size_t idx) const {
    if (dim == 1) return Vec{x(int(idx))};
    return Vec{x(int(idx / n)), x(int(idx % n))};
  }
  Vec momentum(size_t idx) const {
    if (dim == 1) return Vec{k(int(idx))};
    return Vec{k(int(idx / n)), k(int(idx % n))};
  }
  bool operator==(const Grid& o) const { return dim == o.dim && n == o.n && L == o.L; }
  bool operator!=(const Grid& o) const { return !(*this == o); }
};

/// Complex amplitudes on a grid. Treated as a value: operations return new
/// instances.
struct WaveFunction {
  Grid grid;
  std::vector<cplx> v;

  WaveFunction() = default;
  explicit WaveFunction(const Grid& g) : grid(g), v(g.size(), cplx(0, 0)) {}
  WaveFunction(const Grid& g, std::vector<cplx> values) : grid(g), v(std::move(values)) {
    require(v.size() == g.size(), ErrorCode::InvalidArgument, "value count does not match grid");
  }

  double norm2() const {
    double s = 0;
    for (const cplx& c : v) s += std::norm(c);
    return s * grid.cell();
  }
  double norm() const { return std::sqrt(norm2()); }

  WaveFunction& operator+=(const WaveFunction& o) { for (size_t i = 0; i < v.size(); ++i) v[i] += o.v[i]; return *this; }
  WaveFunction& operator-=(const WaveFunction& o) { for (size_t i = 0; i < v.size(); ++i) v[i] -= o.v[i]; return *this; }
  WaveFunction& operator*=(cplx s) { for (auto& c : v) c *= s; return *this; }
};

inline WaveFunction operator+(WaveFunction a, const WaveFunction& b) { return a += b; }
inline WaveFunction operator-(WaveFunction a, const WaveFunction& b) { return a -= b; }
inline WaveFunction operator*(cplx s, WaveFunction a) { return a *= s; }

/// ⟨a, b⟩ = h^d Σ conj(a) b.
inline cplx inner(const WaveFunction& a, const WaveFunction& b) {
  cplx s = 0;
  for (size_t i = 0; i < a.v.size(); ++i) s += std::conj(a.v[i]) * b.v[i];
  return s * a.grid.cell();
}

inline WaveFunction normalized(WaveFunction a) {
  double n = a.norm();
  require(n > 0, ErrorCode::InvalidArgument, "cannot normalize the zero state");
  return (1.0 / n) * std::move(a);
}

inline WaveFunction sample(const Grid& g, const std::function<cplx(const Vec&)>& f) {
  WaveFunction w(g);
  for (size_t i = 0; i < g.size(); ++i) w.v[i] = f(g.point(i));
  return w;
}

/// exp(−|x−x0|²/(4σ²) + i p0·x), normalized; momentum spread is 1/(2σ).
inline WaveFunction gaussian_packet(const Grid& g, const Vec& x0, const Vec& p0, double sigma_x) {
  return normalized(sample(g, [&](const Vec& x) {
    Vec y = x - x0;
    return std::exp(cplx(-y.norm2() / (4 * sigma_x * sigma_x), dot(p0, x)));
  }));
}

// ---------------------------------------------------------------------------
// FFT

namespace detail {

struct PlanCache {
  std::mutex mu;
  std::map<std::tuple<int, int, int>, fftw_plan> plans;

  fftw_plan get(int dim, int n, int sign) {
    std::lock_guard<std::mutex> lock(mu);
    auto key = std::make_tuple(dim, n, sign);
    auto it = plans.find(key);
    if (it != plans.end()) return it->second;
    size_t sz = dim == 1 ? size_t(n) : size_t(n) * n;
    fftw_complex* buf = fftw_alloc_complex(sz);
    unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
    fftw_plan p = dim == 1 ? fftw_plan_dft_1d(n, buf, buf, sign, flags)
                           : fftw_plan_dft_2d(n, n, buf, buf, sign, flags);
    fftw_free(buf);
    plans.emplace(key, p);
    return p;
  }
};

inline PlanCache& plan_cache() {
  static PlanCache c;
  return c;
}

}  // namespace detail

/// In-place unnormalized forward DFT (e^{−2πi jm/n}).
inline void fft_forward(int dim, int n, std::vector<cplx>& a) {
  fftw_plan p = detail::plan_cache().get(dim, n, FFTW_FORWARD);
  auto* d = reinterpret_cast<fftw_complex*>(a.data());
  fftw_execute_dft(p, d, d);
}

/// In-place inverse DFT including the 1/size normalization.
inline void fft_backward(int dim, int n, std::vector<cplx>& a) {
  fftw_plan p = detail::plan_cache().get(dim, n, FFTW_BACKWARD);
  auto* d = reinterpret_cast<fftw_complex*>(a.data());
  fftw_execute_dft(p, d, d);
  double s = 1.0 / static_cast<double>(a.size());
  for (auto& c : a) c *= s;
}

inline std::vector<cplx> to_momentum(const WaveFunction& w) {
  std::vector<cplx> a = w.v;
  fft_forward(w.grid.dim, w.grid.n, a);
  return a;
}

inline WaveFunction from_momentum(const Grid& g, std::vector<cplx> a) {
  fft_backward(g.dim, g.n, a);
  return WaveFunction(g, std::move(a));
}

/// Band-limited interpolation onto a grid with factor× more points per axis.
inline WaveFunction upsample(const WaveFunction& w, int factor) {
  require(factor >= 1, ErrorCode::InvalidArgument, "upsampling factor must be >= 1");
  if (factor == 1) return w;
  const Grid& g = w.grid;
  Grid f(g.dim, g.n * factor, g.L);
  auto a = to_momentum(w);
  const int n = g.n, N = f.n;
  auto map = [&](int m) { return m < n / 2 ? m : m + N - n; };
  std::vector<cplx> b(f.size(), cplx(0, 0));
  const double scale = std::pow(double(factor), g.dim);
  if (g.dim == 1) {
    for (int m = 0; m < n; ++m) b[map(m)] = scale * a[m];
  } else {
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) b[size_t(map(i)) * N + map(j)] = scale * a[size_t(i) * n + j];
  }
  return from_momentum(f, std::move(b));
}

/// Σ|ψ̂|² with the normalization that matches the position-space norm.
inline double momentum_norm2(const Grid& g, const std::vector<cplx>& a) {
  double s = 0;
  for (const cplx& c : a) s += std::norm(c);
  return s * g.cell() / static_cast<double>(g.size());
}

/// Momentum-space multiplier given as a table in FFT order.
inline WaveFunction apply_table(const WaveFunction& w, const std::vector<cplx>& m) {
  auto a = to_momentum(w);
  for (size_t i = 0; i < a.size(); ++i) a[i] *= m[i];
  return from_momentum(w.grid, std::move(a));
}
inline WaveFunction apply_table(const WaveFunction& w, const std::vector<double>& m) {
  auto a = to_momentum(w);
  for (size_t i = 0; i < a.size(); ++i) a[i] *= m[i];
  return from_momentum(w.grid, std::move(a));
}

inline std::vector<double> momentum_table(const Grid& g, const std::function<double(const Vec&)>& f) {
  std::vector<double> t(g.size());
  for (size_t i = 0; i < t.size(); ++i) t[i] = f(g.momentum(i));
  return t;
}

inline WaveFunction multiplier_apply(const Grid& g, const std::function<cplx(const Vec&)>& m,
                                     const WaveFunction& psi) {
  require(psi.grid == g, ErrorCode::InvalidArgument, "state lives on a different grid");
  std::vector<cplx> t(g.size());
  for (size_t i = 0; i < t.size(); ++i) t[i] = m(g.momentum(i));
  return apply_table(psi, t);
}

/// Kinetic energy table k²/2.
inline std::vector<double> kinetic_table(const Grid& g) {
  return momentum_table(g, [](const Vec& k) { return 0.5 * k.norm2(); });
}

inline WaveFunction h0_apply(const WaveFunction& psi) {
  return apply_table(psi, kinetic_table(psi.grid));
}

/// Position multiplication by a real table.
inline WaveFunction mul(const std::vector<double>& f, WaveFunction w) {
  for (size_t i = 0; i < w.v.size(); ++i) w.v[i] *= f[i];
  return w;
}

inline std::vector<double> coordinate_table(const Grid& g, int axis) {
  std::vector<double> t(g.size());
  for (size_t i = 0; i < t.size(); ++i) t[i] = g.point(i)[axis];
  return t;
}

/// Largest |ψ| in the outer 10% of the box relative to the peak.
inline double edge_fraction(const WaveFunction& w) {
  double peak = 0, edge = 0;
  const double lim = 0.9 * w.grid.L;
  for (size_t i = 0; i < w.v.size(); ++i) {
    double a = std::abs(w.v[i]);
    peak = std::max(peak, a);
    Vec x = w.grid.point(i);
    bool outer = false;
    for (int j = 0; j < x.dim; ++j) outer = outer || std::abs(x[j]) > lim;
    if (outer) edge = std::max(edge, a);
  }
  return peak > 0 ? edge / peak : 0.0;
}

inline void check_boundary(const WaveFunction& w, Diagnostics* diag, const std::string& what,
                           double tol = 1e-8) {
  double e = edge_fraction(w);
  if (e > tol) warn(diag, ErrorCode::BoundaryContamination, what + ": edge amplitude " + fmt17(e));
}

// ---------------------------------------------------------------------------
// energy window

/// Smooth cutoff: 0 below e_min, 1 on [e_min + m, e_max − m], 0 above e_max,
/// with m = margin·(e_max − e_min). Transitions use the C^∞ step
/// s ↦ e^{−1/s} / (e^{−1/s} + e^{−1/(1−s)}).
struct EnergyWindow {
  double e_min = 0.5, e_max = 4.0, margin = 0.15;

  void validate() const {
    require(e_min > 0 && e_max > e_min, ErrorCode::InvalidArgument, "need 0 < e_min < e_max");
    require(margin > 0 && margin < 0.5, ErrorCode::InvalidArgument, "margin must be in (0, 0.5)");
  }

  static double smooth_step(double s) {
    if (s <= 0) return 0;
    if (s >= 1) return 1;
    double a = std::exp(-1 / s), b = std::exp(-1 / (1 - s));
    return a / (a + b);
  }
  double width() const { return margin * (e_max - e_min); }
  double operator()(double e) const {
    double m = width();
    return smooth_step((e - e_min) / m) * smooth_step((e_max - e) / m);
  }
  bool supports(double e) const { return e > e_min && e < e_max; }
};

inline std::vector<double> window_table(const Grid& g, const EnergyWindow& w) {
  return momentum_table(g, [&](const Vec& k) { return w(0.5 * k.norm2()); });
}

inline WaveFunction window_filter(const EnergyWindow& w, const WaveFunction& psi) {
  w.validate();
  WaveFunction out = apply_table(psi, window_table(psi.grid, w));
  double n0 = psi.norm();
  require(out.norm() >= 1e-8 * n0 && n0 > 0, ErrorCode::EmptyWindow,
          "state has no mass inside the energy window");
  return out;
}

/// Fraction of ‖ψ̂‖ lying outside the open window support.
inline double mass_outside_window(const EnergyWindow& w, const WaveFunction& psi) {
  auto a = to_momentum(psi);
  double in = 0, out = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    double e = 0.5 * psi.grid.momentum(i).norm2();
    (w.supports(e) ? in : out) += std::norm(a[i]);
  }
  return in + out > 0 ? std::sqrt(out / (in + out)) : 0.0;
}

/// f(H₀)^p restricted to the window support. p ∈ {1, −1/2, 1/2}.
inline WaveFunction f_h0_power(const Symbol& f, double power, const EnergyWindow& w,
                               const WaveFunction& psi) {
  require(power == 1.0 || power == -0.5 || power == 0.5, ErrorCode::InvalidArgument,
          "power must be 1, -1/2 or 1/2");
  w.validate();
  require(mass_outside_window(w, psi) <= 1e-8, ErrorCode::WindowViolation,
          "state carries mass outside the energy window");
  auto t = momentum_table(psi.grid, [&](const Vec& k) {
    double e = 0.5 * k.norm2();
    return w.supports(e) ? std::pow(f(e), power) : 0.0;
  });
  return apply_table(psi, t);
}

// ---------------------------------------------------------------------------
// D_Σ = ½ [F(P)·Q + Q·F(P)]

/// Momentum tables F_j(k) for a field on a grid. The lattice origin gets the
/// continuous extension F(0) = 0.
struct FieldTables {
  Grid grid;
  std::vector<std::vector<double>> F;  // one table per axis

  FieldTables(const VectorField& field, const Grid& g) : grid(g) {
    require(field.dim() == g.dim, ErrorCode::InvalidArgument, "field and grid dimensions differ");
    F.assign(g.dim, std::vector<double>(g.size()));
    for (size_t i = 0; i < g.size(); ++i) {
      Vec k = g.momentum(i);
      Vec f = k.is_zero() ? Vec(g.dim) : field.eval(k);
      for (int j = 0; j < g.dim; ++j) F[j][i] = f[j];
    }
  }
};

class DilationOperator {
 public:
  DilationOperator(const VectorField& field, const Grid& g)
      : field_(field), tables_(field, g) {
    for (int j = 0; j < g.dim; ++j) Q_.push_back(coordinate_table(g, j));
  }

  const VectorField& field() const { return field_; }
  const Grid& grid() const { return tables_.grid; }

  WaveFunction apply(const WaveFunction& psi, Diagnostics* diag = nullptr) const {
    require(psi.grid == grid(), ErrorCode::InvalidArgument, "state lives on a different grid");
    check_boundary(psi, diag, "D_sigma input");
    const int d = grid().dim;
    WaveFunction out(grid());
    for (int j = 0; j < d; ++j) {
      out += apply_table(mul(Q_[j], psi), tables_.F[j]);
      out += mul(Q_[j], apply_table(psi, tables_.F[j]));
    }
    out *= 0.5;
    return out;
  }

 private:
  VectorField field_;
  FieldTables tables_;
  std::vector<std::vector<double>> Q_;
};

inline WaveFunction d_sigma_apply(const VectorField& field, const WaveFunction& psi,
                                  Diagnostics* diag = nullptr) {
  return DilationOperator(field, psi.grid).apply(psi, diag);
}

/// f(H₀) as a multiplier on the whole lattice.
inline WaveFunction f_h0_apply(const Symbol& f, const WaveFunction& psi) {
  return apply_table(psi, momentum_table(psi.grid, [&](const Vec& k) { return f(0.5 * k.norm2()); }));
}

/// e^{−itH₀}.
inline WaveFunction free_evolve(const WaveFunction& psi, double t) {
  std::vector<cplx> m(psi.grid.size());
  for (size_t i = 0; i < m.size(); ++i)
    m[i] = std::polar(1.0, -t * 0.5 * psi.grid.momentum(i).norm2());
  return apply_table(psi, m);
}

/// ‖e^{−itH₀} D e^{itH₀}ψ − Dψ + t f(H₀)ψ‖.
inline double group_com_residual(const VectorField& field, double t, const WaveFunction& psi,
                                 Diagnostics* diag = nullptr) {
  DilationOperator D(field, psi.grid);
  WaveFunction lhs = free_evolve(D.apply(free_evolve(psi, -t), diag), t);
  WaveFunction r = lhs - D.apply(psi, diag);
  r += t * f_h0_apply(field.symbol(), psi);
  return r.norm();
}

/// ‖i[H₀, D]ψ − f(H₀)ψ‖.
inline double gen_com_residual(const VectorField& field, const WaveFunction& psi,
                               Diagnostics* diag = nullptr) {
  DilationOperator D(field, psi.grid);
  WaveFunction c = h0_apply(D.apply(psi, diag)) - D.apply(h0_apply(psi), diag);
  c *= cplx(0, 1);
  return (c - f_h0_apply(field.symbol(), psi)).norm();
}

// ---------------------------------------------------------------------------
// W_t through the flow

struct GroupOptions {
  int oversample = 4;       // zero-padding factor for the momentum interpolant
  int order = 6;            // Lagrange stencil width per axis
  double flow_dt = 1e-3;    // RK4 step for custom symbols
  double angular_accuracy = 0.01;  // RK4 step times max |ΔG| in the 2D angle table
  double support_tol = 1e-13;  // |ψ̂| below this (relative) counts as zero
};

namespace detail {

/// ψ̂ sampled on an oversampled momentum lattice, with local Lagrange
/// interpolation. Sample values are the centred transform h^d Σ ψ_j e^{−ik x_j}.
class MomentumInterpolant {
 public:
  MomentumInterpolant(const WaveFunction& psi, int oversample, int order)
      : g_(psi.grid), M_(psi.grid.n * oversample), order_(order) {
    require(order >= 2 && order % 2 == 0, ErrorCode::InvalidArgument, "stencil must be even");
    const int n = g_.n, d = g_.dim;
    const size_t sz = d == 1 ? size_t(M_) : size_t(M_) * M_;
    data_.assign(sz, cplx(0, 0));
    const int off = (M_ - n) / 2;  // padded box [−sL, sL) with the same spacing
    if (d == 1) {
      for (int i = 0; i < n; ++i) data_[off + i] = psi.v[i];
    } else {
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) data_[size_t(off + i) * M_ + off + j] = psi.v[size_t(i) * n + j];
    }
    fft_forward(d, M_, data_);
    dk_ = 2 * pi / (M_ * g_.h());
    const double Lp = 0.5 * M_ * g_.h();
    const double cell = g_.cell();
    // centred phase e^{ik·Lp} per axis
    std::vector<cplx> ph(M_);
    for (int m = 0; m < M_; ++m) ph[m] = std::polar(cell, (m < M_ / 2 ? m : m - M_) * dk_ * Lp);
    if (d == 1) {
      for (int m = 0; m < M_; ++m) data_[m] *= ph[m];
    } else {
      for (int a = 0; a < M_; ++a)
        for (int b = 0; b < M_; ++b) data_[size_t(a) * M_ + b] *= ph[a] * ph[b] / cell;
    }
  }

  double max_abs() const {
    double m = 0;
    for (const cplx& c : data_) m = std::max(m, std::abs(c));
    return m;
  }

  cplx operator()(const Vec& k) const {
    const int d = g_.dim;
    const int half = order_ / 2;
    int base[2];
    double w[2][16];
    for (int a = 0; a < d; ++a) {
      double s = k[a] / dk_;
      int i0 = static_cast<int>(std::floor(s)) - half + 1;
      base[a] = i0;
      for (int p = 0; p < order_; ++p) {
        double num = 1, den = 1;
        for (int q = 0; q < order_; ++q) {
          if (q == p) continue;
          num *= s - (i0 + q);
          den *= static_cast<double>(p - q);
        }
        w[a][p] = num / den;
      }
    }
    auto wrap = [&](int m) { m %= M_; return m < 0 ? m + M_ : m; };
    cplx acc = 0;
    if (d == 1) {
      for (int p = 0; p < order_; ++p) acc += w[0][p] * data_[wrap(base[0] + p)];
      return acc;
    }
    for (int p = 0; p < order_; ++p) {
      cplx row = 0;
      size_t r = size_t(wrap(base[0] + p)) * M_;
      for (int q = 0; q < order_; ++q) row += w[1][q] * data_[r + wrap(base[1] + q)];
      acc += w[0][p] * row;
    }
    return acc;
  }

 private:
  Grid g_;
  int M_;
  int order_;
  double dk_ = 0;
  std::vector<cplx> data_;
};

}  // namespace detail

/// (Ŵ_tψ)(k) = √η_t(k) ψ̂(ξ_t(k)).
inline WaveFunction w_group_apply(const VectorField& field, double t, const WaveFunction& psi,
                                  const GroupOptions& opt = {}) {
  const Grid& g = psi.grid;
  require(field.dim() == g.dim, ErrorCode::InvalidArgument, "field and grid dimensions differ");
  if (t == 0.0) return psi;
  detail::MomentumInterpolant interp(psi, opt.oversample, opt.order);

  // radial extent of supp ψ̂ from the lattice transform
  auto a = to_momentum(psi);
  double peak = 0;
  for (const cplx& c : a) peak = std::max(peak, std::abs(c));
  double u_lo = 1e300, u_hi = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    if (std::abs(a[i]) <= opt.support_tol * peak) continue;
    double u = g.momentum(i).norm2();
    u_lo = std::min(u_lo, u);
    u_hi = std::max(u_hi, u);
  }
  // pad by one lattice shell so the interpolant sees the whole tail
  double dk = pi / g.L;
  double r_lo = std::max(0.0, std::sqrt(u_lo) - 2 * dk), r_hi = std::sqrt(u_hi) + 2 * dk;
  // |ξ_t(k)|² ∈ [r_lo², r_hi²]  ⇔  |k|² ∈ [U_{−t}(r_lo²), U_{−t}(r_hi²)]
  const Symbol& f = field.symbol();
  double k_lo2 = flow_radius_sq(f, r_lo * r_lo, -t, opt.flow_dt);
  double k_hi2 = flow_radius_sq(f, r_hi * r_hi, -t, opt.flow_dt);
  const double kmax = g.k_max();
  require(k_hi2 < kmax * kmax, ErrorCode::InterpolationOutOfBand,
          "flowed support does not fit on the momentum lattice");

  // polar reduction: |ξ|² from the radial flow, the angle from a table
  std::vector<size_t> idx;
  std::vector<double> ut;
  for (size_t i = 0; i < g.size(); ++i) {
    double u = g.momentum(i).norm2();
    if (u < k_lo2 || u > k_hi2 || u == 0.0) continue;
    double v = radial_flow(f, u, t, opt.flow_dt);
    idx.push_back(i);
    ut.push_back(v);
  }
  const bool angular = g.dim == 2 && field.shape().tag() != ShapeFunction::Tag::ball;
  std::optional<AngularFlow> ang;
  if (angular) ang.emplace(field.shape(), opt.angular_accuracy);

  std::vector<cplx> out(g.size(), cplx(0, 0));
  const double Lc = g.L, cell = g.cell();
  for (size_t n = 0; n < idx.size(); ++n) {
    Vec k = g.momentum(idx[n]);
    double u0 = k.norm2(), u1 = ut[n];
    double ln_eta = std::log(f(0.5 * u1)) - std::log(f(0.5 * u0));
    Vec xi(g.dim);
    if (angular) {
      double th0 = std::atan2(k[1], k[0]);
      if (th0 < 0) th0 += 2 * pi;
      auto s = (*ang)(th0, 0.5 * std::log(u0 / u1));
      xi = Vec{std::sqrt(u1) * std::cos(s.theta), std::sqrt(u1) * std::sin(s.theta)};
      ln_eta += s.lap;
    } else {
      xi = k * std::sqrt(u1 / u0);
      ln_eta += 0.5 * (g.dim - 2) * std::log(u1 / u0);
    }
    for (int j = 0; j < g.dim; ++j)
      require(std::abs(xi[j]) < kmax, ErrorCode::InterpolationOutOfBand,
              "flowed momentum leaves the lattice band");
    cplx val = std::exp(0.5 * ln_eta) * interp(xi);
    // undo the centred phase to land in plain DFT convention
    double phase = 0;
    for (int j = 0; j < g.dim; ++j) phase += k[j] * Lc;
    out[idx[n]] = val * std::polar(1.0 / cell, -phase);
  }
  return from_momentum(g, std::move(out));
}

// ---------------------------------------------------------------------------
// snapshots: three LE float64 (dimension, points per axis, L), then re/im pairs

inline void write_snapshot(const std::string& path, const WaveFunction& w) {
  static_assert(sizeof(double) == 8);
  std::ofstream f(path, std::ios::binary);
  require(static_cast<bool>(f), ErrorCode::Io, "cannot open " + path);
  auto put = [&](double x) {
    uint64_t b;
    std::memcpy(&b, &x, 8);
    unsigned char c[8];
    for (int i = 0; i < 8; ++i) c[i] = static_cast<unsigned char>(b >> (8 * i));
    f.write(reinterpret_cast<const char*>(c), 8);
  };
  put(w.grid.dim);
  put(w.grid.n);
  put(w.grid.L);
  for (const cplx& c : w.v) {
    put(c.real());
    put(c.imag());
  }
  require(static_cast<bool>(f), ErrorCode::Io, "write failed: " + path);
}

inline WaveFunction read_snapshot(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  require(static_cast<bool>(f), ErrorCode::Io, "cannot open " + path);
  auto get = [&]() {
    unsigned char c[8];
    f.read(reinterpret_cast<char*>(c), 8);
    require(static_cast<bool>(f), ErrorCode::Io, "truncated snapshot " + path);
    uint64_t b = 0;
    for (int i = 0; i < 8; ++i) b |= uint64_t(c[i]) << (8 * i);
    double x;
    std::memcpy(&x, &b, 8);
    return x;
  };
  int d = static_cast<int>(get());
  int n = static_cast<int>(get());
  double L = get();
  Grid g(d, n, L);
  WaveFunction w(g);
  for (auto& c : w.v) {
    double re = get();
    c = cplx(re, get());
  }
  return w;
}

}  // namespace tdlab
