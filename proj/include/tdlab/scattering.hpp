#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "tdlab/common.hpp"
#include "tdlab/io.hpp"
#include "tdlab/spectral.hpp"

namespace tdlab {

/// Short-range potential. |V(x)|⟨x⟩^κ is checked on the lattice at
/// construction of a setup.
struct Potential {
  enum class Kind { gaussian_bump, compact_bump, custom };

  Kind kind = Kind::gaussian_bump;
  int dim = 1;
  double amplitude = 0.0;
  double decay_exponent = 6.0;  // κ
  std::vector<double> matrix;   // M, row-major d×d (gaussian_bump)
  double radius = 1.0;          // support radius (compact_bump)
  std::function<double(const Vec&)> eval;

  /// A·exp(−|Mx|²).
  static Potential gaussian_bump(int d, double A, std::vector<double> M, double kappa = 6.0) {
    require(d == 1 || d == 2, ErrorCode::InvalidArgument, "potential dimension must be 1 or 2");
    require(M.size() == size_t(d * d), ErrorCode::InvalidArgument, "shape matrix must be d×d");
    Potential p;
    p.kind = Kind::gaussian_bump;
    p.dim = d;
    p.amplitude = A;
    p.decay_exponent = kappa;
    p.matrix = M;
    p.eval = [d, A, M](const Vec& x) {
      double s = 0;
      for (int i = 0; i < d; ++i) {
        double y = 0;
        for (int j = 0; j < d; ++j) y += M[i * d + j] * x[j];
        s += y * y;
      }
      return A * std::exp(-s);
    };
    return p;
  }

  /// A·exp(1 − 1/(1 − |x|²/R²)) inside the ball of radius R, 0 outside.
  static Potential compact_bump(int d, double A, double R, double kappa = 6.0) {
    require(R > 0, ErrorCode::InvalidArgument, "bump radius must be positive");
    Potential p;
    p.kind = Kind::compact_bump;
    p.dim = d;
    p.amplitude = A;
    p.decay_exponent = kappa;
    p.radius = R;
    p.eval = [A, R](const Vec& x) {
      double s = x.norm2() / (R * R);
      return s < 1 ? A * std::exp(1 - 1 / (1 - s)) : 0.0;
    };
    return p;
  }

  static Potential custom(int d, std::function<double(const Vec&)> f, double A, double kappa) {
    require(static_cast<bool>(f), ErrorCode::InvalidArgument, "custom potential needs a function");
    Potential p;
    p.kind = Kind::custom;
    p.dim = d;
    p.amplitude = A;
    p.decay_exponent = kappa;
    p.eval = std::move(f);
    return p;
  }

  static Potential zero(int d) { return gaussian_bump(d, 0.0, d == 1 ? std::vector<double>{1.0} : std::vector<double>{1, 0, 0, 1}); }

  bool is_zero() const { return amplitude == 0.0; }

  std::vector<double> table(const Grid& g) const {
    std::vector<double> t(g.size());
    for (size_t i = 0; i < t.size(); ++i) t[i] = eval(g.point(i));
    return t;
  }

  /// Requires κ > 4 and |V|⟨x⟩^κ on the outer half of the box to stay below
  /// its maximum over the inner half (a lattice proxy for the decay bound).
  void validate(const Grid& g) const {
    require(dim == g.dim, ErrorCode::InvalidArgument, "potential and grid dimensions differ");
    require(decay_exponent > 4, ErrorCode::InvalidArgument, "decay exponent must exceed 4");
    require(static_cast<bool>(eval), ErrorCode::InvalidArgument, "potential has no evaluator");
    double inner = 0, outer = 0;
    for (size_t i = 0; i < g.size(); ++i) {
      Vec x = g.point(i);
      double v = std::abs(eval(x));
      require(std::isfinite(v), ErrorCode::InvalidArgument, "potential is not finite on the grid");
      double w = v * std::pow(jbracket(x), decay_exponent);
      double r = 0;
      for (int j = 0; j < x.dim; ++j) r = std::max(r, std::abs(x[j]));
      (r < 0.5 * g.L ? inner : outer) = std::max(r < 0.5 * g.L ? inner : outer, w);
    }
    require(outer <= inner * (1 + 1e-12) || outer == 0.0, ErrorCode::InvalidArgument,
            "potential does not decay like <x>^-kappa on the grid");
  }
};

/// Everything needed to propagate and scatter on one grid. Immutable after
/// construction.
struct ScatteringSetup {
  Grid grid;
  Potential potential;
  double dt = 0.0;       // 0 selects 0.25·h²
  double horizon = 20.0; // T_asym
  EnergyWindow window;
  double edge_tol = 1e-8;

  ScatteringSetup(Grid g, Potential v, double step, double T, EnergyWindow w)
      : grid(g), potential(std::move(v)), dt(step), horizon(T), window(w) {
    if (dt <= 0) dt = 0.25 * grid.h() * grid.h();
    validate();
    vtab_ = potential.table(grid);
    ktab_ = kinetic_table(grid);
  }

  void validate() const {
    grid.validate();
    window.validate();
    potential.validate(grid);
    require(horizon > 0, ErrorCode::InvalidArgument, "horizon must be positive");
    require(group_velocity() * horizon < 0.8 * grid.L, ErrorCode::InvalidArgument,
            "packets would wrap around before reaching the asymptotic regime");
  }

  double group_velocity() const { return std::sqrt(2 * window.e_max); }
  const std::vector<double>& potential_table() const { return vtab_; }
  const std::vector<double>& kinetic() const { return ktab_; }

  ScatteringSetup with_horizon(double T) const {
    ScatteringSetup s = *this;
    s.horizon = T;
    s.validate();
    return s;
  }

 private:
  std::vector<double> vtab_, ktab_;
};

/// Applies V as a position multiplier.
inline WaveFunction v_apply(const ScatteringSetup& s, const WaveFunction& psi) {
  return mul(s.potential_table(), psi);
}

/// H = H₀ + V.
inline WaveFunction h_apply(const ScatteringSetup& s, const WaveFunction& psi) {
  return h0_apply(psi) + v_apply(s, psi);
}

/// e^{−itH₀} (full = false) or Strang-split e^{−itH} (full = true). The
/// boundary policy is checked every 64 steps and at the end.
inline WaveFunction propagate(const ScatteringSetup& s, WaveFunction psi, double t, bool full,
                              Diagnostics* diag = nullptr) {
  require(psi.grid == s.grid, ErrorCode::InvalidArgument, "state lives on a different grid");
  auto check = [&](const WaveFunction& w) {
    double e = edge_fraction(w);
    require(e <= s.edge_tol, ErrorCode::WraparoundDetected,
            "edge amplitude " + fmt17(e) + " during propagation");
  };
  if (t == 0.0) return psi;
  if (!full) {
    psi = free_evolve(psi, t);
    check(psi);
    return psi;
  }
  const double norm0 = psi.norm();
  const long n = std::max(1L, static_cast<long>(std::ceil(std::abs(t) / s.dt - 1e-9)));
  const double h = t / static_cast<double>(n);
  const size_t sz = s.grid.size();
  std::vector<cplx> half(sz), whole(sz), kin(sz);
  for (size_t i = 0; i < sz; ++i) {
    half[i] = std::polar(1.0, -0.5 * h * s.potential_table()[i]);
    whole[i] = half[i] * half[i];
    kin[i] = std::polar(1.0, -h * s.kinetic()[i]);
  }
  for (size_t i = 0; i < sz; ++i) psi.v[i] *= half[i];
  for (long step = 0; step < n; ++step) {
    fft_forward(s.grid.dim, s.grid.n, psi.v);
    for (size_t i = 0; i < sz; ++i) psi.v[i] *= kin[i];
    fft_backward(s.grid.dim, s.grid.n, psi.v);
    const auto& m = step + 1 < n ? whole : half;
    for (size_t i = 0; i < sz; ++i) psi.v[i] *= m[i];
    if (step % 64 == 63) check(psi);
  }
  check(psi);
  if (diag && std::abs(psi.norm() - norm0) > 1e-10 * norm0)
    diag->warn(ErrorCode::NotConverged, "split-step norm drift " + fmt17(psi.norm() - norm0));
  return psi;
}

namespace detail {

inline WaveFunction wave_operator_at(const ScatteringSetup& s, const WaveFunction& psi, int sign,
                                     double T) {
  // W_∓ψ ≈ e^{∓iTH} e^{±iTH₀} ψ
  WaveFunction out = propagate(s, psi, sign < 0 ? -T : T, false);
  return propagate(s, std::move(out), sign < 0 ? T : -T, true);
}

inline WaveFunction wave_operator_adjoint_at(const ScatteringSetup& s, const WaveFunction& psi,
                                             int sign, double T) {
  WaveFunction out = propagate(s, psi, sign < 0 ? -T : T, true);
  return propagate(s, std::move(out), sign < 0 ? T : -T, false);
}

}  // namespace detail

/// W_± at the setup horizon. With verify, the horizon is doubled once and the
/// two results must agree to 1e−5 in norm.
inline WaveFunction wave_operator(const ScatteringSetup& s, const WaveFunction& psi, int sign,
                                  bool verify = true) {
  require(sign == 1 || sign == -1, ErrorCode::InvalidArgument, "sign must be ±1");
  WaveFunction out = detail::wave_operator_at(s, psi, sign, s.horizon);
  if (verify && !s.potential.is_zero()) {
    ScatteringSetup big = s;
    big.horizon = 2 * s.horizon;
    WaveFunction ref = detail::wave_operator_at(big, psi, sign, big.horizon);
    double d = (ref - out).norm();
    require(d <= 1e-5 * std::max(1.0, psi.norm()), ErrorCode::NotConverged,
            "doubling the horizon moves W by " + fmt17(d));
  }
  return out;
}

/// W_±^*.
inline WaveFunction wave_operator_adjoint(const ScatteringSetup& s, const WaveFunction& psi,
                                          int sign) {
  return detail::wave_operator_adjoint_at(s, psi, sign, s.horizon);
}

/// S = W_+^* W_−.
inline WaveFunction s_apply(const ScatteringSetup& s, const WaveFunction& psi, bool verify = true) {
  WaveFunction w = wave_operator(s, psi, -1, verify);
  return wave_operator_adjoint(s, w, +1);
}

/// S^* = W_−^* W_+.
inline WaveFunction s_adjoint_apply(const ScatteringSetup& s, const WaveFunction& psi) {
  WaveFunction w = detail::wave_operator_at(s, psi, +1, s.horizon);
  return wave_operator_adjoint(s, w, -1);
}

struct CookDiagnostic {
  std::vector<double> times;
  std::vector<double> integrand_norms;  // ‖V e^{−itH₀}ψ‖
  double tail_exponent = 0.0;           // log-log slope over the tail
  bool superpolynomial = false;         // slope keeps steepening
};

/// Samples ‖V e^{−itH₀}ψ‖ and fits a power law to the tail (|t| in the upper
/// half of the sampled range, values above 1e−14 of the peak).
inline CookDiagnostic cook_diagnostic(const ScatteringSetup& s, const WaveFunction& psi,
                                      const std::vector<double>& times) {
  CookDiagnostic c;
  c.times = times;
  for (double t : times) c.integrand_norms.push_back(v_apply(s, free_evolve(psi, t)).norm());
  double peak = 0, tmax = 0;
  for (size_t i = 0; i < times.size(); ++i) {
    peak = std::max(peak, c.integrand_norms[i]);
    tmax = std::max(tmax, std::abs(times[i]));
  }
  if (peak == 0.0) return c;
  std::vector<std::pair<double, double>> pts;
  for (size_t i = 0; i < times.size(); ++i) {
    double a = std::abs(times[i]), v = c.integrand_norms[i];
    if (a >= 0.5 * tmax && a > 0 && v > 1e-14 * peak) pts.emplace_back(std::log(a), std::log(v));
  }
  auto slope = [](const std::vector<std::pair<double, double>>& p) {
    double n = static_cast<double>(p.size()), sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (auto [x, y] : p) { sx += x; sy += y; sxx += x * x; sxy += x * y; }
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
  };
  if (pts.size() < 3) {
    // everything beyond half range is below roundoff
    c.tail_exponent = -std::numeric_limits<double>::infinity();
    c.superpolynomial = true;
    return c;
  }
  std::sort(pts.begin(), pts.end());
  c.tail_exponent = slope(pts);
  if (pts.size() >= 6) {
    size_t h = pts.size() / 2;
    std::vector<std::pair<double, double>> a(pts.begin(), pts.begin() + h), b(pts.begin() + h, pts.end());
    c.superpolynomial = slope(b) < slope(a) - 0.5;
  }
  return c;
}

/// Grows T by 1.5× from the setup horizon until ‖V e^{∓iTH₀}ψ‖ falls below
/// rel·peak on both sides.
inline double select_horizon(const ScatteringSetup& s, const WaveFunction& psi, double rel = 1e-8,
                             int max_rounds = 20) {
  double peak = 0;
  for (int i = -40; i <= 40; ++i) {
    double t = s.horizon * i / 40.0;
    peak = std::max(peak, v_apply(s, free_evolve(psi, t)).norm());
  }
  if (peak == 0.0) return s.horizon;
  double T = s.horizon;
  for (int r = 0; r < max_rounds; ++r) {
    double a = v_apply(s, free_evolve(psi, T)).norm();
    double b = v_apply(s, free_evolve(psi, -T)).norm();
    if (std::max(a, b) < rel * peak) return T;
    T *= 1.5;
  }
  throw Error(ErrorCode::NotConverged, "no horizon found with a decayed Cook integrand");
}

/// Out-of-window mass left inside the interaction region after e^{−iTH}.
/// Scattering states leave the region while bound states stay, so a value
/// that does not decay with T signals point spectrum reached by the window
/// state. The region is where |V| exceeds 1e−12 of its maximum.
inline double bound_state_leak(const ScatteringSetup& s, const WaveFunction& psi, double T) {
  const auto& v = s.potential_table();
  double vmax = 0;
  for (double x : v) vmax = std::max(vmax, std::abs(x));
  if (vmax == 0.0) return 0.0;
  std::vector<double> outside = window_table(s.grid, s.window);
  for (double& x : outside) x = 1 - x;
  WaveFunction late = apply_table(propagate(s, psi, T, true), outside);
  for (size_t i = 0; i < v.size(); ++i)
    if (std::abs(v[i]) <= 1e-12 * vmax) late.v[i] = 0;
  return late.norm() / psi.norm();
}

}  // namespace tdlab
