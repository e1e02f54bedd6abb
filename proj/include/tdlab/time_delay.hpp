#pragma once

#include <algorithm>
#include <cmath>
#include <future>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "tdlab/common.hpp"
#include "tdlab/geometry.hpp"
#include "tdlab/io.hpp"
#include "tdlab/scattering.hpp"
#include "tdlab/spectral.hpp"

namespace tdlab {

// ---------------------------------------------------------------------------
// sojourn times

struct SojournConfig {
  std::vector<double> radii;
  double time_extent = 40.0;  // T_max
  int time_samples = 1600;    // intervals on [−T_max, T_max], even
  int region_quadrature = 2;  // q×q subsampling of boundary cells
  int oversample = 1;         // masses summed on a grid refined by this factor

  void validate(const Grid& g, const DomainModel& dom) const {
    require(!radii.empty(), ErrorCode::InvalidArgument, "no radii");
    for (size_t i = 0; i < radii.size(); ++i) {
      require(radii[i] > 0, ErrorCode::InvalidArgument, "radii must be positive");
      require(i == 0 || radii[i] > radii[i - 1], ErrorCode::InvalidArgument, "radii must increase");
    }
    require(radii.back() * dom.bounding_radius < 0.8 * g.L, ErrorCode::InvalidArgument,
            "largest region does not fit inside 0.8 of the box");
    require(time_extent > 0, ErrorCode::InvalidArgument, "time extent must be positive");
    require(time_samples >= 2 && time_samples % 2 == 0, ErrorCode::InvalidArgument,
            "time samples must be even and positive");
    require(region_quadrature >= 1, ErrorCode::InvalidArgument, "region quadrature must be >= 1");
    require(oversample >= 1, ErrorCode::InvalidArgument, "oversampling factor must be >= 1");
  }

  double step() const { return 2 * time_extent / time_samples; }
};

/// Cell weights for Σ on the lattice: the indicator at the cell center, and
/// the q^d subsample average on cells whose neighbours disagree.
inline std::vector<double> region_mask(const Grid& g, const DomainModel& dom, int q = 2) {
  require(dom.dim == g.dim, ErrorCode::InvalidArgument, "domain and grid dimensions differ");
  const size_t sz = g.size();
  std::vector<char> in(sz);
  for (size_t i = 0; i < sz; ++i) in[i] = dom.contains(g.point(i));
  std::vector<double> m(sz);
  const int n = g.n;
  const double h = g.h();
  auto at = [&](int i, int j) { return g.dim == 1 ? size_t((i + n) % n) : size_t((i + n) % n) * n + size_t((j + n) % n); };
  for (size_t idx = 0; idx < sz; ++idx) {
    int i = g.dim == 1 ? int(idx) : int(idx / n), j = g.dim == 1 ? 0 : int(idx % n);
    bool edge = false;
    for (int di = -1; di <= 1 && !edge; ++di)
      for (int dj = (g.dim == 1 ? 0 : -1); dj <= (g.dim == 1 ? 0 : 1) && !edge; ++dj)
        edge = in[at(i + di, j + dj)] != in[idx];
    if (!edge || q == 1) {
      m[idx] = in[idx];
      continue;
    }
    Vec c = g.point(idx);
    int hits = 0, total = 0;
    for (int a = 0; a < q; ++a) {
      if (g.dim == 1) {
        Vec x{c[0] + ((a + 0.5) / q - 0.5) * h};
        hits += dom.contains(x);
        ++total;
        continue;
      }
      for (int b = 0; b < q; ++b) {
        Vec x{c[0] + ((a + 0.5) / q - 0.5) * h, c[1] + ((b + 0.5) / q - 0.5) * h};
        hits += dom.contains(x);
        ++total;
      }
    }
    m[idx] = double(hits) / total;
  }
  return m;
}

inline double masked_mass(const std::vector<double>& mask, const WaveFunction& w) {
  double s = 0;
  for (size_t i = 0; i < mask.size(); ++i)
    if (mask[i] != 0.0) s += mask[i] * std::norm(w.v[i]);
  return s * w.grid.cell();
}

/// Masked probabilities ∫_{Σ_r}|ψ_t|² on the sample times, one row per radius.
struct SojournSweep {
  std::vector<double> times;
  std::vector<std::vector<double>> mass;
};

/// Tail of ∫_{T}^{∞} m(t) dt from a power-law fit over |t| ∈ [T/2, T]. Masses
/// already below 1e−12 of the peak are treated as a noise floor and bounded
/// by m(T)·T.
inline double power_tail(const std::vector<double>& t, const std::vector<double>& m, bool right) {
  const size_t n = t.size();
  double peak = 0;
  for (double v : m) peak = std::max(peak, std::abs(v));
  if (peak == 0.0) return 0.0;
  const double T = std::abs(right ? t.back() : t.front());
  const double mend = std::abs(right ? m.back() : m.front());
  if (mend <= 1e-12 * peak) return mend * T;
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int k = 0;
  for (size_t i = 0; i < n; ++i) {
    double a = std::abs(t[i]);
    if ((right ? t[i] > 0 : t[i] < 0) && a >= 0.5 * T && std::abs(m[i]) > 0) {
      double x = std::log(a), y = std::log(std::abs(m[i]));
      sx += x; sy += y; sxx += x * x; sxy += x * y;
      ++k;
    }
  }
  if (k < 3) return std::numeric_limits<double>::infinity();
  double slope = (k * sxy - sx * sy) / (k * sxx - sx * sx);
  if (slope >= -1.0) return std::numeric_limits<double>::infinity();
  return mend * T / (-slope - 1.0);
}

/// One evolution pass accumulating the masked probability for every radius.
/// The state is taken at t = 0 and evolved with H (full) or H₀.
inline SojournSweep sojourn_sweep(const ScatteringSetup& s, const WaveFunction& state,
                                  const DomainModel& dom, bool full, const SojournConfig& cfg) {
  cfg.validate(s.grid, dom);
  const Grid fine(s.grid.dim, s.grid.n * cfg.oversample, s.grid.L);
  std::vector<std::vector<double>> masks;
  for (double r : cfg.radii) masks.push_back(region_mask(fine, dom.dilated(r), cfg.region_quadrature));
  const int half = cfg.time_samples / 2;
  const double dt = cfg.step();
  SojournSweep out;
  out.times.resize(cfg.time_samples + 1);
  out.mass.assign(cfg.radii.size(), std::vector<double>(cfg.time_samples + 1));
  auto record = [&](int j, const WaveFunction& w) {
    out.times[j] = (j - half) * dt;
    WaveFunction u = upsample(w, cfg.oversample);
    for (size_t r = 0; r < masks.size(); ++r) out.mass[r][j] = masked_mass(masks[r], u);
  };
  if (!full) {
    for (int j = 0; j <= cfg.time_samples; ++j) record(j, free_evolve(state, (j - half) * dt));
    return out;
  }
  record(half, state);
  for (int dir : {1, -1}) {
    WaveFunction w = state;
    for (int m = 1; m <= half; ++m) {
      w = propagate(s, std::move(w), dir * dt, true);
      record(half + dir * m, w);
    }
  }
  return out;
}

struct SojournTimes {
  std::vector<double> value;  // trapezoid over [−T_max, T_max]
  std::vector<double> tail;   // estimated remainder, an error bar
};

inline SojournTimes integrate_sweep(const SojournSweep& sw) {
  SojournTimes st;
  const double dt = sw.times[1] - sw.times[0];
  for (const auto& m : sw.mass) {
    double acc = 0.5 * (m.front() + m.back());
    for (size_t j = 1; j + 1 < m.size(); ++j) acc += m[j];
    st.value.push_back(acc * dt);
    st.tail.push_back(power_tail(sw.times, m, false) + power_tail(sw.times, m, true));
  }
  return st;
}

inline void check_tails(const SojournTimes& st, const std::string& what) {
  for (size_t i = 0; i < st.value.size(); ++i)
    require(st.tail[i] <= 0.01 * std::abs(st.value[i]), ErrorCode::TailTooFat,
            what + ": sojourn tail " + fmt17(st.tail[i]) + " against " + fmt17(st.value[i]));
}

/// T_r⁰(φ) (full = false) or T_r(φ) = ∫‖𝟙_{Σ_r}e^{−itH}W_−φ‖²dt (full = true).
inline SojournTimes sojourn_times(const ScatteringSetup& s, const WaveFunction& phi,
                                  const DomainModel& dom, bool full, const SojournConfig& cfg) {
  WaveFunction state = full ? wave_operator(s, phi, -1, true) : phi;
  SojournTimes st = integrate_sweep(sojourn_sweep(s, state, dom, full, cfg));
  check_tails(st, full ? "T_r" : "T_r^0");
  return st;
}

inline double sojourn_time(const ScatteringSetup& s, const WaveFunction& phi, const DomainModel& dom,
                           double r, bool full, SojournConfig cfg) {
  cfg.radii = {r};
  return sojourn_times(s, phi, dom, full, cfg).value[0];
}

struct TauSeries {
  std::vector<double> radii, tau, tau_in, error;
  std::vector<std::string> warnings;
};

/// τ_r = T_r − ½(T_r⁰(φ) + T_r⁰(Sφ)) and τ_r^in = T_r − T_r⁰(φ) for all radii
/// from three sweeps. The error column sums the tail estimates.
inline TauSeries tau_series(const ScatteringSetup& s, const DomainModel& dom, const WaveFunction& phi,
                            const SojournConfig& cfg, int jobs = 1) {
  cfg.validate(s.grid, dom);
  WaveFunction chi = wave_operator(s, phi, -1, true);
  WaveFunction sphi = wave_operator_adjoint(s, chi, +1);
  auto launch = [&](const WaveFunction& w, bool full) {
    return std::async(jobs > 1 ? std::launch::async : std::launch::deferred,
                      [&, w, full] { return integrate_sweep(sojourn_sweep(s, w, dom, full, cfg)); });
  };
  auto f_full = launch(chi, true), f_free = launch(phi, false), f_sfree = launch(sphi, false);
  SojournTimes Tf = f_full.get(), T0 = f_free.get(), T0s = f_sfree.get();
  check_tails(Tf, "T_r");
  check_tails(T0, "T_r^0(phi)");
  check_tails(T0s, "T_r^0(S phi)");
  TauSeries out;
  out.radii = cfg.radii;
  for (size_t i = 0; i < cfg.radii.size(); ++i) {
    out.tau.push_back(Tf.value[i] - 0.5 * (T0.value[i] + T0s.value[i]));
    out.tau_in.push_back(Tf.value[i] - T0.value[i]);
    out.error.push_back(Tf.tail[i] + 0.5 * (T0.tail[i] + T0s.tail[i]));
  }
  // probability left inside the largest region at ±T_max
  double end_mass = 0;
  auto mask = region_mask(s.grid, dom.dilated(cfg.radii.back()), cfg.region_quadrature);
  for (const WaveFunction* w : {&phi, static_cast<const WaveFunction*>(&sphi)}) {
    end_mass = std::max({end_mass, masked_mass(mask, free_evolve(*w, cfg.time_extent)),
                         masked_mass(mask, free_evolve(*w, -cfg.time_extent))});
  }
  if (end_mass >= 1e-6 * phi.norm2())
    out.warnings.push_back("time extent leaves " + fmt17(end_mass) + " inside the largest region");
  return out;
}

// ---------------------------------------------------------------------------
// r → ∞ extrapolation

struct Extrapolation {
  double value = 0.0;
  double uncertainty = 0.0;
  double residual = 0.0;
};

namespace detail {

// least squares for y ≈ Σ c_j r^{−j}, j = 0..terms, via normal equations
inline std::vector<double> inverse_power_fit(const std::vector<double>& r, const std::vector<double>& y,
                                             int terms, double* rms) {
  const int m = terms + 1;
  std::vector<double> A(m * m, 0.0), b(m, 0.0);
  for (size_t i = 0; i < r.size(); ++i) {
    std::vector<double> phi(m);
    for (int j = 0; j < m; ++j) phi[j] = std::pow(r[i] / r.back(), -j);
    for (int a = 0; a < m; ++a) {
      b[a] += phi[a] * y[i];
      for (int c = 0; c < m; ++c) A[a * m + c] += phi[a] * phi[c];
    }
  }
  // Gaussian elimination with partial pivoting
  for (int col = 0; col < m; ++col) {
    int p = col;
    for (int row = col + 1; row < m; ++row)
      if (std::abs(A[row * m + col]) > std::abs(A[p * m + col])) p = row;
    for (int c = 0; c < m; ++c) std::swap(A[col * m + c], A[p * m + c]);
    std::swap(b[col], b[p]);
    for (int row = col + 1; row < m; ++row) {
      double f = A[row * m + col] / A[col * m + col];
      for (int c = col; c < m; ++c) A[row * m + c] -= f * A[col * m + c];
      b[row] -= f * b[col];
    }
  }
  std::vector<double> c(m);
  for (int row = m - 1; row >= 0; --row) {
    double s = b[row];
    for (int k = row + 1; k < m; ++k) s -= A[row * m + k] * c[k];
    c[row] = s / A[row * m + row];
  }
  double ss = 0;
  for (size_t i = 0; i < r.size(); ++i) {
    double f = 0;
    for (int j = 0; j < m; ++j) f += c[j] * std::pow(r[i] / r.back(), -j);
    ss += (y[i] - f) * (y[i] - f);
  }
  if (rms) *rms = std::sqrt(ss / r.size());
  return c;
}

}  // namespace detail

/// Fits τ_r = τ_∞ + a/r + b/r². The uncertainty is the larger of the fit
/// residual and the spread against the a/r model. NoConvergence when the last
/// sample misses the trend of the others by more than ten fit residuals.
inline Extrapolation extrapolate_tau(const std::vector<double>& radii, const std::vector<double>& tau) {
  require(radii.size() == tau.size(), ErrorCode::InvalidArgument, "radii and samples differ in length");
  require(radii.size() >= 4, ErrorCode::InvalidArgument, "need at least four radii");
  for (size_t i = 1; i < radii.size(); ++i)
    require(radii[i] > radii[i - 1] && radii[0] > 0, ErrorCode::InvalidArgument, "radii must increase");
  double rms2 = 0, rms1 = 0;
  auto c2 = detail::inverse_power_fit(radii, tau, 2, &rms2);
  auto c1 = detail::inverse_power_fit(radii, tau, 1, &rms1);
  Extrapolation e;
  e.value = c2[0];
  e.residual = rms2;
  e.uncertainty = std::max(rms2, std::abs(c2[0] - c1[0]));
  const size_t n = radii.size();
  std::vector<double> r0(radii.begin(), radii.end() - 1), t0(tau.begin(), tau.end() - 1);
  const int terms = n >= 5 ? 2 : 1;  // keep one spare sample
  double rms0 = 0;
  auto c = detail::inverse_power_fit(r0, t0, terms, &rms0);
  double x = r0.back() / radii.back(), pred = 0;
  for (int j = terms; j >= 0; --j) pred = pred * x + c[j];
  double miss = std::abs(pred - tau[n - 1]);
  double floor = 1e-12 * std::max(1.0, std::abs(e.value));
  require(miss <= 10 * std::max(rms0, floor), ErrorCode::NoConvergence,
          "last sample misses the trend by " + fmt17(miss) + " with fit residual " + fmt17(rms0));
  return e;
}

// ---------------------------------------------------------------------------
// Wigner-type formula

struct ComplexValue {
  double re = 0.0, im = 0.0;
};

inline void check_real(const ComplexValue& v, double norm2, const std::string& what,
                       Diagnostics* diag = nullptr) {
  if (std::abs(v.im) > 1e-4 * std::abs(v.re) + 1e-12 * norm2)
    warn(diag, ErrorCode::NonHermitianResult, what + ": imaginary part " + fmt17(v.im));
}

/// Projection onto the open window support. D_Σ preserves momentum support,
/// so this only strips lattice noise from Q-multiplication near the box edge.
inline WaveFunction band_project(const EnergyWindow& w, const WaveFunction& psi) {
  return apply_table(psi, momentum_table(psi.grid, [&](const Vec& k) { return w.supports(0.5 * k.norm2()) ? 1.0 : 0.0; }));
}

/// −⟨φ̃, S*[D_Σ,S]φ̃⟩ with φ̃ = f(H₀)^{−1/2}φ.
inline ComplexValue wigner_rhs(const ScatteringSetup& s, const VectorField& field, const WaveFunction& phi,
                               Diagnostics* diag = nullptr) {
  WaveFunction pt = f_h0_power(field.symbol(), -0.5, s.window, phi);
  DilationOperator D(field, s.grid);
  WaveFunction sp = s_apply(s, pt, true);
  WaveFunction dsp = band_project(s.window, D.apply(sp, diag));
  WaveFunction c = s_adjoint_apply(s, dsp) - band_project(s.window, D.apply(pt, diag));
  cplx v = -inner(pt, c);
  ComplexValue out{v.real(), v.imag()};
  require(std::abs(out.im) <= 1e-4 * std::abs(out.re) + 1e-10 * pt.norm2(), ErrorCode::NonHermitianResult,
          "Wigner value has imaginary part " + fmt17(out.im));
  return out;
}

/// −½⟨H₀^{−1/2}φ, S*[D,S]H₀^{−1/2}φ⟩ for the isotropic dilation, written as
/// −½(⟨Sχ, DSχ⟩ − ⟨χ, Dχ⟩) with D = Q·P − id/2 from spectral derivatives.
inline ComplexValue wigner_isotropic(const ScatteringSetup& s, const WaveFunction& phi) {
  const Grid& g = s.grid;
  const EnergyWindow& w = s.window;
  require(mass_outside_window(w, phi) <= 1e-8, ErrorCode::WindowViolation, "state is not windowed");
  auto a = to_momentum(phi);
  for (size_t i = 0; i < a.size(); ++i) {
    double e = 0.5 * g.momentum(i).norm2();
    a[i] = w.supports(e) ? a[i] / std::sqrt(e) : cplx(0, 0);
  }
  WaveFunction chi = from_momentum(g, a);
  auto dil = [&](const WaveFunction& u) {
    WaveFunction out = cplx(0, -0.5 * g.dim) * u;
    for (int j = 0; j < g.dim; ++j) {
      auto b = to_momentum(u);
      for (size_t i = 0; i < b.size(); ++i) b[i] *= g.momentum(i)[j];
      WaveFunction pu = from_momentum(g, b);
      for (size_t i = 0; i < pu.v.size(); ++i) out.v[i] += g.point(i)[j] * pu.v[i];
    }
    return out;
  };
  WaveFunction schi = s_apply(s, chi, false);
  cplx v = -0.5 * (inner(schi, dil(schi)) - inner(chi, dil(chi)));
  return {v.real(), v.imag()};
}

// ---------------------------------------------------------------------------
// generalized virial

struct SolverOptions {
  double tolerance = 1e-12;
  double fail_tolerance = 1e-8;
  int max_iterations = 2000;
};

/// (H² + γ)^{−1}b by conjugate gradients preconditioned with (H₀² + γ)^{−1}.
inline WaveFunction resolvent_h2(const ScatteringSetup& s, double gamma, const WaveFunction& b,
                                 const SolverOptions& opt = {}, Diagnostics* diag = nullptr) {
  const Grid& g = s.grid;
  const auto& kin = s.kinetic();
  std::vector<double> pre(g.size());
  for (size_t i = 0; i < pre.size(); ++i) pre[i] = 1.0 / (kin[i] * kin[i] + gamma);
  auto A = [&](const WaveFunction& x) { return h_apply(s, h_apply(s, x)) + cplx(gamma) * x; };
  auto M = [&](const WaveFunction& x) { return apply_table(x, pre); };
  const double bn = b.norm();
  WaveFunction x = M(b);
  if (bn == 0.0) return x;
  WaveFunction r = b - A(x);
  WaveFunction z = M(r), p = z;
  cplx rz = inner(r, z);
  double rel = r.norm() / bn;
  for (int it = 0; it < opt.max_iterations && rel > opt.tolerance; ++it) {
    WaveFunction Ap = A(p);
    cplx alpha = rz / inner(p, Ap);
    x += alpha * p;
    r -= alpha * Ap;
    rel = r.norm() / bn;
    z = M(r);
    cplx rz2 = inner(r, z);
    p = z + (rz2 / rz) * p;
    rz = rz2;
  }
  require(rel <= opt.fail_tolerance, ErrorCode::SolverNotConverged,
          "resolvent solve stalled at relative residual " + fmt17(rel));
  if (rel > opt.tolerance) warn(diag, ErrorCode::SolverNotConverged, "resolvent residual " + fmt17(rel));
  return x;
}

/// 𝖵_{Σ,f}ψ = (f(H) − f(H₀))ψ − i[V, D_Σ]ψ. For f_γ the difference uses the
/// expansion 2V − 2γ(H²+γ)^{−1}V + 2γ(H²+γ)^{−1}(H₀V + VH₀ + V²)(H₀²+γ)^{−1}H₀.
inline WaveFunction virial_apply(const ScatteringSetup& s, const VectorField& field, const WaveFunction& psi,
                                 const SolverOptions& opt = {}, Diagnostics* diag = nullptr) {
  const Symbol& f = field.symbol();
  require(f.kind() != Symbol::Kind::custom, ErrorCode::InvalidArgument,
          "virial is available for the linear and gamma symbols");
  DilationOperator D(field, s.grid);
  WaveFunction vpsi = v_apply(s, psi);
  WaveFunction out = cplx(2.0) * vpsi;
  out -= cplx(0, 1) * (v_apply(s, D.apply(psi, diag)) - D.apply(vpsi, diag));
  if (f.kind() == Symbol::Kind::gamma) {
    const double g = f.gamma_value();
    const auto& kin = s.kinetic();
    std::vector<double> m(kin.size());
    for (size_t i = 0; i < m.size(); ++i) m[i] = kin[i] / (kin[i] * kin[i] + g);
    WaveFunction y = apply_table(psi, m);  // (H₀²+γ)^{−1}H₀ψ
    WaveFunction vy = v_apply(s, y);
    WaveFunction w = h0_apply(vy) + v_apply(s, h0_apply(y)) + v_apply(s, vy) - vpsi;
    out += cplx(2 * g) * resolvent_h2(s, g, w, opt, diag);
  }
  return out;
}

/// ∫ds ⟨χ_s, 𝖵_{Σ,f}χ_s⟩ with χ_s = e^{−isH}W_−f(H₀)^{−1/2}φ, trapezoid in s.
struct LavineResult {
  ComplexValue value;
  double tail = 0.0;
  std::vector<double> times, integrand;
};

inline LavineResult lavine_rhs(const ScatteringSetup& s, const VectorField& field, const WaveFunction& phi,
                               double time_extent, int samples, const SolverOptions& opt = {},
                               Diagnostics* diag = nullptr) {
  require(samples >= 2 && samples % 2 == 0, ErrorCode::InvalidArgument, "samples must be even");
  WaveFunction chi = wave_operator(s, f_h0_power(field.symbol(), -0.5, s.window, phi), -1, true);
  const int half = samples / 2;
  const double dt = 2 * time_extent / samples;
  LavineResult res;
  res.times.resize(samples + 1);
  std::vector<cplx> val(samples + 1);
  auto record = [&](int j, const WaveFunction& w) {
    res.times[j] = (j - half) * dt;
    val[j] = inner(w, virial_apply(s, field, w, opt, diag));
  };
  record(half, chi);
  for (int dir : {1, -1}) {
    WaveFunction w = chi;
    for (int m = 1; m <= half; ++m) {
      w = propagate(s, std::move(w), dir * dt, true);
      record(half + dir * m, w);
    }
  }
  cplx acc = 0.5 * (val.front() + val.back());
  for (int j = 1; j < samples; ++j) acc += val[j];
  acc *= dt;
  res.value = {acc.real(), acc.imag()};
  res.integrand.resize(samples + 1);
  for (int j = 0; j <= samples; ++j) res.integrand[j] = std::abs(val[j]);
  res.tail = power_tail(res.times, res.integrand, false) + power_tail(res.times, res.integrand, true);
  require(res.tail <= 0.01 * std::abs(acc.real()) || std::abs(acc.real()) < 1e-12 * chi.norm2(),
          ErrorCode::TailTooFat, "Lavine integrand tail " + fmt17(res.tail));
  check_real(res.value, chi.norm2(), "Lavine value", diag);
  return res;
}

// ---------------------------------------------------------------------------
// report

struct TimeDelayReport {
  static constexpr const char* schema = "tdlab.time_delay_report/1";

  std::string scenario;
  std::vector<double> radii, tau_r, tau_r_error, tau_in_r;
  double tau_infinity = 0.0, tau_uncertainty = 0.0;
  bool tau_converged = true;
  double wigner_value = 0.0, wigner_imag = 0.0;
  double lavine_value = 0.0, lavine_imag = 0.0;
  std::vector<std::pair<double, double>> symbol_study;  // (γ, Lavine value)
  std::optional<double> symbol_reference;  // f = 2u Lavine value at the γ-study time settings
  std::optional<double> isotropic_value;  // independent route, ball with f = 2u
  double noise_floor = 0.0;               // absolute tolerance floor of the checks
  std::vector<std::string> diagnostics;

  struct Gap {
    double abs = 0.0, rel = 0.0;
  };
  static Gap gap(double a, double b) {
    double d = std::abs(a - b), s = std::max(std::abs(a), std::abs(b));
    return {d, s > 0 ? d / s : 0.0};
  }

  /// Largest pairwise gap of a series over its last three entries.
  static double tail_spread(const std::vector<double>& v) {
    double g = 0;
    for (size_t i = v.size() >= 3 ? v.size() - 3 : 0; i < v.size(); ++i)
      for (size_t j = i + 1; j < v.size(); ++j) g = std::max(g, std::abs(v[i] - v[j]));
    return g;
  }

  bool time_delay_ok() const {
    return tau_converged && std::abs(tau_infinity - wigner_value) <=
                                std::max({0.05 * std::abs(wigner_value), 2 * tau_uncertainty, noise_floor});
  }
  bool lavine_ok() const {
    return std::abs(wigner_value - lavine_value) <= std::max(0.05 * std::abs(wigner_value), noise_floor);
  }
  bool reality_ok() const {
    return std::abs(wigner_imag) <= 1e-4 * std::abs(wigner_value) + noise_floor &&
           std::abs(lavine_imag) <= 1e-4 * std::abs(lavine_value) + noise_floor;
  }
  bool isotropic_ok() const {
    return !isotropic_value ||
           std::abs(*isotropic_value - wigner_value) <= 1e-6 * std::abs(wigner_value) + noise_floor;
  }
  /// Distances of the γ runs to the f = 2u Lavine value shrink as γ decreases.
  bool gamma_trend_ok() const {
    auto s = symbol_study;
    const double ref = symbol_reference.value_or(lavine_value);
    std::sort(s.begin(), s.end(), [](auto a, auto b) { return a.first > b.first; });
    for (size_t i = 1; i < s.size(); ++i)
      if (std::abs(s[i].second - ref) > std::abs(s[i - 1].second - ref)) return false;
    return true;
  }
  bool all_ok() const {
    return time_delay_ok() && lavine_ok() && reality_ok() && isotropic_ok() && gamma_trend_ok();
  }

  json to_json() const {
    json j;
    j["schema"] = schema;
    j["scenario"] = scenario;
    json rows = json::array();
    for (size_t i = 0; i < radii.size(); ++i)
      rows.push_back({{"r", radii[i]}, {"tau_r", tau_r[i]}, {"tau_r_error", tau_r_error[i]}, {"tau_in_r", tau_in_r[i]}});
    j["tau_r"] = rows;
    j["tau_infinity"] = {{"value", tau_infinity}, {"uncertainty", tau_uncertainty}, {"converged", tau_converged}};
    j["wigner"] = {{"re", wigner_value}, {"im", wigner_imag}};
    j["lavine"] = {{"re", lavine_value}, {"im", lavine_imag}};
    json study = json::array();
    for (auto [g, v] : symbol_study) study.push_back({{"gamma", g}, {"lavine", v}});
    j["symbol_study"] = study;
    if (symbol_reference) j["symbol_reference"] = *symbol_reference;
    if (isotropic_value) j["isotropic"] = *isotropic_value;
    j["noise_floor"] = noise_floor;
    auto g1 = gap(tau_infinity, wigner_value), g2 = gap(tau_infinity, lavine_value), g3 = gap(wigner_value, lavine_value);
    j["discrepancies"] = {{"tau_wigner", {{"abs", g1.abs}, {"rel", g1.rel}}},
                          {"tau_lavine", {{"abs", g2.abs}, {"rel", g2.rel}}},
                          {"wigner_lavine", {{"abs", g3.abs}, {"rel", g3.rel}}}};
    j["tau_in_spread"] = {{"tau_r", tail_spread(tau_r)}, {"tau_in_r", tail_spread(tau_in_r)}};
    j["checks"] = {{"time_delay", time_delay_ok()}, {"lavine", lavine_ok()},   {"reality", reality_ok()},
                   {"isotropic", isotropic_ok()},   {"gamma_trend", gamma_trend_ok()}};
    j["diagnostics"] = diagnostics;
    return j;
  }

  static TimeDelayReport from_json(const json& j) {
    require(j.value("schema", "") == schema, ErrorCode::Io, "unknown report schema");
    TimeDelayReport r;
    r.scenario = j.at("scenario").get<std::string>();
    for (const auto& row : j.at("tau_r")) {
      r.radii.push_back(row.at("r").get<double>());
      r.tau_r.push_back(row.at("tau_r").get<double>());
      r.tau_r_error.push_back(row.at("tau_r_error").get<double>());
      r.tau_in_r.push_back(row.at("tau_in_r").get<double>());
    }
    const auto& ti = j.at("tau_infinity");
    r.tau_infinity = ti.at("value").get<double>();
    r.tau_uncertainty = ti.at("uncertainty").get<double>();
    r.tau_converged = ti.at("converged").get<bool>();
    r.wigner_value = j.at("wigner").at("re").get<double>();
    r.wigner_imag = j.at("wigner").at("im").get<double>();
    r.lavine_value = j.at("lavine").at("re").get<double>();
    r.lavine_imag = j.at("lavine").at("im").get<double>();
    for (const auto& e : j.at("symbol_study"))
      r.symbol_study.emplace_back(e.at("gamma").get<double>(), e.at("lavine").get<double>());
    if (j.contains("symbol_reference")) r.symbol_reference = j.at("symbol_reference").get<double>();
    if (j.contains("isotropic")) r.isotropic_value = j.at("isotropic").get<double>();
    r.noise_floor = j.at("noise_floor").get<double>();
    r.diagnostics = j.at("diagnostics").get<std::vector<std::string>>();
    return r;
  }

  std::string csv() const {
    std::string out = "r,tau_r,tau_r_in\n";
    for (size_t i = 0; i < radii.size(); ++i)
      out += fmt17(radii[i]) + "," + fmt17(tau_r[i]) + "," + fmt17(tau_in_r[i]) + "\n";
    return out;
  }
};

}  // namespace tdlab
