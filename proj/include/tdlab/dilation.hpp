#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "tdlab/common.hpp"
#include "tdlab/geometry.hpp"
#include "tdlab/io.hpp"

namespace tdlab {

/// Scalar symbol f with f(0) = 0 and f > 0 on (0, ∞).
class Symbol {
 public:
  enum class Kind { linear, gamma, custom };

  static Symbol linear() { return Symbol(Kind::linear, 0.0, nullptr, nullptr); }
  static Symbol gamma(double g = 1.0) {
    require(g > 0, ErrorCode::InvalidArgument, "gamma must be positive");
    return Symbol(Kind::gamma, g, nullptr, nullptr);
  }
  /// Custom symbols are probed on a log grid of u; violations are rejected.
  static Symbol custom(std::function<double(double)> f, std::function<double(double)> df) {
    require(f && df, ErrorCode::InvalidArgument, "custom symbol needs f and f'");
    require(std::abs(f(0.0)) < 1e-14, ErrorCode::InvalidArgument,
            "symbol must vanish at 0");
    for (int i = -30; i <= 30; ++i) {
      double u = std::pow(10.0, i / 5.0);
      require(f(u) > 0, ErrorCode::InvalidArgument, "symbol must be positive on (0, inf)");
    }
    return Symbol(Kind::custom, 0.0, std::move(f), std::move(df));
  }

  Kind kind() const { return kind_; }
  double gamma_value() const { return gamma_; }
  std::string name() const {
    switch (kind_) {
      case Kind::linear: return "linear";
      case Kind::gamma: return "gamma(" + fmt17(gamma_) + ")";
      case Kind::custom: return "custom";
    }
    return "custom";
  }

  double operator()(double u) const {
    switch (kind_) {
      case Kind::linear: return 2 * u;
      case Kind::gamma: return 2 * u * u * u / (u * u + gamma_);
      case Kind::custom: return f_(u);
    }
    return 0;
  }
  double deriv(double u) const {
    switch (kind_) {
      case Kind::linear: return 2;
      case Kind::gamma: {
        double d = u * u + gamma_;
        return (6 * u * u * d - 4 * std::pow(u, 4)) / (d * d);
      }
      case Kind::custom: return df_(u);
    }
    return 0;
  }

 private:
  Symbol(Kind k, double g, std::function<double(double)> f, std::function<double(double)> df)
      : kind_(k), gamma_(g), f_(std::move(f)), df_(std::move(df)) {}

  Kind kind_;
  double gamma_;
  std::function<double(double)> f_, df_;
};

/// F_Σ(x) = −∇G_Σ(x) f(x²/2).
class VectorField {
 public:
  VectorField(ShapeFunction shape, Symbol symbol)
      : shape_(std::move(shape)), symbol_(std::move(symbol)) {}

  const ShapeFunction& shape() const { return shape_; }
  const Symbol& symbol() const { return symbol_; }
  int dim() const { return shape_.dim(); }

  bool is_ball_linear() const {
    return shape_.tag() == ShapeFunction::Tag::ball && symbol_.kind() == Symbol::Kind::linear;
  }

  Vec eval(const Vec& x) const {
    if (is_ball_linear()) return x;
    if (x.is_zero()) {
      require(symbol_.kind() == Symbol::Kind::gamma, ErrorCode::OriginSingularity,
              "F_sigma at 0 needs a symbol vanishing faster than linearly");
      return Vec(x.dim);
    }
    Vec g = shape_.grad(x);
    double fv = symbol_(0.5 * x.norm2());
    Vec out = g * (-fv);
    for (int j = 0; j < out.dim; ++j)
      require(std::isfinite(out[j]), ErrorCode::FieldEvaluationFailure, "non-finite F_sigma");
    return out;
  }

  /// div F = −ΔG f(x²/2) + f'(x²/2), using x·∇G = −1.
  double divergence(const Vec& x) const {
    const int d = x.dim;
    if (is_ball_linear()) return d;
    if (x.is_zero()) {
      require(symbol_.kind() == Symbol::Kind::gamma, ErrorCode::OriginSingularity,
              "div F_sigma at 0 needs a gamma symbol");
      return 0.0;
    }
    double u = 0.5 * x.norm2();
    if (auto lap = shape_.laplacian(x)) return -*lap * symbol_(u) + symbol_.deriv(u);
    double h = 1e-4 * (1 + x.norm());
    double acc = 0;
    for (int j = 0; j < d; ++j) {
      Vec e(d);
      e[j] = h;
      acc += (eval(x + e)[j] - eval(x - e)[j]) / (2 * h);
    }
    require(std::isfinite(acc), ErrorCode::FieldEvaluationFailure, "non-finite divergence");
    return acc;
  }

 private:
  ShapeFunction shape_;
  Symbol symbol_;
};

inline Vec field_eval(const VectorField& F, const Vec& x) { return F.eval(x); }

struct FlowResult {
  Vec xi;
  double jacobian = 1.0;
  double log_jacobian = 0.0;
  double t = 0.0;
  long steps = 0;
};

/// RK4 for dξ/ds = −F(ξ) with d(ln η)/ds = −div F(ξ).
inline FlowResult integrate_flow(const VectorField& F, const Vec& x, double t, double dt = 1e-3,
                                 long step_budget = 1000000) {
  require(dt > 0, ErrorCode::InvalidArgument, "dt must be positive");
  FlowResult r;
  r.t = t;
  r.xi = x;
  if (x.is_zero() || t == 0.0) return r;
  double nsteps = std::ceil(std::abs(t) / dt);
  require(nsteps <= static_cast<double>(step_budget), ErrorCode::StepBudgetExceeded,
          "flow needs more than the step budget");
  const long n = static_cast<long>(nsteps);
  const double h = t / static_cast<double>(n);
  const int d = x.dim;

  Vec xi = x;
  double ln_eta = 0;
  auto rhs = [&](const Vec& p, Vec& dp, double& dl) {
    Vec f = F.eval(p);
    dp = -f;
    dl = -F.divergence(p);
  };
  Vec k1(d), k2(d), k3(d), k4(d);
  double l1, l2, l3, l4;
  for (long i = 0; i < n; ++i) {
    if (xi.norm() < 1e-12) {
      xi = Vec(d);
      break;
    }
    rhs(xi, k1, l1);
    rhs(xi + k1 * (0.5 * h), k2, l2);
    rhs(xi + k2 * (0.5 * h), k3, l3);
    rhs(xi + k3 * h, k4, l4);
    xi += (k1 + 2.0 * k2 + 2.0 * k3 + k4) * (h / 6.0);
    ln_eta += (l1 + 2 * l2 + 2 * l3 + l4) * (h / 6.0);
    ++r.steps;
  }
  r.xi = xi;
  r.log_jacobian = ln_eta;
  r.jacobian = std::exp(ln_eta);
  return r;
}

/// Radial reduction: u = |ξ_t|² obeys du/dt = −2 f(u/2), independently of Σ.
inline double flow_radius_sq(const Symbol& f, double u0, double t, double dt = 1e-3) {
  if (u0 == 0.0 || t == 0.0) return u0;
  long n = static_cast<long>(std::ceil(std::abs(t) / dt));
  double h = t / static_cast<double>(n), u = u0;
  auto g = [&](double v) { return -2 * f(0.5 * v); };
  for (long i = 0; i < n; ++i) {
    double a = g(u), b = g(u + 0.5 * h * a), c = g(u + 0.5 * h * b), e = g(u + h * c);
    u += h / 6 * (a + 2 * b + 2 * c + e);
    if (u <= 0) return 0.0;
  }
  return u;
}

/// |ξ_t|² from |x|² = u0 by solving ∫_{u0}^{u} dv / f(v/2) = −2t. Closed form
/// for the linear and gamma symbols, RK4 for custom ones.
inline double radial_flow(const Symbol& f, double u0, double t, double dt = 1e-3) {
  if (u0 == 0.0 || t == 0.0) return u0;
  switch (f.kind()) {
    case Symbol::Kind::linear: return u0 * std::exp(-2 * t);
    case Symbol::Kind::gamma: {
      // s = ln u solves φ(s) = s − 2γe^{−2s} − c = 0; φ is increasing and
      // concave, so Newton from a point with φ ≤ 0 climbs monotonically
      const double g = f.gamma_value();
      const double c = std::log(u0) - 2 * g / (u0 * u0) - 2 * t;
      auto phi = [&](double s) { return s - 2 * g * std::exp(-2 * s) - c; };
      double s = c;
      if (c < 0) {
        double alt = -0.5 * std::log(-c / (2 * g));
        if (phi(alt) <= 0 && alt > s) s = alt;
      }
      for (int it = 0; it < 200; ++it) {
        double step = phi(s) / (1 + 4 * g * std::exp(-2 * s));
        s -= step;
        if (std::abs(step) <= 1e-15 * (1 + std::abs(s))) break;
      }
      return std::exp(s);
    }
    case Symbol::Kind::custom: break;
  }
  return flow_radius_sq(f, u0, t, dt);
}

/// Polar form of the flow in 2D. With τ = ½ ln(|x|²/|ξ_t|²) the angle obeys
/// dθ/dτ = h(θ) = ∂_θG(ω), and ln η_t = ∫₀^τ ΔG(ω) dτ' + ln f(|ξ_t|²/2) − ln f(|x|²/2).
/// The angular equation is autonomous: each arc between consecutive zeros of h
/// is tabulated once against its own time coordinate a, so that
/// Θ_τ(θ₀) = θ(a(θ₀) + τ).
class AngularFlow {
 public:
  struct State {
    double theta = 0;  // final angle
    double lap = 0;    // ∫ ΔG(ω) dτ
  };

  explicit AngularFlow(const ShapeFunction& shape, double accuracy = 0.01) : shape_(shape) {
    require(shape.dim() == 2, ErrorCode::InvalidArgument, "angular flow is 2D only");
    const int m = 8192;
    std::vector<double> th(m + 1), hv(m + 1);
    double hmax = 0;
    for (int i = 0; i <= m; ++i) {
      th[i] = 2 * pi * i / m;
      hv[i] = rhs(th[i]).first;
      hmax = std::max(hmax, std::abs(hv[i]));
    }
    if (hmax < 1e-13) return;  // no angular motion
    for (int i = 0; i < m; ++i) {
      if (hv[i] == 0.0) {
        fixed_.push_back(th[i]);
      } else if (hv[i] * hv[i + 1] < 0) {
        double lo = th[i], hi = th[i + 1];
        for (int it = 0; it < 80 && hi - lo > 1e-16; ++it) {
          double mid = 0.5 * (lo + hi);
          ((rhs(mid).first > 0) == (hv[i] > 0) ? lo : hi) = mid;
        }
        fixed_.push_back(0.5 * (lo + hi));
      }
    }
    require(!fixed_.empty(), ErrorCode::FieldEvaluationFailure, "angular field has no zero");
    for (double f : fixed_) fixed_rate_.push_back(rhs(f).second);
    accuracy_ = accuracy;
    const size_t nf = fixed_.size();
    for (size_t j = 0; j < nf; ++j) {
      Arc arc;
      arc.lo = fixed_[j];
      arc.hi = j + 1 < nf ? fixed_[j + 1] : fixed_[0] + 2 * pi;
      // start where the motion is fastest
      double best = -1, start = 0.5 * (arc.lo + arc.hi);
      for (int i = 0; i <= 64; ++i) {
        double t = arc.lo + (arc.hi - arc.lo) * (i + 0.5) / 65.0;
        double h = std::abs(rhs(t).first);
        if (h > best) { best = h; start = t; }
      }
      arc.sign = rhs(start).first > 0 ? 1 : -1;
      std::vector<Node> fwd, bwd;
      trace(arc, start, 1.0, fwd);
      trace(arc, start, -1.0, bwd);
      arc.nodes.assign(bwd.rbegin(), bwd.rend());
      arc.nodes.insert(arc.nodes.end(), fwd.begin() + 1, fwd.end());
      arcs_.push_back(std::move(arc));
    }
  }

  /// Direct RK4 from one initial angle.
  static State integrate(const ShapeFunction& shape, double theta0, double tau, double dtau = 1e-3) {
    AngularFlow probe(shape, nullptr);
    State s{theta0, 0.0};
    if (tau == 0.0) return s;
    int n = static_cast<int>(std::ceil(std::abs(tau) / dtau));
    for (int i = 0; i < n; ++i) probe.rk4(s.theta, s.lap, tau / n);
    return s;
  }

  const std::vector<double>& fixed_points() const { return fixed_; }

  State operator()(double theta0, double tau) const {
    State out{theta0, 0.0};
    if (arcs_.empty() || tau == 0.0) return out;
    double th = std::fmod(theta0, 2 * pi);
    if (th < 0) th += 2 * pi;
    for (size_t j = 0; j < fixed_.size(); ++j) {
      double d = std::abs(std::remainder(th - fixed_[j], 2 * pi));
      if (d < 1e-9) return {theta0, fixed_rate_[j] * tau};
    }
    if (th < fixed_[0]) th += 2 * pi;
    size_t j = fixed_.size() - 1;
    for (size_t i = 0; i + 1 < fixed_.size(); ++i)
      if (th > fixed_[i] && th < fixed_[i + 1]) { j = i; break; }
    const Arc& arc = arcs_[j];
    double a0 = locate(arc, th);
    double lap0 = eval(arc, a0).lap;
    State end = eval(arc, a0 + tau);
    return {theta0 + (end.theta - th), end.lap - lap0};
  }

 private:
  struct Node {
    double a, theta, h, lap, l;  // l = ΔG(θ) = dh/dθ
  };
  struct Arc {
    double lo = 0, hi = 0;
    int sign = 1;
    std::vector<Node> nodes;  // increasing a
  };

  AngularFlow(const ShapeFunction& shape, std::nullptr_t) : shape_(shape) {}

  std::pair<double, double> rhs(double th) const {
    double c = std::cos(th), s = std::sin(th);
    Vec w{c, s};
    Vec g = shape_.grad(w);
    double h = -s * g[0] + c * g[1];
    if (auto l = shape_.laplacian(w)) return {h, *l};
    // ΔG = ∂²_θ G on the unit circle
    const double e = 1e-5;
    auto dth = [&](double t) {
      Vec u{std::cos(t), std::sin(t)};
      Vec gu = shape_.grad(u);
      return -std::sin(t) * gu[0] + std::cos(t) * gu[1];
    };
    return {h, (dth(th + e) - dth(th - e)) / (2 * e)};
  }

  void rk4(double& th, double& lap, double h) const {
    auto [a1, b1] = rhs(th);
    auto [a2, b2] = rhs(th + 0.5 * h * a1);
    auto [a3, b3] = rhs(th + 0.5 * h * a2);
    auto [a4, b4] = rhs(th + h * a3);
    th += h / 6 * (a1 + 2 * a2 + 2 * a3 + a4);
    lap += h / 6 * (b1 + 2 * b2 + 2 * b3 + b4);
  }

  // follows the arc until the angle settles on a fixed point; the step keeps
  // both the local rate and the angular increment small
  void trace(const Arc& arc, double start, double dir, std::vector<Node>& out) const {
    double th = start, lap = 0, a = 0;
    double target = (dir > 0) == (arc.sign > 0) ? arc.hi : arc.lo;
    for (long i = 0; i < 400000; ++i) {
      auto [h, l] = rhs(th);
      out.push_back({a, th, h, lap, l});
      if (std::abs(th - target) < 1e-13) break;
      double da = accuracy_ / std::max({std::abs(l), std::abs(h) / 0.05, 1e-3});
      rk4(th, lap, dir * da);
      a += dir * da;
    }
  }

  static double herm(double s, double y0, double d0, double y1, double d1, double w) {
    double h00 = (1 + 2 * s) * (1 - s) * (1 - s), h10 = s * (1 - s) * (1 - s);
    double h01 = s * s * (3 - 2 * s), h11 = s * s * (s - 1);
    return h00 * y0 + h10 * w * d0 + h01 * y1 + h11 * w * d1;
  }

  State eval(const Arc& arc, double a) const {
    const auto& n = arc.nodes;
    if (a <= n.front().a) return {n.front().theta, n.front().lap + n.front().l * (a - n.front().a)};
    if (a >= n.back().a) return {n.back().theta, n.back().lap + n.back().l * (a - n.back().a)};
    auto it = std::upper_bound(n.begin(), n.end(), a, [](double v, const Node& e) { return v < e.a; });
    const Node& p = *(it - 1);
    const Node& q = *it;
    double w = q.a - p.a, s = (a - p.a) / w;
    return {herm(s, p.theta, p.h, q.theta, q.h, w), herm(s, p.lap, p.l, q.lap, q.l, w)};
  }

  // a with θ(a) = th on this arc
  double locate(const Arc& arc, double th) const {
    const auto& n = arc.nodes;
    auto before = [&](const Node& e) { return arc.sign > 0 ? e.theta < th : e.theta > th; };
    size_t lo = 0, hi = n.size() - 1;
    if (before(n[hi])) return n[hi].a;
    if (!before(n[lo])) return n[lo].a;
    while (hi - lo > 1) {
      size_t mid = (lo + hi) / 2;
      (before(n[mid]) ? lo : hi) = mid;
    }
    const Node& p = n[lo];
    const Node& q = n[hi];
    double w = q.a - p.a;
    double s = (th - p.theta) / (q.theta - p.theta);
    for (int it = 0; it < 30; ++it) {
      double s0 = s;
      double val = herm(s, p.theta, p.h, q.theta, q.h, w) - th;
      double der = (6 * s * s - 6 * s) * (p.theta - q.theta) +
                   w * ((3 * s * s - 4 * s + 1) * p.h + (3 * s * s - 2 * s) * q.h);
      s = std::clamp(s - val / der, 0.0, 1.0);
      if (std::abs(s - s0) < 1e-15) break;
    }
    return p.a + s * w;
  }

  ShapeFunction shape_;
  double accuracy_ = 0.01;
  std::vector<double> fixed_, fixed_rate_;
  std::vector<Arc> arcs_;
};

/// ξ_t(x) and η_t(x) through the polar reduction. Exact for balls in any
/// dimension; 2D shapes use a direct angular RK4.
inline FlowResult reduced_flow(const VectorField& F, const Vec& x, double t) {
  FlowResult r;
  r.t = t;
  r.xi = x;
  if (x.is_zero() || t == 0.0) return r;
  const Symbol& f = F.symbol();
  const int d = x.dim;
  double u0 = x.norm2(), ut = radial_flow(f, u0, t);
  double ln_eta = std::log(f(0.5 * ut)) - std::log(f(0.5 * u0));
  if (F.shape().tag() == ShapeFunction::Tag::ball || d == 1) {
    r.xi = x * std::sqrt(ut / u0);
    ln_eta += 0.5 * (d - 2) * std::log(ut / u0);
  } else {
    require(d == 2, ErrorCode::InvalidArgument, "polar reduction needs a ball or a 2D shape");
    double tau = 0.5 * std::log(u0 / ut);
    auto s = AngularFlow::integrate(F.shape(), std::atan2(x[1], x[0]), tau, 1e-4);
    r.xi = Vec{std::sqrt(ut) * std::cos(s.theta), std::sqrt(ut) * std::sin(s.theta)};
    ln_eta += s.lap;
  }
  r.log_jacobian = ln_eta;
  r.jacobian = std::exp(ln_eta);
  return r;
}

/// 2t + ∫_{x²}^{xi_sq} du / f(u/2).
inline double implicit_residual(const Symbol& f, const Vec& x, double t, double xi_sq) {
  double x2 = x.norm2();
  require(x2 > 0, ErrorCode::InvalidArgument, "x must be nonzero");
  require(xi_sq >= x2, ErrorCode::InvalidArgument, "xi_sq must be >= |x|^2");
  if (xi_sq == x2) return 2 * t;
  bool bad = false;
  // u = e^s keeps the integrand tame for symbols vanishing fast at 0
  auto integrand = [&](double s) {
    double u = std::exp(s);
    double v = f(0.5 * u);
    if (!(v > 0) || !std::isfinite(v)) { bad = true; return 0.0; }
    return u / v;
  };
  using boost::math::quadrature::gauss_kronrod;
  const double a = std::log(x2), b = std::log(xi_sq);
  // the built-in error estimate is very pessimistic on short intervals; two
  // rule orders give a realistic one
  double val = gauss_kronrod<double, 61>::integrate(integrand, a, b, 8, 1e-14);
  double err = std::abs(val - gauss_kronrod<double, 31>::integrate(integrand, a, b, 8, 1e-14));
  require(!bad, ErrorCode::QuadratureFailure, "symbol vanishes inside the integration range");
  require(std::isfinite(val) && err <= 1e-9 * std::max(1.0, std::abs(val)),
          ErrorCode::QuadratureFailure, "quadrature did not reach tolerance");
  return 2 * t + val;
}

struct DecayProbe {
  double constant = 0.0;   // smallest C ≥ 0 satisfying the bound on all samples
  int violations = 0;      // t ≥ 0 samples with <ξ_t> > <x>
  int samples = 0;
};

/// Checks <ξ_t(x)> ≤ (1 + e^{−Ct}) <x>. Positive times must not increase <ξ>;
/// negative times give a lower bound on C.
inline DecayProbe decay_bound_probe(const VectorField& F,
                                    const std::vector<std::pair<Vec, double>>& samples,
                                    double dt = 1e-3) {
  DecayProbe p;
  for (const auto& [x, t] : samples) {
    ++p.samples;
    double lhs = jbracket(integrate_flow(F, x, t, dt).xi);
    double rhs = jbracket(x);
    if (t >= 0) {
      if (lhs > rhs * (1 + 1e-12)) ++p.violations;
      continue;
    }
    double excess = lhs / rhs - 1;
    if (excess > 0) p.constant = std::max(p.constant, std::log(excess) / (-t));
  }
  return p;
}

inline bool decay_bound_holds(const VectorField& F,
                              const std::vector<std::pair<Vec, double>>& samples, double C,
                              double dt = 1e-3) {
  for (const auto& [x, t] : samples) {
    double lhs = jbracket(integrate_flow(F, x, t, dt).xi);
    if (lhs > (1 + std::exp(-C * t)) * jbracket(x) * (1 + 1e-12)) return false;
  }
  return true;
}

/// Rows (x1,x2,F1,F2). Points where F is undefined (origin, linear symbol,
/// non-ball) are written with the continuous extension 0.
inline void export_field_csv(std::ostream& os, const VectorField& F, const Lattice2D& lat) {
  require(F.dim() == 2, ErrorCode::InvalidArgument, "field export is 2D only");
  os << "x1,x2,F1,F2\n";
  for (int j = 0; j < lat.ny; ++j)
    for (int i = 0; i < lat.nx; ++i) {
      Vec x = lat.at(i, j);
      Vec f = x.is_zero() && !F.is_ball_linear() ? Vec(2) : F.eval(x);
      os << fmt17(x[0]) << ',' << fmt17(x[1]) << ',' << fmt17(f[0]) << ',' << fmt17(f[1]) << '\n';
    }
}

}  // namespace tdlab
