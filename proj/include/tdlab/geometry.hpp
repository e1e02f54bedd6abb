#pragma once

#include <algorithm>
#include <functional>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "tdlab/common.hpp"
#include "tdlab/io.hpp"

namespace tdlab {

/// A bounded open set containing the origin, given either by its radial
/// profile (star-shaped w.r.t. 0) or by a membership predicate.
struct DomainModel {
  enum class Kind { radial, indicator };

  Kind kind = Kind::radial;
  int dim = 2;
  std::function<double(const Vec&)> profile;    // unit direction -> radius
  std::function<bool(const Vec&)> indicator;    // point -> inside
  double bounding_radius = 1.0;
  std::string name = "custom";

  bool contains(const Vec& x) const {
    if (kind == Kind::indicator) return indicator(x);
    double n = x.norm();
    if (n == 0.0) return true;
    return n < profile(x * (1.0 / n));
  }

  /// Throws NonInteriorOrigin / InvalidArgument on a malformed model.
  void validate() const {
    require(dim >= 1 && dim <= 3, ErrorCode::InvalidArgument, "dimension must be 1, 2 or 3");
    require(bounding_radius > 0, ErrorCode::InvalidArgument, "bounding radius must be positive");
    if (kind == Kind::indicator) {
      require(static_cast<bool>(indicator), ErrorCode::InvalidArgument, "missing indicator");
      require(indicator(Vec(dim)), ErrorCode::NonInteriorOrigin, name + ": origin not inside");
    } else {
      require(static_cast<bool>(profile), ErrorCode::InvalidArgument, "missing radial profile");
    }
  }

  static DomainModel radial(int d, std::function<double(const Vec&)> rho, double bound,
                            std::string name = "custom") {
    DomainModel m;
    m.kind = Kind::radial;
    m.dim = d;
    m.profile = std::move(rho);
    m.bounding_radius = bound;
    m.name = std::move(name);
    m.validate();
    return m;
  }

  static DomainModel from_indicator(int d, std::function<bool(const Vec&)> ind, double bound,
                                    std::string name = "custom") {
    DomainModel m;
    m.kind = Kind::indicator;
    m.dim = d;
    m.indicator = std::move(ind);
    m.bounding_radius = bound;
    m.name = std::move(name);
    m.validate();
    return m;
  }

  /// Σ_r = {r x : x ∈ Σ}.
  DomainModel dilated(double r) const {
    require(r > 0, ErrorCode::InvalidArgument, "dilation factor must be positive");
    DomainModel m = *this;
    m.bounding_radius = r * bounding_radius;
    if (kind == Kind::radial) {
      auto p = profile;
      m.profile = [p, r](const Vec& u) { return r * p(u); };
    } else {
      auto ind = indicator;
      m.indicator = [ind, r](const Vec& x) { return ind(x * (1.0 / r)); };
    }
    return m;
  }
};

namespace domains {

inline double superellipse_profile(const Vec& u) {
  double q = std::pow(u[0], 4) + std::pow(u[1], 4);
  return std::pow(q, -0.25);
}

// l(θ) = [cos(2θ)^8 + sin(2θ)^8]^{-1/2}
inline double star_profile(const Vec& u) {
  double c2 = u[0] * u[0] - u[1] * u[1];
  double s2 = 2.0 * u[0] * u[1];
  return 1.0 / std::sqrt(std::pow(c2, 8) + std::pow(s2, 8));
}

inline double star_poly(double x1, double x2) {
  double a = x1 * x1 - x2 * x2, b = x1 * x2;
  return std::pow(a, 8) + 256.0 * std::pow(b, 8);
}

inline DomainModel ball(int d, double radius = 1.0) {
  return DomainModel::radial(d, [radius](const Vec&) { return radius; }, radius, "ball");
}
inline DomainModel ball_indicator(int d, double radius = 1.0) {
  return DomainModel::from_indicator(
      d, [radius](const Vec& x) { return x.norm2() < radius * radius; }, radius, "ball");
}
inline DomainModel superellipse() {
  return DomainModel::radial(2, superellipse_profile, std::pow(2.0, 0.25), "superellipse");
}
inline DomainModel superellipse_indicator() {
  return DomainModel::from_indicator(
      2, [](const Vec& x) { return std::pow(x[0], 4) + std::pow(x[1], 4) < 1.0; },
      std::pow(2.0, 0.25), "superellipse");
}
// max of l is (2·2^{-4})^{-1/2} = 2^{3/2}, where cos²(2θ) = sin²(2θ)
inline DomainModel star() {
  return DomainModel::radial(2, star_profile, std::pow(2.0, 1.5), "star");
}
// |x| < l(θ)  <=>  N(x) < (x²)^7
inline DomainModel star_indicator() {
  return DomainModel::from_indicator(
      2,
      [](const Vec& x) {
        double s = x.norm2();
        if (s == 0.0) return true;
        return star_poly(x[0], x[1]) < std::pow(s, 7);
      },
      std::pow(2.0, 1.5), "star");
}
inline DomainModel shifted_ball(const Vec& center, double radius) {
  require(center.norm() < radius, ErrorCode::NonInteriorOrigin, "shifted ball must contain 0");
  return DomainModel::from_indicator(
      center.dim, [center, radius](const Vec& x) { return (x - center).norm2() < radius * radius; },
      center.norm() + radius, "shifted_ball");
}

}  // namespace domains

/// Intervals of μ ≥ 0 on which μx lies in Σ. The first interval starts at 0.
inline std::vector<std::pair<double, double>> ray_intervals(const DomainModel& dom, const Vec& x,
                                                            int prescan = 4096) {
  double nx = x.norm();
  require(nx > 0, ErrorCode::InvalidArgument, "ray direction must be nonzero");
  if (dom.kind == DomainModel::Kind::radial) {
    double rho = dom.profile(x * (1.0 / nx));
    require(rho > 0 && std::isfinite(rho), ErrorCode::RayResolutionFailure, "bad radial profile");
    return {{0.0, rho / nx}};
  }
  require(dom.indicator(Vec(dom.dim)), ErrorCode::NonInteriorOrigin, dom.name + ": origin not inside");
  const double mu_max = 1.1 * dom.bounding_radius / nx;
  auto in = [&](double mu) { return dom.indicator(x * mu); };
  auto refine = [&](double lo, double hi, bool lo_state) {
    for (int it = 0; it < 200 && hi - lo > 1e-12 * hi; ++it) {
      double mid = 0.5 * (lo + hi);
      if (in(mid) == lo_state) lo = mid; else hi = mid;
    }
    require(hi - lo <= 1e-12 * hi, ErrorCode::RayResolutionFailure, "bisection did not converge");
    return 0.5 * (lo + hi);
  };
  std::vector<std::pair<double, double>> out;
  bool state = true;
  double start = 0.0, prev = 0.0;
  for (int i = 1; i <= prescan; ++i) {
    double mu = mu_max * i / prescan;
    bool s = in(mu);
    if (s != state) {
      double c = refine(prev, mu, state);
      if (state) out.emplace_back(start, c); else start = c;
      state = s;
    }
    prev = mu;
  }
  require(!state, ErrorCode::RayResolutionFailure, dom.name + ": set extends past bounding radius");
  return out;
}

/// ε-regularized ray integral. The divergent piece of the innermost interval
/// is cancelled against ln ε in closed form.
inline double r_sigma(const DomainModel& dom, const Vec& x, double eps = 1e-6) {
  require(!x.is_zero(), ErrorCode::InvalidArgument, "R_sigma undefined at the origin");
  auto iv = ray_intervals(dom, x);
  double acc = 0.0;
  bool cancelled = false;
  for (auto [a, b] : iv) {
    if (b <= eps) continue;
    if (a == 0.0) {
      acc += std::log(b);
      cancelled = true;
    } else {
      acc += std::log(b / std::max(a, eps));
    }
  }
  if (!cancelled) acc += std::log(eps);
  return acc;
}

/// G_Σ with optional analytic closed form. Closed forms carry their own
/// gradient and Laplacian; custom shapes go through the ray integral.
class ShapeFunction {
 public:
  enum class Tag { ball, superellipse, star, custom };

  ShapeFunction(DomainModel dom, Tag tag = Tag::custom) : dom_(std::move(dom)), tag_(tag) {
    dom_.validate();
    if (tag_ == Tag::superellipse || tag_ == Tag::star)
      require(dom_.dim == 2, ErrorCode::InvalidArgument, "closed form only in 2D");
  }

  static ShapeFunction ball(int d) { return {domains::ball(d), Tag::ball}; }
  static ShapeFunction superellipse() { return {domains::superellipse(), Tag::superellipse}; }
  static ShapeFunction star() { return {domains::star(), Tag::star}; }

  const DomainModel& domain() const { return dom_; }
  Tag tag() const { return tag_; }
  int dim() const { return dom_.dim; }
  bool has_closed_form() const { return tag_ != Tag::custom; }

  double eval(const Vec& x) const {
    require(!x.is_zero(), ErrorCode::InvalidArgument, "G_sigma undefined at the origin");
    switch (tag_) {
      case Tag::ball: return -0.5 * std::log(x.norm2());
      case Tag::superellipse: return -0.25 * std::log(std::pow(x[0], 4) + std::pow(x[1], 4));
      case Tag::star:
        return 3.5 * std::log(x.norm2()) - 0.5 * std::log(domains::star_poly(x[0], x[1]));
      case Tag::custom: break;
    }
    return 0.5 * (r_sigma(dom_, x) + r_sigma(dom_, -x));
  }

  Vec grad(const Vec& x) const {
    require(!x.is_zero(), ErrorCode::InvalidArgument, "grad G undefined at the origin");
    Vec g(x.dim);
    switch (tag_) {
      case Tag::ball: {
        double s = x.norm2();
        for (int j = 0; j < x.dim; ++j) g[j] = -x[j] / s;
        return g;
      }
      case Tag::superellipse: {
        double q = std::pow(x[0], 4) + std::pow(x[1], 4);
        g[0] = -std::pow(x[0], 3) / q;
        g[1] = -std::pow(x[1], 3) / q;
        return g;
      }
      case Tag::star: {
        double x1 = x[0], x2 = x[1], s = x.norm2();
        double a = x1 * x1 - x2 * x2;
        double n = domains::star_poly(x1, x2);
        double a7 = std::pow(a, 7);
        double d1 = 16 * x1 * a7 + 2048 * std::pow(x1, 7) * std::pow(x2, 8);
        double d2 = -16 * x2 * a7 + 2048 * std::pow(x1, 8) * std::pow(x2, 7);
        g[0] = 7 * x1 / s - 0.5 * d1 / n;
        g[1] = 7 * x2 / s - 0.5 * d2 / n;
        return g;
      }
      case Tag::custom: break;
    }
    double h = 1e-5 * x.norm();
    require(h > std::numeric_limits<double>::min() * 1e3, ErrorCode::StepUnderflow,
            "finite-difference step underflows");
    for (int j = 0; j < x.dim; ++j) {
      Vec e(x.dim);
      e[j] = h;
      g[j] = (eval(x + e) - eval(x - e)) / (2 * h);
    }
    return g;
  }

  /// Analytic ΔG for closed forms; empty for custom shapes.
  std::optional<double> laplacian(const Vec& x) const {
    double s = x.norm2();
    switch (tag_) {
      case Tag::ball: return -(x.dim - 2) / s;
      case Tag::superellipse: {
        double q = std::pow(x[0], 4) + std::pow(x[1], 4);
        double r = 0;
        for (int j = 0; j < 2; ++j) r += -3 * x[j] * x[j] / q + 4 * std::pow(x[j], 6) / (q * q);
        return r;
      }
      case Tag::star: {
        double x1 = x[0], x2 = x[1];
        double a = x1 * x1 - x2 * x2, b = x1 * x2;
        double n = domains::star_poly(x1, x2);
        double a7 = std::pow(a, 7);
        double d1 = 16 * x1 * a7 + 2048 * std::pow(x1, 7) * std::pow(x2, 8);
        double d2 = -16 * x2 * a7 + 2048 * std::pow(x1, 8) * std::pow(x2, 7);
        double lap_n = 224 * std::pow(a, 6) * s + 14336 * std::pow(b, 6) * s;
        // Δ(7/2 ln s) vanishes in 2D
        return -0.5 * (lap_n / n - (d1 * d1 + d2 * d2) / (n * n));
      }
      case Tag::custom: break;
    }
    return std::nullopt;
  }

 private:
  DomainModel dom_;
  Tag tag_;
};

inline double g_sigma(const ShapeFunction& s, const Vec& x) { return s.eval(x); }
inline Vec grad_g(const ShapeFunction& s, const Vec& x) { return s.grad(x); }

/// Deterministic, roughly uniform directions on the unit sphere of R^d.
inline std::vector<Vec> sample_directions(int d, int n) {
  std::vector<Vec> out;
  if (d == 1) return {Vec{1.0}, Vec{-1.0}};
  for (int i = 0; i < n; ++i) {
    if (d == 2) {
      double th = 2 * pi * (i + 0.5) / n;
      out.push_back(Vec{std::cos(th), std::sin(th)});
    } else {
      double z = 1 - 2 * (i + 0.5) / n;
      double r = std::sqrt(1 - z * z);
      double ph = i * pi * (3 - std::sqrt(5.0));
      out.push_back(Vec{r * std::cos(ph), r * std::sin(ph), z});
    }
  }
  return out;
}

struct SymmetryReport {
  double max_defect = 0.0;
  int sampled_directions = 0;
};

inline SymmetryReport check_assumption_sigma(const DomainModel& dom, int n_directions) {
  SymmetryReport rep;
  auto measure = [&](const Vec& u) {
    double len = 0;
    for (auto [a, b] : ray_intervals(dom, u)) len += b - a;
    return len;
  };
  for (const Vec& u : sample_directions(dom.dim, n_directions)) {
    rep.max_defect = std::max(rep.max_defect, std::abs(measure(u) - measure(-u)));
    ++rep.sampled_directions;
  }
  return rep;
}

/// Point of ∂Σ̃_r in direction x: y = r e^{G(x)} x.
inline Vec tilde_boundary_point(const ShapeFunction& s, const Vec& x, double r) {
  return x * (r * std::exp(s.eval(x)));
}

inline double tilde_orthogonality_residual(const ShapeFunction& s, double r, int n_samples) {
  require(r > 0 && n_samples > 0, ErrorCode::InvalidArgument, "need r > 0 and samples");
  const int d = s.dim();
  if (d == 1) return 0.0;
  const double h = 1e-5;
  double worst = 0.0;
  auto check = [&](const Vec& y, const Vec& v) {
    Vec g = s.grad(y);  // F_Σ is a positive multiple of -∇G
    double den = g.norm() * v.norm();
    if (den > 0) worst = std::max(worst, std::abs(dot(g, v)) / den);
  };
  if (d == 2) {
    for (int i = 0; i < n_samples; ++i) {
      double th = 2 * pi * (i + 0.5) / n_samples;
      auto y = [&](double t) { return tilde_boundary_point(s, Vec{std::cos(t), std::sin(t)}, r); };
      check(y(th), (y(th + h) - y(th - h)) * (1.0 / (2 * h)));
    }
    return worst;
  }
  for (const Vec& u : sample_directions(3, n_samples)) {
    double th = std::acos(std::clamp(u[2], -1.0, 1.0)), ph = std::atan2(u[1], u[0]);
    th = std::clamp(th, 1e-3, pi - 1e-3);
    auto y = [&](double a, double b) {
      return tilde_boundary_point(
          s, Vec{std::sin(a) * std::cos(b), std::sin(a) * std::sin(b), std::cos(a)}, r);
    };
    Vec p = y(th, ph);
    check(p, (y(th + h, ph) - y(th - h, ph)) * (1.0 / (2 * h)));
    check(p, (y(th, ph + h) - y(th, ph - h)) * (1.0 / (2 * h)));
  }
  return worst;
}

/// Uniform 2D lattice spec used by the CSV exporters.
struct Lattice2D {
  double x_min = -2, x_max = 2, y_min = -2, y_max = 2;
  int nx = 41, ny = 41;
  Vec at(int i, int j) const {
    double x = nx > 1 ? x_min + (x_max - x_min) * i / (nx - 1) : x_min;
    double y = ny > 1 ? y_min + (y_max - y_min) * j / (ny - 1) : y_min;
    return Vec{x, y};
  }
};

/// Rows (x1,x2,G,dG1,dG2); the origin, if on the lattice, is skipped.
inline void export_g_csv(std::ostream& os, const ShapeFunction& s, const Lattice2D& lat) {
  require(s.dim() == 2, ErrorCode::InvalidArgument, "G export is 2D only");
  os << "x1,x2,G,dG1,dG2\n";
  for (int j = 0; j < lat.ny; ++j)
    for (int i = 0; i < lat.nx; ++i) {
      Vec x = lat.at(i, j);
      if (x.is_zero()) continue;
      Vec g = s.grad(x);
      os << fmt17(x[0]) << ',' << fmt17(x[1]) << ',' << fmt17(s.eval(x)) << ',' << fmt17(g[0])
         << ',' << fmt17(g[1]) << '\n';
    }
}

/// Closed polylines of ∂Σ̃_r, rows (r,index,x1,x2).
inline void export_tilde_boundaries_csv(std::ostream& os, const ShapeFunction& s,
                                        const std::vector<double>& radii, int n_points) {
  require(s.dim() == 2, ErrorCode::InvalidArgument, "boundary export is 2D only");
  os << "r,index,x1,x2\n";
  for (double r : radii)
    for (int i = 0; i <= n_points; ++i) {
      double th = 2 * pi * i / n_points;
      Vec y = tilde_boundary_point(s, Vec{std::cos(th), std::sin(th)}, r);
      os << fmt17(r) << ',' << i << ',' << fmt17(y[0]) << ',' << fmt17(y[1]) << '\n';
    }
}

}  // namespace tdlab
