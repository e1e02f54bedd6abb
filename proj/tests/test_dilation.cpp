#include <catch_amalgamated.hpp>

#include <random>
#include <sstream>

#include "tdlab/dilation.hpp"

using namespace tdlab;
using Catch::Approx;

namespace {

VectorField ball_linear(int d) { return {ShapeFunction::ball(d), Symbol::linear()}; }

std::vector<Vec> ring_points(int n, double lo, double hi, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> a(0, 2 * pi), r(lo, hi);
  std::vector<Vec> out;
  for (int i = 0; i < n; ++i) {
    double t = a(rng), s = r(rng);
    out.push_back(Vec{s * std::cos(t), s * std::sin(t)});
  }
  return out;
}

}  // namespace

TEST_CASE("symbols") {
  auto lin = Symbol::linear();
  auto g = Symbol::gamma(0.5);
  CHECK(lin(0.0) == 0.0);
  CHECK(g(0.0) == 0.0);
  CHECK(lin(1.5) == Approx(3.0));
  CHECK(g(2.0) == Approx(2 * 8 / 4.5));
  for (double u : {0.1, 0.7, 3.0}) {
    double h = 1e-6;
    CHECK(g.deriv(u) == Approx((g(u + h) - g(u - h)) / (2 * h)).epsilon(1e-8));
  }
  CHECK_THROWS_AS(Symbol::gamma(0.0), Error);
  CHECK_THROWS_AS(Symbol::custom([](double u) { return 1 + u; }, [](double) { return 1.0; }), Error);
  CHECK_THROWS_AS(Symbol::custom([](double u) { return -u; }, [](double) { return -1.0; }), Error);
  auto c = Symbol::custom([](double u) { return u * u; }, [](double u) { return 2 * u; });
  CHECK(c(3.0) == 9.0);
}

TEST_CASE("field values") {
  Vec f = field_eval(ball_linear(2), Vec{3.0, 4.0});
  CHECK(f[0] == 3.0);
  CHECK(f[1] == 4.0);
  VectorField se(ShapeFunction::superellipse(), Symbol::linear());
  Vec a = se.eval(Vec{1.0, 1.0});
  CHECK(a[0] == Approx(1.0));
  CHECK(a[1] == Approx(1.0));
  // F_j = x_j^3 x^2 / (x1^4 + x2^4)
  for (const Vec& x : ring_points(20, 0.1, 3, 1)) {
    Vec v = se.eval(x);
    double q = std::pow(x[0], 4) + std::pow(x[1], 4);
    for (int j = 0; j < 2; ++j)
      CHECK(v[j] == Approx(std::pow(x[j], 3) * x.norm2() / q).epsilon(1e-13));
  }
  VectorField sg(ShapeFunction::superellipse(), Symbol::gamma(1.0));
  CHECK(sg.eval(Vec{0.0, 0.0}).norm() == 0.0);
  try {
    se.eval(Vec{0.0, 0.0});
    FAIL("expected OriginSingularity");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::OriginSingularity);
  }
}

TEST_CASE("analytic divergence matches finite differences") {
  for (auto F : {VectorField(ShapeFunction::superellipse(), Symbol::linear()),
                 VectorField(ShapeFunction::star(), Symbol::gamma(0.3)),
                 VectorField(ShapeFunction::ball(3), Symbol::gamma(1.0))}) {
    std::vector<Vec> pts = F.dim() == 2 ? ring_points(10, 0.3, 2.5, 3)
                                        : std::vector<Vec>{Vec{0.3, -0.7, 1.1}, Vec{1.0, 1.0, 0.2}};
    for (const Vec& x : pts) {
      double h = 1e-5, fd = 0;
      for (int j = 0; j < x.dim; ++j) {
        Vec e(x.dim);
        e[j] = h;
        fd += (F.eval(x + e)[j] - F.eval(x - e)[j]) / (2 * h);
      }
      CHECK(F.divergence(x) == Approx(fd).margin(1e-6 * (1 + std::abs(fd))));
    }
  }
  VectorField custom(ShapeFunction(domains::superellipse()), Symbol::gamma(1.0));
  VectorField closed(ShapeFunction::superellipse(), Symbol::gamma(1.0));
  for (const Vec& x : ring_points(5, 0.5, 2, 5))
    CHECK(custom.divergence(x) == Approx(closed.divergence(x)).margin(1e-4));
}

TEST_CASE("ball flow is e^{-t}x with Jacobian e^{-dt}") {
  auto F = ball_linear(2);
  double worst = 0, worst_j = 0;
  for (int i = 0; i < 10; ++i)
    for (int j = 0; j < 10; ++j) {
      Vec x{-2.0 + 4.0 * i / 9, -2.0 + 4.0 * j / 9};
      for (double t : {-1.0, -0.4, 0.3, 1.0}) {
        auto r = integrate_flow(F, x, t, 1e-3);
        worst = std::max(worst, (r.xi - x * std::exp(-t)).norm());
        worst_j = std::max(worst_j, std::abs(r.jacobian / std::exp(-2 * t) - 1));
      }
    }
  CHECK(worst < 1e-8);
  CHECK(worst_j < 1e-10);
}

TEST_CASE("origin is a fixed point") {
  for (auto F : {ball_linear(2), VectorField(ShapeFunction::star(), Symbol::gamma(1.0))}) {
    auto r = integrate_flow(F, Vec{0.0, 0.0}, -1.5);
    CHECK(r.xi.norm() == 0.0);
  }
}

TEST_CASE("scalar reduction of the flow") {
  for (auto F : {VectorField(ShapeFunction::superellipse(), Symbol::gamma(1.0)),
                 VectorField(ShapeFunction::star(), Symbol::gamma(0.3)),
                 VectorField(ShapeFunction::superellipse(), Symbol::linear())}) {
    for (const Vec& x : ring_points(5, 0.5, 2, 7)) {
      // d|ξ|²/dt + 2 f(|ξ|²/2) along the trajectory, by central differences in t
      for (double t : {-0.5, 0.2}) {
        double h = 1e-4;
        double a = integrate_flow(F, x, t + h, 1e-4).xi.norm2();
        double b = integrate_flow(F, x, t - h, 1e-4).xi.norm2();
        double u = integrate_flow(F, x, t, 1e-4).xi.norm2();
        double res = (a - b) / (2 * h) + 2 * F.symbol()(0.5 * u);
        CHECK(std::abs(res) < 1e-6 * (1 + u));
        CHECK(u == Approx(flow_radius_sq(F.symbol(), x.norm2(), t)).epsilon(1e-10));
      }
    }
  }
}

TEST_CASE("implicit formula") {
  auto lin = Symbol::linear();
  CHECK(implicit_residual(lin, Vec{1.0}, -1.0, std::exp(2.0)) == Approx(0.0).margin(1e-12));
  CHECK(implicit_residual(lin, Vec{0.3, 0.4}, 0.0, 0.25) == 0.0);
  for (double g : {1.0, 0.3, 0.1}) {
    VectorField F(ShapeFunction::superellipse(), Symbol::gamma(g));
    for (const Vec& x : ring_points(8, 0.3, 2.0, 11))
      for (double t : {-0.1, -0.5, -1.0}) {
        double xi2 = integrate_flow(F, x, t, 1e-3).xi.norm2();
        CHECK(std::abs(implicit_residual(F.symbol(), x, t, xi2)) < 1e-6);
        // 1/f(u/2) = 1/u + 4γ/u³ integrates in closed form
        double a = x.norm2();
        double exact = std::log(xi2 / a) + 2 * g * (1 / (a * a) - 1 / (xi2 * xi2));
        CHECK(implicit_residual(F.symbol(), x, t, xi2) == Approx(2 * t + exact).margin(1e-11));
      }
  }
}

TEST_CASE("implicit formula rejects a vanishing symbol") {
  // root at u = 2 slips between the constructor's probe points
  auto f = Symbol::custom([](double u) { return u * std::pow(u - 2.0, 2); },
                          [](double u) { return (u - 2) * (3 * u - 2); });
  CHECK(f(2.0) == 0.0);
  try {
    implicit_residual(f, Vec{1.0, 1.0}, -1.0, 16.0);
    FAIL("expected QuadratureFailure");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::QuadratureFailure);
  }
}

TEST_CASE("group law and monotonicity") {
  VectorField F(ShapeFunction::star(), Symbol::gamma(1.0));
  for (const Vec& x : ring_points(5, 0.5, 1.5, 13)) {
    for (auto [s, t] : {std::pair{-2.0, 1.0}, {0.5, 1.5}, {-1.0, -1.0}, {2.0, -2.0}}) {
      Vec a = integrate_flow(F, x, s + t).xi;
      Vec b = integrate_flow(F, integrate_flow(F, x, t).xi, s).xi;
      CHECK((a - b).norm() < 1e-9 * (1 + a.norm()));
    }
    double prev = 1e300;
    for (double t = -2; t <= 2; t += 0.25) {
      auto r = integrate_flow(F, x, t);
      CHECK(r.xi.norm2() <= prev);
      CHECK(r.jacobian > 0);
      prev = r.xi.norm2();
    }
  }
}

TEST_CASE("polar reduction against direct integration") {
  for (auto f : {Symbol::linear(), Symbol::gamma(1.0), Symbol::gamma(0.1)})
    for (double u0 : {1e-3, 0.5, 4.0, 40.0})
      for (double t : {-1.0, -0.2, 0.3, 2.0})
        CHECK(radial_flow(f, u0, t) == Approx(flow_radius_sq(f, u0, t, 1e-4)).epsilon(1e-9));

  for (auto F : {VectorField(ShapeFunction::superellipse(), Symbol::gamma(1.0)),
                 VectorField(ShapeFunction::star(), Symbol::gamma(0.5)),
                 VectorField(ShapeFunction::ball(3), Symbol::gamma(0.3))}) {
    std::vector<Vec> pts = F.dim() == 2 ? ring_points(12, 0.4, 2.5, 19)
                                        : std::vector<Vec>{Vec{0.3, -0.7, 1.1}, Vec{1.0, 1.0, 0.2}};
    for (const Vec& x : pts)
      for (double t : {-0.05, 0.3}) {
        auto a = integrate_flow(F, x, t, 1e-4);
        auto b = reduced_flow(F, x, t);
        CHECK((a.xi - b.xi).norm() < 1e-8 * (1 + a.xi.norm()));
        CHECK(a.log_jacobian == Approx(b.log_jacobian).margin(1e-5));
      }
  }
}

TEST_CASE("tabulated angular flow") {
  for (auto shape : {ShapeFunction::superellipse(), ShapeFunction::star()}) {
    AngularFlow tab(shape);
    // zeros of ∂θG: the axes and diagonals, plus the π/8 family for the star
    CHECK(tab.fixed_points().size() == (shape.tag() == ShapeFunction::Tag::star ? 16u : 8u));
    for (int i = 0; i < 60; ++i) {
      double th = 0.1047 * i + 0.0007, tau = 0.006 * ((i * 37) % 100) - 0.3;
      auto a = tab(th, tau);
      auto b = AngularFlow::integrate(shape, th, tau, 2e-5);
      CHECK(a.theta == Approx(b.theta).margin(1e-9));
      CHECK(a.lap == Approx(b.lap).margin(1e-7));
    }
    auto axis = tab(0.0, 0.25);
    CHECK(axis.theta == 0.0);
  }
}

TEST_CASE("step budget") {
  try {
    integrate_flow(ball_linear(2), Vec{1.0, 0.0}, 10.0, 1e-6, 1000);
    FAIL("expected StepBudgetExceeded");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::StepBudgetExceeded);
  }
}

TEST_CASE("decay bound") {
  std::vector<std::pair<Vec, double>> samples;
  for (const Vec& x : ring_points(10, 0.1, 3, 17))
    for (double t : {-1.5, -0.5, 0.5, 1.5}) samples.emplace_back(x, t);
  samples.emplace_back(Vec{0.0, 0.0}, -1.0);

  auto ball = ball_linear(2);
  auto p = decay_bound_probe(ball, samples);
  CHECK(p.violations == 0);
  CHECK(p.samples == static_cast<int>(samples.size()));
  CHECK(p.constant <= 2.0);
  CHECK(decay_bound_holds(ball, samples, 2.0));
  // exact flow: <e^{-t}x> ≤ (1 + e^{-2t}) <x> for t < 0
  for (const auto& [x, t] : samples)
    CHECK(jbracket(x * std::exp(-t)) <= (1 + std::exp(-2 * t)) * jbracket(x));

  VectorField star(ShapeFunction::star(), Symbol::gamma(1.0));
  auto q = decay_bound_probe(star, samples);
  CHECK(q.violations == 0);
  CHECK(decay_bound_holds(star, samples, q.constant + 1e-9));
}

TEST_CASE("field CSV") {
  std::ostringstream os;
  export_field_csv(os, VectorField(ShapeFunction::superellipse(), Symbol::linear()),
                   Lattice2D{-1, 1, -1, 1, 3, 3});
  std::string s = os.str();
  CHECK(s.find("\n1,1,1,1\n") != std::string::npos);
  CHECK(s.find("\n0,0,0,0\n") != std::string::npos);
}
