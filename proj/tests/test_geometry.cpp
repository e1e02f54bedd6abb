#include <catch_amalgamated.hpp>

#include <random>
#include <sstream>

#include "tdlab/geometry.hpp"

using namespace tdlab;
using Catch::Approx;

namespace {

// Midpoint-rule ray integral of the indicator, regularized at eps.
double brute_r(const DomainModel& d, const Vec& x, double eps, double mu_max, int n) {
  // ∫_eps^{mu_max} dμ/μ 1(μx) in log-spaced midpoint form
  double a = std::log(eps), b = std::log(mu_max), h = (b - a) / n, acc = 0;
  for (int i = 0; i < n; ++i) {
    double mu = std::exp(a + (i + 0.5) * h);
    if (d.contains(x * mu)) acc += h;
  }
  return acc + std::log(eps);
}

double brute_length(const DomainModel& d, const Vec& u, double mu_max, int n) {
  double h = mu_max / n, acc = 0;
  for (int i = 0; i < n; ++i)
    if (d.contains(u * ((i + 0.5) * h))) acc += h;
  return acc;
}

std::vector<Vec> random_points(int n, int dim, unsigned seed, double lo = 0.05, double hi = 5.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ang(0, 2 * pi), rad(lo, hi), z(-1, 1);
  std::vector<Vec> out;
  for (int i = 0; i < n; ++i) {
    double r = rad(rng);
    if (dim == 1) out.push_back(Vec{z(rng) > 0 ? r : -r});
    else if (dim == 2) { double t = ang(rng); out.push_back(Vec{r * std::cos(t), r * std::sin(t)}); }
    else {
      double c = z(rng), s = std::sqrt(1 - c * c), p = ang(rng);
      out.push_back(Vec{r * s * std::cos(p), r * s * std::sin(p), r * c});
    }
  }
  return out;
}

}  // namespace

TEST_CASE("unit ball ray integral") {
  auto ball = domains::ball(2);
  CHECK(r_sigma(ball, Vec{2.0, 0.0}, 1e-6) == Approx(-std::log(2.0)).margin(1e-14));
  CHECK(r_sigma(ball, Vec{0.6, 0.8}) == Approx(0.0).margin(1e-14));
  auto ind = domains::ball_indicator(2);
  CHECK(r_sigma(ind, Vec{2.0, 0.0}, 1e-6) == Approx(-std::log(2.0)).margin(1e-11));
  CHECK(brute_r(ind, Vec{2.0, 0.0}, 1e-6, 2.0, 400000) == Approx(-std::log(2.0)).margin(1e-4));
}

TEST_CASE("regularization is independent of eps once eps|x| is inside") {
  auto ind = domains::superellipse_indicator();
  Vec x{0.3, -1.7};
  double a = r_sigma(ind, x, 1e-3), b = r_sigma(ind, x, 1e-9);
  CHECK(a == Approx(b).margin(1e-13));
}

TEST_CASE("indicator route agrees with brute-force quadrature") {
  for (auto dom : {domains::superellipse_indicator(), domains::star_indicator()}) {
    for (const Vec& x : random_points(5, 2, 11)) {
      double mu_max = 1.2 * dom.bounding_radius / x.norm();
      CHECK(r_sigma(dom, x) == Approx(brute_r(dom, x, 1e-6, mu_max, 400000)).margin(2e-4));
    }
  }
}

TEST_CASE("ray integral and shape function homogeneity") {
  auto ind = domains::star_indicator();
  for (const Vec& x : random_points(10, 2, 3)) {
    for (double t : {0.5, 2.0, 10.0}) {
      CHECK(r_sigma(ind, x * t) == Approx(r_sigma(ind, x) - std::log(t)).margin(1e-10));
    }
  }
  for (auto s : {ShapeFunction::ball(2), ShapeFunction::ball(3), ShapeFunction::superellipse(),
                 ShapeFunction::star()}) {
    for (const Vec& x : random_points(20, s.dim(), 5)) {
      for (double t : {0.5, 2.0, 10.0}) {
        CHECK(std::abs(s.eval(x * t) - s.eval(x) + std::log(t)) < 1e-8);
        Vec d = s.grad(x * t) * t - s.grad(x);
        CHECK(d.norm() < 1e-10 * (1 + s.grad(x).norm()));
      }
    }
  }
  ShapeFunction custom(domains::superellipse_indicator());
  for (const Vec& x : random_points(5, 2, 6))
    CHECK(std::abs(custom.eval(x * 2.0) - custom.eval(x) + std::log(2.0)) < 1e-10);
}

TEST_CASE("closed forms at reference points") {
  CHECK(ShapeFunction::superellipse().eval(Vec{1.0, 1.0}) == Approx(-0.25 * std::log(2.0)));
  CHECK(ShapeFunction::star().eval(Vec{1.0, 0.0}) == Approx(0.0).margin(1e-15));
  Vec g = ShapeFunction::ball(2).grad(Vec{2.0, 0.0});
  CHECK(g[0] == Approx(-0.5));
  CHECK(g[1] == Approx(0.0).margin(1e-15));
  Vec ge = ShapeFunction::superellipse().grad(Vec{1.0, 1.0});
  CHECK(ge[0] == Approx(-0.5));
  CHECK(ge[1] == Approx(-0.5));
}

TEST_CASE("closed forms match the indicator route") {
  struct Case { ShapeFunction closed; DomainModel ind; };
  std::vector<Case> cases{{ShapeFunction::ball(2), domains::ball_indicator(2)},
                          {ShapeFunction::superellipse(), domains::superellipse_indicator()},
                          {ShapeFunction::star(), domains::star_indicator()}};
  for (auto& c : cases) {
    ShapeFunction q(c.ind);
    for (const Vec& x : random_points(25, 2, 17)) {
      double a = c.closed.eval(x), b = q.eval(x);
      CHECK(std::abs(a - b) <= 1e-8 * std::max(1.0, std::abs(a)));
    }
  }
  // radial profile route for the star, against the polynomial closed form
  ShapeFunction radial(domains::star());
  for (const Vec& x : random_points(25, 2, 19))
    CHECK(radial.eval(x) == Approx(ShapeFunction::star().eval(x)).margin(1e-12));
}

TEST_CASE("Euler relation") {
  for (auto s : {ShapeFunction::ball(1), ShapeFunction::ball(2), ShapeFunction::ball(3),
                 ShapeFunction::superellipse(), ShapeFunction::star()}) {
    for (const Vec& x : random_points(50, s.dim(), 23))
      CHECK(std::abs(dot(x, s.grad(x)) + 1) < 1e-10);
  }
  ShapeFunction fd(domains::superellipse());
  for (const Vec& x : random_points(20, 2, 29)) CHECK(std::abs(dot(x, fd.grad(x)) + 1) < 1e-5);
  ShapeFunction fd_ind(domains::star_indicator());
  for (const Vec& x : random_points(5, 2, 31)) CHECK(std::abs(dot(x, fd_ind.grad(x)) + 1) < 1e-5);
}

TEST_CASE("finite-difference gradient tracks the analytic one") {
  ShapeFunction fd(domains::star());
  for (const Vec& x : random_points(20, 2, 37)) {
    Vec d = fd.grad(x) - ShapeFunction::star().grad(x);
    CHECK(d.norm() < 1e-6 * ShapeFunction::star().grad(x).norm());
  }
}

TEST_CASE("analytic Laplacians against finite differences of the gradient") {
  for (auto s : {ShapeFunction::ball(2), ShapeFunction::ball(3), ShapeFunction::superellipse(),
                 ShapeFunction::star()}) {
    for (const Vec& x : random_points(10, s.dim(), 41, 0.5, 2.0)) {
      double h = 1e-5, fd = 0;
      for (int j = 0; j < x.dim; ++j) {
        Vec e(x.dim);
        e[j] = h;
        fd += (s.grad(x + e)[j] - s.grad(x - e)[j]) / (2 * h);
      }
      double lap = *s.laplacian(x);
      CHECK(lap == Approx(fd).margin(1e-5 * (1 + std::abs(fd))));
    }
  }
}

TEST_CASE("origin and degenerate input") {
  CHECK_THROWS_AS(ShapeFunction::ball(2).eval(Vec{0.0, 0.0}), Error);
  CHECK_THROWS_AS(r_sigma(domains::ball(2), Vec{0.0, 0.0}), Error);
  try {
    domains::shifted_ball(Vec{2.0, 0.0}, 1.0);
    FAIL("expected rejection");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NonInteriorOrigin);
  }
  auto outside = DomainModel::from_indicator(
      2, [](const Vec& x) { return x.norm() < 1.0; }, 1.0, "ok");
  outside.indicator = [](const Vec& x) { return x.norm() > 0.5 && x.norm() < 1.0; };
  try {
    r_sigma(outside, Vec{1.0, 0.0});
    FAIL("expected rejection");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NonInteriorOrigin);
  }
  auto unbounded = DomainModel::from_indicator(2, [](const Vec&) { return true; }, 1.0, "all");
  try {
    r_sigma(unbounded, Vec{1.0, 0.0});
    FAIL("expected rejection");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::RayResolutionFailure);
  }
  CHECK_THROWS_AS(ShapeFunction(domains::ball(2)).grad(Vec{1e-310, 0.0}), Error);
}

TEST_CASE("non-convex ray with several intervals") {
  // annulus plus inner disc: 1 on [0,1) ∪ [2,3)
  auto dom = DomainModel::from_indicator(
      2, [](const Vec& x) { double r = x.norm(); return r < 1.0 || (r >= 2.0 && r < 3.0); }, 3.0,
      "rings");
  Vec x{0.0, 1.0};
  CHECK(r_sigma(dom, x) == Approx(std::log(1.0) + std::log(3.0 / 2.0)).margin(1e-11));
  CHECK(r_sigma(dom, x) == Approx(brute_r(dom, x, 1e-6, 3.3, 400000)).margin(2e-4));
}

TEST_CASE("symmetry defect") {
  CHECK(check_assumption_sigma(domains::superellipse(), 64).max_defect < 1e-14);
  CHECK(check_assumption_sigma(domains::superellipse_indicator(), 64).max_defect < 1e-10);
  CHECK(check_assumption_sigma(domains::star_indicator(), 64).max_defect < 1e-10);
  CHECK(check_assumption_sigma(domains::ball_indicator(3), 50).max_defect < 1e-10);

  Vec c{0.3, 0.1};
  auto shifted = domains::shifted_ball(c, 1.0);
  auto rep = check_assumption_sigma(shifted, 64);
  CHECK(rep.sampled_directions == 64);
  CHECK(rep.max_defect > 0.1);
  double worst = 0;
  for (const Vec& u : sample_directions(2, 64)) {
    double a = brute_length(shifted, u, 2.0, 200000), b = brute_length(shifted, -u, 2.0, 200000);
    worst = std::max(worst, std::abs(a - b));
  }
  CHECK(rep.max_defect == Approx(worst).margin(1e-4));
  // chord lengths along ±u differ by 2|u·c|
  CHECK(rep.max_defect == Approx(2 * c.norm()).margin(1e-3));
}

TEST_CASE("shape function sees only the symmetrized set") {
  // Σ = shifted disc; its symmetric counterpart has profile sqrt(ρ(u)ρ(−u))
  Vec c{0.4, -0.2};
  auto shifted = domains::shifted_ball(c, 1.0);
  auto rho = [c](const Vec& u) {
    double b = dot(u, c);
    return b + std::sqrt(b * b - c.norm2() + 1.0);
  };
  auto sym = DomainModel::radial(2, [rho](const Vec& u) { return std::sqrt(rho(u) * rho(-u)); },
                                 1.5, "symmetrized");
  ShapeFunction a(shifted), b(sym);
  for (const Vec& x : random_points(20, 2, 43))
    CHECK(a.eval(x) == Approx(b.eval(x)).margin(1e-10));
  CHECK(check_assumption_sigma(sym, 64).max_defect < 1e-14);

  // presenting a symmetric radial profile through its indicator changes nothing
  ShapeFunction r(domains::superellipse()), i(domains::superellipse_indicator());
  for (const Vec& x : random_points(20, 2, 47)) CHECK(r.eval(x) == Approx(i.eval(x)).margin(1e-10));
}

TEST_CASE("dilated domain") {
  auto s3 = domains::superellipse().dilated(3.0);
  CHECK(s3.contains(Vec{2.9, 0.0}));
  CHECK_FALSE(s3.contains(Vec{3.1, 0.0}));
  auto i3 = domains::superellipse_indicator().dilated(3.0);
  CHECK(i3.contains(Vec{2.9, 0.0}));
  CHECK_FALSE(i3.contains(Vec{3.1, 0.0}));
  CHECK(r_sigma(i3, Vec{1.0, 0.0}) == Approx(std::log(3.0)).margin(1e-11));
}

TEST_CASE("level sets of G are orthogonal to the gradient") {
  CHECK(tilde_orthogonality_residual(ShapeFunction::ball(2), 2.0, 64) < 1e-9);
  CHECK(tilde_orthogonality_residual(ShapeFunction::superellipse(), 1.5, 128) < 1e-8);
  CHECK(tilde_orthogonality_residual(ShapeFunction::star(), 1.0, 128) < 1e-8);
  CHECK(tilde_orthogonality_residual(ShapeFunction::ball(3), 1.0, 50) < 1e-8);
  CHECK(tilde_orthogonality_residual(ShapeFunction(domains::superellipse()), 1.0, 32) < 1e-5);
  // boundary points lie on the level set G = -ln r
  for (double r : {0.5, 1.0, 3.0}) {
    Vec y = tilde_boundary_point(ShapeFunction::star(), Vec{0.6, 0.8}, r);
    CHECK(ShapeFunction::star().eval(y) == Approx(-std::log(r)).margin(1e-12));
  }
}

TEST_CASE("CSV exports") {
  Lattice2D lat{-1, 1, -1, 1, 3, 3};
  std::ostringstream g, b;
  export_g_csv(g, ShapeFunction::superellipse(), lat);
  std::string s = g.str();
  CHECK(s.rfind("x1,x2,G,dG1,dG2\n", 0) == 0);
  CHECK(std::count(s.begin(), s.end(), '\n') == 1 + 8);  // origin skipped
  CHECK(s.find("\n1,1,-0.17328679513998632,-0.5,-0.5\n") != std::string::npos);
  export_tilde_boundaries_csv(b, ShapeFunction::star(), {1.0, 2.0}, 16);
  std::string t = b.str();
  CHECK(std::count(t.begin(), t.end(), '\n') == 1 + 2 * 17);
}
