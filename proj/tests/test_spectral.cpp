#include <catch_amalgamated.hpp>

#include <cstdio>
#include <tuple>

#include "tdlab/spectral.hpp"

using namespace tdlab;
using Catch::Approx;

namespace {

const Grid g1(1, 4096, 204.8);
const Grid g2(2, 256, 64.0);
// the star field spreads D_Σψ and W_tψ much further in position
const Grid gs(2, 512, 128.0);
const EnergyWindow win1{0.2, 5.6, 0.05};
const EnergyWindow win2{0.04, 7.0, 0.01};

WaveFunction packet1() { return window_filter(win1, gaussian_packet(g1, Vec{0.0}, Vec{2.0}, 5.0)); }
WaveFunction packet2(const Grid& g = g2) {
  return window_filter(win2, gaussian_packet(g, Vec{0.0, 0.0}, Vec{1.6, 1.2}, 3.0));
}

double rel(const WaveFunction& a, const WaveFunction& b) { return (a - b).norm() / b.norm(); }

// dψ/dt = i D ψ by classical RK4, D applied through the position/momentum route
WaveFunction exp_itD(const DilationOperator& D, WaveFunction psi, double t, int steps) {
  double h = t / steps;
  const cplx I(0, 1);
  auto f = [&](const WaveFunction& p) { return I * D.apply(p); };
  for (int s = 0; s < steps; ++s) {
    WaveFunction k1 = f(psi);
    WaveFunction k2 = f(psi + cplx(0.5 * h) * k1);
    WaveFunction k3 = f(psi + cplx(0.5 * h) * k2);
    WaveFunction k4 = f(psi + cplx(h) * k3);
    psi += cplx(h / 6) * (k1 + cplx(2) * k2 + cplx(2) * k3 + k4);
  }
  return psi;
}

}  // namespace

TEST_CASE("grid plumbing") {
  CHECK(g1.h() == Approx(0.1));
  CHECK(g1.k(0) == 0.0);
  CHECK(g1.k(2048) == Approx(-g1.k_max()));
  CHECK_THROWS_AS(Grid(1, 100, 1.0), Error);
  CHECK_THROWS_AS(Grid(3, 64, 1.0), Error);
}

TEST_CASE("Parseval and multipliers") {
  for (const auto& psi : {packet1(), packet2()}) {
    auto a = to_momentum(psi);
    CHECK(momentum_norm2(psi.grid, a) == Approx(psi.norm2()).epsilon(1e-12));
    WaveFunction id = multiplier_apply(psi.grid, [](const Vec&) { return cplx(1); }, psi);
    CHECK(rel(id, psi) < 1e-14);
    WaveFunction back = free_evolve(free_evolve(psi, 3.7), -3.7);
    CHECK(rel(back, psi) < 1e-12);
  }
  // a lattice plane wave is an exact eigenvector of every multiplier
  int m = 37;
  double km = g1.k(m);
  WaveFunction pw = sample(g1, [&](const Vec& x) { return std::exp(cplx(0, km * x[0])); });
  WaveFunction k2 = multiplier_apply(g1, [](const Vec& k) { return cplx(k.norm2()); }, pw);
  // roundoff in empty bins is amplified by up to k_max²/k²
  CHECK(rel(k2, cplx(km * km) * pw) < 1e-10);
}

TEST_CASE("1D dilation generator on a Gaussian") {
  // D = −i(x ∂x + 1/2) for the unit interval and f(u) = 2u
  const double s = 2.0, x0 = 1.5, p = 2.0;
  WaveFunction psi = sample(g1, [&](const Vec& x) {
    return std::exp(cplx(-(x[0] - x0) * (x[0] - x0) / (4 * s * s), p * x[0]));
  });
  WaveFunction exact = sample(g1, [&](const Vec& x) {
    cplx v = std::exp(cplx(-(x[0] - x0) * (x[0] - x0) / (4 * s * s), p * x[0]));
    cplx dv = cplx(-(x[0] - x0) / (2 * s * s), p) * v;
    return cplx(0, -1) * (x[0] * dv + 0.5 * v);
  });
  VectorField F(ShapeFunction::ball(1), Symbol::linear());
  CHECK(rel(d_sigma_apply(F, psi), exact) < 1e-8);
}

TEST_CASE("dilation generator is symmetric") {
  WaveFunction a = packet1();
  WaveFunction b = window_filter(win1, gaussian_packet(g1, Vec{-3.0}, Vec{-1.9}, 5.0));
  for (auto F : {VectorField(ShapeFunction::ball(1), Symbol::linear()),
                 VectorField(ShapeFunction::ball(1), Symbol::gamma(0.3))}) {
    DilationOperator D(F, g1);
    CHECK(std::abs(inner(a, D.apply(b)) - inner(D.apply(a), b)) < 1e-10);
    CHECK(std::abs(inner(a, D.apply(a)).imag()) < 1e-10 * a.norm2());
  }
  WaveFunction c = packet2();
  WaveFunction d = window_filter(win2, gaussian_packet(g2, Vec{2.0, -1.0}, Vec{-1.0, 1.5}, 3.0));
  for (auto F : {VectorField(ShapeFunction::superellipse(), Symbol::linear()),
                 VectorField(ShapeFunction::star(), Symbol::gamma(1.0))}) {
    DilationOperator D(F, g2);
    CHECK(std::abs(inner(c, D.apply(d)) - inner(D.apply(c), d)) < 1e-10);
    CHECK(std::abs(inner(c, D.apply(c)).imag()) < 1e-10 * c.norm2());
  }
}

TEST_CASE("commutator with the free Hamiltonian") {
  CHECK(gen_com_residual(VectorField(ShapeFunction::ball(1), Symbol::linear()), packet1()) < 1e-6);
  CHECK(gen_com_residual(VectorField(ShapeFunction::ball(1), Symbol::gamma(1.0)), packet1()) < 1e-6);
  for (auto F : {VectorField(ShapeFunction::superellipse(), Symbol::linear()),
                 VectorField(ShapeFunction::superellipse(), Symbol::gamma(0.3))})
    CHECK(gen_com_residual(F, packet2()) < 1e-6);
  CHECK(gen_com_residual(VectorField(ShapeFunction::star(), Symbol::gamma(1.0)), packet2(gs)) < 1e-6);
}

TEST_CASE("conjugated generator") {
  VectorField ball(ShapeFunction::ball(1), Symbol::linear());
  CHECK(group_com_residual(ball, 0.0, packet1()) < 1e-12);
  CHECK(group_com_residual(ball, 0.5, packet1()) < 1e-6);
  VectorField se(ShapeFunction::superellipse(), Symbol::gamma(1.0));
  CHECK(group_com_residual(se, 0.25, packet2()) < 1e-5);
  CHECK(group_com_residual(se, -0.7, packet2()) < 1e-5);
}

TEST_CASE("boundary contamination is reported") {
  WaveFunction edge = gaussian_packet(g1, Vec{195.0}, Vec{2.0}, 2.0);
  Diagnostics diag;
  d_sigma_apply(VectorField(ShapeFunction::ball(1), Symbol::linear()), edge, &diag);
  CHECK_FALSE(diag.clean());
  Diagnostics ok;
  d_sigma_apply(VectorField(ShapeFunction::ball(1), Symbol::linear()), packet1(), &ok);
  CHECK(ok.clean());
}

TEST_CASE("ball group is the standard dilation") {
  // (W_t ψ)(x) = e^{dt/2} ψ(e^t x)
  VectorField F(ShapeFunction::ball(1), Symbol::linear());
  const double s = 2.0, p = 2.0;
  auto g = [&](double x) { return std::exp(cplx(-x * x / (4 * s * s), p * x)); };
  WaveFunction psi = sample(g1, [&](const Vec& x) { return g(x[0]); });
  for (double t : {0.3, -0.4}) {
    WaveFunction w = w_group_apply(F, t, psi);
    WaveFunction exact = sample(g1, [&](const Vec& x) { return std::exp(t / 2) * g(std::exp(t) * x[0]); });
    CHECK(rel(w, exact) < 1e-6);
    CHECK(w.norm() == Approx(psi.norm()).epsilon(1e-8));
  }
}

TEST_CASE("group against exponentiation of the generator") {
  VectorField F(ShapeFunction::ball(1), Symbol::linear());
  DilationOperator D(F, g1);
  WaveFunction psi = packet1();
  CHECK(rel(w_group_apply(F, 0.2, psi), exp_itD(D, psi, 0.2, 2000)) < 1e-6);

  const Grid g(2, 128, 32.0);
  WaveFunction q = window_filter(win2, gaussian_packet(g, Vec{0.0, 0.0}, Vec{1.6, 1.2}, 3.0));
  VectorField S(ShapeFunction::superellipse(), Symbol::gamma(1.0));
  DilationOperator DS(S, g);
  WaveFunction a = w_group_apply(S, 0.15, q);
  WaveFunction b = exp_itD(DS, q, 0.15, 600);
  CHECK(rel(a, b) < 1e-6);
}

TEST_CASE("group is unitary and composes") {
  VectorField S(ShapeFunction::superellipse(), Symbol::gamma(1.0));
  WaveFunction psi = packet2();
  WaveFunction a = w_group_apply(S, 0.3, psi);
  CHECK(a.norm() == Approx(psi.norm()).epsilon(1e-8));
  WaveFunction b = w_group_apply(S, -0.1, w_group_apply(S, 0.4, psi));
  CHECK(rel(b, a) < 1e-6);
  CHECK(rel(w_group_apply(S, -0.3, a), psi) < 1e-6);
}

TEST_CASE("group conjugates H0 into the flowed kinetic energy") {
  // the star contracts angles at rates near 100, so only short times fit
  for (auto [F, g, t] : {std::tuple{VectorField(ShapeFunction::superellipse(), Symbol::gamma(1.0)), g2, 0.3},
                         std::tuple{VectorField(ShapeFunction::star(), Symbol::gamma(0.5)), gs, 0.005}}) {
    WaveFunction psi = packet2(g);
    WaveFunction lhs = w_group_apply(F, t, h0_apply(w_group_apply(F, -t, psi)));
    // ½|ξ_t(k)|² depends on |k| only
    WaveFunction rhs = multiplier_apply(g, [&](const Vec& k) {
      return cplx(0.5 * flow_radius_sq(F.symbol(), k.norm2(), t));
    }, psi);
    CHECK(rel(lhs, rhs) < 1e-6);
  }
}

TEST_CASE("band overflow is detected") {
  VectorField F(ShapeFunction::ball(1), Symbol::linear());
  WaveFunction fast = normalized(sample(Grid(1, 256, 20.0), [](const Vec& x) {
    return std::exp(cplx(-x[0] * x[0] / 8, 15.0 * x[0]));
  }));
  try {
    w_group_apply(F, 1.0, fast);
    FAIL("expected InterpolationOutOfBand");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InterpolationOutOfBand);
  }
}

TEST_CASE("powers of f(H0)") {
  WaveFunction psi = packet1();
  for (auto f : {Symbol::linear(), Symbol::gamma(0.4)}) {
    WaveFunction r = f_h0_power(f, -0.5, win1, f_h0_power(f, 0.5, win1, psi));
    CHECK(rel(r, psi) < 1e-10);
    CHECK(rel(f_h0_power(f, 1.0, win1, psi), f_h0_apply(f, psi)) < 1e-12);
  }
  // (2H0)^{-1/2} = 1/|k|
  WaveFunction a = f_h0_power(Symbol::linear(), -0.5, win1, psi);
  WaveFunction b = multiplier_apply(g1, [](const Vec& k) {
    return k.is_zero() ? cplx(0) : cplx(1.0 / k.norm());
  }, psi);
  CHECK(rel(a, b) < 1e-12);
  // f_γ(H0)ψ → 2H0ψ as γ decreases
  WaveFunction two_h0 = cplx(2) * h0_apply(psi);
  double prev = 1e300;
  for (double g : {1.0, 0.1, 0.01}) {
    double d = (f_h0_power(Symbol::gamma(g), 1.0, win1, psi) - two_h0).norm();
    CHECK(d < prev);
    prev = d;
  }
  WaveFunction raw = gaussian_packet(g1, Vec{0.0}, Vec{0.3}, 2.0);
  try {
    f_h0_power(Symbol::linear(), -0.5, win1, raw);
    FAIL("expected WindowViolation");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::WindowViolation);
  }
}

TEST_CASE("energy window") {
  CHECK(win1(0.1) == 0.0);
  CHECK(win1(2.0) == 1.0);
  CHECK(win1(5.7) == 0.0);
  CHECK(win1(0.2 + 0.135) == Approx(0.5));
  // narrow packet deep inside the plateau: filtering twice changes nothing
  WaveFunction narrow = window_filter(win1, gaussian_packet(g1, Vec{0.0}, Vec{2.3}, 10.0));
  CHECK(rel(window_filter(win1, narrow), narrow) < 1e-12);

  // filtered norm against the overlap integral ∫|ĝ(k)|² η(k²/2)² dk, by quadrature
  const EnergyWindow cut{0.6, 5.0, 0.15};
  const double s = 2.0, p = 2.0;
  WaveFunction g = gaussian_packet(g1, Vec{0.0}, Vec{p}, s);
  double filtered = window_filter(cut, g).norm2();
  double sk = 1 / (2 * s), num = 0, den = 0;
  for (int i = 0; i < 200000; ++i) {
    double k = -10 + 20.0 * (i + 0.5) / 200000;
    double w = std::exp(-(k - p) * (k - p) / (2 * sk * sk));
    num += w * std::pow(cut(0.5 * k * k), 2);
    den += w;
  }
  CHECK(filtered == Approx(num / den).epsilon(1e-8));
  WaveFunction centred = gaussian_packet(g1, Vec{0.0}, Vec{std::sqrt(2 * 2.9)}, 6.0);
  CHECK(window_filter(win1, centred).norm() == Approx(1.0).epsilon(0.01));

  WaveFunction slow = gaussian_packet(g1, Vec{0.0}, Vec{0.0}, 10.0);
  try {
    window_filter(win1, slow);
    FAIL("expected EmptyWindow");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::EmptyWindow);
  }
}

TEST_CASE("snapshot round trip") {
  WaveFunction psi = packet2();
  std::string path = "spectral_snapshot_test.bin";
  write_snapshot(path, psi);
  WaveFunction back = read_snapshot(path);
  std::remove(path.c_str());
  CHECK(back.grid == psi.grid);
  CHECK(back.v == psi.v);
}
