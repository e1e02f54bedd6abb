#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <future>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "tdlab/dilation.hpp"
#include "tdlab/geometry.hpp"
#include "tdlab/io.hpp"
#include "tdlab/scattering.hpp"
#include "tdlab/spectral.hpp"
#include "tdlab/time_delay.hpp"

namespace tdlab {

// exit-code contract of the runner
inline constexpr int exit_ok = 0;
inline constexpr int exit_check_failed = 2;
inline constexpr int exit_invalid = 3;

inline int exit_code_for(const Error& e) {
  return e.code() == ErrorCode::InvalidArgument || e.code() == ErrorCode::Io ? exit_invalid : exit_check_failed;
}

// ---------------------------------------------------------------------------
// configuration

struct ExperimentConfig {
  std::string scenario = "unnamed";
  std::uint64_t seed = 1;
  std::string output_dir = "out";

  std::string domain = "ball";  // ball | superellipse | star
  std::string symbol = "linear";  // linear | gamma
  double gamma = 1.0;

  int dim = 1;
  int points = 4096;
  double half_width = 204.8;

  struct PotentialSpec {
    std::string kind = "zero";  // zero | gaussian_bump | compact_bump
    double amplitude = 0.0;
    std::vector<double> matrix;  // row-major d×d, gaussian_bump only
    double radius = 1.0;         // compact_bump only
    double decay_exponent = 6.0;
  } potential;

  EnergyWindow window{0.2, 5.6, 0.05};

  struct PacketSpec {
    std::vector<double> center, momentum;
    double sigma_x = 4.0;
  } packet;

  double horizon = 20.0;
  double dt = 0.0;

  SojournConfig sojourn;

  struct LavineSpec {
    double time_extent = 30.0;
    int samples = 600;
    std::vector<double> gamma_study;
    double gamma_time_extent = 30.0;
    int gamma_samples = 600;
  } lavine;

  struct GeometrySpec {
    Lattice2D lattice;
    std::vector<double> tilde_radii{0.5, 1.0, 2.0};
    int polyline_points = 256;
  } geometry;

  struct FlowSpec {
    int points = 16;
    std::vector<double> times{-1.0, -0.5, 0.5, 1.0};
  } flow;

  std::vector<double> snapshot_times;

  // -- builders; each validates through the module constructors

  Grid grid() const { return Grid(dim, points, half_width); }

  DomainModel domain_model() const {
    if (domain == "ball") return domains::ball(dim);
    require(dim == 2, ErrorCode::InvalidArgument, domain + " is a 2D domain");
    if (domain == "superellipse") return domains::superellipse();
    if (domain == "star") return domains::star();
    throw Error(ErrorCode::InvalidArgument, "unknown domain kind '" + domain + "'");
  }

  ShapeFunction shape() const {
    if (domain == "ball") return ShapeFunction::ball(dim);
    require(dim == 2, ErrorCode::InvalidArgument, domain + " is a 2D domain");
    if (domain == "superellipse") return ShapeFunction::superellipse();
    if (domain == "star") return ShapeFunction::star();
    throw Error(ErrorCode::InvalidArgument, "unknown domain kind '" + domain + "'");
  }

  Symbol make_symbol() const {
    if (symbol == "linear") return Symbol::linear();
    if (symbol == "gamma") return Symbol::gamma(gamma);
    throw Error(ErrorCode::InvalidArgument, "unknown symbol kind '" + symbol + "'");
  }

  VectorField field() const { return {shape(), make_symbol()}; }

  Potential make_potential() const {
    const auto& p = potential;
    if (p.kind == "zero") return Potential::zero(dim);
    if (p.kind == "gaussian_bump") {
      require(p.matrix.size() == size_t(dim * dim), ErrorCode::InvalidArgument,
              "potential matrix needs dim*dim entries");
      return Potential::gaussian_bump(dim, p.amplitude, p.matrix, p.decay_exponent);
    }
    if (p.kind == "compact_bump") return Potential::compact_bump(dim, p.amplitude, p.radius, p.decay_exponent);
    throw Error(ErrorCode::InvalidArgument, "unknown potential kind '" + p.kind + "'");
  }

  ScatteringSetup setup() const { return {grid(), make_potential(), dt, horizon, window}; }

  WaveFunction incoming() const {
    require(packet.center.size() == size_t(dim) && packet.momentum.size() == size_t(dim),
            ErrorCode::InvalidArgument, "packet center and momentum need dim entries");
    Vec x0(dim), p0(dim);
    for (int i = 0; i < dim; ++i) {
      x0[i] = packet.center[i];
      p0[i] = packet.momentum[i];
    }
    require(packet.sigma_x > 0, ErrorCode::InvalidArgument, "packet width must be positive");
    return normalized(window_filter(window, gaussian_packet(grid(), x0, p0, packet.sigma_x)));
  }

  void validate() const {
    require(!scenario.empty(), ErrorCode::InvalidArgument, "scenario name is empty");
    require(dim == 1 || dim == 2, ErrorCode::InvalidArgument, "dimension must be 1 or 2");
    window.validate();
    field();
    ScatteringSetup s = setup();
    incoming();
    if (!sojourn.radii.empty()) sojourn.validate(s.grid, domain_model());
    require(lavine.time_extent > 0 && lavine.samples >= 2 && lavine.samples % 2 == 0,
            ErrorCode::InvalidArgument, "Lavine time grid is invalid");
    for (double g : lavine.gamma_study) Symbol::gamma(g);
    if (!lavine.gamma_study.empty())
      require(lavine.gamma_time_extent > 0 && lavine.gamma_samples >= 2 && lavine.gamma_samples % 2 == 0,
              ErrorCode::InvalidArgument, "gamma study time grid is invalid");
    require(flow.points >= 1, ErrorCode::InvalidArgument, "flow needs sample points");
    require(geometry.polyline_points >= 3, ErrorCode::InvalidArgument, "polylines need >= 3 points");
    for (double r : geometry.tilde_radii) require(r > 0, ErrorCode::InvalidArgument, "radii must be positive");
  }

  json to_json() const {
    json j;
    j["scenario"] = scenario;
    j["seed"] = seed;
    j["output_dir"] = output_dir;
    j["domain"] = {{"kind", domain}};
    j["symbol"] = {{"kind", symbol}, {"gamma", gamma}};
    j["grid"] = {{"dim", dim}, {"points", points}, {"half_width", half_width}};
    j["potential"] = {{"kind", potential.kind},         {"amplitude", potential.amplitude},
                      {"matrix", potential.matrix},     {"radius", potential.radius},
                      {"decay_exponent", potential.decay_exponent}};
    j["window"] = {{"e_min", window.e_min}, {"e_max", window.e_max}, {"margin", window.margin}};
    j["packet"] = {{"center", packet.center}, {"momentum", packet.momentum}, {"sigma_x", packet.sigma_x}};
    j["scattering"] = {{"horizon", horizon}, {"dt", dt}};
    j["sojourn"] = {{"radii", sojourn.radii},
                    {"time_extent", sojourn.time_extent},
                    {"time_samples", sojourn.time_samples},
                    {"region_quadrature", sojourn.region_quadrature},
                    {"oversample", sojourn.oversample}};
    j["lavine"] = {{"time_extent", lavine.time_extent},
                   {"samples", lavine.samples},
                   {"gamma_study", lavine.gamma_study},
                   {"gamma_time_extent", lavine.gamma_time_extent},
                   {"gamma_samples", lavine.gamma_samples}};
    const auto& L = geometry.lattice;
    j["geometry"] = {{"lattice", {{"x_min", L.x_min}, {"x_max", L.x_max}, {"y_min", L.y_min},
                                  {"y_max", L.y_max}, {"nx", L.nx}, {"ny", L.ny}}},
                     {"tilde_radii", geometry.tilde_radii},
                     {"polyline_points", geometry.polyline_points}};
    j["flow"] = {{"points", flow.points}, {"times", flow.times}};
    j["snapshot_times"] = snapshot_times;
    return j;
  }

  static ExperimentConfig from_json(const json& j) {
    static const std::vector<std::string> known{
        "scenario", "seed",    "output_dir", "domain", "symbol",   "grid",     "potential",     "window",
        "packet",   "scattering", "sojourn", "lavine", "geometry", "flow",     "snapshot_times"};
    require(j.is_object(), ErrorCode::InvalidArgument, "config must be a JSON object");
    for (auto it = j.begin(); it != j.end(); ++it)
      require(std::find(known.begin(), known.end(), it.key()) != known.end(), ErrorCode::InvalidArgument,
              "unknown config key '" + it.key() + "'");
    ExperimentConfig c;
    try {
      auto get = [&](const json& o, const char* key, auto& dst) {
        if (o.contains(key)) dst = o.at(key).get<std::decay_t<decltype(dst)>>();
      };
      get(j, "scenario", c.scenario);
      get(j, "seed", c.seed);
      get(j, "output_dir", c.output_dir);
      if (j.contains("domain")) get(j["domain"], "kind", c.domain);
      if (j.contains("symbol")) {
        get(j["symbol"], "kind", c.symbol);
        get(j["symbol"], "gamma", c.gamma);
      }
      if (j.contains("grid")) {
        const auto& g = j["grid"];
        get(g, "dim", c.dim);
        get(g, "points", c.points);
        get(g, "half_width", c.half_width);
      }
      if (j.contains("potential")) {
        const auto& p = j["potential"];
        get(p, "kind", c.potential.kind);
        get(p, "amplitude", c.potential.amplitude);
        get(p, "matrix", c.potential.matrix);
        get(p, "radius", c.potential.radius);
        get(p, "decay_exponent", c.potential.decay_exponent);
      }
      if (j.contains("window")) {
        const auto& w = j["window"];
        get(w, "e_min", c.window.e_min);
        get(w, "e_max", c.window.e_max);
        get(w, "margin", c.window.margin);
      }
      if (j.contains("packet")) {
        const auto& p = j["packet"];
        get(p, "center", c.packet.center);
        get(p, "momentum", c.packet.momentum);
        get(p, "sigma_x", c.packet.sigma_x);
      }
      if (j.contains("scattering")) {
        get(j["scattering"], "horizon", c.horizon);
        get(j["scattering"], "dt", c.dt);
      }
      if (j.contains("sojourn")) {
        const auto& s = j["sojourn"];
        get(s, "radii", c.sojourn.radii);
        get(s, "time_extent", c.sojourn.time_extent);
        get(s, "time_samples", c.sojourn.time_samples);
        get(s, "region_quadrature", c.sojourn.region_quadrature);
        get(s, "oversample", c.sojourn.oversample);
      }
      if (j.contains("lavine")) {
        const auto& l = j["lavine"];
        get(l, "time_extent", c.lavine.time_extent);
        get(l, "samples", c.lavine.samples);
        get(l, "gamma_study", c.lavine.gamma_study);
        get(l, "gamma_time_extent", c.lavine.gamma_time_extent);
        get(l, "gamma_samples", c.lavine.gamma_samples);
      }
      if (j.contains("geometry")) {
        const auto& g = j["geometry"];
        if (g.contains("lattice")) {
          const auto& L = g["lattice"];
          get(L, "x_min", c.geometry.lattice.x_min);
          get(L, "x_max", c.geometry.lattice.x_max);
          get(L, "y_min", c.geometry.lattice.y_min);
          get(L, "y_max", c.geometry.lattice.y_max);
          get(L, "nx", c.geometry.lattice.nx);
          get(L, "ny", c.geometry.lattice.ny);
        }
        get(g, "tilde_radii", c.geometry.tilde_radii);
        get(g, "polyline_points", c.geometry.polyline_points);
      }
      if (j.contains("flow")) {
        get(j["flow"], "points", c.flow.points);
        get(j["flow"], "times", c.flow.times);
      }
      get(j, "snapshot_times", c.snapshot_times);
    } catch (const json::exception& e) {
      throw Error(ErrorCode::InvalidArgument, std::string("config: ") + e.what());
    }
    return c;
  }

  static ExperimentConfig load(const std::string& path) {
    json j;
    try {
      j = json::parse(read_text(path));
    } catch (const json::exception& e) {
      throw Error(ErrorCode::InvalidArgument, path + ": " + e.what());
    }
    return from_json(j);
  }

  std::string dump() const { return dump_json17(to_json()); }
};

namespace detail {

inline std::filesystem::path output_path(const ExperimentConfig& c, const std::string& name) {
  std::filesystem::path dir(c.output_dir);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  require(!ec, ErrorCode::Io, "cannot create " + dir.string());
  return dir / name;
}

template <class F>
auto with_context(const ExperimentConfig& c, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const Error& e) {
    throw Error(e.code(), "[" + c.scenario + "] " + std::string(e.what()));
  }
}

// seeded points with |x| uniform in [lo, hi]
inline std::string short_num(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

inline std::vector<Vec> sample_points(int dim, int n, std::uint64_t seed, double lo, double hi) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ang(0, 2 * pi), rad(lo, hi), sgn(-1, 1);
  std::vector<Vec> out;
  for (int i = 0; i < n; ++i) {
    double r = rad(rng);
    if (dim == 1) {
      out.push_back(Vec{sgn(rng) > 0 ? r : -r});
    } else {
      double t = ang(rng);
      out.push_back(Vec{r * std::cos(t), r * std::sin(t)});
    }
  }
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// geometry export

/// G, F and ∂Σ̃_r polylines. Returns the written paths.
inline std::vector<std::string> run_geometry(const ExperimentConfig& c) {
  return detail::with_context(c, [&] {
    c.validate();
    ShapeFunction s = c.shape();
    VectorField F = c.field();
    std::vector<std::string> files;
    auto emit = [&](const std::string& name, const std::string& text) {
      auto p = detail::output_path(c, name);
      write_text(p.string(), text);
      files.push_back(p.string());
    };
    std::ostringstream g, f;
    if (c.dim == 2) {
      export_g_csv(g, s, c.geometry.lattice);
      export_field_csv(f, F, c.geometry.lattice);
      std::ostringstream t;
      export_tilde_boundaries_csv(t, s, c.geometry.tilde_radii, c.geometry.polyline_points);
      emit("G.csv", g.str());
      emit("F.csv", f.str());
      emit("tilde_boundaries.csv", t.str());
    } else {
      const auto& L = c.geometry.lattice;
      g << "x,G,dG\n";
      f << "x,F\n";
      for (int i = 0; i < L.nx; ++i) {
        double x = L.nx > 1 ? L.x_min + (L.x_max - L.x_min) * i / (L.nx - 1) : L.x_min;
        if (x != 0.0) g << fmt17(x) << ',' << fmt17(s.eval(Vec{x})) << ',' << fmt17(s.grad(Vec{x})[0]) << '\n';
        f << fmt17(x) << ',' << fmt17(x == 0.0 ? 0.0 : F.eval(Vec{x})[0]) << '\n';
      }
      emit("G.csv", g.str());
      emit("F.csv", f.str());
    }
    return files;
  });
}

// ---------------------------------------------------------------------------
// pass/fail tables

struct CheckRow {
  std::string suite, name;
  double value = 0.0, tolerance = 0.0;
  bool pass = false;
  bool expected_failure = false;
  std::string note;
};

struct CheckTable {
  std::vector<CheckRow> rows;

  void add(std::string suite, std::string name, double value, double tol, std::string note = {}) {
    rows.push_back({std::move(suite), std::move(name), value, tol, std::isfinite(value) && value <= tol, false,
                    std::move(note)});
  }
  void add_ratio(std::string suite, std::string name, double ratio, double at_least, std::string note = {}) {
    rows.push_back({std::move(suite), std::move(name), ratio, at_least, std::isfinite(ratio) && ratio >= at_least,
                    false, std::move(note)});
  }
  // a check that must be rejected by the library; pass means it was
  void add_rejection(std::string suite, std::string name, const std::function<void()>& f) {
    CheckRow r{std::move(suite), std::move(name), 0.0, 0.0, false, true, "not rejected"};
    try {
      f();
    } catch (const Error& e) {
      r.pass = true;
      r.note = e.what();
    }
    rows.push_back(std::move(r));
  }
  // runs f; a thrown Error becomes a failing row
  void guard(const std::string& suite, const std::string& name, const std::function<void()>& f) {
    try {
      f();
    } catch (const Error& e) {
      rows.push_back({suite, name, std::numeric_limits<double>::quiet_NaN(), 0.0, false, false, e.what()});
    }
  }

  bool all_pass() const {
    return std::all_of(rows.begin(), rows.end(), [](const CheckRow& r) { return r.pass; });
  }

  std::string csv() const {
    std::string out = "suite,name,value,tolerance,pass,expected_failure,note\n";
    for (const auto& r : rows) {
      std::string note = r.note;
      for (auto& ch : note)
        if (ch == '"') ch = '\'';
      out += r.suite + "," + r.name + "," + fmt17(r.value) + "," + fmt17(r.tolerance) + "," +
             (r.pass ? "pass" : "FAIL") + "," + (r.expected_failure ? "yes" : "no") + ",\"" + note + "\"\n";
    }
    return out;
  }

  std::string text() const {
    std::ostringstream os;
    for (const auto& r : rows) {
      char buf[256];
      std::snprintf(buf, sizeof buf, "%-4s %-10s %-40s %12.4e  (tol %.1e)%s\n", r.pass ? "PASS" : "FAIL",
                    r.suite.c_str(), r.name.c_str(), r.value, r.tolerance, r.expected_failure ? "  [expected failure]" : "");
      os << buf;
    }
    return os.str();
  }
};

// ---------------------------------------------------------------------------
// flow

/// Flow samples for the configured field, with reduction, implicit-formula
/// and decay checks.
inline CheckTable run_flow(const ExperimentConfig& c) {
  return detail::with_context(c, [&] {
    c.validate();
    VectorField F = c.field();
    auto pts = detail::sample_points(c.dim, c.flow.points, c.seed, 0.2, 2.0);
    CheckTable t;
    std::ostringstream os;
    os << (c.dim == 1 ? "index,x1,t,xi1,jacobian\n" : "index,x1,x2,t,xi1,xi2,jacobian\n");
    double red = 0, imp = 0, group = 0;
    std::vector<std::pair<Vec, double>> decay;
    for (size_t i = 0; i < pts.size(); ++i) {
      const Vec& x = pts[i];
      for (double tt : c.flow.times) {
        FlowResult a = integrate_flow(F, x, tt, 1e-3);
        FlowResult b = reduced_flow(F, x, tt);
        red = std::max(red, (a.xi - b.xi).norm() / (1 + a.xi.norm()));
        if (tt < 0) imp = std::max(imp, std::abs(implicit_residual(F.symbol(), x, tt, a.xi.norm2())));
        Vec h = integrate_flow(F, integrate_flow(F, x, 0.5 * tt, 1e-3).xi, 0.5 * tt, 1e-3).xi;
        group = std::max(group, (h - a.xi).norm() / (1 + a.xi.norm()));
        decay.emplace_back(x, tt);
        os << i;
        for (int k = 0; k < c.dim; ++k) os << ',' << fmt17(x[k]);
        os << ',' << fmt17(tt);
        for (int k = 0; k < c.dim; ++k) os << ',' << fmt17(a.xi[k]);
        os << ',' << fmt17(a.jacobian) << '\n';
      }
    }
    write_text(detail::output_path(c, "flow.csv").string(), os.str());
    t.add("flow", "reduced_vs_rk4", red, 1e-8);
    t.add("flow", "implicit_formula", imp, 1e-6);
    t.add("flow", "group_law", group, 1e-9);
    if (F.is_ball_linear()) {
      double worst = 0;
      for (const auto& [x, tt] : decay) worst = std::max(worst, (integrate_flow(F, x, tt, 1e-3).xi - x * std::exp(-tt)).norm());
      t.add("flow", "ball_exact", worst, 1e-8);
    }
    DecayProbe p = decay_bound_probe(F, decay);
    t.add("flow", "decay_violations", p.violations, 0);
    t.add("flow", "decay_bound_holds", decay_bound_holds(F, decay, p.constant + 1e-9) ? 0.0 : 1.0, 0);
    write_text(detail::output_path(c, "flow_checks.csv").string(), t.csv());
    return t;
  });
}

// ---------------------------------------------------------------------------
// identity suite

namespace detail {

inline double d_homogeneous_residual(const VectorField& F, double t, const WaveFunction& psi) {
  WaveFunction lhs = w_group_apply(F, t, h0_apply(w_group_apply(F, -t, psi)));
  WaveFunction rhs = multiplier_apply(psi.grid, [&](const Vec& k) {
    return cplx(0.5 * radial_flow(F.symbol(), k.norm2(), t));
  }, psi);
  return (lhs - rhs).norm() / rhs.norm();
}

inline WaveFunction probe_state(const Grid& g, const EnergyWindow& w, double sigma) {
  Vec x0(g.dim), p0(g.dim);
  if (g.dim == 1) p0 = Vec{2.0};
  else p0 = Vec{1.6, 1.2};
  return normalized(window_filter(w, gaussian_packet(g, x0, p0, sigma)));
}

}  // namespace detail

/// Closed forms of G against the ray-integral quadrature, Euler relation and
/// homogeneity on 100 seeded points.
inline void identity_geometry(CheckTable& t, std::uint64_t seed) {
  auto pts = detail::sample_points(2, 100, seed, 0.05, 5.0);
  struct Pair {
    const char* name;
    ShapeFunction closed;
    DomainModel ind;
  };
  for (auto& [name, closed, ind] : {Pair{"ball", ShapeFunction::ball(2), domains::ball_indicator(2)},
                                    Pair{"superellipse", ShapeFunction::superellipse(), domains::superellipse_indicator()},
                                    Pair{"star", ShapeFunction::star(), domains::star_indicator()}}) {
    std::string n = name;
    t.guard("geometry", "closed_form/" + n, [&] {
      ShapeFunction quad(ind);
      double worst = 0, euler = 0, hom = 0;
      for (const Vec& x : pts) {
        double a = closed.eval(x), b = quad.eval(x);
        worst = std::max(worst, std::abs(a - b) / std::max(1.0, std::abs(a)));
        euler = std::max(euler, std::abs(dot(x, closed.grad(x)) + 1));
        for (double s : {0.5, 3.0}) hom = std::max(hom, std::abs(quad.eval(x * s) - b + std::log(s)));
      }
      t.add("geometry", "closed_form/" + n, worst, 1e-8);
      t.add("geometry", "euler/" + n, euler, 1e-10);
      t.add("geometry", "homogeneity/" + n, hom, 1e-8);
    });
  }
}

/// Exact ball flow, the implicit formula, the group law and the decay bound.
inline void identity_flow(CheckTable& t, std::uint64_t seed) {
  auto ring = detail::sample_points(2, 12, seed + 1, 0.3, 2.0);
  VectorField ball(ShapeFunction::ball(2), Symbol::linear());
  double worst = 0;
  for (const Vec& x : ring)
    for (double s : {-1.0, -0.4, 0.3, 1.0})
      worst = std::max(worst, (integrate_flow(ball, x, s).xi - x * std::exp(-s)).norm());
  t.add("flow", "ball_linear_exact", worst, 1e-8);
  for (double g : {1.0, 0.3, 0.1}) {
    VectorField F(ShapeFunction::superellipse(), Symbol::gamma(g));
    double imp = 0;
    for (const Vec& x : ring)
      for (double s : {-0.1, -0.5, -1.0})
        imp = std::max(imp, std::abs(implicit_residual(F.symbol(), x, s, integrate_flow(F, x, s).xi.norm2())));
    t.add("flow", "implicit/gamma=" + detail::short_num(g), imp, 1e-6);
  }
  VectorField star(ShapeFunction::star(), Symbol::gamma(1.0));
  double gl = 0;
  std::vector<std::pair<Vec, double>> samples;
  for (const Vec& x : detail::sample_points(2, 12, seed + 2, 0.5, 1.5)) {
    for (auto [a, b] : {std::pair{0.5, 1.5}, {1.0, 0.25}, {-0.5, -1.0}, {-0.25, -0.75}, {0.3, -0.2}}) {
      Vec p = integrate_flow(star, x, a + b).xi;
      Vec q = integrate_flow(star, integrate_flow(star, x, b).xi, a).xi;
      gl = std::max(gl, (p - q).norm() / (1 + p.norm()));
    }
    for (double s : {-1.5, -0.5, 0.5, 1.5}) samples.emplace_back(x, s);
  }
  t.add("flow", "group_law/star", gl, 1e-9);
  for (const VectorField& F : {ball, star}) {
    DecayProbe p = decay_bound_probe(F, samples);
    bool ok = p.violations == 0 && decay_bound_holds(F, samples, p.constant + 1e-9);
    t.add("flow", std::string("decay_bound/") + (F.is_ball_linear() ? "ball" : "star"), ok ? 0.0 : 1.0, 0.0);
  }
}

/// Commutator identities on the shipped grids, the refinement study and the
/// rejection of a symbol with f(0) ≠ 0.
inline void identity_operators(CheckTable& t) {
  const EnergyWindow w1{0.2, 5.6, 0.05}, w2{0.04, 7.0, 0.01};
  const Grid g1(1, 4096, 204.8), g2(2, 512, 128.0);
  auto ops = [&](const std::string& tag, const VectorField& F, const WaveFunction& psi, double t_group,
                 double t_hom) {
    t.guard("operators", tag, [&] {
      Diagnostics d;
      double scale = psi.norm();
      t.add("operators", "gen_com/" + tag, gen_com_residual(F, psi, &d) / scale, 1e-5);
      if (t_group != 0) t.add("operators", "group_com/" + tag, group_com_residual(F, t_group, psi, &d) / scale, 1e-5);
      t.add("operators", "d_homogeneous/" + tag, detail::d_homogeneous_residual(F, t_hom, psi), 1e-5);
      t.add("operators", "boundary_warnings/" + tag, double(d.warnings.size()), 0);
    });
  };
  WaveFunction p1 = detail::probe_state(g1, w1, 5.0), p2 = detail::probe_state(g2, w2, 3.0);
  ops("1d/ball/linear", VectorField(ShapeFunction::ball(1), Symbol::linear()), p1, 0.5, 0.3);
  ops("1d/ball/gamma=1", VectorField(ShapeFunction::ball(1), Symbol::gamma(1.0)), p1, 0.5, 0.5);
  ops("2d/superellipse/gamma=1", VectorField(ShapeFunction::superellipse(), Symbol::gamma(1.0)), p2, 0.25, 0.3);
  ops("2d/star/gamma=0.5", VectorField(ShapeFunction::star(), Symbol::gamma(0.5)), p2, 0.0, 0.005);

  // refinement: halve the momentum spacing (double the box at fixed h)
  t.guard("refinement", "refinement", [&] {
    VectorField b1(ShapeFunction::ball(1), Symbol::linear());
    double coarse = gen_com_residual(b1, detail::probe_state(Grid(1, 512, 25.6), w1, 5.0));
    double fine = gen_com_residual(b1, detail::probe_state(Grid(1, 1024, 51.2), w1, 5.0));
    t.add_ratio("refinement", "gen_com/1d/truncated_box", coarse / fine, 2.0,
                "coarse " + fmt17(coarse) + " fine " + fmt17(fine));
    VectorField bg(ShapeFunction::ball(1), Symbol::gamma(1.0));
    double h0 = detail::d_homogeneous_residual(bg, 0.5, p1);
    double h1 = detail::d_homogeneous_residual(bg, 0.5, detail::probe_state(Grid(1, 8192, 409.6), w1, 5.0));
    t.add_ratio("refinement", "d_homogeneous/1d/shipped", h0 / h1, 2.0, "shipped " + fmt17(h0) + " refined " + fmt17(h1));
    VectorField se(ShapeFunction::superellipse(), Symbol::gamma(1.0));
    double s0 = detail::d_homogeneous_residual(se, 0.3, detail::probe_state(Grid(2, 256, 64.0), w2, 3.0));
    double s1 = detail::d_homogeneous_residual(se, 0.3, p2);
    t.add_ratio("refinement", "d_homogeneous/2d/to_shipped", s0 / s1, 2.0, "coarse " + fmt17(s0) + " shipped " + fmt17(s1));
  });

  // f(0) ≠ 0 must be rejected
  t.add_rejection("symbols", "f(0)!=0", [] {
    Symbol::custom([](double u) { return 1 + u; }, [](double) { return 1.0; });
  });

}

/// Cross-checks of every module plus the configured scenario's own state.
inline CheckTable run_identities(const ExperimentConfig& c) {
  return detail::with_context(c, [&] {
    c.validate();
    CheckTable t;
    identity_geometry(t, c.seed);
    identity_flow(t, c.seed);
    identity_operators(t);
    t.guard("scenario", c.scenario, [&] {
      Diagnostics d;
      VectorField F = c.field();
      WaveFunction psi = c.incoming();
      t.add("scenario", "gen_com/" + c.scenario, gen_com_residual(F, psi, &d) / psi.norm(), 1e-5);
      t.add("scenario", "group_com/" + c.scenario, group_com_residual(F, 0.1, psi, &d) / psi.norm(), 1e-5);
      t.add("scenario", "boundary_warnings/" + c.scenario, double(d.warnings.size()), 0);
    });

    write_text(detail::output_path(c, "identities.csv").string(), t.csv());
    return t;
  });
}

// ---------------------------------------------------------------------------
// time delay

/// Full pipeline: W_−, S, the sojourn sweeps, Wigner, Lavine and the γ
/// study. Writes report.json and tau.csv plus any requested snapshots.
inline TimeDelayReport run_delay(const ExperimentConfig& c, int jobs = 1, std::ostream* log = nullptr) {
  return detail::with_context(c, [&] {
    c.validate();
    require(c.sojourn.radii.size() >= 4, ErrorCode::InvalidArgument, "delay runs need at least four radii");
    const ScatteringSetup s = c.setup();
    const DomainModel dom = c.domain_model();
    const VectorField F = c.field();
    const WaveFunction phi = c.incoming();
    const auto policy = jobs > 1 ? std::launch::async : std::launch::deferred;
    auto note = [&](const std::string& m) {
      if (log) *log << "[" << c.scenario << "] " << m << std::endl;
    };

    Diagnostics dw, dl;
    std::vector<Diagnostics> dg(c.lavine.gamma_study.size() + 1);
    auto f_tau = std::async(policy, [&] { return tau_series(s, dom, phi, c.sojourn, jobs); });
    auto f_w = std::async(policy, [&] { return wigner_rhs(s, F, phi, &dw); });
    auto f_l = std::async(policy, [&] { return lavine_rhs(s, F, phi, c.lavine.time_extent, c.lavine.samples, {}, &dl); });
    std::vector<std::future<LavineResult>> f_g;
    for (size_t i = 0; i < c.lavine.gamma_study.size(); ++i)
      f_g.push_back(std::async(policy, [&, i] {
        VectorField G(c.shape(), Symbol::gamma(c.lavine.gamma_study[i]));
        return lavine_rhs(s, G, phi, c.lavine.gamma_time_extent, c.lavine.gamma_samples, {}, &dg[i]);
      }));
    if (!f_g.empty())
      f_g.push_back(std::async(policy, [&] {
        VectorField G(c.shape(), Symbol::linear());
        return lavine_rhs(s, G, phi, c.lavine.gamma_time_extent, c.lavine.gamma_samples, {}, &dg.back());
      }));

    TimeDelayReport r;
    r.scenario = c.scenario;
    r.noise_floor = 1e-9 * c.sojourn.time_extent;
    TauSeries ts = f_tau.get();
    note("sojourn sweeps done");
    r.radii = ts.radii;
    r.tau_r = ts.tau;
    r.tau_r_error = ts.error;
    r.tau_in_r = ts.tau_in;
    for (auto& w : ts.warnings) r.diagnostics.push_back(w);
    try {
      Extrapolation e = extrapolate_tau(ts.radii, ts.tau);
      r.tau_infinity = e.value;
      r.tau_uncertainty = e.uncertainty;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::NoConvergence) throw;
      r.tau_converged = false;
      r.tau_infinity = ts.tau.back();
      r.tau_uncertainty = TimeDelayReport::tail_spread(ts.tau);
      r.diagnostics.push_back(e.what());
    }
    ComplexValue w = f_w.get();
    note("Wigner value done");
    r.wigner_value = w.re;
    r.wigner_imag = w.im;
    LavineResult l = f_l.get();
    note("Lavine value done");
    r.lavine_value = l.value.re;
    r.lavine_imag = l.value.im;
    for (size_t i = 0; i < c.lavine.gamma_study.size(); ++i) {
      r.symbol_study.emplace_back(c.lavine.gamma_study[i], f_g[i].get().value.re);
      note("gamma study " + detail::short_num(c.lavine.gamma_study[i]) + " done");
    }
    if (!f_g.empty()) r.symbol_reference = f_g.back().get().value.re;
    if (c.domain == "ball" && c.symbol == "linear") r.isotropic_value = wigner_isotropic(s, phi).re;
    for (const Diagnostics* d : {&dw, &dl})
      for (const auto& m : d->warnings) r.diagnostics.push_back(m);
    for (const auto& d : dg)
      for (const auto& m : d.warnings) r.diagnostics.push_back(m);

    if (!c.snapshot_times.empty()) {
      WaveFunction chi = wave_operator(s, phi, -1, false);
      for (size_t i = 0; i < c.snapshot_times.size(); ++i)
        write_snapshot(detail::output_path(c, "snapshot_" + std::to_string(i) + ".bin").string(),
                       propagate(s, chi, c.snapshot_times[i], true));
    }
    write_text(detail::output_path(c, "report.json").string(), dump_json17(r.to_json()));
    write_text(detail::output_path(c, "tau.csv").string(), r.csv());
    return r;
  });
}

inline int delay_exit_code(const TimeDelayReport& r) {
  return r.all_ok() && r.diagnostics.empty() ? exit_ok : exit_check_failed;
}

}  // namespace tdlab
