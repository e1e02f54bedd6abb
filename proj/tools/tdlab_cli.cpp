#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <sstream>

#include "tdlab/runner.hpp"

using namespace tdlab;

namespace {

struct Options {
  std::string config, out, radii;
  int jobs = 1;
  int grid = 0;
};

ExperimentConfig load(const Options& o) {
  ExperimentConfig c = ExperimentConfig::load(o.config);
  if (!o.out.empty()) c.output_dir = o.out;
  if (o.grid > 0) c.points = o.grid;
  if (!o.radii.empty()) {
    c.sojourn.radii.clear();
    std::stringstream ss(o.radii);
    std::string item;
    while (std::getline(ss, item, ',')) {
      try {
        c.sojourn.radii.push_back(std::stod(item));
      } catch (const std::exception&) {
        throw Error(ErrorCode::InvalidArgument, "cannot parse radius '" + item + "'");
      }
    }
  }
  c.validate();
  return c;
}

int geometry(const ExperimentConfig& c) {
  for (const auto& f : run_geometry(c)) std::cout << "wrote " << f << '\n';
  return exit_ok;
}

int flow(const ExperimentConfig& c) {
  CheckTable t = run_flow(c);
  std::cout << t.text();
  return t.all_pass() ? exit_ok : exit_check_failed;
}

int identities(const ExperimentConfig& c) {
  CheckTable t = run_identities(c);
  std::cout << t.text();
  return t.all_pass() ? exit_ok : exit_check_failed;
}

int delay(const ExperimentConfig& c, int jobs) {
  TimeDelayReport r = run_delay(c, jobs, &std::cerr);
  std::printf("scenario     %s\n", r.scenario.c_str());
  for (size_t i = 0; i < r.radii.size(); ++i)
    std::printf("  r=%-8g tau_r=% .10e  tau_in=% .10e\n", r.radii[i], r.tau_r[i], r.tau_in_r[i]);
  std::printf("tau_infinity % .10e +- %.2e%s\n", r.tau_infinity, r.tau_uncertainty,
              r.tau_converged ? "" : "  (not converged)");
  std::printf("wigner       % .10e  (im %.2e)\n", r.wigner_value, r.wigner_imag);
  std::printf("lavine       % .10e  (im %.2e)\n", r.lavine_value, r.lavine_imag);
  if (r.isotropic_value) std::printf("isotropic    % .10e\n", *r.isotropic_value);
  for (auto [g, v] : r.symbol_study) std::printf("  gamma=%-6g lavine=% .10e\n", g, v);
  if (r.symbol_reference) std::printf("  f=2u       lavine=% .10e  (gamma-study settings)\n", *r.symbol_reference);
  std::printf("checks       time_delay=%d lavine=%d reality=%d isotropic=%d gamma_trend=%d\n", r.time_delay_ok(),
              r.lavine_ok(), r.reality_ok(), r.isotropic_ok(), r.gamma_trend_ok());
  for (const auto& d : r.diagnostics) std::printf("diagnostic   %s\n", d.c_str());
  return delay_exit_code(r);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Anisotropic time delay laboratory"};
  app.require_subcommand(1);
  Options o;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "scenario config (JSON)")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", o.out, "output directory (overrides the config)");
    sub->add_option("--jobs", o.jobs, "worker threads")->check(CLI::PositiveNumber);
    sub->add_option("--radii", o.radii, "comma-separated sojourn radii");
    sub->add_option("--grid", o.grid, "points per axis")->check(CLI::PositiveNumber);
  };
  auto* g = app.add_subcommand("geometry", "export G, F and the tilde-set boundaries");
  auto* f = app.add_subcommand("flow", "sample the momentum flow and check its identities");
  auto* d = app.add_subcommand("delay", "time delay by sojourn times, Wigner and Lavine");
  auto* i = app.add_subcommand("identities", "cross-check table of every module");
  auto* a = app.add_subcommand("all", "geometry, flow, identities and delay");
  for (auto* sub : {g, f, d, i, a}) add_common(sub);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : exit_invalid;
  }

  try {
    ExperimentConfig c = load(o);
    if (*g) return geometry(c);
    if (*f) return flow(c);
    if (*i) return identities(c);
    if (*d) return delay(c, o.jobs);
    int rc = geometry(c);
    rc = std::max(rc, flow(c));
    rc = std::max(rc, identities(c));
    if (!c.sojourn.radii.empty()) rc = std::max(rc, delay(c, o.jobs));
    return rc;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_check_failed;
  }
}
