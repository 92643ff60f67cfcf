#include "relu_ntk/experiments.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace {

int run(const std::string& suite, relu_ntk::ExperimentConfig cfg, bool quiet) {
  const auto reports = relu_ntk::run_suite(suite, cfg);
  const auto written = relu_ntk::write_reports(reports, cfg);

  std::vector<std::string> failing;
  for (const auto& r : reports) {
    const auto bad = r.failing_checks();
    if (!quiet)
      std::cout << (bad.empty() ? "PASS " : "FAIL ") << r.suite << "  (" << r.records.size() - bad.size() << "/"
                << r.records.size() << " checks, " << r.runtime_seconds << " s)\n";
    for (const auto& f : r.flags)
      if (!quiet) std::cout << "  note: " << f << "\n";
    if (!bad.empty()) {
      failing.push_back(r.suite);
      for (const auto& name : bad) std::cerr << "  " << r.suite << ": " << name << " failed\n";
    }
  }
  if (!quiet)
    for (const auto& p : written) std::cout << "wrote " << p << "\n";
  if (!failing.empty()) {
    std::cerr << "failing suites:";
    for (const auto& s : failing) std::cerr << ' ' << s;
    std::cerr << '\n';
    return 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"NTK and Fisher spectrum checks for a bias-free two-layer ReLU network"};
  app.require_subcommand(1);
  app.set_version_flag("--version", relu_ntk::library_version());

  std::size_t d = 0, m = 0, samples = 0, jobs = 0;
  std::uint64_t seed = 0;
  std::string config_path, out, format;
  bool quiet = false;

  auto* o_d = app.add_option("--d", d, "input dimension");
  auto* o_m = app.add_option("--m", m, "hidden width");
  auto* o_seed = app.add_option("--seed", seed, "master seed");
  auto* o_samples = app.add_option("--samples", samples, "Monte Carlo samples per estimate");
  app.add_option("--config", config_path, "JSON config; command-line flags override it")->check(CLI::ExistingFile);
  auto* o_out = app.add_option("--out", out, "output path prefix, writes <out>.json / <out>.csv");
  auto* o_format = app.add_option("--format", format, "json, csv or both")
                       ->check(CLI::IsMember({"json", "csv", "both"}));
  auto* o_jobs = app.add_option("--jobs", jobs, "worker threads")->check(CLI::PositiveNumber);
  app.add_flag("-q,--quiet", quiet, "only report failures");

  std::string suite;
  for (const char* name : {"kernel-check", "spectrum", "fisher", "approx", "flow", "all"}) {
    app.add_subcommand(name)->fallthrough()->callback([&suite, name] { suite = name; });
  }
  app.get_subcommand("kernel-check")->description("series kernel against Monte Carlo and closed-form identities");
  app.get_subcommand("spectrum")->description("orthonormality and eigenvalues of the explicit modes");
  app.get_subcommand("fisher")->description("exact Fisher matrix, spectral clusters, KL and metric identities");
  app.get_subcommand("approx")->description("projection onto the explicit modes and its error");
  app.get_subcommand("flow")->description("diagonal gradient flow and finite-width descent");
  app.get_subcommand("all")->description("every suite in turn");

  CLI11_PARSE(app, argc, argv);

  relu_ntk::ExperimentConfig cfg;
  try {
    if (!config_path.empty()) cfg = relu_ntk::ExperimentConfig::load(config_path);
    if (o_d->count()) cfg.d = d;
    if (o_m->count()) cfg.m = m;
    if (o_seed->count()) cfg.seed = seed;
    if (o_samples->count()) cfg.samples = samples;
    if (o_out->count()) cfg.out = out;
    if (o_format->count()) cfg.format = format;
    if (o_jobs->count()) cfg.jobs = jobs;
    cfg.validate();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }

  try {
    return run(suite, cfg, quiet);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
}
