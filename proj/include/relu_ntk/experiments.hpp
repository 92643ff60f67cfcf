#pragma once

// Verification suites behind the command-line driver. Each suite turns a
// configuration into a Report of numeric check records; pass/fail is derived
// from the recorded numbers alone.

#include "relu_ntk/approx.hpp"

#include <nlohmann/json.hpp>

#include <string>
#include <vector>

namespace relu_ntk {

struct ExperimentConfig {
  std::size_t d = 5;
  std::size_t m = 2000;
  std::uint64_t seed = 1;
  std::size_t samples = 100000;  // Monte Carlo budget per estimate
  std::size_t seeds = 10;        // repetitions for seed sweeps
  std::size_t test_points = 20;
  std::size_t kernel_pairs = 20;
  double sigmas = 4.0;

  double series_tol = 1e-10;
  int series_n_max = 200;

  double eigen_residual_factor = 3.0;  // true eigenfunctions: residual <= factor * pooled tolerance
  double negative_factor = 5.0;        // control function: residual >= factor * pooled tolerance

  double top_cluster_tol = 0.15;
  double linear_cluster_tol = 0.10;
  double quadratic_cluster_tol = 0.25;

  std::size_t kl_d = 3;
  std::size_t kl_m = 50;
  std::size_t kl_pairs = 10;

  std::size_t approx_vectors = 10;

  double flow_eta = 0.01;
  int flow_steps = 200;
  double flow_ratio_tol = 0.02;
  double vflow_eta = 0.1;
  int vflow_steps = 100;
  double vflow_tol = 0.05;

  /// Negative control: F_gamma replaced by individually normalized g_gamma.
  bool corrupt_basis = false;

  std::size_t jobs = 1;
  std::string out = "report";
  std::string format = "both";  // json | csv | both

  SeriesParams series() const { return {series_tol, series_n_max}; }
  void validate() const;

  nlohmann::json to_json() const;
  /// Missing keys keep their defaults; unknown keys are rejected.
  static ExperimentConfig from_json(const nlohmann::json& j);
  static ExperimentConfig load(const std::string& path);
};

enum class Comparison {
  Equal,    // |estimate - target| <= tolerance
  AtMost,   // estimate <= target + tolerance
  AtLeast,  // estimate >= target - tolerance
};

struct CheckRecord {
  std::string name;
  Comparison comparison = Comparison::Equal;
  double target = 0.0;
  double estimate = 0.0;
  double std_error = 0.0;
  double tolerance = 0.0;
  bool pass = false;
  std::string anchor;  // the property being checked, in words

  static CheckRecord make(std::string name, Comparison cmp, double target, double estimate, double std_error,
                          double tolerance, std::string anchor);
};

struct Report {
  std::string suite;
  ExperimentConfig config;
  std::vector<CheckRecord> records;
  std::vector<std::string> flags;  // preconditions that skipped checks, calibration notes
  nlohmann::json details = nlohmann::json::object();

  std::string version;
  std::string timestamp;
  double runtime_seconds = 0.0;

  bool passed() const;
  std::vector<std::string> failing_checks() const;
  /// Everything except timestamp and runtime.
  nlohmann::json numeric_json() const;
  nlohmann::json to_json() const;
};

Report run_kernel_check(const ExperimentConfig& config);
Report run_spectrum(const ExperimentConfig& config);
Report run_fisher(const ExperimentConfig& config);
Report run_approx(const ExperimentConfig& config);
Report run_flow(const ExperimentConfig& config);
std::vector<Report> run_all(const ExperimentConfig& config);

/// Dispatch by subcommand name (kernel-check, spectrum, fisher, approx, flow, all).
std::vector<Report> run_suite(const std::string& name, const ExperimentConfig& config);
const std::vector<std::string>& suite_names();

nlohmann::json reports_to_json(const std::vector<Report>& reports);
std::string reports_to_csv(const std::vector<Report>& reports);

/// Writes <out>.json and/or <out>.csv according to config.format; returns the paths written.
std::vector<std::string> write_reports(const std::vector<Report>& reports, const ExperimentConfig& config);

std::string library_version();

}  // namespace relu_ntk
