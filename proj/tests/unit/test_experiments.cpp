#include "relu_ntk/experiments.hpp"

#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <sstream>

using namespace relu_ntk;

namespace {

const CheckRecord* find(const Report& r, const std::string& name) {
  for (const auto& rec : r.records)
    if (rec.name == name) return &rec;
  return nullptr;
}

}  // namespace

TEST_SUITE("experiments") {

TEST_CASE("config round-trips through JSON") {
  ExperimentConfig c;
  c.d = 7;
  c.m = 123;
  c.seed = 99;
  c.sigmas = 3.5;
  c.corrupt_basis = true;
  c.format = "csv";
  const auto back = ExperimentConfig::from_json(nlohmann::json::parse(c.to_json().dump()));
  CHECK(back.to_json() == c.to_json());

  const std::string path = "experiments_config_test.json";
  {
    std::ofstream out(path);
    out << R"({"d": 3, "samples": 500})";
  }
  const auto loaded = ExperimentConfig::load(path);
  std::remove(path.c_str());
  CHECK(loaded.d == 3);
  CHECK(loaded.samples == 500);
  CHECK(loaded.m == ExperimentConfig{}.m);
}

TEST_CASE("config validation") {
  CHECK_THROWS_AS(ExperimentConfig::from_json(nlohmann::json{{"dd", 3}}), std::invalid_argument);
  CHECK_THROWS_AS(ExperimentConfig::load("/nonexistent/config.json"), std::runtime_error);
  ExperimentConfig c;
  c.samples = 0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  CHECK_THROWS_AS(run_kernel_check(c), std::invalid_argument);
  c = {};
  c.format = "xml";
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = {};
  c.d = 1;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  CHECK_THROWS_AS(run_suite("nope", ExperimentConfig{}), std::invalid_argument);
}

TEST_CASE("check records derive pass from their numbers") {
  CHECK(CheckRecord::make("a", Comparison::Equal, 1.0, 1.1, 0.0, 0.2, "").pass);
  CHECK_FALSE(CheckRecord::make("a", Comparison::Equal, 1.0, 1.3, 0.0, 0.2, "").pass);
  CHECK(CheckRecord::make("a", Comparison::AtMost, 1.0, 1.1, 0.0, 0.2, "").pass);
  CHECK_FALSE(CheckRecord::make("a", Comparison::AtMost, 1.0, 1.3, 0.0, 0.2, "").pass);
  CHECK(CheckRecord::make("a", Comparison::AtLeast, 1.0, 0.9, 0.0, 0.2, "").pass);
  CHECK_FALSE(CheckRecord::make("a", Comparison::AtLeast, 1.0, 0.7, 0.0, 0.2, "").pass);
}

TEST_CASE("kernel-check is reproducible across worker counts") {
  ExperimentConfig c;
  c.samples = 20000;
  c.kernel_pairs = 5;
  const Report a = run_kernel_check(c);
  c.jobs = 3;
  const Report b = run_kernel_check(c);
  CHECK(a.passed());
  CHECK(a.numeric_json().dump() == b.numeric_json().dump());
  for (const auto& r : a.records) CHECK_FALSE(r.anchor.empty());
  const auto j = a.to_json();
  CHECK(j["metadata"]["version"] == library_version());
  CHECK(j["metadata"]["seed"] == 1);
  CHECK(j["metadata"].contains("timestamp"));
}

TEST_CASE("reports serialize to JSON and CSV") {
  Report r;
  r.suite = "demo";
  r.records.push_back(CheckRecord::make("x, \"quoted\"", Comparison::Equal, 1.0, 1.0, 0.0, 0.0, "anchor"));
  r.records.push_back(CheckRecord::make("y", Comparison::AtMost, 0.0, 2.0, 0.1, 0.5, "anchor"));
  const std::string csv = reports_to_csv({r});
  std::istringstream in(csv);
  std::string line;
  int lines = 0;
  while (std::getline(in, line)) ++lines;
  CHECK(lines == 3);
  CHECK(csv.find("\"x, \"\"quoted\"\"\"") != std::string::npos);
  const auto j = reports_to_json({r});
  CHECK(j["passed"] == false);
  CHECK(j["failing_suites"] == nlohmann::json::array({"demo"}));
  CHECK(r.failing_checks() == std::vector<std::string>{"y"});

  ExperimentConfig c;
  c.out = "experiments_report_test";
  c.format = "both";
  const auto written = write_reports({r}, c);
  CHECK(written.size() == 2);
  for (const auto& p : written) {
    std::ifstream f(p);
    CHECK(f.good());
    std::remove(p.c_str());
  }
}

TEST_CASE("fisher suite flags widths below the cluster capacity") {
  ExperimentConfig c;
  c.m = 10;
  c.samples = 20000;
  c.seeds = 3;
  c.kl_pairs = 3;
  const Report r = run_fisher(c);
  REQUIRE_FALSE(r.flags.empty());
  CHECK(r.flags[0].rfind("bulk-only", 0) == 0);
  CHECK(find(r, "top_cluster_majority") == nullptr);
  CHECK(find(r, "trace_law") != nullptr);
}

TEST_CASE("corrupted basis shows up as a spectrum failure") {
  ExperimentConfig c;
  c.samples = 20000;
  c.test_points = 5;
  c.corrupt_basis = true;
  const Report bad = run_spectrum(c);
  CHECK_FALSE(bad.passed());
  const auto* outside = find(bad, "gram_entries_outside");
  REQUIRE(outside != nullptr);
  CHECK_FALSE(outside->pass);
  CHECK(find(bad, "rayleigh_linear")->pass);
}

TEST_CASE("flow suite") {
  ExperimentConfig c;
  c.samples = 20000;
  c.m = 300;
  const Report r = run_flow(c);
  CHECK(find(r, "zero_target_flow")->pass);
  CHECK(find(r, "single_mode_step_ratio")->pass);
  CHECK(find(r, "decay_rate_ratio")->pass);
}

}
