#include "relu_ntk/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <sstream>

#ifndef RELU_NTK_VERSION
#define RELU_NTK_VERSION "0.0.0"
#endif

namespace relu_ntk {

using nlohmann::json;

namespace {

constexpr double kPi = std::numbers::pi;

// Stream ids for derive_seed(config.seed, id); one block per suite.
enum Stream : std::uint64_t {
  kKernelPoints = 100,
  kKernelOracle = 200,
  kKernelTrace = 300,
  kKernelEmpirical = 400,
  kSpectrumGram = 1000,
  kSpectrumRayleigh = 1100,
  kSpectrumCheck = 1200,
  kSpectrumSphere = 1300,
  kSpectrumRotation = 1400,
  kSpectrumMonomial = 1500,
  kFisherSweep = 2000,
  kFisherKl = 2100,
  kFisherEmpirical = 2200,
  kApproxVectors = 3000,
  kApproxProject = 3100,
  kApproxError = 3200,
  kApproxRow = 3300,
  kFlowCompanion = 4000,
};

std::uint64_t stream(const ExperimentConfig& c, std::uint64_t id) { return derive_seed(c.seed, id); }

std::string iso_timestamp() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

Vector gaussian_vector(GaussianSource& rng, std::size_t d) {
  Vector x(static_cast<Eigen::Index>(d));
  rng.fill(x);
  return x;
}

Vector unit_vector(GaussianSource& rng, std::size_t d) {
  Vector x(static_cast<Eigen::Index>(d));
  rng.fill_sphere(x);
  return x;
}

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  double n = 0, sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double lx = std::log(x[i]), ly = std::log(y[i]);
    n += 1;
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

McScheme radial(std::vector<SignedPermutation> maps = {}, bool centered = false) {
  McScheme s;
  s.estimator = Estimator::RadialSphere;
  s.antithetic = std::move(maps);
  s.centered = centered;
  return s;
}

// Sign-flip maps on the given axes.
std::vector<SignedPermutation> flips(std::size_t d, std::initializer_list<std::size_t> axes) {
  std::vector<SignedPermutation> out;
  for (std::size_t a : axes) out.push_back(SignedPermutation::flip(d, a));
  return out;
}

// Variance-reduction scheme matched to the symmetry of each explicit mode.
McScheme scheme_for(const EigenFunction& f) {
  const std::size_t d = f.dim();
  switch (f.kind()) {
    case EigenKind::F0: return radial({SignedPermutation::negate(d)});
    case EigenKind::Linear: return radial({SignedPermutation::flip(d, f.indices()[0])});
    case EigenKind::Cross: return radial({SignedPermutation::flip(d, f.indices()[0]), SignedPermutation::flip(d, f.indices()[1])});
    default: return radial({SignedPermutation::negate(d)}, true);
  }
}

class Recorder {
 public:
  explicit Recorder(Report& r) : report_(r) {}

  void equal(std::string name, double target, const McEstimate& e, double sigmas, std::string anchor) {
    add(CheckRecord::make(std::move(name), Comparison::Equal, target, e.value, e.std_error,
                          sigmas * e.std_error + 1e-9, std::move(anchor)));
  }
  void add(CheckRecord r) { report_.records.push_back(std::move(r)); }
  void exact(std::string name, double target, double estimate, double tol, std::string anchor) {
    add(CheckRecord::make(std::move(name), Comparison::Equal, target, estimate, 0.0, tol, std::move(anchor)));
  }
  void at_most(std::string name, double bound, double estimate, double se, double tol, std::string anchor) {
    add(CheckRecord::make(std::move(name), Comparison::AtMost, bound, estimate, se, tol, std::move(anchor)));
  }
  void at_least(std::string name, double bound, double estimate, double se, double tol, std::string anchor) {
    add(CheckRecord::make(std::move(name), Comparison::AtLeast, bound, estimate, se, tol, std::move(anchor)));
  }
  void interval(std::string name, const Interval& iv, const McEstimate& e, std::string anchor) {
    add(CheckRecord::make(std::move(name), Comparison::Equal, 0.5 * (iv.lo + iv.hi), e.value, e.std_error,
                          0.5 * (iv.hi - iv.lo), std::move(anchor)));
  }

 private:
  Report& report_;
};

template <class Body>
Report run_timed(const char* suite, const ExperimentConfig& config, Body&& body) {
  config.validate();
  set_jobs(config.jobs);
  Report report;
  report.suite = suite;
  report.config = config;
  report.version = library_version();
  report.timestamp = iso_timestamp();
  const auto start = std::chrono::steady_clock::now();
  Recorder rec(report);
  body(report, rec);
  report.runtime_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

std::string comparison_name(Comparison c) {
  switch (c) {
    case Comparison::Equal: return "equal";
    case Comparison::AtMost: return "at_most";
    case Comparison::AtLeast: return "at_least";
  }
  return "?";
}

json number(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

}  // namespace

std::string library_version() { return RELU_NTK_VERSION; }

// ---------------------------------------------------------------------------
// Config

void ExperimentConfig::validate() const {
  auto fail = [](const std::string& what) { throw std::invalid_argument("config: " + what); };
  if (d < 2) fail("d must be >= 2");
  if (m < 1) fail("m must be >= 1");
  if (samples == 0) fail("samples must be > 0");
  if (samples < 2) fail("samples must be >= 2 for a standard error");
  if (seeds == 0) fail("seeds must be > 0");
  if (test_points == 0) fail("test_points must be > 0");
  if (kernel_pairs == 0) fail("kernel_pairs must be > 0");
  if (!(sigmas > 0)) fail("sigmas must be > 0");
  if (!(series_tol > 0) || series_n_max < 1) fail("series_tol must be > 0 and series_n_max >= 1");
  if (!(eigen_residual_factor > 0) || !(negative_factor > 0)) fail("residual factors must be > 0");
  if (!(top_cluster_tol > 0) || !(linear_cluster_tol > 0) || !(quadratic_cluster_tol > 0))
    fail("cluster tolerances must be > 0");
  if (kl_d < 1 || kl_m < 1 || kl_pairs < 1) fail("kl_d, kl_m and kl_pairs must be >= 1");
  if (approx_vectors == 0) fail("approx_vectors must be > 0");
  if (!(flow_eta > 0) || flow_steps < 2 || !(vflow_eta > 0) || vflow_steps < 1) fail("flow step sizes and counts must be positive");
  if (!(flow_ratio_tol > 0) || !(vflow_tol > 0)) fail("flow tolerances must be > 0");
  if (format != "json" && format != "csv" && format != "both") fail("format must be json, csv or both");
}

json ExperimentConfig::to_json() const {
  return json{{"d", d},
              {"m", m},
              {"seed", seed},
              {"samples", samples},
              {"seeds", seeds},
              {"test_points", test_points},
              {"kernel_pairs", kernel_pairs},
              {"sigmas", sigmas},
              {"series_tol", series_tol},
              {"series_n_max", series_n_max},
              {"eigen_residual_factor", eigen_residual_factor},
              {"negative_factor", negative_factor},
              {"top_cluster_tol", top_cluster_tol},
              {"linear_cluster_tol", linear_cluster_tol},
              {"quadratic_cluster_tol", quadratic_cluster_tol},
              {"kl_d", kl_d},
              {"kl_m", kl_m},
              {"kl_pairs", kl_pairs},
              {"approx_vectors", approx_vectors},
              {"flow_eta", flow_eta},
              {"flow_steps", flow_steps},
              {"flow_ratio_tol", flow_ratio_tol},
              {"vflow_eta", vflow_eta},
              {"vflow_steps", vflow_steps},
              {"vflow_tol", vflow_tol},
              {"corrupt_basis", corrupt_basis},
              {"jobs", jobs},
              {"out", out},
              {"format", format}};
}

ExperimentConfig ExperimentConfig::from_json(const json& j) {
  if (!j.is_object()) throw std::invalid_argument("config: expected a JSON object");
  ExperimentConfig c;
  const json defaults = c.to_json();
  for (const auto& [key, value] : j.items()) {
    if (!defaults.contains(key)) throw std::invalid_argument("config: unknown key '" + key + "'");
  }
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::remove_reference_t<decltype(field)>>();
  };
  get("d", c.d);
  get("m", c.m);
  get("seed", c.seed);
  get("samples", c.samples);
  get("seeds", c.seeds);
  get("test_points", c.test_points);
  get("kernel_pairs", c.kernel_pairs);
  get("sigmas", c.sigmas);
  get("series_tol", c.series_tol);
  get("series_n_max", c.series_n_max);
  get("eigen_residual_factor", c.eigen_residual_factor);
  get("negative_factor", c.negative_factor);
  get("top_cluster_tol", c.top_cluster_tol);
  get("linear_cluster_tol", c.linear_cluster_tol);
  get("quadratic_cluster_tol", c.quadratic_cluster_tol);
  get("kl_d", c.kl_d);
  get("kl_m", c.kl_m);
  get("kl_pairs", c.kl_pairs);
  get("approx_vectors", c.approx_vectors);
  get("flow_eta", c.flow_eta);
  get("flow_steps", c.flow_steps);
  get("flow_ratio_tol", c.flow_ratio_tol);
  get("vflow_eta", c.vflow_eta);
  get("vflow_steps", c.vflow_steps);
  get("vflow_tol", c.vflow_tol);
  get("corrupt_basis", c.corrupt_basis);
  get("jobs", c.jobs);
  get("out", c.out);
  get("format", c.format);
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file " + path);
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw std::runtime_error("config file " + path + ": " + e.what());
  }
  return from_json(j);
}

// ---------------------------------------------------------------------------
// Records and reports

CheckRecord CheckRecord::make(std::string name, Comparison cmp, double target, double estimate, double std_error,
                              double tolerance, std::string anchor) {
  CheckRecord r{std::move(name), cmp, target, estimate, std_error, tolerance, false, std::move(anchor)};
  switch (cmp) {
    case Comparison::Equal: r.pass = std::abs(estimate - target) <= tolerance; break;
    case Comparison::AtMost: r.pass = estimate <= target + tolerance; break;
    case Comparison::AtLeast: r.pass = estimate >= target - tolerance; break;
  }
  return r;
}

bool Report::passed() const {
  return std::all_of(records.begin(), records.end(), [](const CheckRecord& r) { return r.pass; });
}

std::vector<std::string> Report::failing_checks() const {
  std::vector<std::string> out;
  for (const auto& r : records)
    if (!r.pass) out.push_back(r.name);
  return out;
}

json Report::numeric_json() const {
  json recs = json::array();
  for (const auto& r : records) {
    recs.push_back({{"name", r.name},
                    {"comparison", comparison_name(r.comparison)},
                    {"target", number(r.target)},
                    {"estimate", number(r.estimate)},
                    {"std_error", number(r.std_error)},
                    {"tolerance", number(r.tolerance)},
                    {"pass", r.pass},
                    {"anchor", r.anchor}});
  }
  json cfg = config.to_json();
  cfg.erase("jobs");  // never changes a number
  return {{"suite", suite}, {"config", cfg}, {"records", recs}, {"flags", flags}, {"details", details},
          {"passed", passed()}};
}

json Report::to_json() const {
  json j = numeric_json();
  j["metadata"] = {{"version", version},
                   {"seed", config.seed},
                   {"jobs", config.jobs},
                   {"timestamp", timestamp},
                   {"runtime_seconds", runtime_seconds}};
  return j;
}

json reports_to_json(const std::vector<Report>& reports) {
  json suites = json::array();
  json failing = json::array();
  bool all = true;
  for (const auto& r : reports) {
    suites.push_back(r.to_json());
    if (!r.passed()) {
      all = false;
      failing.push_back(r.suite);
    }
  }
  return {{"version", library_version()}, {"passed", all}, {"failing_suites", failing}, {"suites", suites}};
}

std::string reports_to_csv(const std::vector<Report>& reports) {
  auto quote = [](const std::string& s) {
    std::string out = "\"";
    for (char ch : s) out += ch == '"' ? std::string("\"\"") : std::string(1, ch);
    return out + "\"";
  };
  auto num = [](double v) {
    if (!std::isfinite(v)) return std::string();
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
  };
  std::ostringstream os;
  os << "suite,name,comparison,target,estimate,std_error,tolerance,pass,anchor\n";
  for (const auto& rep : reports)
    for (const auto& r : rep.records)
      os << rep.suite << ',' << quote(r.name) << ',' << comparison_name(r.comparison) << ',' << num(r.target) << ','
         << num(r.estimate) << ',' << num(r.std_error) << ',' << num(r.tolerance) << ',' << (r.pass ? "true" : "false")
         << ',' << quote(r.anchor) << '\n';
  return os.str();
}

std::vector<std::string> write_reports(const std::vector<Report>& reports, const ExperimentConfig& config) {
  std::vector<std::string> written;
  auto write = [&](const std::string& path, const std::string& body) {
    const auto parent = std::filesystem::path(path).parent_path();
    std::error_code ec;
    if (!parent.empty()) std::filesystem::create_directories(parent, ec);
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << body;
    if (!out) throw std::runtime_error("write failed for " + path);
    written.push_back(path);
  };
  if (config.format == "json" || config.format == "both") write(config.out + ".json", reports_to_json(reports).dump(2) + "\n");
  if (config.format == "csv" || config.format == "both") write(config.out + ".csv", reports_to_csv(reports));
  return written;
}

// ---------------------------------------------------------------------------
// kernel-check

Report run_kernel_check(const ExperimentConfig& config) {
  return run_timed("kernel-check", config, [&](Report& report, Recorder& rec) {
    const std::size_t d = config.d;
    const SeriesParams params = config.series();
    GaussianSource pts(stream(config, kKernelPoints));

    Vector e0 = Vector::Zero(static_cast<Eigen::Index>(d)), e1 = e0;
    e0[0] = 1.0;
    e1[1] = 1.0;
    rec.exact("orthogonal_unit_pair", 1.0 / (2.0 * kPi), ntk_series(e0, e1, params).value, 1e-12,
              "orthogonal unit inputs keep only the constant term 1/(2 pi)");
    const Vector x = gaussian_vector(pts, d);
    {
      const KernelValue same = ntk_series(x, 2.5 * x, params);
      rec.exact("collinear_same_direction", 1.25 * x.squaredNorm(), same.value,
                same.tail_bound + 1e-12 * x.squaredNorm(), "k(x, c x) = c |x|^2 / 2");
      const KernelValue opp = ntk_series(x, -x, params);
      rec.exact("collinear_opposite_direction", 0.0, opp.value, opp.tail_bound + 1e-12 * x.squaredNorm(),
                "k(x, -x) = 0 since relu(t) relu(-t) = 0");
      const Vector xh = x / x.norm();
      const KernelValue rem = remainder_kernel(xh, xh, params);
      rec.exact("remainder_diagonal", 0.25 - 3.0 / (4.0 * kPi), rem.value, rem.tail_bound + 1e-9,
                "r(x, x) = 1/2 - 1/(2 pi) - 1/4 - 1/(4 pi) at unit norm");
      KernelValue trunc = truncated_kernel(xh, xh, 80, params);
      const double envelope = 1.0 / (12.0 * kPi * std::sqrt(kPi) * std::pow(80.0, 1.5));
      rec.exact("truncated_order80_diagonal", 0.5, trunc.value, envelope, "k^(n)(x, x) approaches |x|^2/2");
    }

    // random pairs: oracle agreement, symmetry, homogeneity, Cauchy-Schwarz, telescoping
    double worst_sym = 0.0, worst_hom = 0.0, worst_cs = -INFINITY, worst_tele = 0.0;
    std::size_t unconverged = 0;
    json pairs = json::array();
    for (std::size_t j = 0; j < config.kernel_pairs; ++j) {
      const Vector a = gaussian_vector(pts, d), b = gaussian_vector(pts, d);
      const KernelValue k = ntk_series(a, b, params);
      if (!k.converged) ++unconverged;
      const McEstimate mc = ntk_mc_oracle(a, b, d, config.samples, derive_seed(stream(config, kKernelOracle), j));
      rec.add(CheckRecord::make("series_vs_oracle[" + std::to_string(j) + "]", Comparison::Equal, k.value, mc.value,
                                mc.std_error, config.sigmas * mc.std_error + 1e-9,
                                "series kernel equals E[relu(x.Z) relu(y.Z)]"));
      pairs.push_back({{"series", k.value}, {"terms", k.n_terms_used}, {"tail_bound", k.tail_bound},
                       {"closed_tail", k.closed_tail}});

      worst_sym = std::max(worst_sym, std::abs(k.value - ntk_series(b, a, params).value));
      const double scale = 3.7;
      const KernelValue ks = ntk_series(scale * a, b, params);
      const double slack = ks.tail_bound + scale * k.tail_bound;
      worst_hom = std::max(worst_hom, std::max(0.0, std::abs(ks.value - scale * k.value) - slack) /
                                          std::max(1e-300, std::abs(scale * k.value)));
      const double kaa = ntk_series(a, a, params).value, kbb = ntk_series(b, b, params).value;
      worst_cs = std::max(worst_cs, (k.value * k.value - kaa * kbb) / (kaa * kbb));
      const double c = a.dot(b) / (a.norm() * b.norm());
      for (int n = 1; n <= 5; ++n) {
        const double diff = truncated_kernel(a, b, n, params).value - truncated_kernel(a, b, n - 1, params).value;
        worst_tele = std::max(worst_tele, std::abs(diff - a.norm() * b.norm() * series_term(n, c)));
      }
    }
    report.details["pairs"] = pairs;
    rec.exact("series_converged_pairs", 0.0, static_cast<double>(unconverged), 0.0,
              "series truncation reaches its tolerance before n_max");
    rec.at_most("symmetry", 0.0, worst_sym, 0.0, 1e-14, "k(x, y) = k(y, x)");
    rec.at_most("homogeneity", 0.0, worst_hom, 0.0, 1e-12, "k(c x, y) = c k(x, y) for c > 0, beyond the tail bounds");
    rec.at_most("cauchy_schwarz", 0.0, worst_cs, 0.0, 1e-12, "k(x, y)^2 <= k(x, x) k(y, y)");
    rec.at_most("truncated_telescoping", 0.0, worst_tele, 0.0, 1e-13,
                "k^(n) - k^(n-1) equals the single series term n");

    // remainder Gram matrix is positive semidefinite
    {
      const std::size_t n_pts = 20;
      std::vector<Vector> p;
      for (std::size_t i = 0; i < n_pts; ++i) p.push_back(gaussian_vector(pts, d));
      Matrix g(static_cast<Eigen::Index>(n_pts), static_cast<Eigen::Index>(n_pts));
      for (std::size_t i = 0; i < n_pts; ++i)
        for (std::size_t k = 0; k < n_pts; ++k)
          g(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = remainder_kernel(p[i], p[k], params).value;
      const Vector ev = eigenvalues_descending(0.5 * (g + g.transpose()));
      rec.at_least("remainder_gram_psd", 0.0, ev[ev.size() - 1], 0.0, 1e-8 * std::max(1.0, ev[0]),
                   "remainder kernel Gram matrices are positive semidefinite");
    }

    const McEstimate tr = trace_estimate(KernelSpec::series(params), d, config.samples, stream(config, kKernelTrace));
    rec.equal("trace", 0.5 * static_cast<double>(d), tr, config.sigmas, "E[k(x, x)] = d/2");
    const McEstimate rtr =
        trace_estimate(KernelSpec::remainder(params), d, config.samples, stream(config, kKernelTrace + 1));
    rec.at_most("remainder_trace_bound", remainder_trace_bound(d), rtr.value, rtr.std_error,
                config.sigmas * rtr.std_error, "E[r(x, x)] <= (d/2)(1/2 - (3d+2)/(2 pi (d+2)))");

    // empirical kernel converges at rate m^(-1/2)
    {
      const Vector a = gaussian_vector(pts, d), b = gaussian_vector(pts, d);
      const double exact = ntk_series(a, b, params).value;
      const std::vector<double> widths{100, 400, 1600};
      const std::size_t reps = 50;
      std::vector<double> rms;
      for (std::size_t wi = 0; wi < widths.size(); ++wi) {
        double s2 = 0.0;
        for (std::size_t s = 0; s < reps; ++s) {
          const auto w = sample_network(NetworkConfig(
              d, static_cast<std::size_t>(widths[wi]), derive_seed(stream(config, kKernelEmpirical), wi * reps + s)));
          const double diff = ntk_empirical(w, a, b) - exact;
          s2 += diff * diff;
        }
        rms.push_back(std::sqrt(s2 / static_cast<double>(reps)));
      }
      report.details["empirical_rms"] = {{"m", widths}, {"rms", rms}};
      rec.exact("empirical_kernel_rate", -0.5, loglog_slope(widths, rms), 0.15,
                "finite-width kernel error shrinks like m^(-1/2)");
    }
  });
}

// ---------------------------------------------------------------------------
// spectrum

Report run_spectrum(const ExperimentConfig& config) {
  return run_timed("spectrum", config, [&](Report& report, Recorder& rec) {
    const std::size_t d = config.d;
    const std::size_t n = config.samples;
    const auto kernel = KernelSpec::series(config.series());
    const double sig = config.sigmas;

    // orthonormality of the explicit basis
    {
      std::vector<RealFunction> basis;
      for (const auto& f : explicit_basis(d)) {
        if (config.corrupt_basis && f.kind() == EigenKind::Gamma) {
          const auto g = EigenFunction::g(d, f.indices()[0]);
          const double dd = static_cast<double>(d);
          const double norm = std::sqrt((2.0 * dd - 2.0) / (dd * (dd + 2.0)));
          basis.push_back({[g, norm](const Vector& x) { return g(x) / norm; }, 1.0, "g_normalized"});
        } else {
          basis.push_back(f.as_function());
        }
      }
      if (config.corrupt_basis) report.flags.push_back("corrupt_basis: F_gamma replaced by normalized g_gamma");
      const GramEstimate gram = gram_matrix(basis, d, n, stream(config, kSpectrumGram));
      double worst = -1.0;
      Eigen::Index wi = 0, wj = 0;
      std::size_t bad = 0;
      for (Eigen::Index i = 0; i < gram.value.rows(); ++i) {
        for (Eigen::Index j = i; j < gram.value.cols(); ++j) {
          const double target = i == j ? 1.0 : 0.0;
          const double dev = std::abs(gram.value(i, j) - target);
          const double z = dev / (gram.std_error(i, j) + 1e-300);
          if (dev > sig * gram.std_error(i, j) + 1e-9) ++bad;
          if (z > worst) {
            worst = z;
            wi = i;
            wj = j;
          }
        }
      }
      const double target = wi == wj ? 1.0 : 0.0;
      rec.add(CheckRecord::make("gram_worst_entry[" + std::to_string(wi) + "," + std::to_string(wj) + "]",
                                Comparison::Equal, target, gram.value(wi, wj), gram.std_error(wi, wj),
                                sig * gram.std_error(wi, wj) + 1e-9, "explicit eigenfunctions are orthonormal"));
      rec.exact("gram_entries_outside", 0.0, static_cast<double>(bad), 0.0, "explicit eigenfunctions are orthonormal");
      report.details["gram_size"] = gram.value.rows();
    }

    // g / h family norms
    {
      const double dd = static_cast<double>(d);
      const GramEstimate gh = gram_matrix(std::vector<EigenFunction>{EigenFunction::g0(d), EigenFunction::g(d, 0),
                                                                     EigenFunction::h(d, 0)},
                                          n, stream(config, kSpectrumGram + 1));
      auto est = [&](int i, int j) { return McEstimate{gh.value(i, j), gh.std_error(i, j), n}; };
      rec.equal("g0_g_orthogonal", 0.0, est(0, 1), sig, "<g_0, g_gamma> = 0");
      rec.equal("g_squared_norm", (2.0 * dd - 2.0) / (dd * (dd + 2.0)), est(1, 1), sig,
                "|g_gamma|^2 = (2d-2)/(d(d+2))");
      rec.equal("h_squared_norm", 2.0 / (dd + 2.0), est(2, 2), sig, "|h_gamma|^2 = 2/(d+2)");
    }

    // Rayleigh quotients
    const auto fl = EigenFunction::linear(d, 0);
    const auto fab = EigenFunction::cross(d, 0, 1);
    const auto fg = EigenFunction::gamma(d, 0);
    const auto f0 = EigenFunction::f0(d);
    const McEstimate rq_l = rayleigh_quotient(kernel, fl.as_function(), d, n, stream(config, kSpectrumRayleigh), scheme_for(fl));
    rec.equal("rayleigh_linear", 0.25, rq_l, sig, "linear functions have eigenvalue 1/4");
    const std::size_t n_mode = 4 * n;
    const McEstimate rq_0 = rayleigh_quotient(kernel, f0.as_function(), d, n_mode, stream(config, kSpectrumRayleigh + 1), scheme_for(f0));
    rec.interval("mu0_interval", mu0_interval(d), rq_0, "F0 eigenvalue lies in [(2d+1)/(4 pi), +0.013 d]");
    const McEstimate rq_ab = rayleigh_quotient(kernel, fab.as_function(), d, n_mode, stream(config, kSpectrumRayleigh + 2), scheme_for(fab));
    rec.interval("mu2_interval_cross", mu2_interval(d), rq_ab, "F_ab eigenvalue lies in [1/(2 pi (d+2)), +0.026/(d+3)]");
    const McEstimate rq_g = rayleigh_quotient(kernel, fg.as_function(), d, n_mode, stream(config, kSpectrumRayleigh + 3), scheme_for(fg));
    rec.interval("mu2_interval_gamma", mu2_interval(d), rq_g, "F_gamma eigenvalue lies in [1/(2 pi (d+2)), +0.026/(d+3)]");
    rec.add(CheckRecord::make("mu2_shared", Comparison::Equal, rq_ab.value, rq_g.value, rq_g.std_error,
                              sig * std::hypot(rq_ab.std_error, rq_g.std_error), "F_gamma and F_ab share one eigenvalue"));
    report.details["mu0"] = {{"value", rq_0.value}, {"std_error", rq_0.std_error}};
    report.details["mu2"] = {{"value", rq_ab.value}, {"std_error", rq_ab.std_error}};

    // pointwise eigen-residuals with a pooled Monte Carlo tolerance
    {
      struct Item {
        std::string name;
        RealFunction f;
        McScheme scheme;
      };
      std::vector<Item> items{{"F0", f0.as_function(), scheme_for(f0)},
                              {"F_l", fl.as_function(), scheme_for(fl)},
                              {"F_gamma", fg.as_function(), scheme_for(fg)},
                              {"F_ab", fab.as_function(), scheme_for(fab)}};
      std::vector<EigenCheckReport> checks;
      double pooled = 0.0;
      for (std::size_t i = 0; i < items.size(); ++i) {
        checks.push_back(eigen_check(kernel, items[i].f, d, config.test_points, n,
                                     derive_seed(stream(config, kSpectrumCheck), i), items[i].scheme));
        pooled = std::max(pooled, checks.back().mc_tolerance);
      }
      for (std::size_t i = 0; i < items.size(); ++i)
        rec.at_most("eigen_residual_" + items[i].name, 0.0, checks[i].residual_rel, checks[i].mc_tolerance,
                    config.eigen_residual_factor * pooled, "K f = lambda f pointwise for the explicit modes");
      const RealFunction control{[](const Vector& x) { return x[0] * x.norm(); }, 2.0, "x_0 |x|"};
      const auto neg = eigen_check(kernel, control, d, config.test_points, n,
                                   derive_seed(stream(config, kSpectrumCheck), 99), radial(flips(d, {0})));
      rec.at_least("eigen_residual_control", config.negative_factor * pooled, neg.residual_rel, neg.mc_tolerance, 0.0,
                   "x_0 |x| is not an eigenfunction");
      report.details["pooled_tolerance"] = pooled;
    }

    // sphere moments: proportionality to f(x_bar) and vanishing odd moments
    {
      GaussianSource dirs(stream(config, kSpectrumSphere));
      std::vector<Vector> xb;
      for (int i = 0; i < 10; ++i) xb.push_back(unit_vector(dirs, d));
      std::uint64_t sub = 0;
      for (int order : {1, 2, 3}) {
        for (const auto& f : {fab, fg}) {
          const auto rep = sphere_moment_proportionality(f.as_function(), order, xb, n,
                                                         derive_seed(stream(config, kSpectrumSphere + 1), sub++));
          rec.at_most("sphere_moment_proportional_" + f.label() + "_n" + std::to_string(order), 0.0, rep.max_abs_z, 0.0,
                      sig, "sphere moment of order 2n+2 is proportional to f(x_bar)");
        }
        double worst = 0.0;
        for (std::size_t j = 0; j < xb.size(); ++j) {
          const auto mom = sphere_moment(xb[j], order, fl.as_function(), n,
                                         derive_seed(stream(config, kSpectrumSphere + 2), sub++));
          worst = std::max(worst, std::abs(mom.value) / std::max(mom.std_error, 1e-300));
        }
        rec.at_most("sphere_moment_linear_zero_n" + std::to_string(order), 0.0, worst, 0.0, sig,
                    "odd integrands give vanishing sphere moments");
      }
      const auto ma = sphere_moment(xb[0], 1, f0.as_function(), n, derive_seed(stream(config, kSpectrumSphere + 3), 0));
      const auto mb = sphere_moment(xb[1], 1, f0.as_function(), n, derive_seed(stream(config, kSpectrumSphere + 3), 1));
      rec.add(CheckRecord::make("sphere_moment_F0_direction_free", Comparison::Equal, ma.value, mb.value, mb.std_error,
                                sig * std::hypot(ma.std_error, mb.std_error),
                                "F0 sphere moment does not depend on x_bar"));
    }

    // rotation invariance
    {
      const RealFunction diff{[](const Vector& x) { return (x[0] * x[0] - x[1] * x[1]) / x.norm(); }, 1.0,
                              "(x0^2 - x1^2)/|x|"};
      const auto rq = rayleigh_quotient(kernel, diff, d, n_mode, stream(config, kSpectrumRotation),
                                        radial({SignedPermutation::swap(d, 0, 1), SignedPermutation::flip(d, 0)}));
      rec.add(CheckRecord::make("rotated_quadratic_rayleigh", Comparison::Equal, rq_ab.value, rq.value, rq.std_error,
                                sig * std::hypot(rq.std_error, rq_ab.std_error),
                                "(x_a^2 - x_b^2)/|x| shares the eigenvalue of F_ab"));
      const Matrix u = random_orthogonal(d, stream(config, kSpectrumRotation + 1));
      const auto rot = rotate_function(fl.as_function(), u);
      const auto rq_rot = rayleigh_quotient(kernel, rot, d, n, stream(config, kSpectrumRotation + 2),
                                            radial({SignedPermutation::negate(d)}));
      rec.equal("rotated_linear_rayleigh", 0.25, rq_rot, sig, "rotating a linear function keeps eigenvalue 1/4");
      Matrix swap = Matrix::Identity(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
      swap.row(0).swap(swap.row(1));
      const auto swapped = rotate_function(fab.as_function(), swap);
      GaussianSource probe(stream(config, kSpectrumRotation + 3));
      double worst = 0.0;
      for (int i = 0; i < 20; ++i) {
        const Vector p = gaussian_vector(probe, d);
        worst = std::max(worst, std::abs(swapped(p) - fab(p)));
      }
      rec.at_most("transposed_cross_identical", 0.0, worst, 0.0, 1e-12, "x_a x_b is symmetric under swapping a and b");
    }

    // monomial eigenfunctions of the truncated kernels
    {
      const std::size_t dm = 6;
      const auto mc = monomial_check(dm, {0, 1, 2, 3}, config.series(), config.test_points, n,
                                     stream(config, kSpectrumMonomial));
      rec.at_most("monomial_order1_residual", 0.0, mc.residual_rel, mc.mc_tolerance,
                  config.eigen_residual_factor * mc.mc_tolerance,
                  "x0 x1 x2 x3 / |x|^3 is an eigenfunction of k^(1)");
      const RealFunction rotated{
          [](const Vector& x) {
            const double r = x.norm();
            return (x[0] * x[0] - x[1] * x[1]) * (x[2] * x[2] - x[3] * x[3]) / (r * r * r);
          },
          1.0, "(x0^2-x1^2)(x2^2-x3^2)/|x|^3"};
      const auto rq_rot = rayleigh_quotient(
          KernelSpec::truncated(1, config.series()), rotated, dm, n, stream(config, kSpectrumMonomial + 1),
          radial({SignedPermutation::swap(dm, 0, 1), SignedPermutation::swap(dm, 2, 3), SignedPermutation::flip(dm, 0),
                  SignedPermutation::flip(dm, 2)}));
      rec.add(CheckRecord::make("monomial_rotated_rayleigh", Comparison::Equal, mc.rayleigh.value, rq_rot.value, rq_rot.std_error,
                                sig * std::hypot(mc.rayleigh.std_error, rq_rot.std_error),
                                "rotated monomial shares the monomial eigenvalue"));

      const std::size_t d3 = 3;
      const auto k0 = KernelSpec::truncated(0, config.series());
      const auto mono0 = EigenFunction::monomial(d3, {0, 1});
      const auto cross0 = EigenFunction::cross(d3, 0, 1);
      const auto a = rayleigh_quotient(k0, mono0.as_function(), d3, n, stream(config, kSpectrumMonomial + 2),
                                       radial(flips(d3, {0, 1})));
      const auto b = rayleigh_quotient(k0, cross0.as_function(), d3, n, stream(config, kSpectrumMonomial + 3),
                                       radial(flips(d3, {0, 1})));
      rec.add(CheckRecord::make("monomial_order0_matches_cross", Comparison::Equal, b.value, a.value, a.std_error,
                                sig * std::hypot(a.std_error, b.std_error),
                                "x0 x1/|x| has the F_ab eigenvalue under k^(0)"));
    }
  });
}

// ---------------------------------------------------------------------------
// fisher

Report run_fisher(const ExperimentConfig& config) {
  return run_timed("fisher", config, [&](Report& report, Recorder& rec) {
    const std::size_t d = config.d, m = config.m;
    const SeriesParams params = config.series();

    const auto w = sample_network(NetworkConfig(d, m, config.seed));
    const FisherMatrix j = fisher_exact(w, params);
    rec.at_most("symmetric", 0.0, (j.J - j.J.transpose()).cwiseAbs().maxCoeff(), 0.0, 1e-12, "J is symmetric");
    const double col_sq = w.matrix().colwise().squaredNorm().sum();
    rec.exact("trace_law", 0.5 * col_sq, j.J.trace(), 1e-10 * std::max(1.0, col_sq), "J_ii = |W_i|^2 / 2");

    const EigenDecomposition eig = eigendecompose(j, 1e-8);
    rec.at_most("eigen_reconstruction", 0.0, eig.reconstruction_error, 0.0, 1e-8, "J = sum lambda_i u_i u_i^T");
    rec.at_most("eigen_orthonormality", 0.0, eig.orthogonality_error, 0.0, 1e-8, "eigenvectors are orthonormal");
    rec.at_least("psd", 0.0, eig.values[eig.values.size() - 1], 0.0, 1e-8 * eig.values[0],
                 "J is positive semidefinite");
    {
      const Eigen::Index b = std::min<Eigen::Index>(80, j.J.rows());
      const Matrix block = j.J.topLeftCorner(b, b);
      const auto ja = jacobi_eigen(block);
      const Vector ref = eigenvalues_descending(block);
      rec.at_most("jacobi_agreement", 0.0, (ja.values - ref).cwiseAbs().maxCoeff(), 0.0, 1e-10 * std::max(1.0, ref[0]),
                  "Jacobi sweeps and the tridiagonal solver agree");
    }

    // cluster structure over a seed sweep
    const std::size_t needed = 2 * d + d * (d - 1) / 2;
    if (m < needed) {
      report.flags.push_back("bulk-only: m = " + std::to_string(m) + " is below the cluster capacity " +
                             std::to_string(needed) + "; cluster checks skipped");
    } else {
      if (m < 20 * d * d)
        report.flags.push_back("m below 20 d^2: cluster tolerances were calibrated at larger widths");
      std::size_t top_ok = 0, lin_ok = 0, quad_ok = 0, bias_ok = 0;
      json sweep = json::array();
      for (std::size_t s = 0; s < config.seeds; ++s) {
        const auto ws = s == 0 ? w : sample_network(NetworkConfig(d, m, derive_seed(stream(config, kFisherSweep), s)));
        const Matrix js = s == 0 ? j.J : fisher_exact(ws, params).J;
        const Vector ev = eigenvalues_descending(js);
        const auto cl = cluster_spectrum(std::vector<double>(ev.data(), ev.data() + ev.size()), d, m);
        top_ok += std::abs(cl.top.rel_deviation) <= config.top_cluster_tol;
        lin_ok += std::abs(cl.linear.rel_deviation) <= config.linear_cluster_tol;
        quad_ok += std::abs(cl.quadratic.rel_deviation) <= config.quadratic_cluster_tol;
        bias_ok += cl.bulk_below_quadratic;
        sweep.push_back({{"top_mean", cl.top.mean},
                         {"linear_mean", cl.linear.mean},
                         {"quadratic_mean", cl.quadratic.mean},
                         {"quadratic_rel_dev_2pi_d", cl.quadratic.rel_deviation},
                         {"quadratic_rel_dev_2pi_d_plus_2", cl.quadratic_alt.rel_deviation},
                         {"bulk_max", cl.bulk_max},
                         {"counts", {cl.top.count, cl.linear.count, cl.quadratic.count, cl.bulk.count}}});
        if (s == 0) {
          rec.exact("cluster_count_linear", static_cast<double>(d), static_cast<double>(cl.linear.count), 0.0,
                    "linear cluster holds d eigenvalues");
          rec.exact("cluster_count_quadratic", static_cast<double>((d - 1) + d * (d - 1) / 2),
                    static_cast<double>(cl.quadratic.count), 0.0, "quadratic cluster holds (d-1) + d(d-1)/2 eigenvalues");
        }
      }
      report.details["cluster_sweep"] = sweep;
      report.details["cluster_centers"] = {{"top", f0_coefficient(d)},
                                           {"linear", 0.25},
                                           {"quadratic_2pi_d", 1.0 / (2.0 * kPi * static_cast<double>(d))},
                                           {"quadratic_2pi_d_plus_2", quadratic_coefficient(d)}};
      const double majority = std::floor(static_cast<double>(config.seeds) / 2.0) + 1.0;
      rec.at_least("top_cluster_majority", majority, static_cast<double>(top_ok), 0.0, 0.0,
                   "top eigenvalue near (2d+1)/(4 pi)");
      rec.at_least("linear_cluster_majority", majority, static_cast<double>(lin_ok), 0.0, 0.0,
                   "next d eigenvalues near 1/4");
      rec.at_least("quadratic_cluster_majority", majority, static_cast<double>(quad_ok), 0.0, 0.0,
                   "quadratic cluster near 1/(2 pi d)");
      if (m >= 20 * d * d)
        rec.at_least("bulk_below_quadratic_majority", majority, static_cast<double>(bias_ok), 0.0, 0.0,
                     "bulk eigenvalues sit below the quadratic cluster");
    }

    // trace concentrates at d/2 across seeds
    {
      MomentStats traces(1);
      for (std::size_t s = 0; s < config.seeds; ++s) {
        const auto ws = sample_network(NetworkConfig(d, m, derive_seed(stream(config, kFisherSweep + 1), s)));
        traces.add(0.5 * ws.matrix().squaredNorm());
      }
      rec.equal("trace_across_seeds", 0.5 * static_cast<double>(d), traces.estimate(), config.sigmas,
                "E trace(J) = d/2");
    }

    // KL and metric identities at small width
    {
      const auto ws = sample_network(NetworkConfig(config.kl_d, config.kl_m, stream(config, kFisherKl)));
      const FisherMatrix js = fisher_exact(ws, params);
      GaussianSource vecs(stream(config, kFisherKl + 1));
      double worst_kl = 0.0, worst_iso = 0.0;
      for (std::size_t p = 0; p < config.kl_pairs; ++p) {
        const Vector u = unit_vector(vecs, config.kl_m), v = unit_vector(vecs, config.kl_m);
        const McEstimate mc = kl_mc_oracle(u, v, ws, config.samples, derive_seed(stream(config, kFisherKl + 2), p));
        worst_kl = std::max(worst_kl, std::abs(mc.value - kl_divergence(u, v, js)) / mc.std_error);
        const auto iso = metric_isometry_check(u, v, ws, config.samples, derive_seed(stream(config, kFisherKl + 3), p), params);
        worst_iso = std::max(worst_iso, std::abs(iso.z));
      }
      rec.at_most("kl_matches_oracle_worst_z", 0.0, worst_kl, 0.0, config.sigmas,
                  "KL divergence equals (u-v) J (u-v)^T / 2");
      rec.at_most("isometry_worst_z", 0.0, worst_iso, 0.0, config.sigmas, "<f_u, f_v> = u J v^T");
      const Vector e1 = Vector::Unit(static_cast<Eigen::Index>(config.kl_m), 0);
      rec.exact("kl_identity_fisher_unit", 0.5,
                kl_divergence(e1, Vector::Zero(static_cast<Eigen::Index>(config.kl_m)),
                              FisherMatrix::synthetic(Matrix::Identity(static_cast<Eigen::Index>(config.kl_m),
                                                                       static_cast<Eigen::Index>(config.kl_m)))),
                1e-15, "KL with J = I and u - v = e_1 is 1/2");

      // empirical Fisher converges like n^(-1/2)
      const std::vector<double> ns{1e3, 1e4, 1e5};
      const std::size_t reps = 5;
      std::vector<double> errs;
      const double jnorm = js.J.norm();
      for (std::size_t k = 0; k < ns.size(); ++k) {
        double s = 0.0;
        for (std::size_t r = 0; r < reps; ++r) {
          const auto je = fisher_empirical(ws, static_cast<std::size_t>(ns[k]),
                                           derive_seed(stream(config, kFisherEmpirical), k * reps + r));
          s += (je.J - js.J).norm() / jnorm;
        }
        errs.push_back(s / static_cast<double>(reps));
      }
      report.details["empirical_fisher_error"] = {{"n", ns}, {"rel_frobenius", errs}};
      rec.exact("empirical_fisher_rate", -0.5, loglog_slope(ns, errs), 0.15,
                "empirical Fisher error shrinks like n^(-1/2)");
    }
  });
}

// ---------------------------------------------------------------------------
// approx

Report run_approx(const ExperimentConfig& config) {
  return run_timed("approx", config, [&](Report& report, Recorder& rec) {
    const std::size_t d = config.d, m = config.m;
    const double dd = static_cast<double>(d);

    const auto rows = sample_complexity_report(d);
    rec.exact("sample_multiplier_order", 1.0,
              rows[0].multiplier < rows[1].multiplier && rows[1].multiplier < rows[2].multiplier ? 1.0 : 0.0, 0.0,
              "sample size multipliers order as 1/mu0 < 4 < 1/mu2");
    json table = json::array();
    for (const auto& r : rows) table.push_back({{"family", r.family}, {"eigenvalue", r.eigenvalue}, {"multiplier", r.multiplier}});
    report.details["sample_complexity"] = table;

    const ModeEigenvalues& modes = mode_eigenvalues(d);
    rec.interval("mu0_interval", modes.mu0_bounds(), modes.mu0, "F0 eigenvalue lies in [(2d+1)/(4 pi), +0.013 d]");
    rec.interval("mu2_interval", modes.mu2_bounds(), modes.mu2, "quadratic eigenvalue lies in [1/(2 pi (d+2)), +0.026/(d+3)]");

    const auto w = sample_network(NetworkConfig(d, m, config.seed));
    GaussianSource vecs(stream(config, kApproxVectors));
    MomentStats residuals(1), norms(1);
    double se2 = 0.0, nse2 = 0.0;
    bool shrink_ok = true;
    json per_vector = json::array();
    Vector v_first;
    ApproxModel model_first;
    for (std::size_t k = 0; k < config.approx_vectors; ++k) {
      const Vector v = unit_vector(vecs, m);
      const ApproxModel model = project(v, w, config.samples, derive_seed(stream(config, kApproxProject), k), modes);
      const McEstimate err = approx_error(v, w, model, config.samples, derive_seed(stream(config, kApproxError), k));
      const McEstimate nrm = network_norm(v, w, config.samples, derive_seed(stream(config, kApproxError + 1), k));
      residuals.add(err.value);
      norms.add(nrm.value);
      se2 += err.std_error * err.std_error;
      nse2 += nrm.std_error * nrm.std_error;
      shrink_ok = shrink_ok && model.squared_norm() <= nrm.value + config.sigmas * nrm.std_error +
                                                           2.0 * model.coefficients.cwiseProduct(model.coefficient_se).norm() * config.sigmas;
      per_vector.push_back({{"residual", err.value}, {"residual_se", err.std_error}, {"norm", nrm.value},
                            {"model_norm", model.squared_norm()}, {"theta_norm", model.theta.norm()}});
      if (k == 0) {
        v_first = v;
        model_first = model;
      }
    }
    report.details["vectors"] = per_vector;
    const double kv = static_cast<double>(config.approx_vectors);
    const McEstimate mean_res{residuals.mean(), std::sqrt(se2) / kv, config.samples};
    const double bound = remainder_trace_bound(d);
    rec.at_most("residual_below_remainder_trace", bound, mean_res.value, mean_res.std_error,
                config.sigmas * mean_res.std_error, "|f_v - f^(D)|^2 <= (d/2)(1/2 - (3d+2)/(2 pi (d+2)))");
    const double frac = mean_res.value / norms.mean();
    const double frac_se = frac * std::hypot(mean_res.std_error / mean_res.value, std::sqrt(nse2) / kv / norms.mean());
    rec.at_most("residual_fraction", bound / (0.5 * dd), frac, frac_se, config.sigmas * frac_se,
                "residual share of |f_v|^2 stays below the remainder share of the trace");
    rec.exact("projection_shrinks_norm", 1.0, shrink_ok ? 1.0 : 0.0, 0.0, "|f^(D)|^2 <= |f_v|^2");

    const auto pyth = pythagoras_check(v_first, w, model_first, config.samples, stream(config, kApproxError + 2));
    rec.add(CheckRecord::make("pythagoras", Comparison::Equal, 0.0, pyth.gap, pyth.combined_se, config.sigmas * pyth.combined_se,
                              "|f_v|^2 = |f^(D)|^2 + |f_v - f^(D)|^2"));

    {
      // idempotence: projecting the reconstruction returns its coefficients
      const ApproxModel& p = model_first;
      const RealFunction recon{[&p](const Vector& x) { return p(x); }, 1.0, "f^(D)"};
      const std::size_t n_idem = std::min<std::size_t>(config.samples, 20000);
      const ApproxModel again = project_function(recon, d, n_idem, stream(config, kApproxError + 3), modes);
      double worst = 0.0;
      for (Eigen::Index i = 0; i < p.coefficients.size(); ++i) {
        const double se = std::hypot(p.coefficient_se[i], again.coefficient_se[i]);
        worst = std::max(worst, std::abs(again.coefficients[i] - p.coefficients[i]) / se);
      }
      rec.at_most("projection_idempotent_worst_z", 0.0, worst, 0.0, config.sigmas,
                  "projecting f^(D) returns the same coefficients");
    }

    {
      // a hidden-weight row drives the matching linear mode
      const std::size_t rd = 3, rm = 4000;
      const auto wr = sample_network(NetworkConfig(rd, rm, stream(config, kApproxRow)));
      Vector v = wr.row(0);
      v /= v.norm();
      const ApproxModel mr = project(v, wr, 20000, stream(config, kApproxRow + 1), mode_eigenvalues(rd));
      const Eigen::Index lin = static_cast<Eigen::Index>(BasisLayout{rd}.linear_begin());
      double other = 0.0, worst_z = 0.0;
      for (Eigen::Index i = 0; i < mr.theta.size(); ++i) {
        if (i == lin) continue;
        other = std::max(other, std::abs(mr.theta[i]));
        worst_z = std::max(worst_z, std::abs(mr.theta[i]) / mr.theta_se[i]);
      }
      rec.at_least("row_mode_dominant", other, std::abs(mr.theta[lin]), mr.theta_se[lin], 0.0,
                   "v = W_l excites the F_l mode");
      rec.at_most("row_mode_leakage_worst_z", 0.0, worst_z, 0.0, 5.0, "other modes stay within noise for v = W_l");
      report.details["row_theta"] = std::vector<double>(mr.theta.data(), mr.theta.data() + mr.theta.size());
    }
  });
}

// ---------------------------------------------------------------------------
// flow

Report run_flow(const ExperimentConfig& config) {
  return run_timed("flow", config, [&](Report& report, Recorder& rec) {
    const std::size_t d = config.d;
    {
      const auto tr = gradient_flow(Vector::Ones(1), Vector::Zero(1), Vector::Constant(1, 0.25), 0.1, 20);
      double worst = 0.0;
      for (std::size_t s = 1; s < tr.theta[0].size(); ++s)
        worst = std::max(worst, std::abs((1.0 - tr.theta[0][s]) / (1.0 - tr.theta[0][s - 1]) - 0.975));
      rec.at_most("single_mode_step_ratio", 0.0, worst, 0.0, 1e-12, "error shrinks by 1 - eta lambda per step");
    }

    const ModeEigenvalues& modes = mode_eigenvalues(d);
    const Vector lambdas = (Vector(3) << modes.mu0.value, modes.linear, modes.mu2.value).finished();
    const auto tr = gradient_flow(Vector::Ones(3), Vector::Zero(3), lambdas, config.flow_eta, config.flow_steps);
    const double ratio = tr.fitted_rates[0] / tr.fitted_rates[2];
    const double expected = modes.mu0.value / modes.mu2.value;
    rec.exact("decay_rate_ratio", expected, ratio, config.flow_ratio_tol * expected,
              "decay rates of the F0 and quadratic modes scale as mu0/mu2");
    rec.exact("decay_rate_ordering", 1.0,
              tr.fitted_rates[2] < tr.fitted_rates[1] && tr.fitted_rates[1] < tr.fitted_rates[0] ? 1.0 : 0.0, 0.0,
              "larger eigenvalues decay faster");
    double increase = -INFINITY;
    for (std::size_t s = 1; s < tr.kl.size(); ++s) increase = std::max(increase, tr.kl[s] - tr.kl[s - 1]);
    rec.at_most("kl_nonincreasing", 0.0, increase, 0.0, 0.0, "KL along the flow never increases");
    report.details["fitted_rates"] = tr.fitted_rates;
    report.details["eigenvalues"] = {modes.mu0.value, modes.linear, modes.mu2.value};

    {
      const Vector t = (Vector(3) << 0.3, -0.2, 0.7).finished();
      const auto fixed = gradient_flow(t, t, lambdas, config.flow_eta, 10);
      double motion = 0.0;
      for (std::size_t i = 0; i < 3; ++i)
        for (double th : fixed.theta[i]) motion = std::max(motion, std::abs(th - t[static_cast<Eigen::Index>(i)]));
      rec.exact("fixed_point", 0.0, motion, 0.0, "theta = target does not move");
      const auto zero = gradient_flow(Vector::Zero(3), Vector::Zero(3), lambdas, config.flow_eta, 10);
      double mag = 0.0;
      for (const auto& traj : zero.theta)
        for (double th : traj) mag = std::max(mag, std::abs(th));
      rec.exact("zero_target_flow", 0.0, mag, 0.0, "zero target and start stay at zero");
    }

    {
      const auto w = sample_network(NetworkConfig(d, config.m, config.seed));
      const FisherMatrix j = fisher_exact(w, config.series());
      const auto vf = vspace_flow_check(w, j, modes, config.vflow_eta, config.vflow_steps, config.samples,
                                        stream(config, kFlowCompanion));
      json per = json::array();
      for (const auto& mode : vf.modes)
        per.push_back({{"mode", mode.label}, {"lambda", mode.lambda}, {"c0", mode.c0}, {"max_rel_deviation", mode.max_rel_deviation}});
      report.details["vspace_modes"] = per;
      rec.at_most("vspace_matches_diagonal_flow", 0.0, vf.max_rel_deviation, 0.0, config.vflow_tol,
                  "finite-width descent follows the per-mode geometric decay");
    }
  });
}

// ---------------------------------------------------------------------------

const std::vector<std::string>& suite_names() {
  static const std::vector<std::string> names{"kernel-check", "spectrum", "fisher", "approx", "flow"};
  return names;
}

std::vector<Report> run_all(const ExperimentConfig& config) {
  return {run_kernel_check(config), run_spectrum(config), run_fisher(config), run_approx(config), run_flow(config)};
}

std::vector<Report> run_suite(const std::string& name, const ExperimentConfig& config) {
  if (name == "kernel-check") return {run_kernel_check(config)};
  if (name == "spectrum") return {run_spectrum(config)};
  if (name == "fisher") return {run_fisher(config)};
  if (name == "approx") return {run_approx(config)};
  if (name == "flow") return {run_flow(config)};
  if (name == "all") return run_all(config);
  throw std::invalid_argument("unknown suite '" + name + "'");
}

}  // namespace relu_ntk
