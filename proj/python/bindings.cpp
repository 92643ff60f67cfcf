#include "relu_ntk/experiments.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

namespace py = pybind11;
using namespace relu_ntk;

namespace {

SeriesParams params_from(double tol, int n_max) {
  SeriesParams p;
  p.tol = tol;
  p.n_max = n_max;
  return p;
}

EigenFunction make_function(const std::string& kind, std::size_t d, const std::vector<std::size_t>& idx) {
  auto need = [&](std::size_t n) {
    if (idx.size() != n) throw std::invalid_argument(kind + " takes " + std::to_string(n) + " indices");
  };
  if (kind == "F0") return need(0), EigenFunction::f0(d);
  if (kind == "linear") return need(1), EigenFunction::linear(d, idx[0]);
  if (kind == "gamma") return need(1), EigenFunction::gamma(d, idx[0]);
  if (kind == "cross") return need(2), EigenFunction::cross(d, idx[0], idx[1]);
  if (kind == "g0") return need(0), EigenFunction::g0(d);
  if (kind == "g") return need(1), EigenFunction::g(d, idx[0]);
  if (kind == "h") return need(1), EigenFunction::h(d, idx[0]);
  if (kind == "monomial") return EigenFunction::monomial(d, idx);
  throw std::invalid_argument("unknown eigenfunction kind '" + kind + "'");
}

KernelSpec make_kernel(const std::string& kind, int order, const SeriesParams& p) {
  if (kind == "series") return KernelSpec::series(p);
  if (kind == "remainder") return KernelSpec::remainder(p);
  if (kind == "truncated") return KernelSpec::truncated(order, p);
  throw std::invalid_argument("unknown kernel '" + kind + "'");
}

py::object json_to_py(const nlohmann::json& j) {
  return py::module_::import("json").attr("loads")(j.dump());
}

}  // namespace

PYBIND11_MODULE(relu_ntk, m) {
  m.doc() = "NTK and Fisher-matrix spectra of a bias-free two-layer ReLU network";
  m.attr("__version__") = library_version();

  py::register_exception<SingularPointError>(m, "SingularPointError", PyExc_ValueError);

  py::class_<McEstimate>(m, "McEstimate")
      .def_readonly("value", &McEstimate::value)
      .def_readonly("std_error", &McEstimate::std_error)
      .def_readonly("n_samples", &McEstimate::n_samples)
      .def("__repr__", [](const McEstimate& e) {
        return "McEstimate(" + std::to_string(e.value) + " +- " + std::to_string(e.std_error) + ")";
      });

  py::class_<KernelValue>(m, "KernelValue")
      .def_readonly("value", &KernelValue::value)
      .def_readonly("n_terms_used", &KernelValue::n_terms_used)
      .def_readonly("tail_bound", &KernelValue::tail_bound)
      .def_readonly("converged", &KernelValue::converged)
      .def_readonly("closed_tail", &KernelValue::closed_tail);

  m.def("set_jobs", &set_jobs, py::arg("n"));
  m.def("derive_seed", &derive_seed, py::arg("seed"), py::arg("stream"));

  m.def(
      "sample_network",
      [](std::size_t d, std::size_t m_, std::uint64_t seed) {
        return sample_network(NetworkConfig(d, m_, seed)).matrix();
      },
      py::arg("d"), py::arg("m"), py::arg("seed"), "d x m hidden weights with N(0, 1/m) entries");
  m.def(
      "feature_map", [](const Matrix& w, const Vector& x) { return feature_map(HiddenWeights(w), x); },
      py::arg("W"), py::arg("x"));

  m.def(
      "ntk_series",
      [](const Vector& x, const Vector& y, double tol, int n_max) { return ntk_series(x, y, params_from(tol, n_max)); },
      py::arg("x"), py::arg("y"), py::arg("tol") = 1e-10, py::arg("n_max") = 200);
  m.def(
      "remainder_kernel",
      [](const Vector& x, const Vector& y, double tol, int n_max) {
        return remainder_kernel(x, y, params_from(tol, n_max));
      },
      py::arg("x"), py::arg("y"), py::arg("tol") = 1e-10, py::arg("n_max") = 200);
  m.def(
      "truncated_kernel",
      [](const Vector& x, const Vector& y, int order, double tol, int n_max) {
        return truncated_kernel(x, y, order, params_from(tol, n_max));
      },
      py::arg("x"), py::arg("y"), py::arg("order"), py::arg("tol") = 1e-10, py::arg("n_max") = 200);
  m.def(
      "ntk_mc_oracle",
      [](const Vector& x, const Vector& y, std::size_t n, std::uint64_t seed) {
        return ntk_mc_oracle(x, y, static_cast<std::size_t>(x.size()), n, seed);
      },
      py::arg("x"), py::arg("y"), py::arg("n_samples"), py::arg("seed"));
  m.def(
      "ntk_empirical", [](const Matrix& w, const Vector& x, const Vector& y) { return ntk_empirical(HiddenWeights(w), x, y); },
      py::arg("W"), py::arg("x"), py::arg("y"));
  m.def(
      "trace_estimate",
      [](const std::string& kernel, std::size_t d, std::size_t n, std::uint64_t seed) {
        return trace_estimate(make_kernel(kernel, 0, {}), d, n, seed);
      },
      py::arg("kernel"), py::arg("d"), py::arg("n_samples"), py::arg("seed"));
  m.def("remainder_trace_bound", &remainder_trace_bound, py::arg("d"));

  m.def(
      "eigenfunction",
      [](const std::string& kind, const Vector& x, const std::vector<std::size_t>& indices) {
        return make_function(kind, static_cast<std::size_t>(x.size()), indices)(x);
      },
      py::arg("kind"), py::arg("x"), py::arg("indices") = std::vector<std::size_t>{},
      "Evaluate F0, linear, gamma, cross, g0, g, h or monomial at x (indices are 0-based)");
  m.def(
      "basis_labels",
      [](std::size_t d) {
        std::vector<std::string> out;
        for (const auto& f : explicit_basis(d)) out.push_back(f.label());
        return out;
      },
      py::arg("d"));
  m.def(
      "basis_values",
      [](const Vector& x) {
        const auto b = explicit_basis(static_cast<std::size_t>(x.size()));
        Vector out(static_cast<Eigen::Index>(b.size()));
        for (std::size_t i = 0; i < b.size(); ++i) out[static_cast<Eigen::Index>(i)] = b[i](x);
        return out;
      },
      py::arg("x"));
  m.def(
      "gram_matrix",
      [](std::size_t d, std::size_t n, std::uint64_t seed) {
        const auto g = gram_matrix(explicit_basis(d), n, seed);
        return py::make_tuple(g.value, g.std_error);
      },
      py::arg("d"), py::arg("n_samples"), py::arg("seed"), "Gram matrix of the explicit basis and its standard errors");
  m.def(
      "rayleigh_quotient",
      [](const std::string& kind, std::size_t d, const std::vector<std::size_t>& indices, std::size_t n,
         std::uint64_t seed, const std::string& kernel, int order) {
        const auto f = make_function(kind, d, indices);
        McScheme scheme;
        scheme.estimator = Estimator::RadialSphere;
        return rayleigh_quotient(make_kernel(kernel, order, {}), f.as_function(), d, n, seed, scheme);
      },
      py::arg("kind"), py::arg("d"), py::arg("indices") = std::vector<std::size_t>{}, py::arg("n_samples") = 100000,
      py::arg("seed") = 1, py::arg("kernel") = "series", py::arg("order") = 0);
  m.def(
      "mu_intervals",
      [](std::size_t d) {
        const auto a = mu0_interval(d), b = mu2_interval(d);
        return py::make_tuple(py::make_tuple(a.lo, a.hi), py::make_tuple(b.lo, b.hi));
      },
      py::arg("d"));
  m.def(
      "mode_eigenvalues",
      [](std::size_t d) {
        const auto& me = mode_eigenvalues(d);
        return py::dict(py::arg("mu0") = me.mu0, py::arg("mu2") = me.mu2, py::arg("linear") = me.linear);
      },
      py::arg("d"));

  m.def(
      "fisher_exact",
      [](const Matrix& w, double tol, int n_max) { return fisher_exact(HiddenWeights(w), params_from(tol, n_max)).J; },
      py::arg("W"), py::arg("tol") = 1e-10, py::arg("n_max") = 200);
  m.def(
      "fisher_empirical",
      [](const Matrix& w, std::size_t n, std::uint64_t seed) { return fisher_empirical(HiddenWeights(w), n, seed).J; },
      py::arg("W"), py::arg("n_samples"), py::arg("seed"));
  m.def(
      "eigendecompose",
      [](const Matrix& j, const std::string& solver) {
        const auto e = eigendecompose(j, 1e-8, solver == "jacobi" ? EigenSolver::Jacobi : EigenSolver::SelfAdjoint);
        return py::make_tuple(e.values, e.vectors);
      },
      py::arg("J"), py::arg("solver") = "selfadjoint", "Eigenvalues in descending order and matching eigenvectors");
  m.def(
      "cluster_spectrum",
      [](const std::vector<double>& eigs, std::size_t d, std::size_t m_) {
        const auto c = cluster_spectrum(eigs, d, m_);
        auto summary = [](const ClusterSummary& s) {
          return py::dict(py::arg("count") = s.count, py::arg("mean") = s.mean, py::arg("center") = s.center,
                          py::arg("rel_deviation") = s.rel_deviation);
        };
        return py::dict(py::arg("structured") = c.structured, py::arg("top") = summary(c.top),
                        py::arg("linear") = summary(c.linear), py::arg("quadratic") = summary(c.quadratic),
                        py::arg("quadratic_alt") = summary(c.quadratic_alt), py::arg("bulk") = summary(c.bulk),
                        py::arg("bulk_max") = c.bulk_max);
      },
      py::arg("eigenvalues"), py::arg("d"), py::arg("m"));
  m.def(
      "kl_divergence",
      [](const Vector& u, const Vector& v, const Matrix& j) { return kl_divergence(u, v, FisherMatrix::synthetic(j)); },
      py::arg("u"), py::arg("v"), py::arg("J"));

  m.def(
      "project",
      [](const Vector& v, const Matrix& w, std::size_t n, std::uint64_t seed) {
        const auto model = project(v, HiddenWeights(w), n, seed);
        return py::dict(py::arg("coefficients") = model.coefficients, py::arg("coefficient_se") = model.coefficient_se,
                        py::arg("theta") = model.theta, py::arg("theta_se") = model.theta_se,
                        py::arg("eigenvalues") = model.eigenvalues, py::arg("norm_warning") = model.norm_warning);
      },
      py::arg("v"), py::arg("W"), py::arg("n_samples"), py::arg("seed"));
  m.def(
      "gradient_flow",
      [](const Vector& target, const Vector& init, const Vector& lambdas, double eta, int steps) {
        const auto t = gradient_flow(target, init, lambdas, eta, steps);
        return py::dict(py::arg("time") = t.time, py::arg("theta") = t.theta, py::arg("kl") = t.kl,
                        py::arg("fitted_rates") = t.fitted_rates);
      },
      py::arg("target"), py::arg("init"), py::arg("lambdas"), py::arg("eta"), py::arg("n_steps"));

  m.def(
      "run_suite",
      [](const std::string& name, const py::dict& overrides) {
        const std::string text = py::str(py::module_::import("json").attr("dumps")(overrides));
        const auto config = ExperimentConfig::from_json(nlohmann::json::parse(text));
        std::vector<Report> reports;
        {
          py::gil_scoped_release release;
          reports = run_suite(name, config);
        }
        return json_to_py(reports_to_json(reports));
      },
      py::arg("name"), py::arg("config") = py::dict(),
      "Run a verification suite (kernel-check, spectrum, fisher, approx, flow, all) and return the JSON report");
}
