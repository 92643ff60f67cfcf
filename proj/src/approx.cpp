#include "relu_ntk/approx.hpp"

#include <cmath>
#include <map>
#include <mutex>

namespace relu_ntk {

namespace {

constexpr std::size_t kModeSamples = std::size_t{1} << 20;
constexpr std::uint64_t kModeSeed = 0x6d6f6465ULL;

void require_samples(std::size_t n, const char* who) {
  if (n == 0) throw std::invalid_argument(std::string(who) + ": n_samples must be > 0");
}

// count x d matrix of uniform sphere points, drawn row by row.
Matrix sphere_rows(GaussianSource& rng, std::size_t count, std::size_t d) {
  Matrix u(static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(d));
  Vector row(static_cast<Eigen::Index>(d));
  for (Eigen::Index r = 0; r < u.rows(); ++r) {
    rng.fill_sphere(row);
    u.row(r) = row.transpose();
  }
  return u;
}

// Moments of f(u) * F_i(u) over the sphere for every basis function; f is
// supplied per batch. Scaled to Gaussian inner products by E|x|^2 = d, which
// holds because f and the basis are both of degree 1.
template <class BatchFn>
MomentStats coefficient_moments(const std::vector<EigenFunction>& basis, std::size_t d, std::size_t n_samples,
                                std::uint64_t seed, BatchFn&& values) {
  const std::size_t k = basis.size();
  return reduce_chunks(n_samples, seed, MomentStats(k), [&](GaussianSource& rng, std::size_t count) {
    const Matrix u = sphere_rows(rng, count, d);
    const Vector f = values(u);
    MomentStats acc(k);
    std::vector<double> row(k);
    for (Eigen::Index r = 0; r < u.rows(); ++r) {
      const Vector x = u.row(r).transpose();
      for (std::size_t i = 0; i < k; ++i) row[i] = static_cast<double>(d) * f[r] * basis[i](x);
      acc.add(row);
    }
    return acc;
  });
}

Vector mode_eigenvalue_vector(const std::vector<EigenFunction>& basis, const ModeEigenvalues& modes) {
  Vector lam(static_cast<Eigen::Index>(basis.size()));
  for (std::size_t i = 0; i < basis.size(); ++i) {
    switch (basis[i].kind()) {
      case EigenKind::F0: lam[static_cast<Eigen::Index>(i)] = modes.mu0.value; break;
      case EigenKind::Linear: lam[static_cast<Eigen::Index>(i)] = modes.linear; break;
      default: lam[static_cast<Eigen::Index>(i)] = modes.mu2.value; break;
    }
  }
  return lam;
}

ApproxModel assemble(std::size_t d, const MomentStats& stats, const ModeEigenvalues& modes) {
  ApproxModel model;
  model.d = d;
  model.basis = explicit_basis(d);
  const auto k = static_cast<Eigen::Index>(model.basis.size());
  model.coefficients.resize(k);
  model.coefficient_se.resize(k);
  for (Eigen::Index i = 0; i < k; ++i) {
    const auto e = stats.estimate(static_cast<std::size_t>(i));
    model.coefficients[i] = e.value;
    model.coefficient_se[i] = e.std_error;
  }
  model.eigenvalues = mode_eigenvalue_vector(model.basis, modes);
  const Vector root = model.eigenvalues.cwiseSqrt();
  model.theta = model.coefficients.cwiseQuotient(root);
  model.theta_se = model.coefficient_se.cwiseQuotient(root);
  model.mu0 = modes.mu0.value;
  model.mu2 = modes.mu2.value;
  return model;
}

void check_modes(std::size_t d, const ModeEigenvalues& modes) {
  if (modes.d != d) throw std::invalid_argument("mode eigenvalues were measured for a different d");
}

// feature_map_rows(w, u) * v, column block by column block to stay in cache.
Vector network_values(const HiddenWeights& w, const Vector& v, const Matrix& u) {
  constexpr Eigen::Index kBlock = 128;
  const Matrix& wm = w.matrix();
  Vector f = Vector::Zero(u.rows());
  Matrix act(u.rows(), std::min<Eigen::Index>(kBlock, wm.cols()));
  for (Eigen::Index c = 0; c < wm.cols(); c += kBlock) {
    const Eigen::Index b = std::min(kBlock, wm.cols() - c);
    act.leftCols(b).noalias() = u * wm.middleCols(c, b);
    f.noalias() += act.leftCols(b).cwiseMax(0.0) * v.segment(c, b);
  }
  return f;
}

}  // namespace

ModeEigenvalues measure_mode_eigenvalues(std::size_t d, std::size_t n_samples, std::uint64_t seed) {
  if (d < 2) throw std::invalid_argument("measure_mode_eigenvalues: d must be >= 2");
  const auto kernel = KernelSpec::series();
  ModeEigenvalues out;
  out.d = d;

  McScheme even;
  even.estimator = Estimator::RadialSphere;
  even.antithetic = {SignedPermutation::negate(d)};
  out.mu0 = rayleigh_quotient(kernel, EigenFunction::f0(d).as_function(), d, n_samples, derive_seed(seed, 0), even);

  McScheme odd;
  odd.estimator = Estimator::RadialSphere;
  odd.antithetic = {SignedPermutation::flip(d, 0), SignedPermutation::flip(d, 1)};
  out.mu2 = rayleigh_quotient(kernel, EigenFunction::cross(d, 0, 1).as_function(), d, n_samples,
                              derive_seed(seed, 1), odd);
  return out;
}

const ModeEigenvalues& mode_eigenvalues(std::size_t d) {
  static std::mutex mutex;
  static std::map<std::size_t, ModeEigenvalues> cache;
  std::lock_guard lock(mutex);
  auto it = cache.find(d);
  if (it == cache.end()) it = cache.emplace(d, measure_mode_eigenvalues(d, kModeSamples, kModeSeed)).first;
  return it->second;
}

double ApproxModel::operator()(const Vector& x) const {
  double s = 0.0;
  for (std::size_t i = 0; i < basis.size(); ++i) s += coefficients[static_cast<Eigen::Index>(i)] * basis[i](x);
  return s;
}

double ApproxModel::squared_norm() const { return coefficients.squaredNorm(); }

ApproxModel project(const Vector& v, const HiddenWeights& w, std::size_t n_samples, std::uint64_t seed,
                    const ModeEigenvalues& modes) {
  require_samples(n_samples, "project");
  if (static_cast<std::size_t>(v.size()) != w.m()) throw std::invalid_argument("project: v must have length m");
  const std::size_t d = w.d();
  check_modes(d, modes);
  const auto basis = explicit_basis(d);
  const auto stats = coefficient_moments(basis, d, n_samples, seed,
                                         [&](const Matrix& u) { return network_values(w, v, u); });
  ApproxModel model = assemble(d, stats, modes);
  model.norm_warning = v.norm() > 1.0 + 1e-12;
  return model;
}

ApproxModel project(const Vector& v, const HiddenWeights& w, std::size_t n_samples, std::uint64_t seed) {
  return project(v, w, n_samples, seed, mode_eigenvalues(w.d()));
}

ApproxModel model_from_coefficients(std::size_t d, const Vector& coefficients, const ModeEigenvalues& modes) {
  check_modes(d, modes);
  ApproxModel model;
  model.d = d;
  model.basis = explicit_basis(d);
  if (static_cast<std::size_t>(coefficients.size()) != model.basis.size())
    throw std::invalid_argument("model_from_coefficients: wrong coefficient count");
  model.coefficients = coefficients;
  model.coefficient_se = Vector::Zero(coefficients.size());
  model.eigenvalues = mode_eigenvalue_vector(model.basis, modes);
  model.theta = coefficients.cwiseQuotient(model.eigenvalues.cwiseSqrt());
  model.theta_se = Vector::Zero(coefficients.size());
  model.mu0 = modes.mu0.value;
  model.mu2 = modes.mu2.value;
  return model;
}

ApproxModel project_function(const RealFunction& f, std::size_t d, std::size_t n_samples, std::uint64_t seed,
                             const ModeEigenvalues& modes) {
  require_samples(n_samples, "project_function");
  if (!f.degree || *f.degree != 1.0) throw std::invalid_argument("project_function: f must be of degree 1");
  check_modes(d, modes);
  const auto basis = explicit_basis(d);
  const auto stats = coefficient_moments(basis, d, n_samples, seed, [&](const Matrix& u) {
    Vector out(u.rows());
    for (Eigen::Index r = 0; r < u.rows(); ++r) out[r] = f(Vector(u.row(r).transpose()));
    return out;
  });
  return assemble(d, stats, modes);
}

McEstimate approx_error(const Vector& v, const HiddenWeights& w, const ApproxModel& model, std::size_t n_samples,
                        std::uint64_t seed) {
  require_samples(n_samples, "approx_error");
  if (model.d != w.d()) throw std::invalid_argument("approx_error: model and network differ in d");
  const double dd = static_cast<double>(w.d());
  auto stats = reduce_chunks(n_samples, seed, MomentStats(1), [&](GaussianSource& rng, std::size_t count) {
    const Matrix u = sphere_rows(rng, count, w.d());
    const Vector f = network_values(w, v, u);
    MomentStats acc(1);
    for (Eigen::Index r = 0; r < u.rows(); ++r) {
      const double diff = f[r] - model(Vector(u.row(r).transpose()));
      acc.add(dd * diff * diff);
    }
    return acc;
  });
  return stats.estimate();
}

McEstimate network_norm(const Vector& v, const HiddenWeights& w, std::size_t n_samples, std::uint64_t seed) {
  require_samples(n_samples, "network_norm");
  const double dd = static_cast<double>(w.d());
  auto stats = reduce_chunks(n_samples, seed, MomentStats(1), [&](GaussianSource& rng, std::size_t count) {
    const Vector f = network_values(w, v, sphere_rows(rng, count, w.d()));
    MomentStats acc(1);
    for (Eigen::Index r = 0; r < f.size(); ++r) acc.add(dd * f[r] * f[r]);
    return acc;
  });
  return stats.estimate();
}

PythagorasReport pythagoras_check(const Vector& v, const HiddenWeights& w, const ApproxModel& model,
                                  std::size_t n_samples, std::uint64_t seed) {
  require_samples(n_samples, "pythagoras_check");
  const double dd = static_cast<double>(w.d());
  auto stats = reduce_chunks(n_samples, seed, MomentStats(2), [&](GaussianSource& rng, std::size_t count) {
    const Matrix u = sphere_rows(rng, count, w.d());
    const Vector f = network_values(w, v, u);
    MomentStats acc(2);
    double row[2];
    for (Eigen::Index r = 0; r < u.rows(); ++r) {
      const double diff = f[r] - model(Vector(u.row(r).transpose()));
      row[0] = dd * f[r] * f[r];
      row[1] = dd * diff * diff;
      acc.add(std::span<const double>(row, 2));
    }
    return acc;
  });
  PythagorasReport rep;
  rep.total = stats.estimate(0);
  rep.residual = stats.estimate(1);
  rep.model.value = model.squared_norm();
  rep.model.std_error = 2.0 * model.coefficients.cwiseProduct(model.coefficient_se).norm();
  rep.model.n_samples = rep.total.n_samples;
  rep.gap = rep.total.value - rep.model.value - rep.residual.value;
  rep.combined_se = std::sqrt(rep.total.std_error * rep.total.std_error + rep.model.std_error * rep.model.std_error +
                              rep.residual.std_error * rep.residual.std_error);
  rep.pass = std::abs(rep.gap) <= 4.0 * rep.combined_se;
  return rep;
}

// ---------------------------------------------------------------------------

FlowTrace gradient_flow(const Vector& target, const Vector& init, const Vector& lambdas, double eta, int n_steps) {
  if (target.size() != init.size() || target.size() != lambdas.size())
    throw std::invalid_argument("gradient_flow: dimension mismatch");
  if (!(eta > 0.0)) throw std::invalid_argument("gradient_flow: eta must be > 0");
  if (n_steps < 1) throw std::invalid_argument("gradient_flow: n_steps must be >= 1");
  if (lambdas.size() > 0 && (lambdas.minCoeff() < 0.0))
    throw std::invalid_argument("gradient_flow: eigenvalues must be >= 0");
  if (lambdas.size() > 0 && eta * lambdas.maxCoeff() >= 2.0)
    throw std::domain_error("gradient_flow: eta * max eigenvalue >= 2 is unstable");

  const auto k = static_cast<std::size_t>(target.size());
  FlowTrace trace;
  trace.lambdas.assign(lambdas.data(), lambdas.data() + k);
  trace.theta.assign(k, std::vector<double>());
  Vector theta = init;
  auto record = [&](int step) {
    trace.time.push_back(step * eta);
    double kl = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      const auto ii = static_cast<Eigen::Index>(i);
      if (!std::isfinite(theta[ii])) throw std::runtime_error("gradient_flow: coefficient diverged");
      trace.theta[i].push_back(theta[ii]);
      const double e = target[ii] - theta[ii];
      kl += 0.5 * lambdas[ii] * e * e;
    }
    trace.kl.push_back(kl);
  };
  record(0);
  for (int step = 1; step <= n_steps; ++step) {
    theta += eta * lambdas.cwiseProduct(target - theta);
    record(step);
  }
  for (std::size_t i = 0; i < k; ++i) {
    std::vector<double> err(trace.theta[i].size());
    for (std::size_t s = 0; s < err.size(); ++s) err[s] = target[static_cast<Eigen::Index>(i)] - trace.theta[i][s];
    trace.fitted_rates.push_back(fit_decay_rate(trace.time, err));
  }
  return trace;
}

FlowTrace gradient_flow(const ApproxModel& target, const ApproxModel& init, double eta, int n_steps) {
  if (target.d != init.d) throw std::invalid_argument("gradient_flow: models differ in d");
  return gradient_flow(target.theta, init.theta, target.eigenvalues, eta, n_steps);
}

double fit_decay_rate(const std::vector<double>& time, const std::vector<double>& error) {
  if (time.size() != error.size()) throw std::invalid_argument("fit_decay_rate: length mismatch");
  double n = 0, st = 0, sy = 0, stt = 0, sty = 0;
  for (std::size_t i = 0; i < time.size(); ++i) {
    const double a = std::abs(error[i]);
    if (!(a > 1e-300) || !std::isfinite(a)) continue;
    const double y = std::log(a);
    n += 1;
    st += time[i];
    sy += y;
    stt += time[i] * time[i];
    sty += time[i] * y;
  }
  const double denom = n * stt - st * st;
  if (n < 2 || denom == 0.0) return NAN;
  return -(n * sty - st * sy) / denom;
}

VFlowReport vspace_flow_check(const HiddenWeights& w, const FisherMatrix& j, const ModeEigenvalues& modes,
                              double eta, int n_steps, std::size_t n_samples, std::uint64_t seed) {
  require_samples(n_samples, "vspace_flow_check");
  const std::size_t d = w.d();
  const auto m = static_cast<Eigen::Index>(w.m());
  if (d < 2) throw std::invalid_argument("vspace_flow_check: d must be >= 2");
  if (j.m() != w.m()) throw std::invalid_argument("vspace_flow_check: Fisher matrix size differs from m");
  check_modes(d, modes);
  if (n_steps < 1 || !(eta > 0.0)) throw std::invalid_argument("vspace_flow_check: need eta > 0 and n_steps >= 1");

  const std::vector<EigenFunction> fns{EigenFunction::f0(d), EigenFunction::linear(d, 0), EigenFunction::cross(d, 0, 1)};
  const std::vector<double> lambdas{modes.mu0.value, modes.linear, modes.mu2.value};
  const auto k = static_cast<Eigen::Index>(fns.size());

  // target excites every tracked mode through its value on the hidden weights
  Vector v_hat = Vector::Zero(m);
  for (Eigen::Index i = 0; i < m; ++i)
    for (const auto& f : fns) v_hat[i] += f(w.column(static_cast<std::size_t>(i)));
  v_hat /= v_hat.norm();

  // b_F,i = <X_i, F>
  struct Sum {
    Matrix s;
    void merge(const Sum& o) { s += o.s; }
  };
  const double dd = static_cast<double>(d);
  auto sum = reduce_chunks(n_samples, seed, Sum{Matrix::Zero(m, k)}, [&](GaussianSource& rng, std::size_t count) {
    const Matrix u = sphere_rows(rng, count, d);
    Matrix fv(u.rows(), k);
    for (Eigen::Index r = 0; r < u.rows(); ++r) {
      const Vector x = u.row(r).transpose();
      for (Eigen::Index c = 0; c < k; ++c) fv(r, c) = fns[static_cast<std::size_t>(c)](x);
    }
    return Sum{feature_map_rows(w, u).transpose() * fv};
  });
  const Matrix b = sum.s * (dd / static_cast<double>(n_samples));

  VFlowReport rep;
  rep.eta = eta;
  rep.n_steps = n_steps;
  Vector e = -v_hat;  // v_0 = 0
  const Vector c0 = b.transpose() * e;
  for (Eigen::Index c = 0; c < k; ++c) {
    VFlowMode mode;
    mode.label = fns[static_cast<std::size_t>(c)].label();
    mode.lambda = lambdas[static_cast<std::size_t>(c)];
    mode.c0 = c0[c];
    rep.modes.push_back(mode);
  }
  for (int step = 1; step <= n_steps; ++step) {
    e -= eta * (j.J * e);
    const Vector ck = b.transpose() * e;
    for (Eigen::Index c = 0; c < k; ++c) {
      auto& mode = rep.modes[static_cast<std::size_t>(c)];
      const double predicted = std::pow(1.0 - eta * mode.lambda, step) * mode.c0;
      mode.max_rel_deviation = std::max(mode.max_rel_deviation, std::abs(ck[c] - predicted) / std::abs(mode.c0));
    }
  }
  for (const auto& mode : rep.modes) rep.max_rel_deviation = std::max(rep.max_rel_deviation, mode.max_rel_deviation);
  return rep;
}

std::vector<SampleComplexityRow> sample_complexity_report(std::size_t d) {
  if (d < 2) throw std::invalid_argument("sample_complexity_report: d must be >= 2");
  const Interval i0 = mu0_interval(d);
  const Interval i2 = mu2_interval(d);
  const double mu0 = 0.5 * (i0.lo + i0.hi);
  const double mu2 = 0.5 * (i2.lo + i2.hi);
  return {{"F0", mu0, 1.0 / mu0}, {"linear", 0.25, 4.0}, {"quadratic", mu2, 1.0 / mu2}};
}

}  // namespace relu_ntk
