#include "relu_ntk/eigenbasis.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace relu_ntk {

namespace {

constexpr double kPi = std::numbers::pi;

void require_index(bool ok, const char* what) {
  if (!ok) throw std::out_of_range(std::string("EigenFunction: ") + what);
}

double nonzero_norm(const Vector& x, const char* who) {
  const double r = x.norm();
  if (r == 0.0) throw SingularPointError(std::string(who) + ": evaluated at x = 0");
  return r;
}

// g_gamma = x_gamma^2/|x| - |x|/d
double g_value(const Vector& x, double r, std::size_t gamma) {
  const double xg = x[static_cast<Eigen::Index>(gamma)];
  return xg * xg / r - r / static_cast<double>(x.size());
}

double h_value(const Vector& x, double r, std::size_t gamma) {
  const std::size_t last = static_cast<std::size_t>(x.size()) - 1;
  return g_value(x, r, gamma) - g_value(x, r, last) / (std::sqrt(static_cast<double>(x.size())) + 1.0);
}

std::vector<SignedPermutation> all_images(std::size_t d, const std::vector<SignedPermutation>& gens) {
  std::vector<SignedPermutation> images{SignedPermutation::identity(d)};
  for (const auto& g : gens) {
    if (g.perm.size() != d || g.sign.size() != d)
      throw std::invalid_argument("McScheme: antithetic map has the wrong dimension");
    const std::size_t n = images.size();
    for (std::size_t i = 0; i < n; ++i) images.push_back(images[i].then(g));
  }
  return images;
}

bool use_radial(const McScheme& scheme, const RealFunction& f) {
  switch (scheme.estimator) {
    case Estimator::Gaussian: return false;
    case Estimator::RadialSphere:
      if (!f.degree) throw std::invalid_argument("RadialSphere estimator needs a homogeneity degree");
      return true;
    case Estimator::Auto: return f.degree.has_value();
  }
  return false;
}

// Mean over the images of (k(x, g y) - shift) f(g y).
double image_average(const KernelSpec& kernel, const RealFunction& f, const Vector& x, const Vector& y,
                     const std::vector<SignedPermutation>& images, Vector& scratch, double shift) {
  if (images.size() == 1) return (kernel(x, y) - shift) * f(y);
  double s = 0.0;
  for (const auto& g : images) {
    g.apply(y, scratch);
    s += (kernel(x, scratch) - shift) * f(scratch);
  }
  return s / static_cast<double>(images.size());
}

// Pilot sphere average of k(e_0, u); any constant keeps a centered estimator
// unbiased, so a short run on a reserved substream is enough.
double kernel_shift(const KernelSpec& kernel, std::size_t d, std::uint64_t seed) {
  constexpr std::size_t kPilot = 4096;
  GaussianSource rng(derive_seed(seed, 0xc0ffee));
  Vector e0 = Vector::Zero(static_cast<Eigen::Index>(d));
  e0[0] = 1.0;
  Vector u(static_cast<Eigen::Index>(d));
  double s = 0.0;
  for (std::size_t i = 0; i < kPilot; ++i) {
    rng.fill_sphere(u);
    s += kernel(e0, u);
  }
  return s / static_cast<double>(kPilot);
}

double image_square_average(const RealFunction& f, const Vector& y,
                            const std::vector<SignedPermutation>& images, Vector& scratch) {
  if (images.size() == 1) return f(y) * f(y);
  double s = 0.0;
  for (const auto& g : images) {
    g.apply(y, scratch);
    const double v = f(scratch);
    s += v * v;
  }
  return s / static_cast<double>(images.size());
}

void require_samples(std::size_t n, const char* who) {
  if (n == 0) throw std::invalid_argument(std::string(who) + ": n_samples must be > 0");
}

}  // namespace

// ---------------------------------------------------------------------------

EigenFunction::EigenFunction(EigenKind kind, std::size_t d, std::vector<std::size_t> idx)
    : kind_(kind), d_(d), idx_(std::move(idx)) {
  if (d == 0) throw std::invalid_argument("EigenFunction: d must be >= 1");
}

EigenFunction EigenFunction::f0(std::size_t d) { return {EigenKind::F0, d, {}}; }

EigenFunction EigenFunction::linear(std::size_t d, std::size_t l) {
  require_index(l < d, "linear index out of range");
  return {EigenKind::Linear, d, {l}};
}

EigenFunction EigenFunction::gamma(std::size_t d, std::size_t gamma) {
  require_index(d >= 2 && gamma + 1 < d, "gamma index out of range");
  return {EigenKind::Gamma, d, {gamma}};
}

EigenFunction EigenFunction::cross(std::size_t d, std::size_t a, std::size_t b) {
  require_index(d >= 2 && a < b && b < d, "cross indices must satisfy a < b < d");
  return {EigenKind::Cross, d, {a, b}};
}

EigenFunction EigenFunction::g0(std::size_t d) { return {EigenKind::G0, d, {}}; }

EigenFunction EigenFunction::g(std::size_t d, std::size_t gamma) {
  require_index(gamma < d, "g index out of range");
  return {EigenKind::G, d, {gamma}};
}

EigenFunction EigenFunction::h(std::size_t d, std::size_t gamma) {
  require_index(d >= 2 && gamma + 1 < d, "h index out of range");
  return {EigenKind::H, d, {gamma}};
}

EigenFunction EigenFunction::monomial(std::size_t d, std::vector<std::size_t> indices) {
  require_index(!indices.empty() && indices.size() % 2 == 0, "monomial needs 2n+2 indices");
  require_index(indices.size() <= d, "monomial needs 2n+2 <= d");
  for (std::size_t i = 0; i < indices.size(); ++i) {
    require_index(indices[i] < d, "monomial index out of range");
    require_index(i == 0 || indices[i - 1] < indices[i], "monomial indices must increase");
  }
  return {EigenKind::Monomial, d, std::move(indices)};
}

int EigenFunction::order() const {
  return kind_ == EigenKind::Monomial ? static_cast<int>(idx_.size() / 2) - 1 : 0;
}

double EigenFunction::operator()(const Vector& x) const {
  if (static_cast<std::size_t>(x.size()) != d_)
    throw std::invalid_argument("EigenFunction: input has length " + std::to_string(x.size()) +
                                ", expected " + std::to_string(d_));
  const double dd = static_cast<double>(d_);
  switch (kind_) {
    case EigenKind::F0: return x.norm() / std::sqrt(dd);
    case EigenKind::Linear: return x[static_cast<Eigen::Index>(idx_[0])];
    case EigenKind::G0: return x.norm();
    case EigenKind::Gamma: {
      const double r = nonzero_norm(x, "F_gamma");
      return std::sqrt(0.5 * (dd + 2.0)) * h_value(x, r, idx_[0]);
    }
    case EigenKind::Cross: {
      const double r = nonzero_norm(x, "F_ab");
      return std::sqrt(dd + 2.0) * x[static_cast<Eigen::Index>(idx_[0])] *
             x[static_cast<Eigen::Index>(idx_[1])] / r;
    }
    case EigenKind::G: return g_value(x, nonzero_norm(x, "g_gamma"), idx_[0]);
    case EigenKind::H: return h_value(x, nonzero_norm(x, "h_gamma"), idx_[0]);
    case EigenKind::Monomial: {
      const double r = nonzero_norm(x, "monomial");
      double p = 1.0;
      for (std::size_t i : idx_) p *= x[static_cast<Eigen::Index>(i)] / r;
      return p * r;  // prod x_i / |x|^(2n+1)
    }
  }
  return 0.0;
}

std::string EigenFunction::label() const {
  auto list = [&] {
    std::string s;
    for (std::size_t i = 0; i < idx_.size(); ++i) s += (i ? "," : "") + std::to_string(idx_[i]);
    return s;
  };
  switch (kind_) {
    case EigenKind::F0: return "F0";
    case EigenKind::Linear: return "F_l[" + list() + "]";
    case EigenKind::Gamma: return "F_gamma[" + list() + "]";
    case EigenKind::Cross: return "F_ab[" + list() + "]";
    case EigenKind::G0: return "g0";
    case EigenKind::G: return "g[" + list() + "]";
    case EigenKind::H: return "h[" + list() + "]";
    case EigenKind::Monomial: return "monomial[" + list() + "]";
  }
  return "?";
}

RealFunction EigenFunction::as_function() const {
  const EigenFunction self = *this;
  return RealFunction{[self](const Vector& x) { return self(x); }, 1.0, label()};
}

double eval(const EigenFunction& f, const Vector& x) { return f(x); }

std::vector<EigenFunction> explicit_basis(std::size_t d) {
  if (d < 2) throw std::invalid_argument("explicit_basis: d must be >= 2");
  std::vector<EigenFunction> out;
  out.reserve(BasisLayout{d}.size());
  out.push_back(EigenFunction::f0(d));
  for (std::size_t l = 0; l < d; ++l) out.push_back(EigenFunction::linear(d, l));
  for (std::size_t g = 0; g + 1 < d; ++g) out.push_back(EigenFunction::gamma(d, g));
  for (std::size_t a = 0; a < d; ++a)
    for (std::size_t b = a + 1; b < d; ++b) out.push_back(EigenFunction::cross(d, a, b));
  return out;
}

double f0_coefficient(std::size_t d) { return (2.0 * static_cast<double>(d) + 1.0) / (4.0 * kPi); }

double quadratic_coefficient(std::size_t d) {
  return 1.0 / (2.0 * kPi * (static_cast<double>(d) + 2.0));
}

double explicit_mode_sum(const Vector& x, const Vector& y) {
  if (x.size() != y.size()) throw std::invalid_argument("explicit_mode_sum: length mismatch");
  const std::size_t d = static_cast<std::size_t>(x.size());
  double quad = 0.0;
  for (const auto& f : explicit_basis(d)) {
    if (f.kind() == EigenKind::Gamma || f.kind() == EigenKind::Cross) quad += f(x) * f(y);
  }
  const auto f0 = EigenFunction::f0(d);
  return f0_coefficient(d) * f0(x) * f0(y) + 0.25 * x.dot(y) + quadratic_coefficient(d) * quad;
}

Interval mu0_interval(std::size_t d) {
  const double lo = f0_coefficient(d);
  return {lo, lo + 0.013 * static_cast<double>(d)};
}

Interval mu2_interval(std::size_t d) {
  const double lo = quadratic_coefficient(d);
  return {lo, lo + 0.026 / (static_cast<double>(d) + 3.0)};
}

// ---------------------------------------------------------------------------

SignedPermutation SignedPermutation::identity(std::size_t d) {
  SignedPermutation p;
  p.perm.resize(d);
  for (std::size_t i = 0; i < d; ++i) p.perm[i] = i;
  p.sign.assign(d, 1.0);
  return p;
}

SignedPermutation SignedPermutation::flip(std::size_t d, std::size_t axis) {
  if (axis >= d) throw std::out_of_range("SignedPermutation::flip: axis out of range");
  auto p = identity(d);
  p.sign[axis] = -1.0;
  return p;
}

SignedPermutation SignedPermutation::swap(std::size_t d, std::size_t a, std::size_t b) {
  if (a >= d || b >= d) throw std::out_of_range("SignedPermutation::swap: axis out of range");
  auto p = identity(d);
  std::swap(p.perm[a], p.perm[b]);
  return p;
}

SignedPermutation SignedPermutation::negate(std::size_t d) {
  auto p = identity(d);
  p.sign.assign(d, -1.0);
  return p;
}

void SignedPermutation::apply(const Vector& in, Vector& out) const {
  out.resize(in.size());
  for (std::size_t i = 0; i < perm.size(); ++i)
    out[static_cast<Eigen::Index>(i)] = sign[i] * in[static_cast<Eigen::Index>(perm[i])];
}

SignedPermutation SignedPermutation::then(const SignedPermutation& next) const {
  SignedPermutation out;
  out.perm.resize(perm.size());
  out.sign.resize(perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i) {
    out.perm[i] = perm[next.perm[i]];
    out.sign[i] = next.sign[i] * sign[next.perm[i]];
  }
  return out;
}

// ---------------------------------------------------------------------------

GramEstimate gram_matrix(const std::vector<RealFunction>& basis, std::size_t d,
                         std::size_t n_samples, std::uint64_t seed) {
  require_samples(n_samples, "gram_matrix");
  if (basis.empty()) throw std::invalid_argument("gram_matrix: empty basis");
  const std::size_t k = basis.size();
  const std::size_t n_pairs = k * (k + 1) / 2;

  auto stats = reduce_chunks(n_samples, seed, MomentStats(n_pairs),
                             [&](GaussianSource& rng, std::size_t count) {
    MomentStats acc(n_pairs);
    Vector x(static_cast<Eigen::Index>(d));
    std::vector<double> f(k), prod(n_pairs);
    for (std::size_t s = 0; s < count; ++s) {
      draw_valid(rng, x, [&](const Vector& p) {
        for (std::size_t i = 0; i < k; ++i) f[i] = basis[i](p);
        return 0;
      });
      std::size_t c = 0;
      for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = i; j < k; ++j) prod[c++] = f[i] * f[j];
      acc.add(prod);
    }
    return acc;
  });

  GramEstimate out;
  out.value.resize(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k));
  out.std_error.resizeLike(out.value);
  out.n_samples = n_samples;
  std::size_t c = 0;
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = i; j < k; ++j, ++c) {
      const auto e = stats.estimate(c);
      const auto ii = static_cast<Eigen::Index>(i);
      const auto jj = static_cast<Eigen::Index>(j);
      out.value(ii, jj) = out.value(jj, ii) = e.value;
      out.std_error(ii, jj) = out.std_error(jj, ii) = e.std_error;
    }
  }
  return out;
}

GramEstimate gram_matrix(const std::vector<EigenFunction>& basis, std::size_t n_samples,
                         std::uint64_t seed) {
  if (basis.empty()) throw std::invalid_argument("gram_matrix: empty basis");
  const std::size_t d = basis.front().dim();
  std::vector<RealFunction> fns;
  fns.reserve(basis.size());
  for (const auto& f : basis) {
    if (f.dim() != d) throw std::invalid_argument("gram_matrix: functions of mixed dimension");
    fns.push_back(f.as_function());
  }
  return gram_matrix(fns, d, n_samples, seed);
}

McEstimate apply_operator(const KernelSpec& kernel, const RealFunction& f, const Vector& x,
                          std::size_t n_samples, std::uint64_t seed, const McScheme& scheme) {
  require_samples(n_samples, "apply_operator");
  const std::size_t d = static_cast<std::size_t>(x.size());
  if (d == 0) throw std::invalid_argument("apply_operator: empty input");
  const auto images = all_images(d, scheme.antithetic);
  const bool radial = use_radial(scheme, f);

  const double r = x.norm();
  double outer = 1.0;
  Vector base = x;
  if (radial) {
    if (r == 0.0) return McEstimate{0.0, 0.0, n_samples};
    // K f(x) = |x| E[rho^(p+1)] E_u[k(x/|x|, u) f(u)] for f of degree p
    base = x / r;
    outer = r * chi_moment(d, *f.degree + 1.0);
  }
  if (scheme.centered && !radial) throw std::invalid_argument("apply_operator: centering needs the RadialSphere estimator");
  const double shift = scheme.centered ? kernel_shift(kernel, d, seed) : 0.0;

  auto stats = reduce_chunks(n_samples, seed, MomentStats(1), [&](GaussianSource& rng, std::size_t count) {
    MomentStats acc(1);
    Vector y(static_cast<Eigen::Index>(d)), scratch(static_cast<Eigen::Index>(d));
    for (std::size_t s = 0; s < count; ++s) {
      if (radial) {
        rng.fill_sphere(y);
        acc.add(image_average(kernel, f, base, y, images, scratch, shift));
      } else {
        acc.add(draw_valid(rng, y, [&](const Vector& p) {
          return image_average(kernel, f, base, p, images, scratch, shift);
        }));
      }
    }
    return acc;
  });
  McEstimate e = stats.estimate();
  e.value *= outer;
  e.std_error *= std::abs(outer);
  return e;
}

McEstimate rayleigh_quotient(const KernelSpec& kernel, const RealFunction& f, std::size_t d,
                             std::size_t n_samples, std::uint64_t seed, const McScheme& scheme) {
  require_samples(n_samples, "rayleigh_quotient");
  if (d == 0) throw std::invalid_argument("rayleigh_quotient: d must be >= 1");
  const auto images = all_images(d, scheme.antithetic);
  const bool radial = use_radial(scheme, f);
  if (scheme.centered && !radial) throw std::invalid_argument("rayleigh_quotient: centering needs the RadialSphere estimator");
  const double shift = scheme.centered ? kernel_shift(kernel, d, seed) : 0.0;

  // component 0: f(x) K-integrand, component 1: f^2 averaged over both draws
  auto stats = reduce_chunks(n_samples, seed, MomentStats(2, true), [&](GaussianSource& rng, std::size_t count) {
    MomentStats acc(2, true);
    Vector x(static_cast<Eigen::Index>(d)), y(x), scratch(x);
    double v[2];
    auto integrand = [&] {
      const double fx = f(x);
      v[0] = fx * image_average(kernel, f, x, y, images, scratch, shift);
      v[1] = 0.5 * (fx * fx + image_square_average(f, y, images, scratch));
    };
    for (std::size_t s = 0; s < count; ++s) {
      if (radial) {
        rng.fill_sphere(x);
        rng.fill_sphere(y);
        integrand();
      } else {
        for (int attempt = 0;; ++attempt) {
          rng.fill(x);
          rng.fill(y);
          try {
            integrand();
            break;
          } catch (const SingularPointError&) {
            if (attempt >= 64) throw;
          }
        }
      }
      acc.add(std::span<const double>(v, 2));
    }
    return acc;
  });

  const McEstimate den = stats.estimate(1);
  if (std::abs(den.value) <= 4.0 * den.std_error)
    throw std::domain_error("rayleigh_quotient: <f, f> is indistinguishable from 0");
  McEstimate q = stats.ratio(0, 1);
  if (radial) {
    const double p = *f.degree;
    const double m = chi_moment(d, p + 1.0);
    const double factor = m * m / chi_moment(d, 2.0 * p);
    q.value *= factor;
    q.std_error *= factor;
  }
  return q;
}

EigenCheckReport eigen_check(const KernelSpec& kernel, const RealFunction& f, std::size_t d,
                             std::size_t n_test_points, std::size_t n_samples, std::uint64_t seed,
                             const McScheme& scheme) {
  if (n_test_points == 0) throw std::invalid_argument("eigen_check: n_test_points must be > 0");
  EigenCheckReport rep;
  rep.rayleigh = rayleigh_quotient(kernel, f, d, n_samples, derive_seed(seed, 0), scheme);
  const double lambda = rep.rayleigh.value;
  if (lambda == 0.0) throw std::domain_error("eigen_check: Rayleigh quotient is 0");

  GaussianSource points(derive_seed(seed, 1));
  std::vector<Vector> xs;
  Vector x(static_cast<Eigen::Index>(d));
  while (xs.size() < n_test_points) {
    points.fill(x);
    if (x.norm() >= 1e-6) xs.push_back(x);
  }

  double resid2 = 0.0, f2 = 0.0, noise2 = 0.0;
  for (std::size_t j = 0; j < xs.size(); ++j) {
    const McEstimate kf = apply_operator(kernel, f, xs[j], n_samples, derive_seed(seed, 2 + j), scheme);
    const double fj = f(xs[j]);
    const double r = kf.value - lambda * fj;
    resid2 += r * r;
    f2 += fj * fj;
    noise2 += kf.std_error * kf.std_error + fj * fj * rep.rayleigh.std_error * rep.rayleigh.std_error;
  }
  if (f2 == 0.0) throw std::domain_error("eigen_check: f vanishes at every test point");
  const double norm = std::abs(lambda) * std::sqrt(f2);
  rep.residual_rel = std::sqrt(resid2) / norm;
  rep.mc_tolerance = std::sqrt(noise2) / norm;
  rep.points_tested = xs.size();
  return rep;
}

McEstimate sphere_moment(const Vector& x_bar, int n, const RealFunction& f, std::size_t n_samples,
                         std::uint64_t seed) {
  require_samples(n_samples, "sphere_moment");
  if (n < 1) throw std::invalid_argument("sphere_moment: n must be >= 1");
  if (std::abs(x_bar.norm() - 1.0) > 1e-9) throw std::invalid_argument("sphere_moment: x_bar is not a unit vector");
  const std::size_t d = static_cast<std::size_t>(x_bar.size());
  const int power = 2 * n + 2;
  auto stats = reduce_chunks(n_samples, seed, MomentStats(1), [&](GaussianSource& rng, std::size_t count) {
    MomentStats acc(1);
    Vector y(static_cast<Eigen::Index>(d));
    for (std::size_t s = 0; s < count; ++s) {
      rng.fill_sphere(y);
      acc.add(std::pow(x_bar.dot(y), power) * f(y));
    }
    return acc;
  });
  return stats.estimate();
}

ProportionalityReport sphere_moment_proportionality(const RealFunction& f, int n,
                                                    const std::vector<Vector>& x_bars,
                                                    std::size_t n_samples, std::uint64_t seed) {
  if (x_bars.size() < 2) throw std::invalid_argument("sphere_moment_proportionality: need >= 2 points");
  ProportionalityReport rep;
  double sw = 0.0, swm = 0.0;
  for (std::size_t j = 0; j < x_bars.size(); ++j) {
    rep.moments.push_back(sphere_moment(x_bars[j], n, f, n_samples, derive_seed(seed, j)));
    rep.f_values.push_back(f(x_bars[j]));
    const auto& m = rep.moments.back();
    const double fj = rep.f_values.back();
    if (m.std_error <= 0.0) throw std::domain_error("sphere_moment_proportionality: zero standard error");
    const double w = 1.0 / (m.std_error * m.std_error);
    sw += w * fj * fj;
    swm += w * fj * m.value;
    rep.ratios.push_back(fj != 0.0 ? m.value / fj : NAN);
    rep.ratio_se.push_back(fj != 0.0 ? m.std_error / std::abs(fj) : NAN);
  }
  if (sw == 0.0) throw std::domain_error("sphere_moment_proportionality: f vanishes at every x_bar");
  rep.constant = swm / sw;
  rep.constant_se = 1.0 / std::sqrt(sw);
  for (std::size_t j = 0; j < x_bars.size(); ++j) {
    const auto& m = rep.moments[j];
    const double fj = rep.f_values[j];
    // variance of a weighted least-squares residual: se^2 (1 - leverage)
    const double var = m.std_error * m.std_error - fj * fj * rep.constant_se * rep.constant_se;
    const double z = std::abs(m.value - rep.constant * fj) / std::sqrt(std::max(var, 1e-300));
    rep.max_abs_z = std::max(rep.max_abs_z, z);
  }
  return rep;
}

RealFunction rotate_function(const RealFunction& f, const Matrix& u) {
  if (u.rows() != u.cols() || u.rows() == 0) throw std::invalid_argument("rotate_function: U must be square");
  const Matrix gram = u * u.transpose();
  if ((gram - Matrix::Identity(u.rows(), u.cols())).cwiseAbs().maxCoeff() > 1e-9)
    throw std::invalid_argument("rotate_function: U is not orthogonal");
  const Matrix ut = u.transpose();
  return RealFunction{[f, ut](const Vector& x) { return f(Vector(ut * x)); }, f.degree, "rot(" + f.name + ")"};
}

EigenCheckReport monomial_check(std::size_t d, const std::vector<std::size_t>& indices,
                                const SeriesParams& params, std::size_t n_test_points,
                                std::size_t n_samples, std::uint64_t seed) {
  const auto mono = EigenFunction::monomial(d, indices);
  McScheme scheme;
  scheme.estimator = Estimator::RadialSphere;
  for (std::size_t i : indices) scheme.antithetic.push_back(SignedPermutation::flip(d, i));
  return eigen_check(KernelSpec::truncated(mono.order(), params), mono.as_function(), d, n_test_points,
                     n_samples, seed, scheme);
}

}  // namespace relu_ntk
