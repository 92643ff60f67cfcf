#pragma once

// Explicit eigenfunctions of the ReLU tangent kernel and Monte Carlo tools for
// checking them: Gram matrices, operator application K f, Rayleigh quotients,
// pointwise eigen-residuals and sphere moments.
//
// Index conventions are 0-based. The orthogonalized squared-coordinate
// contrasts F_gamma use gamma in [0, d-2] and always subtract the last
// coordinate with weight -1/(sqrt(d)+1).

#include "relu_ntk/kernel.hpp"

#include <string>
#include <vector>

namespace relu_ntk {

enum class EigenKind {
  F0,        // |x| / sqrt(d)
  Linear,    // x_l
  Gamma,     // sqrt((d+2)/2) h_gamma
  Cross,     // sqrt(d+2) x_a x_b / |x|
  G0,        // |x|
  G,         // g_gamma = x_gamma^2/|x| - |x|/d
  H,         // h_gamma = g_gamma - g_{d-1}/(sqrt(d)+1)
  Monomial,  // prod_i x_{a_i} / |x|^(2n+1)
};

class EigenFunction {
 public:
  static EigenFunction f0(std::size_t d);
  static EigenFunction linear(std::size_t d, std::size_t l);
  static EigenFunction gamma(std::size_t d, std::size_t gamma);
  static EigenFunction cross(std::size_t d, std::size_t a, std::size_t b);
  static EigenFunction g0(std::size_t d);
  static EigenFunction g(std::size_t d, std::size_t gamma);
  static EigenFunction h(std::size_t d, std::size_t gamma);
  /// Strictly increasing indices, even count 2n+2 <= d.
  static EigenFunction monomial(std::size_t d, std::vector<std::size_t> indices);

  EigenKind kind() const { return kind_; }
  std::size_t dim() const { return d_; }
  const std::vector<std::size_t>& indices() const { return idx_; }
  /// n for a monomial of 2n+2 factors; 0 otherwise.
  int order() const;

  /// Throws SingularPointError at x = 0 for every kind with |x| in a denominator.
  double operator()(const Vector& x) const;

  std::string label() const;
  RealFunction as_function() const;

 private:
  EigenFunction(EigenKind kind, std::size_t d, std::vector<std::size_t> idx);

  EigenKind kind_;
  std::size_t d_;
  std::vector<std::size_t> idx_;
};

double eval(const EigenFunction& f, const Vector& x);

/// F0, F_l (l < d), F_gamma (gamma < d-1), F_ab (a < b): 1 + d + (d-1) + d(d-1)/2 functions.
std::vector<EigenFunction> explicit_basis(std::size_t d);

/// Group sizes of explicit_basis(d).
struct BasisLayout {
  std::size_t d;
  std::size_t linear_begin() const { return 1; }
  std::size_t gamma_begin() const { return 1 + d; }
  std::size_t cross_begin() const { return 2 * d; }
  std::size_t size() const { return 2 * d + d * (d - 1) / 2; }
};

/// Eigen-sum of the explicit modes with their leading coefficients
/// (2d+1)/(4 pi), 1/4 and 1/(2 pi (d+2)). Together with the remainder kernel it
/// reproduces the full kernel.
double explicit_mode_sum(const Vector& x, const Vector& y);

double f0_coefficient(std::size_t d);         // (2d+1)/(4 pi)
double quadratic_coefficient(std::size_t d);  // 1/(2 pi (d+2))

struct Interval {
  double lo;
  double hi;
  bool contains(double v) const { return v >= lo && v <= hi; }
};

/// Bounds on the eigenvalue of F0 obtained from the remainder trace.
Interval mu0_interval(std::size_t d);
/// Bounds on the shared eigenvalue of F_gamma and F_ab.
Interval mu2_interval(std::size_t d);

// ---------------------------------------------------------------------------
// Monte Carlo machinery

/// y_i = sign_i * x_{perm_i}; preserves both the Gaussian and the sphere measure.
struct SignedPermutation {
  std::vector<std::size_t> perm;
  std::vector<double> sign;

  static SignedPermutation identity(std::size_t d);
  static SignedPermutation flip(std::size_t d, std::size_t axis);
  static SignedPermutation swap(std::size_t d, std::size_t a, std::size_t b);
  static SignedPermutation negate(std::size_t d);

  void apply(const Vector& in, Vector& out) const;
  SignedPermutation then(const SignedPermutation& next) const;
};

enum class Estimator {
  Auto,          // RadialSphere when f has a known homogeneity degree
  Gaussian,      // plain sampling from N(0, I_d)
  RadialSphere,  // integrate the radius exactly, sample directions on the sphere
};

/// Every integrand is averaged over all 2^k compositions of the `antithetic`
/// maps before it enters the sample mean. Any measure-preserving map keeps the
/// estimator unbiased; well-chosen maps cancel kernel components orthogonal to f.
///
/// `centered` subtracts a constant b from the kernel inside the integrand
/// (b is a pilot estimate of the sphere average of k(e_0, u)). The estimator
/// stays unbiased only when f integrates to zero over the unit sphere, which
/// holds for every explicit mode except F0.
struct McScheme {
  Estimator estimator = Estimator::Auto;
  std::vector<SignedPermutation> antithetic;
  bool centered = false;
};

struct GramEstimate {
  Matrix value;
  Matrix std_error;
  std::size_t n_samples = 0;
};

/// All pairwise inner products from one shared Gaussian sample stream.
GramEstimate gram_matrix(const std::vector<RealFunction>& basis, std::size_t d,
                         std::size_t n_samples, std::uint64_t seed);
GramEstimate gram_matrix(const std::vector<EigenFunction>& basis, std::size_t n_samples,
                         std::uint64_t seed);

/// K f(x) = E_y[k(x, y) f(y)].
McEstimate apply_operator(const KernelSpec& kernel, const RealFunction& f, const Vector& x,
                          std::size_t n_samples, std::uint64_t seed, const McScheme& scheme = {});

/// <f, K f> / <f, f>; numerator and denominator share one stream and the
/// standard error comes from the delta method.
McEstimate rayleigh_quotient(const KernelSpec& kernel, const RealFunction& f, std::size_t d,
                             std::size_t n_samples, std::uint64_t seed,
                             const McScheme& scheme = {});

struct EigenCheckReport {
  McEstimate rayleigh;
  /// sqrt(sum_j (Kf(x_j) - lambda f(x_j))^2) / (|lambda| sqrt(sum_j f(x_j)^2)).
  double residual_rel = 0.0;
  /// The value residual_rel takes from Monte Carlo noise alone.
  double mc_tolerance = 0.0;
  std::size_t points_tested = 0;
};

EigenCheckReport eigen_check(const KernelSpec& kernel, const RealFunction& f, std::size_t d,
                             std::size_t n_test_points, std::size_t n_samples, std::uint64_t seed,
                             const McScheme& scheme = {});

/// E over the uniform sphere of (x_bar . y)^(2n+2) f(y).
McEstimate sphere_moment(const Vector& x_bar, int n, const RealFunction& f,
                         std::size_t n_samples, std::uint64_t seed);

struct ProportionalityReport {
  double constant = 0.0;     // weighted least-squares fit of moment_j = c f(x_bar_j)
  double constant_se = 0.0;
  std::vector<McEstimate> moments;
  std::vector<double> f_values;
  std::vector<double> ratios;     // moment_j / f(x_bar_j)
  std::vector<double> ratio_se;
  double max_abs_z = 0.0;         // largest standardized fit residual
};

/// Sphere moments at each x_bar on independent substreams plus a fit of the
/// proportionality constant.
ProportionalityReport sphere_moment_proportionality(const RealFunction& f, int n,
                                                    const std::vector<Vector>& x_bars,
                                                    std::size_t n_samples, std::uint64_t seed);

/// x -> f(x U) for an orthogonal U (x a row vector).
RealFunction rotate_function(const RealFunction& f, const Matrix& u);

/// eigen_check of prod x_{a_i} / |x|^(2n+1) against the truncated kernel of
/// order n = indices.size()/2 - 1, with sign-flip antithetics on the indices.
EigenCheckReport monomial_check(std::size_t d, const std::vector<std::size_t>& indices,
                                const SeriesParams& params, std::size_t n_test_points,
                                std::size_t n_samples, std::uint64_t seed);

}  // namespace relu_ntk
