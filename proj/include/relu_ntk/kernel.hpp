#pragma once

// Kernel evaluations for the infinite-width ReLU tangent kernel
//
//   k(x, y) = E_Z[ phi(x.Z) phi(y.Z) ],  Z ~ N(0, I_d)
//
// computed from its power series in the cosine c = x.y / (|x||y|):
//
//   k = |x||y|/(2 pi) + x.y/4
//       + (|x||y|/(2 pi)) * sum_{n>=0} a_n c^(2n+2) / ((2n+1)(2n+2)),
//   a_n = C(2n, n) / 4^n.
//
// The n = 0 summand is (x.y)^2 / (4 pi |x||y|). The remainder kernel r keeps
// only n >= 1 and the truncated kernel k^(n) stops after summand n.

#include "relu_ntk/core.hpp"

#include <memory>
#include <string>

namespace relu_ntk {

struct SeriesParams {
  double tol = 1e-10;
  int n_max = 200;
  /// When n_max is hit before tol (roughly 0.98 < |c| < 1), finish the sum in
  /// closed form. Off: return the partial sum with converged = false.
  bool close_tail = true;

  void validate() const;
};

struct KernelValue {
  double value = 0.0;
  int n_terms_used = 0;
  /// Bound on |value - exact|.
  double tail_bound = 0.0;
  /// False when n_max was reached with tail_bound > tol.
  bool converged = true;
  /// n_max was reached and the rest of the series was summed in closed form.
  bool closed_tail = false;
};

/// |c| above this is treated as collinear and summed analytically.
inline constexpr double kCollinearThreshold = 1.0 - 1e-6;

/// Coefficient a_n = C(2n, n)/4^n via a_n = a_{n-1} (2n-1)/(2n).
double central_binomial_ratio(int n);

/// Summand n of the series (n >= 0) for unit norms and cosine c.
double series_term(int n, double c);

KernelValue ntk_series(const Vector& x, const Vector& y, const SeriesParams& params = {});

/// Same value from |x|, |y| and the cosine. Only valid for |c| <= kCollinearThreshold;
/// beyond it the cosine alone loses the angle and the vector form must be used.
KernelValue ntk_series_cosine(double norm_x, double norm_y, double c, const SeriesParams& params = {});

/// Monte Carlo average of phi(x.Z) phi(y.Z).
McEstimate ntk_mc_oracle(const Vector& x, const Vector& y, std::size_t d,
                         std::size_t n_samples, std::uint64_t seed);

/// k_m(x, y) = X(x) . X(y) for a finite network.
double ntk_empirical(const HiddenWeights& w, const Vector& x, const Vector& y);

/// Tail n >= 1 of the series; 0 when either input is zero.
KernelValue remainder_kernel(const Vector& x, const Vector& y, const SeriesParams& params = {});

/// k^(order): the two closed terms plus summands 0..order; 0 when either input is zero.
KernelValue truncated_kernel(const Vector& x, const Vector& y, int order,
                             const SeriesParams& params = {});

/// A kernel choice usable by the integral-operator machinery.
class KernelSpec {
 public:
  enum class Kind { Series, Remainder, Truncated, Empirical };

  static KernelSpec series(SeriesParams params = {});
  static KernelSpec remainder(SeriesParams params = {});
  static KernelSpec truncated(int order, SeriesParams params = {});
  static KernelSpec empirical(HiddenWeights weights);

  Kind kind() const { return kind_; }
  int order() const { return order_; }
  const SeriesParams& params() const { return params_; }
  std::string name() const;

  /// k(x, y). Remainder and truncated kernels throw SingularPointError at 0.
  double operator()(const Vector& x, const Vector& y) const;

 private:
  KernelSpec(Kind kind, SeriesParams params, int order, std::shared_ptr<const HiddenWeights> w);

  Kind kind_;
  SeriesParams params_;
  int order_ = 0;
  std::shared_ptr<const HiddenWeights> weights_;
};

/// Monte Carlo estimate of the operator trace E[k(x, x)], x ~ N(0, I_d).
McEstimate trace_estimate(const KernelSpec& kernel, std::size_t d, std::size_t n_samples,
                          std::uint64_t seed);
McEstimate trace_estimate(std::size_t d, const SeriesParams& params, std::size_t n_samples,
                          std::uint64_t seed);

/// (d/2)(1/2 - (3d+2)/(2 pi (d+2))): upper bound on the remainder trace.
double remainder_trace_bound(std::size_t d);

}  // namespace relu_ntk
