#pragma once

// Truncated approximation model f^(D) over the explicit modes, projection of
// finite-width network functions f_v(x) = X(x) . v onto it, and the diagonal
// gradient flow on the mode coefficients.

#include "relu_ntk/eigenbasis.hpp"
#include "relu_ntk/fisher.hpp"

#include <string>
#include <vector>

namespace relu_ntk {

/// Measured eigenvalues of the F0 mode and the shared quadratic mode.
struct ModeEigenvalues {
  std::size_t d = 0;
  McEstimate mu0;
  McEstimate mu2;
  double linear = 0.25;

  Interval mu0_bounds() const { return mu0_interval(d); }
  Interval mu2_bounds() const { return mu2_interval(d); }
};

ModeEigenvalues measure_mode_eigenvalues(std::size_t d, std::size_t n_samples, std::uint64_t seed);

/// measure_mode_eigenvalues with a fixed budget and stream, memoized per d.
const ModeEigenvalues& mode_eigenvalues(std::size_t d);

struct ApproxModel {
  std::size_t d = 0;
  std::vector<EigenFunction> basis;  // explicit_basis(d)
  /// <f_v, F_i> over explicit_basis(d); f^(D) = sum_i coefficient_i F_i.
  Vector coefficients;
  Vector coefficient_se;
  /// coefficient_i / sqrt(eigenvalue_i).
  Vector theta;
  Vector theta_se;
  Vector eigenvalues;
  double mu0 = 0.0;
  double mu2 = 0.0;
  /// Set when the projected v had |v| > 1.
  bool norm_warning = false;

  std::size_t size() const { return static_cast<std::size_t>(coefficients.size()); }
  double operator()(const Vector& x) const;
  /// sum_i coefficient_i^2 (the basis is orthonormal).
  double squared_norm() const;
};

/// Coefficients estimated on one shared stream; eigenvalues from `modes`.
ApproxModel project(const Vector& v, const HiddenWeights& w, std::size_t n_samples, std::uint64_t seed,
                    const ModeEigenvalues& modes);
ApproxModel project(const Vector& v, const HiddenWeights& w, std::size_t n_samples, std::uint64_t seed);

/// Rebuilds a model from explicit coefficients (idempotence checks, flows).
ApproxModel model_from_coefficients(std::size_t d, const Vector& coefficients, const ModeEigenvalues& modes);

/// Projection of an arbitrary function of degree-1 homogeneity, e.g. a
/// reconstructed f^(D).
ApproxModel project_function(const RealFunction& f, std::size_t d, std::size_t n_samples, std::uint64_t seed,
                             const ModeEigenvalues& modes);

/// |f_v - f^(D)|^2.
McEstimate approx_error(const Vector& v, const HiddenWeights& w, const ApproxModel& model,
                        std::size_t n_samples, std::uint64_t seed);

/// |f_v|^2.
McEstimate network_norm(const Vector& v, const HiddenWeights& w, std::size_t n_samples, std::uint64_t seed);

struct PythagorasReport {
  McEstimate total;     // |f_v|^2
  McEstimate model;     // |f^(D)|^2 = sum coefficient^2, se from the coefficient errors
  McEstimate residual;  // |f_v - f^(D)|^2
  double gap = 0.0;     // total - model - residual
  double combined_se = 0.0;
  bool pass = false;    // |gap| <= 4 combined_se
};

/// Norms evaluated on a stream independent of the one that fit `model`.
PythagorasReport pythagoras_check(const Vector& v, const HiddenWeights& w, const ApproxModel& model,
                                  std::size_t n_samples, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Gradient flow

struct FlowTrace {
  std::vector<double> time;                // step * eta
  std::vector<double> lambdas;             // per mode
  std::vector<std::vector<double>> theta;  // theta[mode][step]
  std::vector<double> kl;                  // (1/2) sum_i lambda_i (target_i - theta_i)^2 per step
  std::vector<double> fitted_rates;        // NaN for modes that start at the target
};

/// theta_i <- theta_i + eta lambda_i (target_i - theta_i). Throws when
/// eta max(lambda) >= 2 or a coefficient stops being finite.
FlowTrace gradient_flow(const Vector& target, const Vector& init, const Vector& lambdas, double eta, int n_steps);
FlowTrace gradient_flow(const ApproxModel& target, const ApproxModel& init, double eta, int n_steps);

/// Least-squares slope of -log|error| against time; NaN without two nonzero points.
double fit_decay_rate(const std::vector<double>& time, const std::vector<double>& error);

/// Finite-m descent v <- v - eta J (v - v_hat) on squared loss, compared with
/// the diagonal prediction (1 - eta lambda_F)^k for F0, F_l(0) and F_ab(0,1).
struct VFlowMode {
  std::string label;
  double lambda = 0.0;
  double c0 = 0.0;             // <f_{v_0 - v_hat}, F>
  double max_rel_deviation = 0.0;  // max_k |c_k - (1 - eta lambda)^k c0| / |c0|
};

struct VFlowReport {
  double eta = 0.0;
  int n_steps = 0;
  std::vector<VFlowMode> modes;
  double max_rel_deviation = 0.0;
};

VFlowReport vspace_flow_check(const HiddenWeights& w, const FisherMatrix& j, const ModeEigenvalues& modes,
                              double eta, int n_steps, std::size_t n_samples, std::uint64_t seed);

struct SampleComplexityRow {
  std::string family;
  double eigenvalue;
  double multiplier;  // 1 / eigenvalue
};

/// Relative sample-size multipliers 1/mu0, 4, 1/mu2 from interval midpoints.
std::vector<SampleComplexityRow> sample_complexity_report(std::size_t d);

}  // namespace relu_ntk
