#pragma once

// Fisher information of the output weights v for f_v(x) = X(x) . v with unit
// noise variance. The exact matrix is the tangent kernel evaluated on pairs of
// hidden weight columns; the empirical one averages feature outer products.

#include "relu_ntk/kernel.hpp"

#include <optional>

namespace relu_ntk {

struct FisherMatrix {
  enum class Provenance { ExactSeries, Empirical, Synthetic };

  Matrix J;
  Provenance provenance = Provenance::Synthetic;
  std::size_t n_samples = 0;  // empirical only
  std::optional<std::uint64_t> seed;

  std::size_t m() const { return static_cast<std::size_t>(J.rows()); }
  std::string provenance_name() const;

  /// Wraps an arbitrary symmetric matrix (tests, synthetic inputs).
  static FisherMatrix synthetic(Matrix j);
};

/// J_ij = k(W_i, W_j) over hidden columns; upper triangle computed, then mirrored.
FisherMatrix fisher_exact(const HiddenWeights& w, const SeriesParams& params = {});

/// (1/n) sum_t X(x_t)^T X(x_t), x_t ~ N(0, I_d).
FisherMatrix fisher_empirical(const HiddenWeights& w, std::size_t n_samples, std::uint64_t seed);

enum class EigenSolver {
  SelfAdjoint,  // Eigen's tridiagonal QR solver
  Jacobi,       // cyclic Jacobi sweeps
};

struct EigenDecomposition {
  Vector values;   // descending
  Matrix vectors;  // column i pairs with values[i]
  int sweeps = 0;  // Jacobi only
  double reconstruction_error = 0.0;  // |J - V diag V^T|_F / |J|_F
  double orthogonality_error = 0.0;   // max |V^T V - I|
};

/// Throws std::runtime_error when the result misses `tol` on either error
/// measure or the Jacobi sweep cap is hit.
EigenDecomposition eigendecompose(const Matrix& j, double tol = 1e-8,
                                  EigenSolver solver = EigenSolver::SelfAdjoint);
EigenDecomposition eigendecompose(const FisherMatrix& j, double tol = 1e-8,
                                  EigenSolver solver = EigenSolver::SelfAdjoint);

/// Cyclic Jacobi until the off-diagonal Frobenius norm is <= rel_off * |J|_F.
EigenDecomposition jacobi_eigen(const Matrix& j, double rel_off = 1e-12, int max_sweeps = 100);

/// Descending eigenvalues without vectors.
Vector eigenvalues_descending(const Matrix& j);

enum class Cluster { Top, Linear, Quadratic, Bulk };

struct ClusterSummary {
  std::size_t count = 0;
  double mean = 0.0;
  double center = 0.0;         // predicted value
  double rel_deviation = 0.0;  // (mean - center) / center
};

struct SpectrumClusters {
  std::size_t d = 0;
  std::size_t m = 0;
  std::vector<double> eigenvalues;
  std::vector<Cluster> assignment;
  ClusterSummary top, linear, quadratic, bulk;
  /// Quadratic cluster measured against 1/(2 pi (d+2)) instead of 1/(2 pi d).
  ClusterSummary quadratic_alt;
  /// False when m < 2d + d(d-1)/2: everything is reported as bulk.
  bool structured = false;
  /// m >= 20 d^2, the width at which the cluster tolerances were calibrated.
  bool calibrated_width = false;
  double bulk_max = 0.0;
  bool bulk_below_quadratic = false;
};

/// Rank-based assignment: 1 top, d linear, (d-1) + d(d-1)/2 quadratic, rest bulk.
SpectrumClusters cluster_spectrum(const std::vector<double>& eigs_descending, std::size_t d, std::size_t m);

/// (u - v) J (u - v)^T / 2.
double kl_divergence(const Vector& u, const Vector& v, const FisherMatrix& j);

/// E[(f_u(x) - f_v(x))^2] / 2 by Monte Carlo.
McEstimate kl_mc_oracle(const Vector& u, const Vector& v, const HiddenWeights& w,
                        std::size_t n_samples, std::uint64_t seed);

struct IsometryReport {
  McEstimate inner;  // <f_u, f_v> by Monte Carlo
  double exact = 0.0;  // u J v^T with the exact Fisher matrix
  double z = 0.0;      // (inner - exact) / se
  bool pass = false;   // |z| <= 4
};

IsometryReport metric_isometry_check(const Vector& u, const Vector& v, const HiddenWeights& w,
                                     std::size_t n_samples, std::uint64_t seed,
                                     const SeriesParams& params = {});

}  // namespace relu_ntk
