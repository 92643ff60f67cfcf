#pragma once

// Sampling substrate shared by every module: seeded Gaussian streams, the
// hidden-layer weights, the ReLU feature map and Monte Carlo inner products
// under the standard Gaussian input measure.

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace relu_ntk {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Raised when a function with |x| in a denominator is evaluated at x = 0.
/// Monte Carlo loops treat it as a rejected draw and resample.
class SingularPointError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

class NetworkConfig {
 public:
  NetworkConfig(std::size_t d, std::size_t m, std::uint64_t seed);

  std::size_t d() const { return d_; }
  std::size_t m() const { return m_; }
  std::uint64_t seed() const { return seed_; }

 private:
  std::size_t d_;
  std::size_t m_;
  std::uint64_t seed_;
};

/// The d x m hidden weight matrix. Column i is the incoming weight vector of
/// hidden unit i; row l collects the l-th input coordinate across units.
class HiddenWeights {
 public:
  explicit HiddenWeights(Matrix w);

  std::size_t d() const { return static_cast<std::size_t>(w_.rows()); }
  std::size_t m() const { return static_cast<std::size_t>(w_.cols()); }
  const Matrix& matrix() const { return w_; }
  Vector column(std::size_t i) const { return w_.col(static_cast<Eigen::Index>(i)); }
  Vector row(std::size_t l) const { return w_.row(static_cast<Eigen::Index>(l)).transpose(); }

 private:
  Matrix w_;
};

struct McEstimate {
  double value = 0.0;
  double std_error = 0.0;
  std::size_t n_samples = 0;
};

/// |estimate - target| <= sigmas * std_error + floor.
bool within_sigma(const McEstimate& est, double target, double sigmas = 4.0,
                  double floor = 1e-9);

// ---------------------------------------------------------------------------
// Random streams

/// SplitMix64-style mixing of (seed, stream) into an independent seed. Every
/// substream used anywhere in the library is derived through this function.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

class GaussianSource {
 public:
  explicit GaussianSource(std::uint64_t seed);

  double next() { return normal_(engine_); }
  void fill(Vector& out);
  /// Uniform point on the unit sphere (normalized Gaussian draw).
  void fill_sphere(Vector& out);

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

/// Worker count for Monte Carlo loops. Results never depend on it: samples
/// are grouped into fixed-size chunks with per-chunk substreams and merged in
/// chunk order.
void set_jobs(std::size_t n);
std::size_t jobs();

inline constexpr std::size_t kChunkSize = 4096;

namespace detail {

void run_parallel(std::size_t n_tasks, const std::function<void(std::size_t)>& task);

}  // namespace detail

/// Splits n_samples into chunks of kChunkSize, calls
/// `fn(GaussianSource&, std::size_t count) -> Acc` once per chunk with the
/// substream derive_seed(seed, chunk), and merges the partial accumulators in
/// chunk order via `Acc::merge`.
template <class Acc, class ChunkFn>
Acc reduce_chunks(std::size_t n_samples, std::uint64_t seed, Acc init, ChunkFn&& fn) {
  const std::size_t n_chunks = (n_samples + kChunkSize - 1) / kChunkSize;
  const std::size_t wave = std::max<std::size_t>(1, jobs()) * 4;
  Acc total = std::move(init);
  for (std::size_t begin = 0; begin < n_chunks; begin += wave) {
    const std::size_t end = std::min(n_chunks, begin + wave);
    std::vector<std::optional<Acc>> parts(end - begin);
    detail::run_parallel(end - begin, [&](std::size_t k) {
      const std::size_t chunk = begin + k;
      const std::size_t count =
          std::min(kChunkSize, n_samples - chunk * kChunkSize);
      GaussianSource rng(derive_seed(seed, chunk));
      parts[k].emplace(fn(rng, count));
    });
    for (auto& p : parts) total.merge(*p);
  }
  return total;
}

// ---------------------------------------------------------------------------
// Moment accumulation

/// Running means and (co)variances of a fixed number of components, merged
/// with Chan's pairwise update so chunked accumulation is order-stable.
class MomentStats {
 public:
  explicit MomentStats(std::size_t components = 1, bool full_covariance = false);

  void add(std::span<const double> values);
  void add(double value) { add(std::span<const double>(&value, 1)); }
  void merge(const MomentStats& other);

  std::size_t count() const { return n_; }
  std::size_t components() const { return mean_.size(); }
  double mean(std::size_t i = 0) const { return mean_[i]; }
  /// Unbiased sample variance of component i.
  double variance(std::size_t i = 0) const;
  double covariance(std::size_t i, std::size_t j) const;
  McEstimate estimate(std::size_t i = 0) const;
  /// mean(i) / mean(j) with delta-method standard error (needs full covariance).
  McEstimate ratio(std::size_t i, std::size_t j) const;

 private:
  std::size_t n_ = 0;
  bool full_;
  std::vector<double> mean_;
  std::vector<double> m2_;    // diagonal co-moments
  std::vector<double> cross_; // row-major k x k co-moments when full_
  std::vector<double> delta_;
};

// ---------------------------------------------------------------------------
// Scalar functions on R^d

/// A real function on R^d. `degree` records positive homogeneity,
/// f(c x) = c^degree f(x) for c > 0, when it is known; estimators use it to
/// integrate the radius out exactly.
struct RealFunction {
  std::function<double(const Vector&)> fn;
  std::optional<double> degree;
  std::string name;

  double operator()(const Vector& x) const { return fn(x); }
};

/// E|x|^k for x standard Gaussian in R^d (chi distribution moment).
double chi_moment(std::size_t d, double k);

// ---------------------------------------------------------------------------
// Operations

HiddenWeights sample_network(const NetworkConfig& config);

/// max(x . W_{*i}, 0) for every hidden unit i.
Vector feature_map(const HiddenWeights& w, const Vector& x);

/// Feature maps for a batch of inputs stored as rows of `inputs` (n x d).
Matrix feature_map_rows(const HiddenWeights& w, const Matrix& inputs);

/// <f, g> = E[f(x) g(x)] for x ~ N(0, I_d).
McEstimate gauss_l2_inner(const RealFunction& f, const RealFunction& g,
                          std::size_t d, std::size_t n_samples, std::uint64_t seed);

/// n_samples points uniform on the unit sphere of R^d. The i-th point is the
/// i-th draw of the chunked substream, so loops that consume the same seed
/// see identical points.
std::vector<Vector> sample_sphere(std::size_t d, std::size_t n_samples, std::uint64_t seed);

/// Haar-random orthogonal matrix (QR of a Gaussian matrix with sign fix).
Matrix random_orthogonal(std::size_t d, std::uint64_t seed);

/// Draws x ~ N(0, I) into `x` and returns fn(x), redrawing on SingularPointError.
template <class Fn>
auto draw_valid(GaussianSource& rng, Vector& x, Fn&& fn) {
  for (int attempt = 0;; ++attempt) {
    rng.fill(x);
    try {
      return fn(x);
    } catch (const SingularPointError&) {
      if (attempt >= 64) throw;
    }
  }
}

}  // namespace relu_ntk
