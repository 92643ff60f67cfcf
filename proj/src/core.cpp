#include "relu_ntk/core.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <mutex>

namespace relu_ntk {

NetworkConfig::NetworkConfig(std::size_t d, std::size_t m, std::uint64_t seed)
    : d_(d), m_(m), seed_(seed) {
  if (d == 0) throw std::invalid_argument("NetworkConfig: d must be >= 1");
  if (m == 0) throw std::invalid_argument("NetworkConfig: m must be >= 1");
}

HiddenWeights::HiddenWeights(Matrix w) : w_(std::move(w)) {
  if (w_.rows() == 0 || w_.cols() == 0)
    throw std::invalid_argument("HiddenWeights: empty weight matrix");
  if (!w_.allFinite()) throw std::invalid_argument("HiddenWeights: non-finite entry");
}

bool within_sigma(const McEstimate& est, double target, double sigmas, double floor) {
  return std::abs(est.value - target) <= sigmas * est.std_error + floor;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  z ^= z >> 31;
  // second round so that nearby (seed, stream) pairs decorrelate fully
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

GaussianSource::GaussianSource(std::uint64_t seed) : engine_(seed) {}

void GaussianSource::fill(Vector& out) {
  for (Eigen::Index i = 0; i < out.size(); ++i) out[i] = normal_(engine_);
}

void GaussianSource::fill_sphere(Vector& out) {
  for (;;) {
    fill(out);
    const double n = out.norm();
    if (n > 0.0) {
      out /= n;
      return;
    }
  }
}

namespace {
std::atomic<std::size_t> g_jobs{1};
}

void set_jobs(std::size_t n) {
  if (n == 0) n = std::max(1u, std::thread::hardware_concurrency());
  g_jobs.store(n);
}

std::size_t jobs() { return g_jobs.load(); }

namespace detail {

void run_parallel(std::size_t n_tasks, const std::function<void(std::size_t)>& task) {
  const std::size_t workers = std::min(jobs(), n_tasks);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n_tasks; ++i) task(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n_tasks) return;
      try {
        task(i);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  std::vector<std::jthread> pool;
  pool.reserve(workers - 1);
  for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(worker);
  worker();
  pool.clear();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace detail

// ---------------------------------------------------------------------------

MomentStats::MomentStats(std::size_t components, bool full_covariance)
    : full_(full_covariance),
      mean_(components, 0.0),
      m2_(components, 0.0),
      cross_(full_covariance ? components * components : 0, 0.0),
      delta_(components, 0.0) {}

void MomentStats::add(std::span<const double> values) {
  const std::size_t k = mean_.size();
  if (values.size() != k) throw std::invalid_argument("MomentStats: component count mismatch");
  ++n_;
  const double inv_n = 1.0 / static_cast<double>(n_);
  for (std::size_t i = 0; i < k; ++i) {
    delta_[i] = values[i] - mean_[i];
    mean_[i] += delta_[i] * inv_n;
    m2_[i] += delta_[i] * (values[i] - mean_[i]);
  }
  if (full_) {
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t j = 0; j < k; ++j)
        cross_[i * k + j] += delta_[i] * (values[j] - mean_[j]);
  }
}

void MomentStats::merge(const MomentStats& other) {
  if (other.n_ == 0) return;
  if (other.mean_.size() != mean_.size() || other.full_ != full_)
    throw std::invalid_argument("MomentStats: incompatible merge");
  if (n_ == 0) {
    *this = other;
    return;
  }
  const std::size_t k = mean_.size();
  const double na = static_cast<double>(n_);
  const double nb = static_cast<double>(other.n_);
  const double n = na + nb;
  for (std::size_t i = 0; i < k; ++i) delta_[i] = other.mean_[i] - mean_[i];
  for (std::size_t i = 0; i < k; ++i) {
    m2_[i] += other.m2_[i] + delta_[i] * delta_[i] * na * nb / n;
  }
  if (full_) {
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t j = 0; j < k; ++j)
        cross_[i * k + j] += other.cross_[i * k + j] + delta_[i] * delta_[j] * na * nb / n;
  }
  for (std::size_t i = 0; i < k; ++i) mean_[i] += delta_[i] * nb / n;
  n_ += other.n_;
}

double MomentStats::variance(std::size_t i) const {
  if (n_ < 2) return 0.0;
  return std::max(0.0, m2_[i] / static_cast<double>(n_ - 1));
}

double MomentStats::covariance(std::size_t i, std::size_t j) const {
  if (i == j) return variance(i);
  if (!full_) throw std::logic_error("MomentStats: covariance needs full_covariance");
  if (n_ < 2) return 0.0;
  return cross_[i * mean_.size() + j] / static_cast<double>(n_ - 1);
}

McEstimate MomentStats::estimate(std::size_t i) const {
  McEstimate e;
  e.value = mean_[i];
  e.n_samples = n_;
  e.std_error = n_ > 0 ? std::sqrt(variance(i) / static_cast<double>(n_)) : 0.0;
  return e;
}

McEstimate MomentStats::ratio(std::size_t i, std::size_t j) const {
  const double b = mean_[j];
  if (b == 0.0) throw std::domain_error("MomentStats::ratio: zero denominator");
  const double r = mean_[i] / b;
  const double var = variance(i) - 2.0 * r * covariance(i, j) + r * r * variance(j);
  McEstimate e;
  e.value = r;
  e.n_samples = n_;
  e.std_error = n_ > 0 ? std::sqrt(std::max(0.0, var) / static_cast<double>(n_)) / std::abs(b) : 0.0;
  return e;
}

double chi_moment(std::size_t d, double k) {
  const double half_d = 0.5 * static_cast<double>(d);
  return std::exp(0.5 * k * std::log(2.0) + std::lgamma(half_d + 0.5 * k) - std::lgamma(half_d));
}

// ---------------------------------------------------------------------------

HiddenWeights sample_network(const NetworkConfig& config) {
  const std::size_t d = config.d();
  const std::size_t m = config.m();
  const double scale = 1.0 / std::sqrt(static_cast<double>(m));
  Matrix w(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(m));
  // one substream per hidden unit: column i depends only on (seed, i)
  for (std::size_t i = 0; i < m; ++i) {
    GaussianSource rng(derive_seed(config.seed(), i));
    for (std::size_t l = 0; l < d; ++l)
      w(static_cast<Eigen::Index>(l), static_cast<Eigen::Index>(i)) = scale * rng.next();
  }
  return HiddenWeights(std::move(w));
}

Vector feature_map(const HiddenWeights& w, const Vector& x) {
  if (static_cast<std::size_t>(x.size()) != w.d())
    throw std::invalid_argument("feature_map: input has length " + std::to_string(x.size()) +
                                ", expected " + std::to_string(w.d()));
  return (w.matrix().transpose() * x).cwiseMax(0.0);
}

Matrix feature_map_rows(const HiddenWeights& w, const Matrix& inputs) {
  if (static_cast<std::size_t>(inputs.cols()) != w.d())
    throw std::invalid_argument("feature_map_rows: input dimension mismatch");
  return (inputs * w.matrix()).cwiseMax(0.0);
}

McEstimate gauss_l2_inner(const RealFunction& f, const RealFunction& g, std::size_t d,
                          std::size_t n_samples, std::uint64_t seed) {
  if (n_samples == 0) throw std::invalid_argument("gauss_l2_inner: n_samples must be > 0");
  if (d == 0) throw std::invalid_argument("gauss_l2_inner: d must be >= 1");
  auto stats = reduce_chunks(n_samples, seed, MomentStats(1),
                             [&](GaussianSource& rng, std::size_t count) {
                               MomentStats acc(1);
                               Vector x(static_cast<Eigen::Index>(d));
                               for (std::size_t s = 0; s < count; ++s)
                                 acc.add(draw_valid(rng, x, [&](const Vector& p) { return f(p) * g(p); }));
                               return acc;
                             });
  return stats.estimate();
}

std::vector<Vector> sample_sphere(std::size_t d, std::size_t n_samples, std::uint64_t seed) {
  if (d == 0) throw std::invalid_argument("sample_sphere: d must be >= 1");
  struct Points {
    std::vector<Vector> v;
    void merge(Points& o) {
      std::move(o.v.begin(), o.v.end(), std::back_inserter(v));
    }
  };
  auto out = reduce_chunks(n_samples, seed, Points{}, [&](GaussianSource& rng, std::size_t count) {
    Points p;
    p.v.reserve(count);
    Vector u(static_cast<Eigen::Index>(d));
    for (std::size_t s = 0; s < count; ++s) {
      rng.fill_sphere(u);
      p.v.push_back(u);
    }
    return p;
  });
  return std::move(out.v);
}

Matrix random_orthogonal(std::size_t d, std::uint64_t seed) {
  GaussianSource rng(seed);
  Matrix g(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
  for (Eigen::Index j = 0; j < g.cols(); ++j)
    for (Eigen::Index i = 0; i < g.rows(); ++i) g(i, j) = rng.next();
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ();
  const Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Eigen::Index j = 0; j < q.cols(); ++j)
    if (r(j, j) < 0) q.col(j) *= -1.0;
  return q;
}

}  // namespace relu_ntk
