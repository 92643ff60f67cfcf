#include "relu_ntk/kernel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace relu_ntk {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kTwoPi = 2.0 * std::numbers::pi;

struct Geometry {
  double norm_x;
  double norm_y;
  double cosine;
  // angle to the nearest of the directions +y / -y; only filled when collinear
  double collinear_angle = 0.0;
};

Geometry geometry(const Vector& x, const Vector& y) {
  if (x.size() != y.size()) throw std::invalid_argument("kernel: x and y differ in length");
  Geometry g{x.norm(), y.norm(), 0.0};
  if (g.norm_x == 0.0 || g.norm_y == 0.0) return g;
  g.cosine = std::clamp(x.dot(y) / (g.norm_x * g.norm_y), -1.0, 1.0);
  if (std::abs(g.cosine) > kCollinearThreshold) {
    // 2 asin(|u - v| / 2) is the angle between unit vectors, accurate near 0
    const Vector u = x / g.norm_x;
    const Vector v = g.cosine > 0 ? Vector(y / g.norm_y) : Vector(-y / g.norm_y);
    g.collinear_angle = 2.0 * std::asin(std::min(1.0, 0.5 * (u - v).norm()));
  }
  return g;
}

bool is_collinear(const Geometry& g) { return std::abs(g.cosine) > kCollinearThreshold; }

// (sin t - t cos t) / (2 pi) by its alternating Taylor series; error below t^7/(840 * 2 pi)
double odd_correction(double t) {
  const double t3 = t * t * t;
  return (t3 / 3.0 - t3 * t * t / 30.0) / kTwoPi;
}

// Unit-norm kernel value near c = +-1, where the series converges like n^{-3/2}.
KernelValue collinear_unit_kernel(const Geometry& g) {
  const double t = g.collinear_angle;
  KernelValue out;
  out.value = g.cosine > 0 ? 0.5 * std::cos(t) + odd_correction(t) : odd_correction(t);
  out.tail_bound = std::pow(t, 7) / (840.0 * kTwoPi);
  out.n_terms_used = 0;
  return out;
}

// (sqrt(1 - c^2) + (pi - acos c) c) / (2 pi), the kernel for unit norms
double arccos_unit(double c) { return (std::sqrt(1.0 - c * c) + (kPi - std::acos(c)) * c) / kTwoPi; }

// Sum of summands first, first+1, ... for unit norms, stopping once the tail
// bound times `scale` falls below params.tol.
KernelValue sum_series(double c, int first, const SeriesParams& params, double scale) {
  KernelValue out;
  const double c2 = c * c;
  double a = 1.0;
  for (int n = 1; n <= first; ++n) a *= (2.0 * n - 1.0) / (2.0 * n);
  double power = std::pow(c2, first + 1);  // c^(2n+2)

  double sum = 0.0;
  int n = first;
  for (;; ++n) {
    sum += a * power / ((2.0 * n + 1.0) * (2.0 * n + 2.0));
    ++out.n_terms_used;

    const double a_next = a * (2.0 * n + 1.0) / (2.0 * n + 2.0);
    const double power_next = power * c2;
    const double next_term =
        a_next * power_next / ((2.0 * (n + 1) + 1.0) * (2.0 * (n + 1) + 2.0)) / kTwoPi;
    double tail = c2 < 1.0 ? next_term / (1.0 - c2) : INFINITY;
    if (n >= 1) {
      // a_k <= 1/sqrt(pi k) and (2k+1)(2k+2) >= 4k^2 give an n^{-3/2} envelope
      const double envelope =
          power_next / (12.0 * kPi * std::sqrt(kPi) * std::pow(static_cast<double>(n), 1.5));
      tail = std::min(tail, envelope);
    }
    out.tail_bound = tail * scale;
    if (out.tail_bound <= params.tol) break;
    if (n + 1 - first >= params.n_max) {
      if (!params.close_tail) {
        out.converged = false;
        break;
      }
      // n_max terms cannot reach tol here; the tail is closed with the arc-cosine
      // form instead, which leaves only rounding error
      double total = kTwoPi * arccos_unit(c) - 1.0 - 0.5 * kPi * c;
      double ak = 1.0;
      double pk = c2;
      for (int k = 0; k < first; ++k) {
        total -= ak * pk / ((2.0 * k + 1.0) * (2.0 * k + 2.0));
        ak *= (2.0 * k + 1.0) / (2.0 * k + 2.0);
        pk *= c2;
      }
      out.value = total / kTwoPi;
      out.tail_bound = 64.0 * std::numeric_limits<double>::epsilon() * scale;
      out.closed_tail = true;
      return out;
    }
    a = a_next;
    power = power_next;
  }
  out.value = sum / kTwoPi;
  return out;
}

KernelValue scaled(KernelValue k, double scale) {
  k.value *= scale;
  k.tail_bound *= scale;
  return k;
}

}  // namespace

void SeriesParams::validate() const {
  if (!(tol > 0.0)) throw std::invalid_argument("SeriesParams: tol must be > 0");
  if (n_max < 1) throw std::invalid_argument("SeriesParams: n_max must be >= 1");
}

double central_binomial_ratio(int n) {
  if (n < 0) throw std::invalid_argument("central_binomial_ratio: n < 0");
  double a = 1.0;
  for (int k = 1; k <= n; ++k) a *= (2.0 * k - 1.0) / (2.0 * k);
  return a;
}

double series_term(int n, double c) {
  return central_binomial_ratio(n) * std::pow(c, 2 * n + 2) /
         ((2.0 * n + 1.0) * (2.0 * n + 2.0)) / kTwoPi;
}

KernelValue ntk_series(const Vector& x, const Vector& y, const SeriesParams& params) {
  params.validate();
  const Geometry g = geometry(x, y);
  if (g.norm_x == 0.0 || g.norm_y == 0.0) return KernelValue{};
  const double scale = g.norm_x * g.norm_y;
  if (is_collinear(g)) return scaled(collinear_unit_kernel(g), scale);

  KernelValue k = sum_series(g.cosine, 0, params, scale);
  k.value = scale * (1.0 / kTwoPi + 0.25 * g.cosine + k.value);
  return k;
}

KernelValue ntk_series_cosine(double norm_x, double norm_y, double c, const SeriesParams& params) {
  params.validate();
  if (std::abs(c) > kCollinearThreshold)
    throw std::invalid_argument("ntk_series_cosine: |c| above the collinear threshold");
  const double scale = norm_x * norm_y;
  if (scale == 0.0) return KernelValue{};
  KernelValue k = sum_series(c, 0, params, scale);
  k.value = scale * (1.0 / kTwoPi + 0.25 * c + k.value);
  return k;
}

McEstimate ntk_mc_oracle(const Vector& x, const Vector& y, std::size_t d, std::size_t n_samples,
                         std::uint64_t seed) {
  if (static_cast<std::size_t>(x.size()) != d || static_cast<std::size_t>(y.size()) != d)
    throw std::invalid_argument("ntk_mc_oracle: inputs must have length d");
  if (n_samples == 0) throw std::invalid_argument("ntk_mc_oracle: n_samples must be > 0");
  auto stats = reduce_chunks(n_samples, seed, MomentStats(1), [&](GaussianSource& rng, std::size_t count) {
    MomentStats acc(1);
    Vector z(static_cast<Eigen::Index>(d));
    for (std::size_t s = 0; s < count; ++s) {
      rng.fill(z);
      acc.add(std::max(x.dot(z), 0.0) * std::max(y.dot(z), 0.0));
    }
    return acc;
  });
  return stats.estimate();
}

double ntk_empirical(const HiddenWeights& w, const Vector& x, const Vector& y) {
  return feature_map(w, x).dot(feature_map(w, y));
}

KernelValue remainder_kernel(const Vector& x, const Vector& y, const SeriesParams& params) {
  params.validate();
  const Geometry g = geometry(x, y);
  if (g.norm_x == 0.0 || g.norm_y == 0.0) return KernelValue{};
  const double scale = g.norm_x * g.norm_y;
  if (is_collinear(g)) {
    KernelValue k = collinear_unit_kernel(g);
    const double c = g.cosine > 0 ? std::cos(g.collinear_angle) : -std::cos(g.collinear_angle);
    k.value -= 1.0 / kTwoPi + 0.25 * c + c * c / (2.0 * kTwoPi);
    return scaled(k, scale);
  }
  return scaled(sum_series(g.cosine, 1, params, scale), scale);
}

KernelValue truncated_kernel(const Vector& x, const Vector& y, int order, const SeriesParams& params) {
  params.validate();
  if (order < 0) throw std::invalid_argument("truncated_kernel: order must be >= 0");
  const Geometry g = geometry(x, y);
  if (g.norm_x == 0.0 || g.norm_y == 0.0) return KernelValue{};
  const double c = g.cosine;
  const double c2 = c * c;
  double a = 1.0;
  double power = c2;
  double sum = 0.0;
  for (int n = 0; n <= order; ++n) {
    if (n > 0) {
      a *= (2.0 * n - 1.0) / (2.0 * n);
      power *= c2;
    }
    sum += a * power / ((2.0 * n + 1.0) * (2.0 * n + 2.0));
  }
  KernelValue k;
  k.value = g.norm_x * g.norm_y * (1.0 / kTwoPi + 0.25 * c + sum / kTwoPi);
  k.n_terms_used = order + 1;
  return k;
}

// ---------------------------------------------------------------------------

KernelSpec::KernelSpec(Kind kind, SeriesParams params, int order,
                       std::shared_ptr<const HiddenWeights> w)
    : kind_(kind), params_(params), order_(order), weights_(std::move(w)) {
  params_.validate();
}

KernelSpec KernelSpec::series(SeriesParams params) { return {Kind::Series, params, 0, nullptr}; }
KernelSpec KernelSpec::remainder(SeriesParams params) { return {Kind::Remainder, params, 0, nullptr}; }

KernelSpec KernelSpec::truncated(int order, SeriesParams params) {
  if (order < 0) throw std::invalid_argument("KernelSpec::truncated: order must be >= 0");
  return {Kind::Truncated, params, order, nullptr};
}

KernelSpec KernelSpec::empirical(HiddenWeights weights) {
  return {Kind::Empirical, SeriesParams{}, 0, std::make_shared<const HiddenWeights>(std::move(weights))};
}

std::string KernelSpec::name() const {
  switch (kind_) {
    case Kind::Series: return "ntk";
    case Kind::Remainder: return "remainder";
    case Kind::Truncated: return "truncated(" + std::to_string(order_) + ")";
    case Kind::Empirical: return "empirical(m=" + std::to_string(weights_->m()) + ")";
  }
  return "?";
}

double KernelSpec::operator()(const Vector& x, const Vector& y) const {
  switch (kind_) {
    case Kind::Series: return ntk_series(x, y, params_).value;
    case Kind::Remainder: return remainder_kernel(x, y, params_).value;
    case Kind::Truncated: return truncated_kernel(x, y, order_, params_).value;
    case Kind::Empirical: return ntk_empirical(*weights_, x, y);
  }
  return 0.0;
}

McEstimate trace_estimate(const KernelSpec& kernel, std::size_t d, std::size_t n_samples,
                          std::uint64_t seed) {
  if (d == 0) throw std::invalid_argument("trace_estimate: d must be >= 1");
  if (n_samples == 0) throw std::invalid_argument("trace_estimate: n_samples must be > 0");
  auto stats = reduce_chunks(n_samples, seed, MomentStats(1), [&](GaussianSource& rng, std::size_t count) {
    MomentStats acc(1);
    Vector x(static_cast<Eigen::Index>(d));
    for (std::size_t s = 0; s < count; ++s)
      acc.add(draw_valid(rng, x, [&](const Vector& p) { return kernel(p, p); }));
    return acc;
  });
  return stats.estimate();
}

McEstimate trace_estimate(std::size_t d, const SeriesParams& params, std::size_t n_samples,
                          std::uint64_t seed) {
  return trace_estimate(KernelSpec::series(params), d, n_samples, seed);
}

double remainder_trace_bound(std::size_t d) {
  const double dd = static_cast<double>(d);
  return 0.5 * dd * (0.5 - (3.0 * dd + 2.0) / (kTwoPi * (dd + 2.0)));
}

}  // namespace relu_ntk
