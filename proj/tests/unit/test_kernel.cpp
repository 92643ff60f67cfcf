#include "relu_ntk/kernel.hpp"

#include "oracles.hpp"

#include <doctest.h>

#include <cmath>

using namespace relu_ntk;

namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

double closed_form(const Vector& x, const Vector& y) {
  return x.norm() * y.norm() * oracle::arccos1(x.dot(y) / (x.norm() * y.norm()));
}

}  // namespace

TEST_SUITE("kernel") {

TEST_CASE("central binomial ratios") {
  CHECK(central_binomial_ratio(0) == 1.0);
  CHECK(central_binomial_ratio(1) == 0.5);
  CHECK(central_binomial_ratio(2) == 0.375);
  CHECK(central_binomial_ratio(3) == doctest::Approx(0.3125).epsilon(1e-15));
  // C(40, 20) / 4^20
  CHECK(central_binomial_ratio(20) == doctest::Approx(137846528820.0 / std::pow(4.0, 20)).epsilon(1e-13));
}

TEST_CASE("series agrees with the arc-cosine closed form") {
  GaussianSource rng(17);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t d = 2 + static_cast<std::size_t>(trial % 9);
    Vector x(static_cast<Eigen::Index>(d)), y(static_cast<Eigen::Index>(d));
    rng.fill(x);
    rng.fill(y);
    const KernelValue k = ntk_series(x, y);
    CHECK(std::abs(k.value - closed_form(x, y)) <= k.tail_bound + 1e-12 * x.norm() * y.norm());
  }
}

TEST_CASE("special values") {
  const Vector e0 = vec({1, 0, 0}), e1 = vec({0, 1, 0});
  CHECK(ntk_series(e0, e1).value == doctest::Approx(1.0 / (2.0 * oracle::pi)).epsilon(1e-14));
  const Vector x = vec({0.3, -1.2, 2.0});
  CHECK(ntk_series(x, x).value == doctest::Approx(0.5 * x.squaredNorm()).epsilon(1e-12));
  CHECK(std::abs(ntk_series(x, -x).value) < 1e-12);
  CHECK(ntk_series(x, 3.0 * x).value == doctest::Approx(1.5 * x.squaredNorm()).epsilon(1e-12));
  // frozen: closed form at c = 1/2, unit norms
  CHECK(std::abs(ntk_series_cosine(1.0, 1.0, 0.5).value - 0.30449889052211465) <= 1e-10);
  CHECK(oracle::arccos1(0.5) == doctest::Approx(0.30449889052211465).epsilon(1e-14));
}

TEST_CASE("near-collinear inputs stay finite and accurate") {
  const Vector x = vec({1.0, 2.0, -0.5});
  const Vector y = x + 1e-9 * vec({0.3, -0.1, 0.2});
  const KernelValue k = ntk_series(x, y);
  CHECK(std::isfinite(k.value));
  CHECK(k.value == doctest::Approx(closed_form(x, y)).epsilon(1e-10));
  const KernelValue anti = ntk_series(x, -y);
  CHECK(std::abs(anti.value - closed_form(x, -y)) < 1e-10);
  CHECK_THROWS(ntk_series_cosine(1.0, 1.0, 1.0));
}

TEST_CASE("zero input gives zero") {
  const Vector z = Vector::Zero(4), x = vec({1, 2, 3, 4});
  CHECK(ntk_series(z, x).value == 0.0);
  CHECK(remainder_kernel(x, z).value == 0.0);
  CHECK(truncated_kernel(z, x, 3).value == 0.0);
}

TEST_CASE("remainder and truncation") {
  const Vector x = vec({1.0, 0.0, 0.0});
  CHECK(remainder_kernel(x, x).value == doctest::Approx(0.25 - 3.0 / (4.0 * oracle::pi)).epsilon(1e-9));
  CHECK(0.25 - 3.0 / (4.0 * oracle::pi) == doctest::Approx(0.011267585362156995).epsilon(1e-15));

  GaussianSource rng(3);
  Vector a(5), b(5);
  rng.fill(a);
  rng.fill(b);
  const double c = a.dot(b) / (a.norm() * b.norm());
  const double rem = remainder_kernel(a, b).value;
  CHECK(rem == doctest::Approx(a.norm() * b.norm() * oracle::remainder_profile(c)).epsilon(1e-9));
  // k^(n) = closed terms + summands 0..n
  const double closed = a.norm() * b.norm() / (2.0 * oracle::pi) + a.dot(b) / 4.0;
  double sum = closed;
  for (int n = 0; n <= 6; ++n) {
    sum += a.norm() * b.norm() * series_term(n, c);
    CHECK(truncated_kernel(a, b, n).value == doctest::Approx(sum).epsilon(1e-14));
  }
  CHECK(truncated_kernel(a, b, 0).value + rem == doctest::Approx(ntk_series(a, b).value).epsilon(1e-12));
}

TEST_CASE("slow convergence near collinearity is flagged when the tail is left open") {
  SeriesParams open;
  open.close_tail = false;
  const KernelValue k = ntk_series_cosine(1.0, 1.0, 0.999, open);
  CHECK_FALSE(k.converged);
  CHECK_FALSE(k.closed_tail);
  CHECK(k.n_terms_used == 200);
  CHECK(std::abs(k.value - oracle::arccos1(0.999)) <= k.tail_bound);
}

TEST_CASE("closed tail is accurate between the series range and the collinear branch") {
  for (double c : {-0.99975, -0.999, 0.985, 0.999, 0.99999}) {
    const KernelValue k = ntk_series_cosine(2.0, 0.5, c);
    CHECK(k.converged);
    CHECK(k.closed_tail);
    CHECK(std::abs(k.value - oracle::arccos1(c)) <= 1e-13);
  }
  const Vector a = Vector::Unit(3, 0);
  const Vector b = Vector{{-1.0, 0.02, 0.0}};
  const double c = a.dot(b) / b.norm();
  const KernelValue r = remainder_kernel(a, b);
  CHECK(r.closed_tail);
  CHECK(r.value == doctest::Approx(b.norm() * oracle::remainder_profile(c)).epsilon(1e-11));
  CHECK_FALSE(ntk_series_cosine(1.0, 1.0, 0.5).closed_tail);
}

TEST_CASE("tail bound dominates the true tail") {
  for (double c : {0.3, 0.7, 0.95, 0.999}) {
    SeriesParams p;
    p.tol = 1e-6;
    p.close_tail = false;
    const KernelValue k = ntk_series_cosine(1.0, 1.0, c, p);
    CHECK(std::abs(k.value - oracle::arccos1(c)) <= k.tail_bound + 1e-15);
  }
}

TEST_CASE("series parameters are validated") {
  SeriesParams bad;
  bad.tol = 0.0;
  CHECK_THROWS_AS(ntk_series(vec({1, 0}), vec({0, 1}), bad), std::invalid_argument);
  bad = {};
  bad.n_max = 0;
  CHECK_THROWS_AS(ntk_series(vec({1, 0}), vec({0, 1}), bad), std::invalid_argument);
  CHECK_THROWS(ntk_series(vec({1, 0}), vec({0, 1, 0})));
}

TEST_CASE("series matches the Monte Carlo oracle") {
  const Vector x = vec({0.5, -1.0, 1.5, 0.2}), y = vec({1.0, 0.3, -0.4, 2.0});
  const McEstimate mc = ntk_mc_oracle(x, y, 4, 200000, 8);
  CHECK(within_sigma(mc, ntk_series(x, y).value));
}

TEST_CASE("empirical kernel is an unbiased finite-width estimate") {
  const Vector x = vec({0.5, -1.0, 1.5}), y = vec({1.0, 0.3, -0.4});
  const double exact = ntk_series(x, y).value;
  MomentStats s(1);
  for (std::uint64_t seed = 0; seed < 200; ++seed)
    s.add(ntk_empirical(sample_network(NetworkConfig(3, 100, seed)), x, y));
  CHECK(within_sigma(s.estimate(), exact));
}

TEST_CASE("trace identities") {
  const McEstimate tr = trace_estimate(KernelSpec::series(), 6, 100000, 4);
  CHECK(within_sigma(tr, 3.0));
  const McEstimate rt = trace_estimate(KernelSpec::remainder(), 6, 100000, 5);
  CHECK(within_sigma(rt, 6.0 * (0.25 - 3.0 / (4.0 * oracle::pi))));
  CHECK(rt.value < remainder_trace_bound(6));
  // (d/2)(1/2 - (3d+2)/(2 pi (d+2))) at d = 10, frozen
  CHECK(remainder_trace_bound(10) == doctest::Approx(0.377934092108).epsilon(1e-11));
}

TEST_CASE("KernelSpec dispatch") {
  const Vector x = vec({1, 2}), y = vec({-0.5, 1});
  CHECK(KernelSpec::series()(x, y) == ntk_series(x, y).value);
  CHECK(KernelSpec::remainder()(x, y) == remainder_kernel(x, y).value);
  CHECK(KernelSpec::truncated(2)(x, y) == truncated_kernel(x, y, 2).value);
  const auto w = sample_network(NetworkConfig(2, 30, 1));
  CHECK(KernelSpec::empirical(w)(x, y) == ntk_empirical(w, x, y));
  CHECK_THROWS(KernelSpec::truncated(-1));
}

}
