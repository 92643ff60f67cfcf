#include "relu_ntk/core.hpp"

#include <doctest.h>

#include <cmath>
#include <set>

using namespace relu_ntk;

TEST_SUITE("core") {

TEST_CASE("derive_seed is a pure function with distinct substreams") {
  CHECK(derive_seed(1, 0) == derive_seed(1, 0));
  std::set<std::uint64_t> seen;
  for (std::uint64_t s = 0; s < 64; ++s)
    for (std::uint64_t k = 0; k < 64; ++k) seen.insert(derive_seed(s, k));
  CHECK(seen.size() == 64u * 64u);
}

TEST_CASE("GaussianSource replays its stream") {
  GaussianSource a(42), b(42), c(43);
  Vector x(7), y(7), z(7);
  a.fill(x);
  b.fill(y);
  c.fill(z);
  CHECK(x == y);
  CHECK(x != z);
  Vector u(9);
  a.fill_sphere(u);
  CHECK(u.norm() == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("MomentStats matches two-pass formulas and merges exactly") {
  const std::vector<double> v{1.5, -2.0, 3.25, 0.0, 7.0, -1.0, 2.5};
  MomentStats all(1);
  for (double x : v) all.add(x);
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  CHECK(all.mean() == doctest::Approx(mean).epsilon(1e-15));
  CHECK(all.variance() == doctest::Approx(ss / (v.size() - 1)).epsilon(1e-14));
  CHECK(all.estimate().std_error == doctest::Approx(std::sqrt(ss / (v.size() - 1) / v.size())).epsilon(1e-14));

  MomentStats left(1), right(1);
  for (std::size_t i = 0; i < 3; ++i) left.add(v[i]);
  for (std::size_t i = 3; i < v.size(); ++i) right.add(v[i]);
  left.merge(right);
  CHECK(left.count() == v.size());
  CHECK(left.mean() == doctest::Approx(mean).epsilon(1e-15));
  CHECK(left.variance() == doctest::Approx(all.variance()).epsilon(1e-14));
}

TEST_CASE("MomentStats ratio and covariance") {
  MomentStats s(2, true);
  for (int i = 1; i <= 10; ++i) {
    const double row[2] = {2.0 * i, static_cast<double>(i)};
    s.add(std::span<const double>(row, 2));
  }
  CHECK(s.ratio(0, 1).value == doctest::Approx(2.0));
  CHECK(s.ratio(0, 1).std_error == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(s.covariance(0, 1) == doctest::Approx(2.0 * s.variance(1)));
}

TEST_CASE("chi moments") {
  for (std::size_t d : {1u, 2u, 5u, 10u}) {
    CHECK(chi_moment(d, 2.0) == doctest::Approx(static_cast<double>(d)).epsilon(1e-13));
    CHECK(chi_moment(d, 4.0) == doctest::Approx(static_cast<double>(d * (d + 2))).epsilon(1e-13));
    const double e1 = std::sqrt(2.0) * std::tgamma(0.5 * (d + 1.0)) / std::tgamma(0.5 * d);
    CHECK(chi_moment(d, 1.0) == doctest::Approx(e1).epsilon(1e-13));
  }
}

TEST_CASE("Monte Carlo results do not depend on the worker count") {
  const RealFunction f{[](const Vector& x) { return x.norm(); }, 1.0, "|x|"};
  const RealFunction g{[](const Vector& x) { return x[0] * x[0]; }, 2.0, "x0^2"};
  set_jobs(1);
  const McEstimate one = gauss_l2_inner(f, g, 4, 50000, 9);
  set_jobs(4);
  const McEstimate four = gauss_l2_inner(f, g, 4, 50000, 9);
  set_jobs(1);
  CHECK(one.value == four.value);
  CHECK(one.std_error == four.std_error);
  // E[|x| x0^2] = E r^3 / d for x ~ N(0, I_4)
  CHECK(within_sigma(one, chi_moment(4, 3.0) / 4.0));
}

TEST_CASE("sample_network scale and column independence") {
  const auto w = sample_network(NetworkConfig(3, 20000, 5));
  CHECK(w.d() == 3);
  CHECK(w.m() == 20000);
  // |W|_F^2 ~ d with relative spread sqrt(2/(d m))
  CHECK(w.matrix().squaredNorm() == doctest::Approx(3.0).epsilon(4.0 * std::sqrt(2.0 / 60000.0)));
  const auto narrow = sample_network(NetworkConfig(3, 10, 5));
  CHECK((narrow.matrix().col(7) * std::sqrt(10.0)).isApprox(w.matrix().col(7) * std::sqrt(20000.0), 1e-14));
}

TEST_CASE("feature map is relu of W^T x") {
  Matrix m(2, 3);
  m << 1, -1, 0.5, 2, 0, -3;
  const HiddenWeights w(m);
  const Vector x = (Vector(2) << 1.0, 1.0).finished();
  const Vector phi = feature_map(w, x);
  CHECK(phi[0] == 3.0);
  CHECK(phi[1] == 0.0);
  CHECK(phi[2] == 0.0);
  Matrix rows(1, 2);
  rows << 1.0, 1.0;
  CHECK(feature_map_rows(w, rows).row(0).transpose() == phi);
}

TEST_CASE("random_orthogonal") {
  const Matrix q = random_orthogonal(6, 11);
  CHECK((q.transpose() * q - Matrix::Identity(6, 6)).cwiseAbs().maxCoeff() < 1e-13);
  CHECK(random_orthogonal(6, 11) == q);
}

TEST_CASE("invalid arguments") {
  CHECK_THROWS_AS(NetworkConfig(0, 3, 1), std::invalid_argument);
  CHECK_THROWS_AS(NetworkConfig(3, 0, 1), std::invalid_argument);
  CHECK_THROWS_AS(HiddenWeights(Matrix(0, 0)), std::invalid_argument);
  Matrix bad = Matrix::Ones(2, 2);
  bad(0, 0) = NAN;
  CHECK_THROWS_AS(HiddenWeights{bad}, std::invalid_argument);
  const RealFunction one{[](const Vector&) { return 1.0; }, 0.0, "1"};
  CHECK_THROWS_AS(gauss_l2_inner(one, one, 3, 0, 1), std::invalid_argument);
}

}
