#include "relu_ntk/eigenbasis.hpp"

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

McScheme radial(std::vector<SignedPermutation> maps, bool centered = false) {
  McScheme s;
  s.estimator = Estimator::RadialSphere;
  s.antithetic = std::move(maps);
  s.centered = centered;
  return s;
}

}  // namespace

TEST_SUITE("eigenbasis") {

TEST_CASE("explicit values") {
  CHECK(EigenFunction::f0(2)(vec({3, 4})) == doctest::Approx(5.0 / std::sqrt(2.0)).epsilon(1e-15));
  CHECK(EigenFunction::f0(2)(vec({3, 4})) == doctest::Approx(3.5355339059).epsilon(1e-10));
  CHECK(EigenFunction::cross(3, 0, 1)(vec({1, 2, 2})) == doctest::Approx(1.4907119850).epsilon(1e-10));
  CHECK(EigenFunction::gamma(3, 0)(vec({1, 0, 0})) == doctest::Approx(1.2470048796).epsilon(1e-10));
  CHECK(EigenFunction::gamma(3, 0)(vec({1, 0, 0})) ==
        doctest::Approx(std::sqrt(2.5) * (2.0 / 3.0 + (1.0 / 3.0) / (std::sqrt(3.0) + 1.0))).epsilon(1e-15));
  CHECK(EigenFunction::linear(4, 2)(vec({1, 2, 3, 4})) == 3.0);
  // x0 x1 x2 x3 / |x|^3 at (1,1,1,1,0,0): 1/8
  CHECK(EigenFunction::monomial(6, {0, 1, 2, 3})(vec({1, 1, 1, 1, 0, 0})) == doctest::Approx(0.125));
  CHECK(EigenFunction::g(4, 1)(vec({0, 2, 0, 0})) == doctest::Approx(2.0 - 0.5));
}

TEST_CASE("singular point and index validation") {
  CHECK(EigenFunction::f0(3)(Vector::Zero(3)) == 0.0);
  CHECK_THROWS_AS(EigenFunction::cross(3, 0, 1)(Vector::Zero(3)), SingularPointError);
  CHECK_THROWS_AS(EigenFunction::gamma(3, 2), std::out_of_range);  // gamma ranges over 0..d-2
  CHECK_THROWS_AS(EigenFunction::cross(3, 1, 1), std::out_of_range);
  CHECK_THROWS_AS(EigenFunction::linear(3, 3), std::out_of_range);
  CHECK_THROWS(EigenFunction::f0(3)(vec({1, 2})));
}

TEST_CASE("basis layout and labels") {
  for (std::size_t d : {2u, 3u, 5u, 10u}) {
    const auto b = explicit_basis(d);
    const BasisLayout lay{d};
    CHECK(b.size() == lay.size());
    CHECK(b.size() == 1 + d + (d - 1) + d * (d - 1) / 2);
    CHECK(b[0].kind() == EigenKind::F0);
    CHECK(b[lay.linear_begin()].kind() == EigenKind::Linear);
    CHECK(b[lay.gamma_begin()].kind() == EigenKind::Gamma);
    CHECK(b[lay.cross_begin()].kind() == EigenKind::Cross);
  }
  CHECK(explicit_basis(5).size() == 20);
  CHECK(EigenFunction::cross(5, 0, 1).label() == "F_ab[0,1]");
}

TEST_CASE("degree-1 homogeneity of the explicit modes") {
  GaussianSource rng(2);
  Vector x(5);
  rng.fill(x);
  for (const auto& f : explicit_basis(5)) CHECK(f(2.5 * x) == doctest::Approx(2.5 * f(x)).epsilon(1e-13));
}

TEST_CASE("mode sum reproduces the explicit part of the kernel") {
  // sum_F mu_F F(x) F(y) with the closed-form constants equals |x||y|/(2 pi) + x.y/4 + (x.y)^2/(4 pi |x||y|)
  // once mu0 = (2d+1)/(4 pi) and mu2 = 1/(2 pi (d+2))
  GaussianSource rng(12);
  for (std::size_t d : {2u, 4u, 7u}) {
    Vector x(static_cast<Eigen::Index>(d)), y(static_cast<Eigen::Index>(d));
    rng.fill(x);
    rng.fill(y);
    const double nx = x.norm(), ny = y.norm(), c = x.dot(y);
    const double expected = nx * ny / (2.0 * oracle::pi) + c / 4.0 + c * c / (4.0 * oracle::pi * nx * ny);
    CHECK(explicit_mode_sum(x, y) == doctest::Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("interval constants") {
  CHECK(f0_coefficient(5) == doctest::Approx(11.0 / (4.0 * oracle::pi)));
  CHECK(quadratic_coefficient(5) == doctest::Approx(1.0 / (14.0 * oracle::pi)));
  // 0.026/(d+3) is the same number as (0.026 d/2)(2/(d(d+3)))
  for (std::size_t d : {2u, 5u, 10u, 30u}) {
    const double dd = static_cast<double>(d);
    CHECK(mu2_interval(d).hi - mu2_interval(d).lo == doctest::Approx(0.026 * dd / 2.0 * 2.0 / (dd * (dd + 3.0))));
  }
  // quadrature oracle against the intervals
  for (int d : {3, 5, 10, 20}) {
    CHECK(mu0_interval(static_cast<std::size_t>(d)).contains(oracle::mu(0, d)));
    CHECK(mu2_interval(static_cast<std::size_t>(d)).contains(oracle::mu(2, d)));
  }
  // d = 2 sits above the upper end for mu2
  CHECK_FALSE(mu2_interval(2).contains(oracle::mu(2, 2)));
  CHECK(oracle::mu(0, 5) == doctest::Approx(225.0 / 256.0).epsilon(1e-12));
  CHECK(oracle::mu(2, 5) == doctest::Approx(25.0 / 1024.0).epsilon(1e-12));
  CHECK(oracle::mu(1, 7) == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("signed permutations") {
  const auto s = SignedPermutation::swap(3, 0, 2);
  const auto f = SignedPermutation::flip(3, 1);
  Vector out, out2;
  s.apply(vec({1, 2, 3}), out);
  CHECK(out == vec({3, 2, 1}));
  s.then(f).apply(vec({1, 2, 3}), out);
  f.apply(vec({3, 2, 1}), out2);
  CHECK(out == out2);
  SignedPermutation::negate(3).apply(vec({1, -2, 3}), out);
  CHECK(out == vec({-1, 2, -3}));
}

TEST_CASE("Gram matrix of the 5-d basis") {
  const auto g = gram_matrix(explicit_basis(5), 200000, 1);
  for (Eigen::Index i = 0; i < g.value.rows(); ++i)
    for (Eigen::Index j = 0; j < g.value.cols(); ++j)
      CHECK(std::abs(g.value(i, j) - (i == j ? 1.0 : 0.0)) <= 4.0 * g.std_error(i, j) + 1e-12);
}

TEST_CASE("g family norms") {
  const auto g = gram_matrix(std::vector<EigenFunction>{EigenFunction::g0(4), EigenFunction::g(4, 1)}, 200000, 3);
  CHECK(within_sigma({g.value(1, 1), g.std_error(1, 1), 200000}, 0.25));
  CHECK(within_sigma({g.value(0, 1), g.std_error(0, 1), 200000}, 0.0));
}

TEST_CASE("Rayleigh quotients against the quadrature oracle") {
  const auto k = KernelSpec::series();
  SUBCASE("linear") {
    for (std::size_t d : {2u, 5u}) {
      const auto f = EigenFunction::linear(d, 0);
      const auto r = rayleigh_quotient(k, f.as_function(), d, 50000, 4, radial({SignedPermutation::flip(d, 0)}));
      CHECK(within_sigma(r, 0.25));
    }
  }
  SUBCASE("F0 and quadratic modes at d = 5") {
    const auto r0 = rayleigh_quotient(k, EigenFunction::f0(5).as_function(), 5, 100000, 5,
                                      radial({SignedPermutation::negate(5)}));
    CHECK(within_sigma(r0, oracle::mu(0, 5)));
    const auto r2 = rayleigh_quotient(k, EigenFunction::cross(5, 1, 3).as_function(), 5, 100000, 6,
                                      radial({SignedPermutation::flip(5, 1), SignedPermutation::flip(5, 3)}));
    CHECK(within_sigma(r2, oracle::mu(2, 5)));
    const auto rg = rayleigh_quotient(k, EigenFunction::gamma(5, 2).as_function(), 5, 100000, 7,
                                      radial({SignedPermutation::negate(5)}, true));
    CHECK(within_sigma(rg, oracle::mu(2, 5)));
  }
  SUBCASE("remainder kernel") {
    const auto r = rayleigh_quotient(KernelSpec::remainder(), EigenFunction::f0(6).as_function(), 6, 100000, 8,
                                     radial({SignedPermutation::negate(6)}));
    CHECK(within_sigma(r, oracle::remainder_mu(0, 6)));
  }
}

TEST_CASE("plain Gaussian estimator agrees with the radial one") {
  McScheme g;
  g.estimator = Estimator::Gaussian;
  const auto r = rayleigh_quotient(KernelSpec::series(), EigenFunction::linear(3, 1).as_function(), 3, 100000, 9, g);
  CHECK(within_sigma(r, 0.25));
}

TEST_CASE("apply_operator at single points") {
  const auto k = KernelSpec::series();
  const auto f = EigenFunction::linear(4, 1);
  const Vector x = vec({0.3, -1.1, 0.8, 2.0});
  const auto kf = apply_operator(k, f.as_function(), x, 100000, 10, radial({SignedPermutation::flip(4, 1)}));
  CHECK(within_sigma(kf, 0.25 * f(x)));
  const RealFunction zero{[](const Vector&) { return 0.0; }, 1.0, "0"};
  const auto kz = apply_operator(k, zero, x, 1000, 1);
  CHECK(kz.value == 0.0);
  CHECK(kz.std_error == 0.0);
  CHECK(apply_operator(k, f.as_function(), Vector::Zero(4), 1000, 1).value == 0.0);
}

TEST_CASE("eigen_check separates eigenfunctions from a control") {
  const auto k = KernelSpec::series();
  const auto fl = EigenFunction::linear(5, 0);
  const auto good = eigen_check(k, fl.as_function(), 5, 10, 40000, 11, radial({SignedPermutation::flip(5, 0)}));
  CHECK(good.points_tested == 10);
  CHECK(good.residual_rel <= 3.0 * good.mc_tolerance);
  const RealFunction control{[](const Vector& x) { return x[0] * x.norm(); }, 2.0, "x0|x|"};
  const auto bad = eigen_check(k, control, 5, 10, 40000, 12, radial({SignedPermutation::flip(5, 0)}));
  CHECK(bad.residual_rel >= 5.0 * good.mc_tolerance);
}

TEST_CASE("sphere moments") {
  GaussianSource rng(13);
  std::vector<Vector> xb;
  for (int i = 0; i < 6; ++i) {
    Vector u(4);
    rng.fill_sphere(u);
    xb.push_back(u);
  }
  const auto rep = sphere_moment_proportionality(EigenFunction::cross(4, 0, 2).as_function(), 2, xb, 40000, 14);
  CHECK(rep.max_abs_z <= 4.0);
  CHECK(rep.moments.size() == xb.size());
  const auto odd = sphere_moment(xb[0], 1, EigenFunction::linear(4, 0).as_function(), 40000, 15);
  CHECK(within_sigma(odd, 0.0));
  CHECK_THROWS(sphere_moment(2.0 * xb[0], 1, EigenFunction::linear(4, 0).as_function(), 100, 1));
  CHECK_THROWS(sphere_moment(xb[0], 0, EigenFunction::linear(4, 0).as_function(), 100, 1));
}

TEST_CASE("rotations") {
  const Matrix u = random_orthogonal(4, 16);
  const auto f = EigenFunction::linear(4, 0);
  const auto g = rotate_function(f.as_function(), u);
  const Vector x = vec({1, 2, 3, 4});
  CHECK(g(x) == doctest::Approx((u.transpose() * x)[0]).epsilon(1e-14));
  CHECK_THROWS(rotate_function(f.as_function(), Matrix::Ones(4, 4)));
}

TEST_CASE("monomial eigenfunction of the order-1 truncated kernel") {
  const auto rep = monomial_check(6, {0, 1, 2, 3}, {}, 10, 20000, 17);
  CHECK(rep.residual_rel <= 3.0 * rep.mc_tolerance);
  CHECK(rep.rayleigh.value > 0.0);
}

}
