#include "relu_ntk/fisher.hpp"

#include "oracles.hpp"

#include <doctest.h>

#include <cmath>

using namespace relu_ntk;

namespace {

Matrix closed_form_fisher(const HiddenWeights& w) {
  const Matrix& m = w.matrix();
  Matrix j(m.cols(), m.cols());
  for (Eigen::Index a = 0; a < m.cols(); ++a)
    for (Eigen::Index b = 0; b < m.cols(); ++b) {
      const double na = m.col(a).norm(), nb = m.col(b).norm();
      j(a, b) = na * nb * oracle::arccos1(m.col(a).dot(m.col(b)) / (na * nb));
    }
  return j;
}

}  // namespace

TEST_SUITE("fisher") {

TEST_CASE("exact Fisher matrix matches the arc-cosine closed form") {
  const auto w = sample_network(NetworkConfig(4, 60, 3));
  const FisherMatrix j = fisher_exact(w);
  CHECK(j.provenance == FisherMatrix::Provenance::ExactSeries);
  CHECK(j.m() == 60);
  const Matrix ref = closed_form_fisher(w);
  const Matrix& m = w.matrix();
  for (Eigen::Index a = 0; a < m.cols(); ++a)
    for (Eigen::Index b = 0; b < m.cols(); ++b)
      CHECK(std::abs(j.J(a, b) - ref(a, b)) <= ntk_series(m.col(a), m.col(b)).tail_bound + 1e-14);
  CHECK(j.J == j.J.transpose());
}

TEST_CASE("small cases") {
  Matrix m(2, 2);
  m << 1, 0, 0, 2;
  const FisherMatrix j = fisher_exact(HiddenWeights(m));
  CHECK(j.J(0, 0) == doctest::Approx(0.5));
  CHECK(j.J(1, 1) == doctest::Approx(2.0));
  CHECK(j.J(0, 1) == doctest::Approx(2.0 / (2.0 * oracle::pi)).epsilon(1e-12));
  Matrix same(2, 2);
  same << 1, 1, 3, 3;
  const FisherMatrix js = fisher_exact(HiddenWeights(same));
  CHECK(js.J(0, 1) == doctest::Approx(js.J(0, 0)).epsilon(1e-12));
}

TEST_CASE("empirical Fisher converges and is PSD") {
  const auto w = sample_network(NetworkConfig(3, 20, 4));
  const FisherMatrix exact = fisher_exact(w);
  const FisherMatrix small = fisher_empirical(w, 1000, 1);
  const FisherMatrix big = fisher_empirical(w, 100000, 1);
  CHECK(small.provenance == FisherMatrix::Provenance::Empirical);
  CHECK(big.n_samples == 100000);
  CHECK((big.J - exact.J).norm() < (small.J - exact.J).norm());
  CHECK((big.J - exact.J).norm() / exact.J.norm() < 0.02);
  const Vector ev = eigenvalues_descending(small.J);
  CHECK(ev[ev.size() - 1] >= -1e-8 * ev[0]);
  CHECK_THROWS(fisher_empirical(w, 0, 1));
}

TEST_CASE("eigendecomposition on synthetic matrices") {
  const auto id = eigendecompose(FisherMatrix::synthetic(Matrix::Identity(4, 4)));
  CHECK((id.values.array() - 1.0).abs().maxCoeff() < 1e-14);
  Matrix diag = Matrix::Zero(2, 2);
  diag(0, 0) = 1.0;
  diag(1, 1) = 3.0;
  for (EigenSolver s : {EigenSolver::SelfAdjoint, EigenSolver::Jacobi}) {
    const auto e = eigendecompose(diag, 1e-8, s);
    CHECK(e.values[0] == doctest::Approx(3.0));
    CHECK(e.values[1] == doctest::Approx(1.0));
    CHECK(std::abs(e.vectors(1, 0)) == doctest::Approx(1.0));
  }
  CHECK_THROWS(FisherMatrix::synthetic((Matrix(2, 2) << 1, 2, 0, 1).finished()));
}

TEST_CASE("eigenvalues of G^T G are squared singular values") {
  GaussianSource rng(5);
  Matrix g(12, 9);
  for (Eigen::Index i = 0; i < g.rows(); ++i)
    for (Eigen::Index k = 0; k < g.cols(); ++k) g(i, k) = rng.next();
  const Matrix j = g.transpose() * g;
  const Vector sv = Eigen::JacobiSVD<Matrix>(g).singularValues();
  const auto sa = eigendecompose(j);
  const auto ja = jacobi_eigen(j);
  for (Eigen::Index i = 0; i < sv.size(); ++i) {
    CHECK(sa.values[i] == doctest::Approx(sv[i] * sv[i]).epsilon(1e-11));
    CHECK(ja.values[i] == doctest::Approx(sv[i] * sv[i]).epsilon(1e-11));
  }
  CHECK(ja.reconstruction_error < 1e-12);
  CHECK(ja.orthogonality_error < 1e-12);
  CHECK(ja.sweeps > 0);
}

TEST_CASE("spectrum clusters at d = 5, m = 2000") {
  const auto w = sample_network(NetworkConfig(5, 2000, 1));
  const Vector ev = eigenvalues_descending(fisher_exact(w).J);
  const auto cl = cluster_spectrum(std::vector<double>(ev.data(), ev.data() + ev.size()), 5, 2000);
  CHECK(cl.structured);
  CHECK(cl.top.count == 1);
  CHECK(cl.linear.count == 5);
  CHECK(cl.quadratic.count == 14);
  CHECK(std::abs(cl.top.rel_deviation) <= 0.15);
  CHECK(std::abs(cl.linear.rel_deviation) <= 0.10);
  CHECK(std::abs(cl.quadratic.rel_deviation) <= 0.25);
  CHECK(cl.top.center == doctest::Approx(11.0 / (4.0 * oracle::pi)));
  CHECK(cl.quadratic.center == doctest::Approx(1.0 / (10.0 * oracle::pi)));
  CHECK(cl.quadratic_alt.center == doctest::Approx(1.0 / (14.0 * oracle::pi)));
  CHECK(cl.calibrated_width);
  CHECK(cl.bulk_below_quadratic);
}

TEST_CASE("cluster capacity") {
  const auto w = sample_network(NetworkConfig(5, 10, 1));
  const Vector ev = eigenvalues_descending(fisher_exact(w).J);
  const auto cl = cluster_spectrum(std::vector<double>(ev.data(), ev.data() + ev.size()), 5, 10);
  CHECK_FALSE(cl.structured);
}

TEST_CASE("KL divergence and metric isometry") {
  const auto w = sample_network(NetworkConfig(3, 50, 6));
  const FisherMatrix j = fisher_exact(w);
  GaussianSource rng(7);
  Vector u(50), v(50);
  rng.fill_sphere(u);
  rng.fill_sphere(v);
  CHECK(kl_divergence(u, u, j) == 0.0);
  const Vector diff = u - v;
  CHECK(kl_divergence(u, v, j) == doctest::Approx(0.5 * diff.dot(j.J * diff)).epsilon(1e-14));
  const McEstimate mc = kl_mc_oracle(u, v, w, 100000, 8);
  CHECK(within_sigma(mc, kl_divergence(u, v, j)));
  const auto iso = metric_isometry_check(u, v, w, 100000, 9);
  CHECK(iso.pass);
  CHECK(iso.exact == doctest::Approx(u.dot(j.J * v)).epsilon(1e-12));
  const auto doubled = metric_isometry_check(2.0 * u, v, w, 100000, 9);
  CHECK(doubled.inner.value == doctest::Approx(2.0 * iso.inner.value).epsilon(1e-13));
}

}
