#include "relu_ntk/fisher.hpp"

#include "relu_ntk/eigenbasis.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace relu_ntk {

namespace {

void measure(EigenDecomposition& e, const Matrix& j) {
  const double norm = j.norm();
  const Matrix recon = e.vectors * e.values.asDiagonal() * e.vectors.transpose();
  const double err = (j - recon).norm();
  e.reconstruction_error = norm > 0.0 ? err / norm : err;
  const auto n = e.vectors.cols();
  e.orthogonality_error = n > 0 ? (e.vectors.transpose() * e.vectors - Matrix::Identity(n, n)).cwiseAbs().maxCoeff() : 0.0;
}

void sort_descending(EigenDecomposition& e) {
  const auto n = e.values.size();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return e.values[a] > e.values[b]; });
  Vector vals(n);
  Matrix vecs(e.vectors.rows(), n);
  for (Eigen::Index i = 0; i < n; ++i) {
    vals[i] = e.values[order[static_cast<std::size_t>(i)]];
    vecs.col(i) = e.vectors.col(order[static_cast<std::size_t>(i)]);
  }
  e.values = std::move(vals);
  e.vectors = std::move(vecs);
}

void require_symmetric(const Matrix& j, const char* who) {
  if (j.rows() != j.cols()) throw std::invalid_argument(std::string(who) + ": matrix is not square");
  const double scale = std::max(1.0, j.cwiseAbs().maxCoeff());
  if ((j - j.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
    throw std::invalid_argument(std::string(who) + ": matrix is not symmetric");
}

ClusterSummary summarize(const std::vector<double>& eigs, std::size_t begin, std::size_t count, double center) {
  ClusterSummary s;
  s.count = count;
  s.center = center;
  if (count == 0) return s;
  double sum = 0.0;
  for (std::size_t i = begin; i < begin + count; ++i) sum += eigs[i];
  s.mean = sum / static_cast<double>(count);
  s.rel_deviation = center != 0.0 ? (s.mean - center) / center : 0.0;
  return s;
}

}  // namespace

std::string FisherMatrix::provenance_name() const {
  switch (provenance) {
    case Provenance::ExactSeries: return "exact-series";
    case Provenance::Empirical: return "empirical(n=" + std::to_string(n_samples) + ")";
    case Provenance::Synthetic: return "synthetic";
  }
  return "?";
}

FisherMatrix FisherMatrix::synthetic(Matrix j) {
  require_symmetric(j, "FisherMatrix::synthetic");
  FisherMatrix f;
  f.J = std::move(j);
  return f;
}

FisherMatrix fisher_exact(const HiddenWeights& w, const SeriesParams& params) {
  params.validate();
  const auto m = static_cast<Eigen::Index>(w.m());
  const Matrix& wm = w.matrix();
  const Matrix gram = wm.transpose() * wm;
  const Vector norms = gram.diagonal().cwiseSqrt();

  Matrix j(m, m);
  detail::run_parallel(static_cast<std::size_t>(m), [&](std::size_t row) {
    const auto i = static_cast<Eigen::Index>(row);
    for (Eigen::Index k = i; k < m; ++k) {
      double v;
      const double denom = norms[i] * norms[k];
      if (denom == 0.0) {
        v = 0.0;
      } else {
        const double c = std::clamp(gram(i, k) / denom, -1.0, 1.0);
        // the cosine alone is too coarse near +-1; use the vector form there
        v = std::abs(c) > kCollinearThreshold ? ntk_series(wm.col(i), wm.col(k), params).value
                                              : ntk_series_cosine(norms[i], norms[k], c, params).value;
      }
      j(i, k) = v;
    }
  });
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index k = 0; k < i; ++k) j(i, k) = j(k, i);

  FisherMatrix f;
  f.J = std::move(j);
  f.provenance = FisherMatrix::Provenance::ExactSeries;
  return f;
}

FisherMatrix fisher_empirical(const HiddenWeights& w, std::size_t n_samples, std::uint64_t seed) {
  if (n_samples == 0) throw std::invalid_argument("fisher_empirical: n must be >= 1");
  const auto m = static_cast<Eigen::Index>(w.m());
  const auto d = static_cast<Eigen::Index>(w.d());

  struct Sum {
    Matrix s;
    void merge(const Sum& o) { s += o.s; }
  };
  auto total = reduce_chunks(n_samples, seed, Sum{Matrix::Zero(m, m)}, [&](GaussianSource& rng, std::size_t count) {
    Matrix x(static_cast<Eigen::Index>(count), d);
    for (Eigen::Index r = 0; r < x.rows(); ++r)
      for (Eigen::Index c = 0; c < d; ++c) x(r, c) = rng.next();
    const Matrix phi = feature_map_rows(w, x);
    Sum part{Matrix::Zero(m, m)};
    part.s.selfadjointView<Eigen::Lower>().rankUpdate(phi.transpose());
    return part;
  });

  FisherMatrix f;
  f.J = Matrix(total.s.selfadjointView<Eigen::Lower>()) / static_cast<double>(n_samples);
  f.provenance = FisherMatrix::Provenance::Empirical;
  f.n_samples = n_samples;
  f.seed = seed;
  return f;
}

// ---------------------------------------------------------------------------

EigenDecomposition jacobi_eigen(const Matrix& j, double rel_off, int max_sweeps) {
  require_symmetric(j, "jacobi_eigen");
  const Eigen::Index n = j.rows();
  Matrix a = j;
  Matrix v = Matrix::Identity(n, n);
  const double target = rel_off * j.norm();

  auto off_norm = [&] {
    double s = 0.0;
    for (Eigen::Index q = 0; q < n; ++q)
      for (Eigen::Index p = 0; p < q; ++p) s += 2.0 * a(p, q) * a(p, q);
    return std::sqrt(s);
  };

  EigenDecomposition e;
  while (off_norm() > target) {
    if (e.sweeps >= max_sweeps) throw std::runtime_error("jacobi_eigen: no convergence within the sweep cap");
    ++e.sweeps;
    for (Eigen::Index p = 0; p < n; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (Eigen::Index k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        a(p, q) = a(q, p) = 0.0;
        for (Eigen::Index k = 0; k < n; ++k) {
          const double vkp = v(k, p), vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }
  e.values = a.diagonal();
  e.vectors = std::move(v);
  sort_descending(e);
  measure(e, j);
  return e;
}

EigenDecomposition eigendecompose(const Matrix& j, double tol, EigenSolver solver) {
  require_symmetric(j, "eigendecompose");
  if (!(tol > 0.0)) throw std::invalid_argument("eigendecompose: tol must be > 0");
  EigenDecomposition e;
  if (solver == EigenSolver::Jacobi) {
    e = jacobi_eigen(j);
  } else {
    Eigen::SelfAdjointEigenSolver<Matrix> es(j);
    if (es.info() != Eigen::Success) throw std::runtime_error("eigendecompose: solver did not converge");
    e.values = es.eigenvalues();
    e.vectors = es.eigenvectors();
    sort_descending(e);
    measure(e, j);
  }
  if (e.reconstruction_error > tol || e.orthogonality_error > tol)
    throw std::runtime_error("eigendecompose: result misses the requested tolerance");
  return e;
}

EigenDecomposition eigendecompose(const FisherMatrix& j, double tol, EigenSolver solver) {
  return eigendecompose(j.J, tol, solver);
}

Vector eigenvalues_descending(const Matrix& j) {
  require_symmetric(j, "eigenvalues_descending");
  Eigen::SelfAdjointEigenSolver<Matrix> es(j, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw std::runtime_error("eigenvalues_descending: solver did not converge");
  return es.eigenvalues().reverse();
}

SpectrumClusters cluster_spectrum(const std::vector<double>& eigs, std::size_t d, std::size_t m) {
  if (d == 0) throw std::invalid_argument("cluster_spectrum: d must be >= 1");
  if (eigs.size() != m) throw std::invalid_argument("cluster_spectrum: expected m eigenvalues");
  for (std::size_t i = 1; i < eigs.size(); ++i) {
    const double slack = 1e-12 * std::max(1.0, std::abs(eigs[i - 1]));
    if (eigs[i] > eigs[i - 1] + slack) throw std::invalid_argument("cluster_spectrum: eigenvalues not descending");
  }

  SpectrumClusters out;
  out.d = d;
  out.m = m;
  out.eigenvalues = eigs;
  const std::size_t n_lin = d;
  const std::size_t n_quad = (d - 1) + d * (d - 1) / 2;
  const std::size_t needed = 1 + n_lin + n_quad;
  const double dd = static_cast<double>(d);
  const double q_center = 1.0 / (2.0 * std::numbers::pi * dd);
  out.calibrated_width = m >= 20 * d * d;
  out.structured = m >= needed;

  if (!out.structured) {
    out.assignment.assign(m, Cluster::Bulk);
    out.bulk = summarize(eigs, 0, m, 0.0);
    out.bulk_max = m ? eigs.front() : 0.0;
    return out;
  }

  out.assignment.reserve(m);
  out.assignment.push_back(Cluster::Top);
  out.assignment.insert(out.assignment.end(), n_lin, Cluster::Linear);
  out.assignment.insert(out.assignment.end(), n_quad, Cluster::Quadratic);
  out.assignment.insert(out.assignment.end(), m - needed, Cluster::Bulk);

  out.top = summarize(eigs, 0, 1, f0_coefficient(d));
  out.linear = summarize(eigs, 1, n_lin, 0.25);
  out.quadratic = summarize(eigs, 1 + n_lin, n_quad, q_center);
  out.quadratic_alt = summarize(eigs, 1 + n_lin, n_quad, quadratic_coefficient(d));
  out.bulk = summarize(eigs, needed, m - needed, 0.0);
  out.bulk_max = m > needed ? eigs[needed] : 0.0;
  out.bulk_below_quadratic = m == needed || out.bulk_max < out.quadratic.mean;
  return out;
}

double kl_divergence(const Vector& u, const Vector& v, const FisherMatrix& j) {
  if (u.size() != v.size() || static_cast<std::size_t>(u.size()) != j.m())
    throw std::invalid_argument("kl_divergence: dimension mismatch");
  const Vector diff = u - v;
  return 0.5 * diff.dot(j.J * diff);
}

McEstimate kl_mc_oracle(const Vector& u, const Vector& v, const HiddenWeights& w, std::size_t n_samples,
                        std::uint64_t seed) {
  if (u.size() != v.size() || static_cast<std::size_t>(u.size()) != w.m())
    throw std::invalid_argument("kl_mc_oracle: dimension mismatch");
  if (n_samples == 0) throw std::invalid_argument("kl_mc_oracle: n_samples must be > 0");
  const Vector diff = u - v;
  auto stats = reduce_chunks(n_samples, seed, MomentStats(1), [&](GaussianSource& rng, std::size_t count) {
    MomentStats acc(1);
    Vector x(static_cast<Eigen::Index>(w.d()));
    for (std::size_t s = 0; s < count; ++s) {
      rng.fill(x);
      const double delta = feature_map(w, x).dot(diff);
      acc.add(0.5 * delta * delta);
    }
    return acc;
  });
  return stats.estimate();
}

IsometryReport metric_isometry_check(const Vector& u, const Vector& v, const HiddenWeights& w,
                                     std::size_t n_samples, std::uint64_t seed, const SeriesParams& params) {
  if (u.size() != v.size() || static_cast<std::size_t>(u.size()) != w.m())
    throw std::invalid_argument("metric_isometry_check: dimension mismatch");
  const RealFunction fu{[&](const Vector& x) { return feature_map(w, x).dot(u); }, 1.0, "f_u"};
  const RealFunction fv{[&](const Vector& x) { return feature_map(w, x).dot(v); }, 1.0, "f_v"};
  IsometryReport rep;
  rep.inner = gauss_l2_inner(fu, fv, w.d(), n_samples, seed);
  rep.exact = u.dot(fisher_exact(w, params).J * v);
  const double diff = rep.inner.value - rep.exact;
  rep.z = rep.inner.std_error > 0.0 ? diff / rep.inner.std_error : (diff == 0.0 ? 0.0 : INFINITY);
  rep.pass = std::abs(diff) <= 4.0 * rep.inner.std_error + 1e-12 * std::max(1.0, std::abs(rep.exact));
  return rep;
}

}  // namespace relu_ntk
