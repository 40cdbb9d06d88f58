#pragma once

#include "nebp/common.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace nebp {

/// Message bundle of the data-association section of the tracking factor
/// graph for one frame with I legacy POs and J measurements.
///
///   phi_a  I x (J+1)  per-PO association likelihoods, rows sum to 1
///   phi_b0 J          new-PO / false-alarm ratio, >= 1
///   mu     I x J      PO -> measurement edge messages
///   nu     I x J      measurement -> PO edge messages
///   kappa  I x (J+1)  outputs to legacy POs, kappa(i, 0) = 1
///   iota   J x (I+1)  outputs to new POs, iota(j, 0) = 1
template <typename T>
struct DaMessages {
  Matrix<T> phi_a;
  Vector<T> phi_b0;
  Matrix<T> mu;
  Matrix<T> nu;
  Matrix<T> kappa;
  Matrix<T> iota;
  int iterations = 0;
  bool converged = true;

  Index num_legacy() const { return phi_a.rows(); }
  Index num_measurements() const { return phi_b0.size(); }
};

inline constexpr int kDefaultDaIterations = 200;
inline constexpr double kDefaultDaTolerance = 1e-8;

namespace detail {

// out(k) = base + sum_{l != k} x(l), accumulated without cancellation.
template <typename T, typename In, typename Out>
void exclusive_sums(const In& x, T base, Out&& out) {
  const Index n = x.size();
  T running = T(0);
  for (Index k = 0; k < n; ++k) {
    out(k) = running;
    running += x(k);
  }
  running = T(0);
  for (Index k = n; k-- > 0;) {
    out(k) += running + base;
    running += x(k);
  }
}

template <typename T>
T positive_floor(T v) {
  return std::max(v, std::numeric_limits<T>::min());
}

}  // namespace detail

/// Scalable sum-product iteration for the bipartite association problem.
///
/// mu(i,j) = phi_a(i,j) / (phi_a(i,0) + sum_{j'!=j} phi_a(i,j') nu(i,j'))
/// nu(i,j) = 1 / (phi_b0(j) + sum_{i'!=i} mu(i',j))
///
/// starting from nu = 1 and stopping once successive nu sweeps differ by less
/// than `tol` in max-norm. Successive residuals that point in opposite
/// directions switch on 0.5 damping, which leaves fixed points unchanged.
/// Non-convergence is reported through `converged`, not thrown.
template <typename T, typename DerivedA, typename DerivedB>
DaMessages<T> iterate_da_bp(const Eigen::MatrixBase<DerivedA>& phi_a,
                            const Eigen::MatrixBase<DerivedB>& phi_b0,
                            int max_iters = kDefaultDaIterations,
                            T tol = T(kDefaultDaTolerance)) {
  const Index I = phi_a.rows();
  const Index J = phi_b0.size();
  if (phi_a.cols() != J + 1) {
    throw ValidationError("iterate_da_bp: phi_a must have J+1 columns");
  }
  DaMessages<T> m;
  m.phi_a = phi_a.template cast<T>();
  m.phi_b0 = phi_b0.template cast<T>();
  m.mu = Matrix<T>::Zero(I, J);
  m.nu = Matrix<T>::Ones(I, J);
  m.kappa = Matrix<T>::Ones(I, J + 1);
  m.iota = Matrix<T>::Ones(J, I + 1);
  if (I == 0 || J == 0) return m;

  const auto likelihoods = m.phi_a.rightCols(J);
  Matrix<T> prod(I, J);
  Vector<T> excl_row(J);
  Vector<T> excl_col(I);
  Matrix<T> nu_new(I, J);
  Matrix<T> prev_delta;
  bool damping = false;

  auto update_mu = [&]() {
    prod = likelihoods.cwiseProduct(m.nu);
    for (Index i = 0; i < I; ++i) {
      detail::exclusive_sums(prod.row(i), m.phi_a(i, 0), excl_row);
      for (Index j = 0; j < J; ++j) {
        m.mu(i, j) = likelihoods(i, j) / detail::positive_floor(excl_row(j));
      }
    }
  };

  m.converged = false;
  m.iterations = 0;
  for (int it = 0; it < max_iters; ++it) {
    update_mu();
    for (Index j = 0; j < J; ++j) {
      detail::exclusive_sums(m.mu.col(j), m.phi_b0(j), excl_col);
      for (Index i = 0; i < I; ++i) nu_new(i, j) = T(1) / detail::positive_floor(excl_col(i));
    }
    if (damping) nu_new = T(0.5) * (nu_new + m.nu);
    Matrix<T> delta = nu_new - m.nu;
    const T residual = delta.cwiseAbs().maxCoeff();
    if (!damping && prev_delta.size() == delta.size() &&
        delta.cwiseProduct(prev_delta).sum() < T(0)) {
      damping = true;
    }
    prev_delta = std::move(delta);
    m.nu = nu_new;
    m.iterations = it + 1;
    if (!std::isfinite(static_cast<double>(residual))) break;
    if (residual < tol) {
      m.converged = true;
      break;
    }
  }
  update_mu();

  m.kappa.rightCols(J) = m.nu;
  m.iota.rightCols(I) = m.mu.transpose();
  return m;
}

/// p(i, j) proportional to phi_a(i, j) * kappa(i, j), rows normalized.
template <typename T>
Matrix<T> legacy_marginals(const Matrix<T>& phi_a, const Matrix<T>& kappa) {
  Matrix<T> p = phi_a.cwiseProduct(kappa);
  for (Index i = 0; i < p.rows(); ++i) {
    const T s = p.row(i).sum();
    if (s > T(0)) p.row(i) /= s;
  }
  return p;
}

/// q(j, 0) proportional to phi_b0(j), q(j, i) proportional to iota(j, i).
template <typename T>
Matrix<T> measurement_marginals(const Vector<T>& phi_b0, const Matrix<T>& iota) {
  Matrix<T> q = iota;
  if (q.cols() > 0) q.col(0) = phi_b0;
  for (Index j = 0; j < q.rows(); ++j) {
    const T s = q.row(j).sum();
    if (s > T(0)) q.row(j) /= s;
  }
  return q;
}

}  // namespace nebp
