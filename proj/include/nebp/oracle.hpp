#pragma once

#include "nebp/common.hpp"
#include "nebp/da.hpp"

#include <random>
#include <vector>

namespace nebp {

inline constexpr Index kOracleMaxSize = 10;

template <typename T>
struct ExactMarginals {
  Matrix<T> legacy;       // I x (J+1), p_i(j)
  Matrix<T> measurement;  // J x (I+1), q_j(i)
};

/// Brute-force association marginals. Enumerates every injective partial
/// assignment a: {1..I} -> {0} u {1..J} with weight
/// prod_i phi_a(i, a_i) * prod_{j unassigned} phi_b0(j).
template <typename T>
ExactMarginals<T> exact_da_marginals(const Matrix<T>& phi_a, const Vector<T>& phi_b0) {
  const Index I = phi_a.rows();
  const Index J = phi_b0.size();
  if (I > kOracleMaxSize || J > kOracleMaxSize) {
    throw ValidationError("exact_da_marginals: size guard exceeded (I, J <= 10)");
  }
  if (phi_a.cols() != J + 1) throw ValidationError("exact_da_marginals: phi_a must have J+1 columns");

  ExactMarginals<T> out{Matrix<T>::Zero(I, J + 1), Matrix<T>::Zero(J, I + 1)};
  std::vector<Index> assignment(static_cast<std::size_t>(I), 0);
  std::vector<bool> taken(static_cast<std::size_t>(J), false);
  T total = T(0);

  auto record = [&](T weight_legacy) {
    T w = weight_legacy;
    for (Index j = 0; j < J; ++j) {
      if (!taken[static_cast<std::size_t>(j)]) w *= phi_b0(j);
    }
    total += w;
    std::vector<Index> owner(static_cast<std::size_t>(J), 0);
    for (Index i = 0; i < I; ++i) {
      const Index a = assignment[static_cast<std::size_t>(i)];
      out.legacy(i, a) += w;
      if (a > 0) owner[static_cast<std::size_t>(a - 1)] = i + 1;
    }
    for (Index j = 0; j < J; ++j) out.measurement(j, owner[static_cast<std::size_t>(j)]) += w;
  };

  auto recurse = [&](auto&& self, Index i, T weight) -> void {
    if (i == I) {
      record(weight);
      return;
    }
    assignment[static_cast<std::size_t>(i)] = 0;
    self(self, i + 1, weight * phi_a(i, 0));
    for (Index j = 0; j < J; ++j) {
      if (taken[static_cast<std::size_t>(j)]) continue;
      taken[static_cast<std::size_t>(j)] = true;
      assignment[static_cast<std::size_t>(i)] = j + 1;
      self(self, i + 1, weight * phi_a(i, j + 1));
      taken[static_cast<std::size_t>(j)] = false;
    }
    assignment[static_cast<std::size_t>(i)] = 0;
  };
  recurse(recurse, 0, T(1));

  if (total > T(0)) {
    out.legacy /= total;
    out.measurement /= total;
  }
  return out;
}

template <typename T>
struct DaInstance {
  Matrix<T> phi_a;
  Vector<T> phi_b0;
};

/// Random association inputs: phi_a rows are normalized positive draws with
/// phi_a(i, 0) >= 0.05, phi_b0 ~ U(1, 4).
template <typename T, typename Rng>
DaInstance<T> random_da_instance(Rng& rng, Index I, Index J) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  DaInstance<T> inst{Matrix<T>(I, J + 1), Vector<T>(J)};
  for (Index i = 0; i < I; ++i) {
    inst.phi_a(i, 0) = T(0.05 + 0.95 * u(rng));
    for (Index j = 1; j <= J; ++j) inst.phi_a(i, j) = T(u(rng));
    inst.phi_a.row(i) /= inst.phi_a.row(i).sum();
  }
  for (Index j = 0; j < J; ++j) inst.phi_b0(j) = T(1.0 + 3.0 * u(rng));
  return inst;
}

struct OracleComparison {
  double max_abs_error = 0.0;  // over every marginal entry
  double tv = 0.0;             // largest total-variation distance of one variable
};

/// Converged BP marginals against the enumeration oracle.
template <typename T>
OracleComparison compare_with_oracle(const Matrix<T>& phi_a, const Vector<T>& phi_b0) {
  const ExactMarginals<T> exact = exact_da_marginals<T>(phi_a, phi_b0);
  const DaMessages<T> msgs = iterate_da_bp<T>(phi_a, phi_b0);
  const Matrix<T> p = legacy_marginals<T>(phi_a, msgs.kappa);
  const Matrix<T> q = measurement_marginals<T>(phi_b0, msgs.iota);
  OracleComparison c;
  auto accumulate = [&](const Matrix<T>& bp, const Matrix<T>& ex) {
    for (Index r = 0; r < bp.rows(); ++r) {
      const Vector<T> d = (bp.row(r) - ex.row(r)).cwiseAbs().transpose();
      c.max_abs_error = std::max(c.max_abs_error, static_cast<double>(d.maxCoeff()));
      c.tv = std::max(c.tv, static_cast<double>(T(0.5) * d.sum()));
    }
  };
  accumulate(p, exact.legacy);
  accumulate(q, exact.measurement);
  return c;
}

}  // namespace nebp
