#pragma once

// Conditioning of the sampled weight problem and the resulting CG iteration bounds.

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include "toucan/fsm.hpp"
#include "toucan/synth.hpp"

namespace toucan {

/// mu(U) = max_i ||P_U e_i||^2 for an m x r basis with orthonormal columns.
template <typename Derived>
double coherence(const Eigen::MatrixBase<Derived>& basis, double tol = 1e-8) {
  using Scalar = typename Derived::Scalar;
  const auto r = basis.cols();
  const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> gram = basis.adjoint() * basis;
  if ((gram - decltype(gram)::Identity(r, r)).norm() > tol) {
    throw NotOrthonormal("coherence: basis columns are not orthonormal");
  }
  return basis.rowwise().squaredNorm().maxCoeff();
}

struct BoundParams {
  double c1 = 1.0;     // universal-constant stand-in
  double delta = 0.1;  // failure probability
  double epsilon = 1e-9;

  void validate() const {
    if (!(c1 > 0.0)) throw std::invalid_argument("BoundParams: c1 must be positive");
    if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("BoundParams: delta must lie in (0, 1)");
    if (!(epsilon > 0.0)) throw std::invalid_argument("BoundParams: epsilon must be positive");
  }
};

struct CgdIterationBound {
  double tau = 0.0;
  std::optional<double> k_max;  // empty when delta^-1 tau >= 1 (bound is vacuous)

  bool feasible() const { return k_max.has_value(); }
};

/// tau = C1 sqrt(n1 n3 mu log|Omega| / |Omega|),
/// K <= 1/2 sqrt((1 + tau/delta) / (1 - tau/delta)) log(2/eps).
inline CgdIterationBound cgd_iteration_bound(double mu, Index n1, Index n3, Index omega_size,
                                             const BoundParams& p = {}) {
  p.validate();
  if (omega_size < 1) throw std::invalid_argument("cgd_iteration_bound: |Omega| must be at least 1");
  const double omega = static_cast<double>(omega_size);
  CgdIterationBound out;
  out.tau = p.c1 * std::sqrt(static_cast<double>(n1 * n3) * mu * std::log(omega) / omega);
  const double ratio = out.tau / p.delta;
  if (ratio < 1.0) out.k_max = 0.5 * std::sqrt((1.0 + ratio) / (1.0 - ratio)) * std::log(2.0 / p.epsilon);
  return out;
}

/// Classical CG count for a least-squares operator of condition number kappa.
inline double kappa_iteration_bound(double kappa, double epsilon) { return 0.5 * kappa * std::log(2.0 / epsilon); }

/// Canonical-domain orthonormal operator bcirc(U), (n1 n3) x (r n3): maps unfold(W) to
/// unfold(U * W). Its rows are what an entry mask samples.
inline RMatrix basis_operator(const FsmEstimate& u) {
  const Tensor3 canon = u.canonical();
  const Index n1 = u.n1(), r = u.rank(), n3 = u.n3();
  RMatrix out(n1 * n3, r * n3);
  for (Index q = 0; q < n3; ++q) {
    for (Index p = 0; p < n3; ++p) out.block(p * n1, q * r, n1, r) = canon.frontal(((p - q) % n3 + n3) % n3);
  }
  return out;
}

/// Explicit |Omega| x (r n3) sampled operator P_Omega bcirc(U). Up to the DFT scale it
/// equals the subsampled inverse transform applied to the block-diagonal spectral basis.
inline RMatrix sampled_operator(const FsmEstimate& u, const SampleMask& mask) {
  const RMatrix full = basis_operator(u);
  const auto observed = mask.entries();
  RMatrix out(static_cast<Index>(observed.size()), full.cols());
  for (std::size_t n = 0; n < observed.size(); ++n) {
    const auto [i, k] = observed[n];
    out.row(static_cast<Index>(n)) = full.row(k * u.n1() + i);
  }
  return out;
}

/// kappa(F_Omega U) from a dense SVD. Throws SingularOperator when rank deficient.
inline double sampled_operator_condition(const FsmEstimate& u, const SampleMask& mask) {
  const RMatrix op = sampled_operator(u, mask);
  if (op.rows() < op.cols()) throw SingularOperator("sampled operator has fewer rows than unknowns");
  Eigen::BDCSVD<RMatrix> svd(op);
  const RVector& s = svd.singularValues();
  const double smax = s(0), smin = s(s.size() - 1);
  if (!(smin > 1e-12 * smax)) throw SingularOperator("sampled operator is rank deficient");
  return smax / smin;
}

struct ConditionStats {
  double mean_kappa_sq = 0.0;
  double bound = 0.0;  // 1/2 sqrt(mean kappa^2) log(2 / eps)
  std::vector<double> kappas;
};

/// Averages kappa^2 over the given sampling patterns (desk scale only).
inline ConditionStats empirical_condition_bound(const FsmEstimate& u, const std::vector<SampleMask>& masks,
                                                double epsilon) {
  if (masks.empty()) throw std::invalid_argument("empirical_condition_bound: no masks");
  ConditionStats out;
  for (const SampleMask& mask : masks) {
    const double kappa = sampled_operator_condition(u, mask);
    out.kappas.push_back(kappa);
    out.mean_kappa_sq += kappa * kappa;
  }
  out.mean_kappa_sq /= static_cast<double>(masks.size());
  out.bound = kappa_iteration_bound(std::sqrt(out.mean_kappa_sq), epsilon);
  return out;
}

}  // namespace toucan
