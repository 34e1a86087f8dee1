#pragma once

#include <algorithm>
#include <cstdint>

#include "toucan/fft.hpp"
#include "toucan/random.hpp"
#include "toucan/tensor.hpp"

namespace toucan {

/// Orthonormality tolerance for each stored Fourier slice of a free-submodule basis.
inline constexpr double kOrthonormalityTolerance = 1e-10;

/// Orthonormal basis of an r-dimensional free submodule of n1 x 1 x n3 lateral slices,
/// kept in the Fourier domain as n3/2 + 1 complex n1 x r slices with orthonormal columns.
class FsmEstimate {
 public:
  FsmEstimate() = default;

  explicit FsmEstimate(SpectralTensor basis) : basis_(std::move(basis)) {
    if (!basis_.symmetric()) throw DimensionMismatch("FsmEstimate: basis must be a real-origin half spectrum");
    if (basis_.n2() > basis_.n1()) throw RankOutOfRange("FsmEstimate: rank exceeds n1");
  }

  Index n1() const { return basis_.n1(); }
  Index rank() const { return basis_.n2(); }
  Index n3() const { return basis_.n3(); }
  Index stored_slices() const { return basis_.stored_slices(); }

  Eigen::Map<CMatrix> slice(Index k) { return basis_.slice(k); }
  Eigen::Map<const CMatrix> slice(Index k) const { return basis_.slice(k); }

  const SpectralTensor& spectral() const { return basis_; }

  /// The canonical-domain orthogonal tensor U (n1 x r x n3).
  Tensor3 canonical() const { return ifft3(basis_); }

  /// max over stored slices of ||U^(k)' U^(k) - I||_F.
  double orthonormality_error() const {
    double worst = 0.0;
    const CMatrix eye = CMatrix::Identity(rank(), rank());
    for (Index k = 0; k < stored_slices(); ++k) {
      worst = std::max(worst, (slice(k).adjoint() * slice(k) - eye).norm());
    }
    return worst;
  }

  /// Complex elements held: n1 * r * (n3/2 + 1).
  Index state_size() const { return static_cast<Index>(basis_.data().size()); }

 private:
  SpectralTensor basis_;
};

/// Replaces the columns of `m` by an orthonormal basis of their span (thin Householder QR).
/// Self-conjugate Fourier slices are real and are factored in real arithmetic.
inline void orthonormalize_columns(Eigen::Ref<CMatrix> m, bool real_slice) {
  const Index rows = m.rows(), cols = m.cols();
  if (real_slice) {
    Eigen::HouseholderQR<RMatrix> qr(m.real());
    m = (qr.householderQ() * RMatrix::Identity(rows, cols)).cast<Complex>();
  } else {
    Eigen::HouseholderQR<CMatrix> qr(m);
    m = qr.householderQ() * CMatrix::Identity(rows, cols);
  }
}

/// Orthonormal basis from the half spectrum of an i.i.d. Gaussian n1 x r x n3 tensor.
/// Allows r == n1 (used to build orthogonal tensors).
inline FsmEstimate random_orthonormal_basis(Index n1, Index r, Index n3, Rng& rng) {
  if (r < 1 || r > n1) throw RankOutOfRange("random_orthonormal_basis: rank must be in [1, n1]");
  Tensor3 gaussian(n1, r, n3);
  for (double& x : gaussian.data()) x = rng.normal();
  SpectralTensor basis = fft3(gaussian);
  for (Index k = 0; k < basis.stored_slices(); ++k) orthonormalize_columns(basis.slice(k), self_conjugate_slice(k, n3));
  return FsmEstimate(std::move(basis));
}

/// Random starting point for tracking: r < n1 is required.
inline FsmEstimate init_random_fsm(Index n1, Index r, Index n3, std::uint64_t seed) {
  if (r < 1 || r >= n1) {
    throw RankOutOfRange("init_random_fsm: rank " + std::to_string(r) + " must satisfy 1 <= r < n1 = " +
                         std::to_string(n1));
  }
  Rng rng(seed, Substream::InitFsm);
  return random_orthonormal_basis(n1, r, n3, rng);
}

/// Wraps a canonical orthogonal tensor (n1 x r x n3) as an estimate.
inline FsmEstimate fsm_from_canonical(const Tensor3& u, double tol = 1e-8) {
  FsmEstimate est(fft3(u));
  if (est.orthonormality_error() > tol) throw NotOrthonormal("fsm_from_canonical: lateral slices are not orthonormal");
  return est;
}

}  // namespace toucan
