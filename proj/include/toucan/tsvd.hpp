#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "toucan/fft.hpp"
#include "toucan/parallel.hpp"
#include "toucan/tproduct.hpp"

namespace toucan {

/// A = U * S * V^T with orthogonal U (n1 x n1 x n3), V (n2 x n2 x n3) and f-diagonal S.
/// After truncate(), U is n1 x r x n3, S is r x r x n3 and V is n2 x r x n3.
struct TsvdFactors {
  Tensor3 U;
  Tensor3 S;
  Tensor3 V;
};

/// Same factors in the Fourier domain (half spectra). Singular values in every
/// slice are sorted descending.
struct SpectralTsvd {
  SpectralTensor U;
  SpectralTensor S;
  SpectralTensor V;
};

namespace detail {

template <typename Svd>
void check_svd(const Svd& svd, Index k) {
  if (svd.info() != Eigen::Success) {
    throw FactorizationError("tsvd: SVD of Fourier slice " + std::to_string(k) + " failed");
  }
}

}  // namespace detail

inline SpectralTsvd spectral_tsvd(const Tensor3& a) {
  const Index n1 = a.n1(), n2 = a.n2(), n3 = a.n3();
  const SpectralTensor abar = fft3(a);
  SpectralTsvd out{SpectralTensor(n1, n1, n3), SpectralTensor(n1, n2, n3), SpectralTensor(n2, n2, n3)};

  parallel_for(abar.stored_slices(), [&](Index k) {
    if (!abar.slice(k).allFinite()) throw FactorizationError("tsvd: non-finite input");
    // Self-conjugate slices are real; factor them in real arithmetic so the
    // factors stay exactly real and the inverse transform is exact.
    if (self_conjugate_slice(k, n3)) {
      const RMatrix real_slice = abar.slice(k).real();
      Eigen::BDCSVD<RMatrix> svd(real_slice, Eigen::ComputeFullU | Eigen::ComputeFullV);
      detail::check_svd(svd, k);
      out.U.slice(k) = svd.matrixU().cast<Complex>();
      out.V.slice(k) = svd.matrixV().cast<Complex>();
      for (Index i = 0; i < svd.singularValues().size(); ++i) out.S.slice(k)(i, i) = svd.singularValues()(i);
    } else {
      Eigen::BDCSVD<CMatrix> svd(abar.slice(k), Eigen::ComputeFullU | Eigen::ComputeFullV);
      detail::check_svd(svd, k);
      out.U.slice(k) = svd.matrixU();
      out.V.slice(k) = svd.matrixV();
      for (Index i = 0; i < svd.singularValues().size(); ++i) out.S.slice(k)(i, i) = svd.singularValues()(i);
    }
  });
  return out;
}

inline TsvdFactors tsvd(const Tensor3& a) {
  const SpectralTsvd s = spectral_tsvd(a);
  return {ifft3(s.U), ifft3(s.S), ifft3(s.V)};
}

/// Canonical-domain Frobenius norms of the singular tubes S(i, i, :), i < min(n1, n2).
inline std::vector<double> singular_tube_norms(const Tensor3& a) {
  const SpectralTensor abar = fft3(a);
  const Index m = std::min(a.n1(), a.n2());
  std::vector<RVector> values(static_cast<std::size_t>(abar.stored_slices()));
  parallel_for(abar.stored_slices(), [&](Index k) {
    Eigen::BDCSVD<CMatrix> svd(abar.slice(k));
    detail::check_svd(svd, k);
    values[static_cast<std::size_t>(k)] = svd.singularValues();
  });
  std::vector<double> norms(static_cast<std::size_t>(m), 0.0);
  for (Index i = 0; i < m; ++i) {
    double acc = 0.0;
    for (Index k = 0; k < abar.stored_slices(); ++k) {
      const double sv = values[static_cast<std::size_t>(k)](i);
      acc += abar.multiplicity(k) * sv * sv;
    }
    // Parseval for the unnormalized DFT.
    norms[static_cast<std::size_t>(i)] = std::sqrt(acc / static_cast<double>(a.n3()));
  }
  return norms;
}

inline constexpr double kDefaultTubalRankTol = 1e-8;

/// Number of singular tubes whose norm exceeds tol times the largest one.
inline Index tubal_rank(const Tensor3& a, double tol = kDefaultTubalRankTol) {
  if (tol < 0.0) throw std::invalid_argument("tubal_rank: tol must be nonnegative");
  const std::vector<double> norms = singular_tube_norms(a);
  if (norms.empty() || norms.front() == 0.0) return 0;
  return static_cast<Index>(
      std::count_if(norms.begin(), norms.end(), [&](double n) { return n > tol * norms.front(); }));
}

/// Keeps the leading r singular tubes.
inline TsvdFactors truncate(const TsvdFactors& f, Index r) {
  const Index n1 = f.U.n1(), n2 = f.V.n1(), n3 = f.U.n3();
  const Index available = std::min({f.U.n2(), f.S.n1(), f.S.n2(), f.V.n2()});
  if (r < 1 || r > available) {
    throw RankOutOfRange("truncate: rank " + std::to_string(r) + " outside [1, " + std::to_string(available) + "]");
  }
  TsvdFactors out{Tensor3(n1, r, n3), Tensor3(r, r, n3), Tensor3(n2, r, n3)};
  for (Index k = 0; k < n3; ++k) {
    out.U.frontal(k) = f.U.frontal(k).leftCols(r);
    out.S.frontal(k) = f.S.frontal(k).topLeftCorner(r, r);
    out.V.frontal(k) = f.V.frontal(k).leftCols(r);
  }
  return out;
}

inline Tensor3 reconstruct(const TsvdFactors& f) { return tprod(tprod(f.U, f.S), conj_transpose(f.V)); }

}  // namespace toucan
