#pragma once

#include "toucan/fft.hpp"
#include "toucan/tensor.hpp"

namespace toucan {

/// Slice-wise product of two half spectra.
inline SpectralTensor spectral_product(const SpectralTensor& a, const SpectralTensor& b) {
  if (a.n2() != b.n1() || a.n3() != b.n3() || a.symmetric() != b.symmetric()) {
    throw DimensionMismatch("spectral_product: " + dims_string(a.n1(), a.n2(), a.n3()) + " * " +
                            dims_string(b.n1(), b.n2(), b.n3()));
  }
  SpectralTensor c(a.n1(), b.n2(), a.n3(), a.symmetric());
  for (Index k = 0; k < c.stored_slices(); ++k) c.slice(k).noalias() = a.slice(k) * b.slice(k);
  return c;
}

/// t-product A * B, equal to fold(bcirc(A) * unfold(B)), evaluated in the Fourier domain.
inline Tensor3 tprod(const Tensor3& a, const Tensor3& b) {
  if (a.n2() != b.n1() || a.n3() != b.n3()) {
    throw DimensionMismatch("tprod: " + dims_string(a.n1(), a.n2(), a.n3()) + " * " +
                            dims_string(b.n1(), b.n2(), b.n3()));
  }
  return ifft3(spectral_product(fft3(a), fft3(b)));
}

}  // namespace toucan
