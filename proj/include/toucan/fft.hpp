#pragma once

// Mode-3 (tube-wise) discrete Fourier transforms.
//
// Convention: unnormalized forward DFT, inverse scaled by 1/n3. A real tensor is
// transformed into its half spectrum (Fourier slices 0 .. n3/2); the remaining
// slices are conjugate mirrors and are never materialized.
//
// Backed by FFTW "many" plans with stride = number of tubes, so the i-fastest tensor
// layout is transformed in place without gathering tubes. Plans are created once per
// (kind, n3, tube count) with FFTW_ESTIMATE, which keeps results bitwise reproducible.

#include <fftw3.h>

#include <cmath>
#include <map>
#include <mutex>
#include <span>
#include <tuple>
#include <vector>

#include "toucan/common.hpp"
#include "toucan/tensor.hpp"

namespace toucan::fft {

namespace detail {

enum class PlanKind { R2C, C2R, C2CForward, C2CBackward };

class PlanCache {
 public:
  static PlanCache& instance() {
    static PlanCache cache;
    return cache;
  }

  PlanCache(const PlanCache&) = delete;
  PlanCache& operator=(const PlanCache&) = delete;

  ~PlanCache() {
    for (auto& [key, plan] : plans_) fftw_destroy_plan(plan);
  }

  fftw_plan get(PlanKind kind, Index n3, Index howmany) {
    std::lock_guard lock(mutex_);
    const auto key = std::make_tuple(static_cast<int>(kind), n3, howmany);
    if (auto it = plans_.find(key); it != plans_.end()) return it->second;

    const int n = static_cast<int>(n3);
    const int many = static_cast<int>(howmany);
    const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
    // FFTW_ESTIMATE never touches the planning arrays.
    std::vector<double> real_buf(static_cast<std::size_t>(n3 * howmany));
    std::vector<Complex> cplx_buf(static_cast<std::size_t>(n3 * howmany));
    auto* cbuf = reinterpret_cast<fftw_complex*>(cplx_buf.data());

    fftw_plan plan = nullptr;
    switch (kind) {
      case PlanKind::R2C:
        plan = fftw_plan_many_dft_r2c(1, &n, many, real_buf.data(), nullptr, many, 1, cbuf, nullptr, many, 1, flags);
        break;
      case PlanKind::C2R:
        plan = fftw_plan_many_dft_c2r(1, &n, many, cbuf, nullptr, many, 1, real_buf.data(), nullptr, many, 1,
                                      flags | FFTW_DESTROY_INPUT);
        break;
      case PlanKind::C2CForward:
      case PlanKind::C2CBackward: {
        std::vector<Complex> out_buf(cplx_buf.size());
        plan = fftw_plan_many_dft(1, &n, many, cbuf, nullptr, many, 1,
                                  reinterpret_cast<fftw_complex*>(out_buf.data()), nullptr, many, 1,
                                  kind == PlanKind::C2CForward ? FFTW_FORWARD : FFTW_BACKWARD, flags);
        break;
      }
    }
    if (plan == nullptr) throw Error("FFTW failed to create a plan for n3 = " + std::to_string(n3));
    plans_.emplace(key, plan);
    return plan;
  }

 private:
  PlanCache() = default;

  std::mutex mutex_;
  std::map<std::tuple<int, Index, Index>, fftw_plan> plans_;
};

}  // namespace detail

/// Forward transform of `howmany` real tubes of length n3 laid out as in[k * howmany + m].
/// Writes the half spectrum to out[k * howmany + m], k < n3/2 + 1. Self-conjugate
/// slices come out with exactly zero imaginary part.
inline void forward_tubes(std::span<const double> in, std::span<Complex> out, Index n3, Index howmany) {
  const Index half = half_spectrum_length(n3);
  if (static_cast<Index>(in.size()) != n3 * howmany || static_cast<Index>(out.size()) != half * howmany) {
    throw DimensionMismatch("forward_tubes: buffer sizes do not match n3 and tube count");
  }
  fftw_plan plan = detail::PlanCache::instance().get(detail::PlanKind::R2C, n3, howmany);
  fftw_execute_dft_r2c(plan, const_cast<double*>(in.data()), reinterpret_cast<fftw_complex*>(out.data()));
  for (Index m = 0; m < howmany; ++m) out[m] = out[m].real();
  if (n3 % 2 == 0) {
    for (Index m = 0; m < howmany; ++m) out[(n3 / 2) * howmany + m] = out[(n3 / 2) * howmany + m].real();
  }
}

/// Inverse of forward_tubes including the 1/n3 scale. Imaginary parts of the
/// self-conjugate slices are ignored.
inline void inverse_tubes(std::span<const Complex> in, std::span<double> out, Index n3, Index howmany) {
  const Index half = half_spectrum_length(n3);
  if (static_cast<Index>(in.size()) != half * howmany || static_cast<Index>(out.size()) != n3 * howmany) {
    throw DimensionMismatch("inverse_tubes: buffer sizes do not match n3 and tube count");
  }
  thread_local std::vector<Complex> scratch;
  scratch.assign(in.begin(), in.end());
  fftw_plan plan = detail::PlanCache::instance().get(detail::PlanKind::C2R, n3, howmany);
  fftw_execute_dft_c2r(plan, reinterpret_cast<fftw_complex*>(scratch.data()), out.data());
  const double scale = 1.0 / static_cast<double>(n3);
  for (double& x : out) x *= scale;
}

/// Full complex transform of complex tubes; `inverse` applies the 1/n3 scale.
inline void complex_tubes(std::span<const Complex> in, std::span<Complex> out, Index n3, Index howmany,
                          bool inverse) {
  if (static_cast<Index>(in.size()) != n3 * howmany || static_cast<Index>(out.size()) != n3 * howmany) {
    throw DimensionMismatch("complex_tubes: buffer sizes do not match n3 and tube count");
  }
  const auto kind = inverse ? detail::PlanKind::C2CBackward : detail::PlanKind::C2CForward;
  fftw_plan plan = detail::PlanCache::instance().get(kind, n3, howmany);
  fftw_execute_dft(plan, reinterpret_cast<fftw_complex*>(const_cast<Complex*>(in.data())),
                   reinterpret_cast<fftw_complex*>(out.data()));
  if (inverse) {
    const double scale = 1.0 / static_cast<double>(n3);
    for (Complex& z : out) z *= scale;
  }
}

/// Half spectrum of a lateral slice given as an n1 x n3 matrix; result is n1 x (n3/2 + 1).
inline CMatrix forward_lateral(const RMatrix& v) {
  CMatrix out(v.rows(), half_spectrum_length(v.cols()));
  forward_tubes({v.data(), static_cast<std::size_t>(v.size())}, {out.data(), static_cast<std::size_t>(out.size())},
                v.cols(), v.rows());
  return out;
}

/// Canonical n1 x n3 lateral slice from its half spectrum.
inline RMatrix inverse_lateral(const CMatrix& s, Index n3) {
  if (s.cols() != half_spectrum_length(n3)) {
    throw DimensionMismatch("inverse_lateral: expected " + std::to_string(half_spectrum_length(n3)) + " slices");
  }
  RMatrix out(s.rows(), n3);
  inverse_tubes({s.data(), static_cast<std::size_t>(s.size())}, {out.data(), static_cast<std::size_t>(out.size())},
                n3, s.rows());
  return out;
}

/// Relative tolerance on the imaginary mass tolerated by ifft3.
inline constexpr double kSymmetryTolerance = 1e-10;

inline SpectralTensor fft3(const Tensor3& x) {
  SpectralTensor out(x.n1(), x.n2(), x.n3(), true);
  forward_tubes(x.data(), out.data(), x.n3(), x.n1() * x.n2());
  return out;
}

/// Inverse transform. Throws SymmetryViolation when the canonical result would carry
/// imaginary mass above 1e-10 relative to its real part.
inline Tensor3 ifft3(const SpectralTensor& s) {
  const Index n1 = s.n1(), n2 = s.n2(), n3 = s.n3();
  Tensor3 out(n1, n2, n3);
  double imag_sq = 0.0;

  if (s.symmetric()) {
    // Only the self-conjugate slices can carry imaginary mass into the result; a
    // purely imaginary DC (or Nyquist) entry a contributes |a|^2 / n3 to it.
    for (Index k = 0; k < s.stored_slices(); ++k) {
      if (self_conjugate_slice(k, n3)) imag_sq += s.slice(k).imag().squaredNorm();
    }
    imag_sq /= static_cast<double>(n3);
    inverse_tubes(s.data(), out.data(), n3, n1 * n2);
  } else {
    std::vector<Complex> full(static_cast<std::size_t>(n1 * n2 * n3));
    complex_tubes(s.data(), full, n3, n1 * n2, true);
    auto dst = out.data();
    for (std::size_t n = 0; n < full.size(); ++n) {
      dst[n] = full[n].real();
      imag_sq += full[n].imag() * full[n].imag();
    }
  }

  const double imag_norm = std::sqrt(imag_sq);
  const double real_norm = frobenius_norm(out);
  if (imag_norm > kSymmetryTolerance * real_norm) {
    throw SymmetryViolation("ifft3: imaginary mass " + std::to_string(imag_norm) + " vs real norm " +
                            std::to_string(real_norm));
  }
  return out;
}

}  // namespace toucan::fft

namespace toucan {
using fft::fft3;
using fft::ifft3;
}  // namespace toucan
