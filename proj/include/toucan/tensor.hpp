#pragma once

#include <cmath>
#include <span>
#include <utility>
#include <vector>

#include "toucan/common.hpp"

namespace toucan {

/// Dense real n1 x n2 x n3 tensor. Element (i, j, k) lives at ((k * n2 + j) * n1 + i),
/// so each frontal slice is a contiguous column-major n1 x n2 matrix and a lateral
/// slice (n2 == 1) is a column-major n1 x n3 matrix.
class Tensor3 {
 public:
  Tensor3() = default;

  Tensor3(Index n1, Index n2, Index n3) : n1_(n1), n2_(n2), n3_(n3), data_(checked_size(n1, n2, n3), 0.0) {}

  Tensor3(Index n1, Index n2, Index n3, std::vector<double> data)
      : n1_(n1), n2_(n2), n3_(n3), data_(std::move(data)) {
    if (static_cast<Index>(data_.size()) != checked_size(n1, n2, n3)) {
      throw DimensionMismatch("Tensor3: data length does not match " + dims_string(n1, n2, n3));
    }
  }

  Index n1() const { return n1_; }
  Index n2() const { return n2_; }
  Index n3() const { return n3_; }
  Index size() const { return static_cast<Index>(data_.size()); }

  double& operator()(Index i, Index j, Index k) { return data_[offset(i, j, k)]; }
  double operator()(Index i, Index j, Index k) const { return data_[offset(i, j, k)]; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  const std::vector<double>& values() const { return data_; }

  Eigen::Map<RMatrix> frontal(Index k) { return {data_.data() + k * n1_ * n2_, n1_, n2_}; }
  Eigen::Map<const RMatrix> frontal(Index k) const { return {data_.data() + k * n1_ * n2_, n1_, n2_}; }

  /// Lateral slice j as an n1 x n3 matrix (column k is the k-th frontal entry).
  Eigen::Map<RMatrix, 0, Eigen::OuterStride<>> lateral(Index j) {
    return {data_.data() + j * n1_, n1_, n3_, Eigen::OuterStride<>(n1_ * n2_)};
  }
  Eigen::Map<const RMatrix, 0, Eigen::OuterStride<>> lateral(Index j) const {
    return {data_.data() + j * n1_, n1_, n3_, Eigen::OuterStride<>(n1_ * n2_)};
  }

  Tensor3 lateral_slice(Index j) const {
    Tensor3 out(n1_, 1, n3_);
    out.lateral(0) = lateral(j);
    return out;
  }

  void set_lateral_slice(Index j, const Tensor3& slice) {
    if (slice.n1() != n1_ || slice.n2() != 1 || slice.n3() != n3_) {
      throw DimensionMismatch("set_lateral_slice: slice is not " + dims_string(n1_, 1, n3_));
    }
    lateral(j) = slice.lateral(0);
  }

  bool same_shape(const Tensor3& other) const {
    return n1_ == other.n1_ && n2_ == other.n2_ && n3_ == other.n3_;
  }

  bool all_finite() const {
    for (double x : data_) {
      if (!std::isfinite(x)) return false;
    }
    return true;
  }

  Tensor3& operator+=(const Tensor3& other) {
    require_same_shape(other, "operator+=");
    for (std::size_t n = 0; n < data_.size(); ++n) data_[n] += other.data_[n];
    return *this;
  }
  Tensor3& operator-=(const Tensor3& other) {
    require_same_shape(other, "operator-=");
    for (std::size_t n = 0; n < data_.size(); ++n) data_[n] -= other.data_[n];
    return *this;
  }
  Tensor3& operator*=(double s) {
    for (double& x : data_) x *= s;
    return *this;
  }

  friend Tensor3 operator+(Tensor3 a, const Tensor3& b) { return a += b; }
  friend Tensor3 operator-(Tensor3 a, const Tensor3& b) { return a -= b; }
  friend Tensor3 operator*(double s, Tensor3 a) { return a *= s; }

 private:
  static Index checked_size(Index n1, Index n2, Index n3) {
    if (n1 <= 0 || n2 <= 0 || n3 <= 0) {
      throw DimensionMismatch("Tensor3: dimensions must be positive, got " + dims_string(n1, n2, n3));
    }
    return n1 * n2 * n3;
  }

  Index offset(Index i, Index j, Index k) const { return (k * n2_ + j) * n1_ + i; }

  void require_same_shape(const Tensor3& other, const char* what) const {
    if (!same_shape(other)) {
      throw DimensionMismatch(std::string(what) + ": " + dims_string(n1_, n2_, n3_) + " vs " +
                              dims_string(other.n1_, other.n2_, other.n3_));
    }
  }

  Index n1_ = 0;
  Index n2_ = 0;
  Index n3_ = 0;
  std::vector<double> data_;
};

using LateralSlice = Tensor3;

/// Complex tensor in the mode-3 Fourier domain.
///
/// For a real origin (symmetric == true) only Fourier slices 0 .. n3/2 are stored;
/// slice k > n3/2 is implicitly conj(slice n3 - k). Otherwise all n3 slices are stored.
class SpectralTensor {
 public:
  SpectralTensor() = default;

  SpectralTensor(Index n1, Index n2, Index n3, bool symmetric = true)
      : n1_(n1), n2_(n2), n3_(n3), symmetric_(symmetric) {
    if (n1 <= 0 || n2 <= 0 || n3 <= 0) {
      throw DimensionMismatch("SpectralTensor: dimensions must be positive, got " + dims_string(n1, n2, n3));
    }
    data_.assign(static_cast<std::size_t>(n1 * n2 * stored_slices()), Complex(0.0, 0.0));
  }

  Index n1() const { return n1_; }
  Index n2() const { return n2_; }
  Index n3() const { return n3_; }
  bool symmetric() const { return symmetric_; }
  Index stored_slices() const { return symmetric_ ? half_spectrum_length(n3_) : n3_; }

  Eigen::Map<CMatrix> slice(Index k) { return {data_.data() + k * n1_ * n2_, n1_, n2_}; }
  Eigen::Map<const CMatrix> slice(Index k) const { return {data_.data() + k * n1_ * n2_, n1_, n2_}; }

  /// Any Fourier slice 0..n3-1, materializing the conjugate mirror when needed.
  CMatrix full_slice(Index k) const {
    if (!symmetric_ || k < stored_slices()) return slice(k);
    return slice(n3_ - k).conjugate();
  }

  /// Weight of stored slice k in full-spectrum sums.
  double multiplicity(Index k) const { return symmetric_ ? spectral_multiplicity(k, n3_) : 1.0; }

  std::span<Complex> data() { return data_; }
  std::span<const Complex> data() const { return data_; }

  /// Frobenius norm of the full (conjugate-expanded) spectrum.
  double frobenius_norm() const {
    double acc = 0.0;
    for (Index k = 0; k < stored_slices(); ++k) acc += multiplicity(k) * slice(k).squaredNorm();
    return std::sqrt(acc);
  }

 private:
  Index n1_ = 0;
  Index n2_ = 0;
  Index n3_ = 0;
  bool symmetric_ = true;
  std::vector<Complex> data_;
};

inline double frobenius_norm(const Tensor3& a) {
  double acc = 0.0;
  for (double x : a.data()) acc += x * x;
  return std::sqrt(acc);
}

inline Tensor3 identity_tensor(Index n, Index n3) {
  Tensor3 out(n, n, n3);
  out.frontal(0).setIdentity();
  return out;
}

/// Frontal slices stacked vertically: (n1 * n3) x n2.
inline RMatrix unfold(const Tensor3& a) {
  RMatrix out(a.n1() * a.n3(), a.n2());
  for (Index k = 0; k < a.n3(); ++k) out.middleRows(k * a.n1(), a.n1()) = a.frontal(k);
  return out;
}

inline Tensor3 fold(const RMatrix& m, Index n1, Index n2, Index n3) {
  if (m.rows() != n1 * n3 || m.cols() != n2) {
    throw DimensionMismatch("fold: matrix shape does not match " + dims_string(n1, n2, n3));
  }
  Tensor3 out(n1, n2, n3);
  for (Index k = 0; k < n3; ++k) out.frontal(k) = m.middleRows(k * n1, n1);
  return out;
}

/// Block-circulant matrix of the frontal slices, (n1 * n3) x (n2 * n3).
/// Dense and quadratic in n3; meant for small test oracles only.
inline RMatrix bcirc(const Tensor3& a) {
  const Index n1 = a.n1(), n2 = a.n2(), n3 = a.n3();
  RMatrix out(n1 * n3, n2 * n3);
  for (Index q = 0; q < n3; ++q) {
    for (Index p = 0; p < n3; ++p) {
      out.block(p * n1, q * n2, n1, n2) = a.frontal(((p - q) % n3 + n3) % n3);
    }
  }
  return out;
}

/// Transposes every frontal slice and reverses the order of slices 2..n3.
inline Tensor3 conj_transpose(const Tensor3& a) {
  const Index n3 = a.n3();
  Tensor3 out(a.n2(), a.n1(), n3);
  for (Index k = 0; k < n3; ++k) out.frontal(k) = a.frontal((n3 - k) % n3).transpose();
  return out;
}

}  // namespace toucan
