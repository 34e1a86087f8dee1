#pragma once

#include <complex>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace toucan {

using Index = Eigen::Index;
using Complex = std::complex<double>;
using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;
using RMatrix = Eigen::MatrixXd;
using RVector = Eigen::VectorXd;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

/// Inverse transform input whose implied canonical tensor is not real.
class SymmetryViolation : public Error {
 public:
  using Error::Error;
};

class FactorizationError : public Error {
 public:
  using Error::Error;
};

class RankOutOfRange : public Error {
 public:
  using Error::Error;
};

class ZeroReference : public Error {
 public:
  using Error::Error;
};

class NotOrthonormal : public Error {
 public:
  using Error::Error;
};

class SingularOperator : public Error {
 public:
  using Error::Error;
};

/// Malformed TNS1 / CSV / JSON input.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Number of Fourier slices stored for a real-origin tensor: ceil((n3 + 1) / 2).
inline constexpr Index half_spectrum_length(Index n3) { return n3 / 2 + 1; }

/// How many times stored slice k appears in the full spectrum (1 for the DC slice
/// and, when n3 is even, the Nyquist slice; 2 for every other stored slice).
inline constexpr double spectral_multiplicity(Index k, Index n3) {
  if (k == 0) return 1.0;
  if (n3 % 2 == 0 && k == n3 / 2) return 1.0;
  return 2.0;
}

/// True for slices that are their own conjugate mirror (and therefore real).
inline constexpr bool self_conjugate_slice(Index k, Index n3) {
  return k == 0 || (n3 % 2 == 0 && k == n3 / 2);
}

inline std::string dims_string(Index a, Index b, Index c) {
  return std::to_string(a) + "x" + std::to_string(b) + "x" + std::to_string(c);
}

}  // namespace toucan
