#pragma once

// Streaming low-tubal-rank completion on the tensor Grassmannian.
//
// The free-submodule estimate is a stack of n1 x r complex bases, one per stored
// Fourier slice. Every incoming lateral slice V_t (observed on a mask) triggers
//   1. a weight solve: min_w 1/2 ||mask(V_t - U * W)||^2, by conjugate gradient on the
//      normal equations (entry masks) or per-slice pseudo-inverses (tube masks);
//   2. the per-slice residual directions (projected onto the orthogonal complement of
//      the basis for entry masks);
//   3. a rank-one geodesic rotation of every Fourier slice with the greedy angle
//      theta = atan(||residual|| / ||w||).
//
// Spectral weights are r x (n3/2 + 1) matrices (column k = Fourier slice k). Inner
// products over half spectra weight non-self-conjugate slices twice so they agree with
// the full spectrum, which keeps CG equivalent to CG on the real canonical problem.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <vector>

#include "toucan/fft.hpp"
#include "toucan/fsm.hpp"
#include "toucan/random.hpp"
#include "toucan/synth.hpp"

namespace toucan {

struct CgdConfig {
  double tol = 1e-9;
  int max_iters = 300;

  void validate() const {
    if (!(tol > 0.0)) throw std::invalid_argument("CgdConfig: tol must be positive");
    if (max_iters < 1) throw std::invalid_argument("CgdConfig: max_iters must be at least 1");
  }
};

/// Coefficients of one lateral slice in the basis: canonical W_t is r x 1 x n3.
struct WeightSlice {
  CMatrix spectral;  // r x (n3/2 + 1)
  Index n3 = 0;

  Tensor3 canonical() const {
    Tensor3 w(spectral.rows(), 1, n3);
    w.lateral(0) = fft::inverse_lateral(spectral, n3);
    return w;
  }
};

struct StepReport {
  Index t = 0;
  int cg_iters = 0;
  double residual_norm = 0.0;  // ||mask(V_t - U_t * W_t)||_F before the update
  std::vector<double> theta;   // rotation angle per stored Fourier slice
  double wall_time = 0.0;      // seconds
  bool skipped = false;        // empty mask
  bool repaired = false;       // a QR repair was applied
};

/// Slices whose orthonormality drift reaches this are re-orthonormalized.
inline constexpr double kRepairThreshold = 1e-8;

namespace detail {

inline void check_slice(const FsmEstimate& u, const Tensor3& v, const SampleMask& mask) {
  if (v.n1() != u.n1() || v.n2() != 1 || v.n3() != u.n3()) {
    throw DimensionMismatch("slice " + dims_string(v.n1(), v.n2(), v.n3()) + " does not match basis " +
                            dims_string(u.n1(), 1, u.n3()));
  }
  if (mask.n1() != u.n1() || mask.n3() != u.n3()) throw DimensionMismatch("mask does not match basis dimensions");
}

/// Full-spectrum real inner product of two half spectra.
inline double spectral_dot(const CMatrix& a, const CMatrix& b, Index n3) {
  double acc = 0.0;
  for (Index k = 0; k < a.cols(); ++k) acc += spectral_multiplicity(k, n3) * a.col(k).dot(b.col(k)).real();
  return acc;
}

/// Per-slice U^(k) x^(k): r x N -> n1 x N.
inline CMatrix basis_times(const FsmEstimate& u, const CMatrix& x) {
  CMatrix out(u.n1(), u.stored_slices());
  for (Index k = 0; k < u.stored_slices(); ++k) out.col(k).noalias() = u.slice(k) * x.col(k);
  return out;
}

/// Per-slice U^(k)' y^(k): n1 x N -> r x N.
inline CMatrix basis_adjoint_times(const FsmEstimate& u, const CMatrix& y) {
  CMatrix out(u.rank(), u.stored_slices());
  for (Index k = 0; k < u.stored_slices(); ++k) out.col(k).noalias() = u.slice(k).adjoint() * y.col(k);
  return out;
}

inline RMatrix lateral_matrix(const Tensor3& v) { return v.lateral(0); }

}  // namespace detail

/// U' F_Omega' F_Omega U x, matrix free: per-slice products, inverse transform,
/// zero the unobserved entries, forward transform, per-slice adjoint products.
inline CMatrix apply_sampled_gram(const FsmEstimate& u, const SampleMask& mask, const CMatrix& x) {
  RMatrix canon = fft::inverse_lateral(detail::basis_times(u, x), u.n3());
  mask.apply(canon);
  return detail::basis_adjoint_times(u, fft::forward_lateral(canon));
}

/// Right-hand side U' F_Omega' F_Omega v of the weight normal equations.
inline CMatrix sampled_rhs(const FsmEstimate& u, const Tensor3& v, const SampleMask& mask) {
  RMatrix canon = detail::lateral_matrix(v);
  mask.apply(canon);
  return detail::basis_adjoint_times(u, fft::forward_lateral(canon));
}

struct WeightSolve {
  WeightSlice weights;
  int iterations = 0;
  double relative_residual = 0.0;
};

/// Conjugate gradient on the normal equations of min_w 1/2 ||F_Omega (v - U w)||^2,
/// started from zero. Stops when ||b - A w|| <= tol ||b|| or after max_iters.
inline WeightSolve solve_weights_cgd(const FsmEstimate& u, const Tensor3& v, const SampleMask& mask,
                                     const CgdConfig& cfg = {}) {
  detail::check_slice(u, v, mask);
  cfg.validate();
  const Index n3 = u.n3();
  WeightSolve out;
  out.weights = {CMatrix::Zero(u.rank(), u.stored_slices()), n3};
  if (mask.empty()) return out;

  const CMatrix b = sampled_rhs(u, v, mask);
  const double b_norm = std::sqrt(detail::spectral_dot(b, b, n3));
  if (b_norm == 0.0) return out;

  CMatrix& x = out.weights.spectral;
  CMatrix r = b;
  CMatrix p = r;
  double rs = b_norm * b_norm;
  for (int it = 1; it <= cfg.max_iters; ++it) {
    const CMatrix ap = apply_sampled_gram(u, mask, p);
    const double pap = detail::spectral_dot(p, ap, n3);
    if (!(pap > 0.0)) break;
    const double alpha = rs / pap;
    x += alpha * p;
    r -= alpha * ap;
    const double rs_next = detail::spectral_dot(r, r, n3);
    out.iterations = it;
    if (std::sqrt(rs_next) <= cfg.tol * b_norm) {
      rs = rs_next;
      break;
    }
    p = r + (rs_next / rs) * p;
    rs = rs_next;
  }
  out.relative_residual = std::sqrt(rs) / b_norm;
  return out;
}

/// Minimum-norm least squares per stored Fourier slice on the observed tubes.
inline WeightSlice solve_weights_pinv(const FsmEstimate& u, const Tensor3& v, const SampleMask& mask) {
  detail::check_slice(u, v, mask);
  if (mask.kind() != MaskKind::Tubes) throw std::invalid_argument("solve_weights_pinv: requires a tube mask");
  const Index n3 = u.n3();
  WeightSlice w{CMatrix::Zero(u.rank(), u.stored_slices()), n3};
  if (mask.empty()) return w;

  const CMatrix vbar = fft::forward_lateral(detail::lateral_matrix(v));
  const auto& rows = mask.rows();
  for (Index k = 0; k < u.stored_slices(); ++k) {
    const CMatrix basis_rows = u.slice(k)(rows, Eigen::all);
    const CVector rhs = vbar.col(k)(rows);
    if (self_conjugate_slice(k, n3)) {
      Eigen::CompleteOrthogonalDecomposition<RMatrix> cod(basis_rows.real());
      w.spectral.col(k) = cod.solve(RVector(rhs.real())).cast<Complex>();
    } else {
      Eigen::CompleteOrthogonalDecomposition<CMatrix> cod(basis_rows);
      w.spectral.col(k) = cod.solve(rhs);
    }
  }
  return w;
}

/// Canonical prediction U * W for one lateral slice.
inline Tensor3 predict_slice(const FsmEstimate& u, const WeightSlice& w) {
  Tensor3 out(u.n1(), 1, u.n3());
  out.lateral(0) = fft::inverse_lateral(detail::basis_times(u, w.spectral), u.n3());
  return out;
}

struct GradientTerms {
  CMatrix rho;             // n1 x N, (I - U U') r_omega per slice
  CMatrix r_omega;         // n1 x N, spectrum of the zero-filled residual
  double residual_norm = 0.0;
};

/// Residual R = V - U * W, zero-filled outside the mask, its spectrum, and the
/// per-slice projection onto the orthogonal complement of the basis.
inline GradientTerms compute_gradient_terms(const FsmEstimate& u, const Tensor3& v, const SampleMask& mask,
                                            const WeightSlice& w) {
  detail::check_slice(u, v, mask);
  RMatrix residual = detail::lateral_matrix(v) - fft::inverse_lateral(detail::basis_times(u, w.spectral), u.n3());
  mask.apply(residual);

  GradientTerms g;
  g.residual_norm = residual.norm();
  g.r_omega = fft::forward_lateral(residual);
  g.rho = g.r_omega;
  for (Index k = 0; k < u.stored_slices(); ++k) {
    // Projected twice; one classical Gram-Schmidt pass loses orthogonality when the
    // residual is nearly inside the span.
    for (int pass = 0; pass < 2; ++pass) {
      const CVector coeff = u.slice(k).adjoint() * g.rho.col(k);
      g.rho.col(k).noalias() -= u.slice(k) * coeff;
    }
  }
  return g;
}

struct GeodesicInfo {
  std::vector<double> theta;
  bool repaired = false;
};

/// Rotates every stored slice along the geodesic spanned by (direction, U w) with the
/// greedy angle atan(||direction|| / ||w||). Slices with a zero direction or zero
/// weights are left untouched. Drift >= kRepairThreshold triggers a QR repair.
inline GeodesicInfo geodesic_update(FsmEstimate& u, const CMatrix& direction, const CMatrix& w) {
  if (direction.rows() != u.n1() || direction.cols() != u.stored_slices() || w.rows() != u.rank() ||
      w.cols() != u.stored_slices()) {
    throw DimensionMismatch("geodesic_update: direction or weights have the wrong shape");
  }
  GeodesicInfo info;
  info.theta.assign(static_cast<std::size_t>(u.stored_slices()), 0.0);
  const CMatrix eye = CMatrix::Identity(u.rank(), u.rank());

  for (Index k = 0; k < u.stored_slices(); ++k) {
    auto basis = u.slice(k);
    const double dir_norm = direction.col(k).norm();
    const double w_norm = w.col(k).norm();
    if (dir_norm > 0.0 && w_norm > 0.0 && std::isfinite(dir_norm) && std::isfinite(w_norm)) {
      const CVector p = basis * w.col(k);
      const double p_norm = p.norm();
      if (p_norm > 0.0) {
        const double theta = std::atan(dir_norm / w_norm);
        info.theta[static_cast<std::size_t>(k)] = theta;
        const CVector step = (std::sin(theta) / dir_norm) * direction.col(k) + ((std::cos(theta) - 1.0) / p_norm) * p;
        basis.noalias() += step * (w.col(k).adjoint() / w_norm);
      }
    }
    if ((basis.adjoint() * basis - eye).norm() >= kRepairThreshold) {
      orthonormalize_columns(basis, self_conjugate_slice(k, u.n3()));
      info.repaired = true;
    }
  }
  return info;
}

struct StepOutput {
  WeightSlice weights;
  StepReport report;
};

namespace detail {
inline double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

inline StepOutput skipped_step(const FsmEstimate& u, Index t) {
  StepOutput out;
  out.weights = {CMatrix::Zero(u.rank(), u.stored_slices()), u.n3()};
  out.report.t = t;
  out.report.skipped = true;
  out.report.theta.assign(static_cast<std::size_t>(u.stored_slices()), 0.0);
  return out;
}
}  // namespace detail

/// One update for a slice observed on arbitrary entries. Mutates the estimate in place.
inline StepOutput toucan_step(FsmEstimate& u, const Tensor3& v, const SampleMask& mask, const CgdConfig& cfg = {},
                              Index t = 0) {
  detail::check_slice(u, v, mask);
  if (mask.empty()) return detail::skipped_step(u, t);
  const auto start = std::chrono::steady_clock::now();

  WeightSolve solve = solve_weights_cgd(u, v, mask, cfg);
  const GradientTerms g = compute_gradient_terms(u, v, mask, solve.weights);
  GeodesicInfo info = geodesic_update(u, g.rho, solve.weights.spectral);

  StepOutput out;
  out.weights = std::move(solve.weights);
  out.report.t = t;
  out.report.cg_iters = solve.iterations;
  out.report.residual_norm = g.residual_norm;
  out.report.theta = std::move(info.theta);
  out.report.repaired = info.repaired;
  out.report.wall_time = detail::seconds_since(start);
  return out;
}

/// One update for a slice observed on whole tubes: closed-form weights and the
/// unprojected zero-filled residual as rotation direction.
inline StepOutput toucan_tube_step(FsmEstimate& u, const Tensor3& v, const SampleMask& mask, Index t = 0) {
  detail::check_slice(u, v, mask);
  if (mask.kind() != MaskKind::Tubes) throw std::invalid_argument("toucan_tube_step: requires a tube mask");
  if (mask.empty()) return detail::skipped_step(u, t);
  const auto start = std::chrono::steady_clock::now();

  WeightSlice w = solve_weights_pinv(u, v, mask);
  RMatrix residual = detail::lateral_matrix(v) - fft::inverse_lateral(detail::basis_times(u, w.spectral), u.n3());
  mask.apply(residual);
  const CMatrix r_bar = fft::forward_lateral(residual);
  GeodesicInfo info = geodesic_update(u, r_bar, w.spectral);

  StepOutput out;
  out.weights = std::move(w);
  out.report.t = t;
  out.report.residual_norm = residual.norm();
  out.report.theta = std::move(info.theta);
  out.report.repaired = info.repaired;
  out.report.wall_time = detail::seconds_since(start);
  return out;
}

enum class Variant { Entries, Tubes };

inline const char* to_string(Variant v) { return v == Variant::Entries ? "entries" : "tubes"; }

inline StepOutput run_step(Variant variant, FsmEstimate& u, const Tensor3& v, const SampleMask& mask,
                           const CgdConfig& cfg, Index t) {
  return variant == Variant::Entries ? toucan_step(u, v, mask, cfg, t) : toucan_tube_step(u, v, mask, t);
}

/// Weights of v against a fixed basis with the variant's solver.
inline WeightSlice solve_weights(Variant variant, const FsmEstimate& u, const Tensor3& v, const SampleMask& mask,
                                 const CgdConfig& cfg) {
  return variant == Variant::Entries ? solve_weights_cgd(u, v, mask, cfg).weights : solve_weights_pinv(u, v, mask);
}

struct RunOptions {
  Variant variant = Variant::Entries;
  CgdConfig cgd;
  Index passes = 1;
  bool shuffle = false;  // seeded reshuffle of the slice order on every pass
  std::uint64_t shuffle_seed = 0;
  bool keep_imputed = false;  // accumulate the per-step predictions U_{t+1} * W_t
  bool keep_reports = false;
};

/// Everything an observer sees after one step. `prediction` is U_{t+1} * W_t.
struct StepEvent {
  Index pass = 0;
  Index step = 0;  // global step counter
  Index t = 0;     // slice index
  const Tensor3& slice;
  const SampleMask& mask;
  const Tensor3& prediction;
  const StepReport& report;
  const FsmEstimate& fsm;
};

struct RunResult {
  FsmEstimate fsm;
  std::vector<StepReport> reports;
  std::optional<Tensor3> imputed;
  Index passes_completed = 0;
  Index steps = 0;
};

struct IgnoreStep {
  void operator()(const StepEvent&) const {}
};
struct ContinuePasses {
  bool operator()(Index, const FsmEstimate&) const { return true; }
};

/// Cycles over a static batch of lateral slices `passes` times. After each pass
/// `on_pass(pass, fsm)` may return false to stop.
template <typename OnStep = IgnoreStep, typename OnPass = ContinuePasses>
RunResult run_batch(FsmEstimate u0, const Tensor3& data, const std::vector<SampleMask>& masks, const RunOptions& opt,
                    OnStep&& on_step = {}, OnPass&& on_pass = {}) {
  if (static_cast<Index>(masks.size()) != data.n2()) throw DimensionMismatch("run_batch: one mask per lateral slice");
  if (opt.passes < 1) throw std::invalid_argument("run_batch: passes must be at least 1");
  opt.cgd.validate();

  RunResult result;
  result.fsm = std::move(u0);
  if (opt.keep_imputed) result.imputed.emplace(data.n1(), data.n2(), data.n3());

  std::vector<Index> order(static_cast<std::size_t>(data.n2()));
  std::iota(order.begin(), order.end(), Index{0});
  for (Index pass = 0; pass < opt.passes; ++pass) {
    if (opt.shuffle) {
      Rng rng(opt.shuffle_seed, Substream::Shuffle, static_cast<std::uint64_t>(pass));
      for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    }
    for (Index t : order) {
      const Tensor3 slice = data.lateral_slice(t);
      const SampleMask& mask = masks[static_cast<std::size_t>(t)];
      StepOutput step = run_step(opt.variant, result.fsm, slice, mask, opt.cgd, t);
      const Tensor3 prediction = predict_slice(result.fsm, step.weights);
      if (result.imputed) result.imputed->set_lateral_slice(t, prediction);
      on_step(StepEvent{pass, result.steps, t, slice, mask, prediction, step.report, result.fsm});
      if (opt.keep_reports) result.reports.push_back(std::move(step.report));
      ++result.steps;
    }
    result.passes_completed = pass + 1;
    if (!on_pass(pass, static_cast<const FsmEstimate&>(result.fsm))) break;
  }
  return result;
}

/// Single pass over a pull-based source exposing done() and next() -> StreamItem.
template <typename Source, typename OnStep = IgnoreStep>
RunResult run_stream(FsmEstimate u0, Source& source, const RunOptions& opt, OnStep&& on_step = {}) {
  opt.cgd.validate();
  RunResult result;
  result.fsm = std::move(u0);
  while (!source.done()) {
    const StreamItem item = source.next();
    StepOutput step = run_step(opt.variant, result.fsm, item.slice, item.mask, opt.cgd, item.t);
    const Tensor3 prediction = predict_slice(result.fsm, step.weights);
    on_step(StepEvent{0, result.steps, item.t, item.slice, item.mask, prediction, step.report, result.fsm});
    if (opt.keep_reports) result.reports.push_back(std::move(step.report));
    ++result.steps;
  }
  result.passes_completed = 1;
  return result;
}

/// Imputes every lateral slice with weights re-solved against a fixed basis.
inline Tensor3 complete_with_fsm(const FsmEstimate& u, const Tensor3& data, const std::vector<SampleMask>& masks,
                                 Variant variant, const CgdConfig& cfg = {}) {
  if (static_cast<Index>(masks.size()) != data.n2()) throw DimensionMismatch("complete_with_fsm: one mask per slice");
  Tensor3 out(data.n1(), data.n2(), data.n3());
  for (Index t = 0; t < data.n2(); ++t) {
    const Tensor3 slice = data.lateral_slice(t);
    const WeightSlice w = solve_weights(variant, u, slice, masks[static_cast<std::size_t>(t)], cfg);
    out.set_lateral_slice(t, predict_slice(u, w));
  }
  return out;
}

}  // namespace toucan
