#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "toucan/fsm.hpp"
#include "toucan/tensor.hpp"

namespace toucan {

/// ||estimate - truth||_F / ||truth||_F.
inline double nrmse(const Tensor3& estimate, const Tensor3& truth) {
  if (!estimate.same_shape(truth)) throw DimensionMismatch("nrmse: shapes differ");
  const double ref = frobenius_norm(truth);
  if (ref == 0.0) throw ZeroReference("nrmse: reference tensor is zero");
  double acc = 0.0;
  const auto a = estimate.data();
  const auto b = truth.data();
  for (std::size_t n = 0; n < a.size(); ++n) acc += (a[n] - b[n]) * (a[n] - b[n]);
  return std::sqrt(acc) / ref;
}

/// ||U_est U_est^* - U U^*||_F / ||U U^*||_F for the t-product projectors, evaluated per
/// Fourier slice (the DFT scale cancels). For projectors P, Q:
/// ||P - Q||_F^2 = ||(I - Q) P||_F^2 + ||(I - P) Q||_F^2, which avoids the cancellation
/// in r_est + r - 2 ||U_est' U||_F^2.
inline double fsm_tracking_error(const FsmEstimate& est, const FsmEstimate& truth) {
  if (est.n1() != truth.n1() || est.n3() != truth.n3()) throw DimensionMismatch("fsm_tracking_error: dims differ");
  double num = 0.0, den = 0.0;
  for (Index k = 0; k < est.stored_slices(); ++k) {
    const double weight = spectral_multiplicity(k, est.n3());
    const auto a = est.slice(k);
    const auto b = truth.slice(k);
    const CMatrix cross = a.adjoint() * b;
    num += weight * ((b - a * cross).squaredNorm() + (a - b * cross.adjoint()).squaredNorm());
    den += weight * static_cast<double>(truth.rank());
  }
  return std::sqrt(num / den);
}

struct MetricRecord {
  Index t = 0;
  double nrmse_slice = 0.0;
  std::optional<double> fsm_error;
  int cg_iters = 0;
  std::optional<double> wall_ms;  // omitted for reproducible output
};

/// Per-slice NRMSE of imputed lateral slices against the truth.
inline std::vector<MetricRecord> slice_nrmse_curve(const Tensor3& imputed, const Tensor3& truth) {
  if (!imputed.same_shape(truth)) throw DimensionMismatch("slice_nrmse_curve: shapes differ");
  std::vector<MetricRecord> out;
  out.reserve(static_cast<std::size_t>(truth.n2()));
  for (Index t = 0; t < truth.n2(); ++t) {
    const double ref = truth.lateral(t).norm();
    const double err = (imputed.lateral(t) - truth.lateral(t)).norm();
    MetricRecord rec;
    rec.t = t;
    rec.nrmse_slice = ref > 0.0 ? err / ref : err;
    out.push_back(rec);
  }
  return out;
}

inline constexpr const char* kMetricsHeader = "t,nrmse,fsm_error,cg_iters,wall_ms";

/// Shortest decimal form that round-trips the double.
inline std::string format_double(double x) {
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

inline void write_metric_row(std::ostream& os, const MetricRecord& rec) {
  os << rec.t << ',' << format_double(rec.nrmse_slice) << ',';
  if (rec.fsm_error) os << format_double(*rec.fsm_error);
  os << ',' << rec.cg_iters << ',';
  if (rec.wall_ms) os << format_double(*rec.wall_ms);
  os << '\n';
}

inline void write_metrics_csv(std::ostream& os, const std::vector<MetricRecord>& records) {
  os << kMetricsHeader << '\n';
  for (const auto& rec : records) write_metric_row(os, rec);
}

}  // namespace toucan
