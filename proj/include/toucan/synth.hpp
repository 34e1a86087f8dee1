#pragma once

#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <utility>
#include <vector>

#include "toucan/fsm.hpp"
#include "toucan/random.hpp"
#include "toucan/tproduct.hpp"

namespace toucan {

enum class MaskKind { Entries, Tubes };

inline const char* to_string(MaskKind kind) { return kind == MaskKind::Entries ? "entries" : "tubes"; }

inline MaskKind parse_mask_kind(const std::string& s) {
  if (s == "entries") return MaskKind::Entries;
  if (s == "tubes") return MaskKind::Tubes;
  throw FormatError("unknown mask kind '" + s + "'");
}

/// Observation pattern of one n1 x 1 x n3 lateral slice: either individual entries
/// (i, k) or whole tubes i.
class SampleMask {
 public:
  SampleMask() = default;

  static SampleMask from_entries(Index n1, Index n3, std::vector<std::pair<Index, Index>> entries) {
    SampleMask m(MaskKind::Entries, n1, n3);
    for (const auto& [i, k] : entries) {
      if (i < 0 || i >= n1 || k < 0 || k >= n3) {
        throw std::out_of_range("SampleMask: entry (" + std::to_string(i) + ", " + std::to_string(k) + ") out of range");
      }
      auto& flag = m.flags_[static_cast<std::size_t>(k * n1 + i)];
      if (flag) throw std::invalid_argument("SampleMask: duplicate entry");
      flag = 1;
    }
    m.count_ = static_cast<Index>(entries.size());
    return m;
  }

  static SampleMask from_tubes(Index n1, Index n3, std::vector<Index> rows) {
    SampleMask m(MaskKind::Tubes, n1, n3);
    std::sort(rows.begin(), rows.end());
    if (std::adjacent_find(rows.begin(), rows.end()) != rows.end()) {
      throw std::invalid_argument("SampleMask: duplicate tube");
    }
    for (Index i : rows) {
      if (i < 0 || i >= n1) throw std::out_of_range("SampleMask: tube " + std::to_string(i) + " out of range");
      for (Index k = 0; k < n3; ++k) m.flags_[static_cast<std::size_t>(k * n1 + i)] = 1;
    }
    m.count_ = static_cast<Index>(rows.size());
    m.rows_ = std::move(rows);
    return m;
  }

  static SampleMask full(MaskKind kind, Index n1, Index n3) {
    if (kind == MaskKind::Tubes) {
      std::vector<Index> rows(static_cast<std::size_t>(n1));
      for (Index i = 0; i < n1; ++i) rows[static_cast<std::size_t>(i)] = i;
      return from_tubes(n1, n3, std::move(rows));
    }
    SampleMask m(MaskKind::Entries, n1, n3);
    std::fill(m.flags_.begin(), m.flags_.end(), 1);
    m.count_ = n1 * n3;
    return m;
  }

  static SampleMask none(MaskKind kind, Index n1, Index n3) { return SampleMask(kind, n1, n3); }

  MaskKind kind() const { return kind_; }
  Index n1() const { return n1_; }
  Index n3() const { return n3_; }

  /// |Omega|: observed entries for an entry mask, observed tubes for a tube mask.
  Index size() const { return count_; }
  bool empty() const { return count_ == 0; }

  /// Observed scalar entries (tube masks count n3 per tube).
  Index entry_count() const { return kind_ == MaskKind::Tubes ? count_ * n3_ : count_; }

  bool observed(Index i, Index k) const { return flags_[static_cast<std::size_t>(k * n1_ + i)] != 0; }

  /// Observed rows of a tube mask, ascending.
  const std::vector<Index>& rows() const { return rows_; }

  /// Observed (i, k) pairs in layout order (k-major).
  std::vector<std::pair<Index, Index>> entries() const {
    std::vector<std::pair<Index, Index>> out;
    out.reserve(static_cast<std::size_t>(entry_count()));
    for (Index k = 0; k < n3_; ++k) {
      for (Index i = 0; i < n1_; ++i) {
        if (observed(i, k)) out.emplace_back(i, k);
      }
    }
    return out;
  }

  /// Zeroes the unobserved entries of an n1 x n3 lateral slice.
  template <typename Derived>
  void apply(Eigen::DenseBase<Derived>& slice) const {
    for (Index k = 0; k < n3_; ++k) {
      for (Index i = 0; i < n1_; ++i) {
        if (!flags_[static_cast<std::size_t>(k * n1_ + i)]) slice(i, k) = 0.0;
      }
    }
  }

  /// Same observed entries, expressed as an entry mask.
  SampleMask as_entries() const {
    SampleMask m = *this;
    m.kind_ = MaskKind::Entries;
    m.count_ = entry_count();
    m.rows_.clear();
    return m;
  }

  friend bool operator==(const SampleMask& a, const SampleMask& b) {
    return a.kind_ == b.kind_ && a.n1_ == b.n1_ && a.n3_ == b.n3_ && a.flags_ == b.flags_;
  }

 private:
  SampleMask(MaskKind kind, Index n1, Index n3)
      : kind_(kind), n1_(n1), n3_(n3), flags_(static_cast<std::size_t>(n1 * n3), 0) {
    if (n1 <= 0 || n3 <= 0) throw DimensionMismatch("SampleMask: dimensions must be positive");
  }

  MaskKind kind_ = MaskKind::Entries;
  Index n1_ = 0;
  Index n3_ = 0;
  Index count_ = 0;
  std::vector<std::uint8_t> flags_;
  std::vector<Index> rows_;
};

inline void fill_gaussian(Tensor3& t, Rng& rng) {
  for (double& x : t.data()) x = rng.normal();
}

/// t-product of i.i.d. standard Gaussian n1 x r x n3 and r x n2 x n3 tensors.
inline Tensor3 gen_low_tubal_rank(Index n1, Index n2, Index n3, Index r, std::uint64_t seed) {
  if (r < 1 || r > std::min(n1, n2)) {
    throw RankOutOfRange("gen_low_tubal_rank: rank " + std::to_string(r) + " outside [1, min(n1, n2)]");
  }
  Tensor3 left(n1, r, n3), right(r, n2, n3);
  Rng left_rng(seed, Substream::LeftFactor), right_rng(seed, Substream::RightFactor);
  fill_gaussian(left, left_rng);
  fill_gaussian(right, right_rng);
  return tprod(left, right);
}

/// Sum of r rank-one outer products of i.i.d. Gaussian factor columns:
/// X(i, j, k) = sum_l A(i, l) B(j, l) C(k, l).
inline Tensor3 cp_tensor(const RMatrix& a, const RMatrix& b, const RMatrix& c) {
  if (a.cols() != b.cols() || a.cols() != c.cols()) throw DimensionMismatch("cp_tensor: factor ranks differ");
  Tensor3 out(a.rows(), b.rows(), c.rows());
  for (Index l = 0; l < a.cols(); ++l) {
    for (Index k = 0; k < c.rows(); ++k) {
      out.frontal(k) += c(k, l) * (a.col(l) * b.col(l).transpose());
    }
  }
  return out;
}

inline Tensor3 gen_cp(Index n1, Index n2, Index n3, Index r, std::uint64_t seed) {
  if (r < 1) throw RankOutOfRange("gen_cp: rank must be at least 1");
  auto draw = [&](Index rows, Substream stream) {
    Rng rng(seed, stream);
    RMatrix m(rows, r);
    for (Index j = 0; j < r; ++j) {
      for (Index i = 0; i < rows; ++i) m(i, j) = rng.normal();
    }
    return m;
  };
  return cp_tensor(draw(n1, Substream::CpFactorA), draw(n2, Substream::CpFactorB), draw(n3, Substream::CpFactorC));
}

inline void check_sample_rate(double rate) {
  if (!(rate > 0.0 && rate <= 1.0)) throw std::invalid_argument("sample rate must lie in (0, 1]");
}

/// Bernoulli mask: every entry (or tube) kept independently with probability `rate`.
inline SampleMask gen_mask(Index n1, Index n3, MaskKind kind, double rate, Rng& rng) {
  check_sample_rate(rate);
  if (kind == MaskKind::Tubes) {
    std::vector<Index> rows;
    for (Index i = 0; i < n1; ++i) {
      if (rng.bernoulli(rate)) rows.push_back(i);
    }
    return SampleMask::from_tubes(n1, n3, std::move(rows));
  }
  std::vector<std::pair<Index, Index>> entries;
  for (Index k = 0; k < n3; ++k) {
    for (Index i = 0; i < n1; ++i) {
      if (rng.bernoulli(rate)) entries.emplace_back(i, k);
    }
  }
  return SampleMask::from_entries(n1, n3, std::move(entries));
}

inline SampleMask gen_mask(Index n1, Index n3, MaskKind kind, double rate, std::uint64_t seed) {
  Rng rng(seed, Substream::Mask);
  return gen_mask(n1, n3, kind, rate, rng);
}

/// Masks for lateral slices 0..count-1; slice t draws from sub-stream (Mask, t).
inline std::vector<SampleMask> gen_masks(Index count, Index n1, Index n3, MaskKind kind, double rate,
                                         std::uint64_t seed) {
  std::vector<SampleMask> masks;
  masks.reserve(static_cast<std::size_t>(count));
  for (Index t = 0; t < count; ++t) {
    Rng rng(seed, Substream::Mask, static_cast<std::uint64_t>(t));
    masks.push_back(gen_mask(n1, n3, kind, rate, rng));
  }
  return masks;
}

struct StreamSpec {
  Index n1 = 50;
  Index n3 = 10;
  Index rank = 3;
  Index steps = 1500;
  Index change_period = 500;  // 0: a single FSM for the whole stream
  double sample_rate = 0.7;
  MaskKind kind = MaskKind::Entries;
  std::uint64_t seed = 0;

  void validate() const {
    if (n1 < 1 || n3 < 1 || steps < 1 || change_period < 0) throw std::invalid_argument("StreamSpec: bad dimensions");
    if (rank < 1 || rank >= n1) throw RankOutOfRange("StreamSpec: rank must satisfy 1 <= r < n1");
    check_sample_rate(sample_rate);
  }

  Index fsm_id(Index t) const { return change_period == 0 ? 0 : t / change_period; }
};

struct StreamItem {
  Index t = 0;
  Tensor3 slice;
  SampleMask mask;
  Index fsm_id = 0;
};

/// Pull-based stream of lateral slices V_t = U * W_t drawn from a free submodule U
/// that is redrawn every change_period slices. Weights W_t are fresh i.i.d. Gaussian
/// per slice; successive FSMs are independent.
class FsmStream {
 public:
  explicit FsmStream(StreamSpec spec) : spec_(spec) {
    spec_.validate();
    redraw(0);
  }

  const StreamSpec& spec() const { return spec_; }
  bool done() const { return t_ >= spec_.steps; }
  Index position() const { return t_; }

  /// Ground-truth FSM of the most recently emitted slice (or of slice 0 before any).
  const FsmEstimate& truth() const { return truth_; }
  Index truth_id() const { return truth_id_; }

  StreamItem next() {
    if (done()) throw std::out_of_range("FsmStream: exhausted");
    const Index id = spec_.fsm_id(t_);
    if (id != truth_id_) redraw(id);

    Rng weight_rng(spec_.seed, Substream::StreamWeights, static_cast<std::uint64_t>(t_));
    RMatrix w(spec_.rank, spec_.n3);
    for (Index k = 0; k < spec_.n3; ++k) {
      for (Index j = 0; j < spec_.rank; ++j) w(j, k) = weight_rng.normal();
    }
    const CMatrix wbar = fft::forward_lateral(w);
    CMatrix vbar(spec_.n1, wbar.cols());
    for (Index k = 0; k < wbar.cols(); ++k) vbar.col(k).noalias() = truth_.slice(k) * wbar.col(k);

    StreamItem item;
    item.t = t_;
    item.slice = Tensor3(spec_.n1, 1, spec_.n3);
    item.slice.lateral(0) = fft::inverse_lateral(vbar, spec_.n3);
    Rng mask_rng(spec_.seed, Substream::Mask, static_cast<std::uint64_t>(t_));
    item.mask = gen_mask(spec_.n1, spec_.n3, spec_.kind, spec_.sample_rate, mask_rng);
    item.fsm_id = id;
    ++t_;
    return item;
  }

 private:
  void redraw(Index id) {
    truth_ = init_random_fsm(spec_.n1, spec_.rank, spec_.n3, derive_seed(spec_.seed, static_cast<std::uint64_t>(Substream::Fsm),
                                                                       static_cast<std::uint64_t>(id)));
    truth_id_ = id;
  }

  StreamSpec spec_;
  Index t_ = 0;
  FsmEstimate truth_;
  Index truth_id_ = -1;
};

}  // namespace toucan
