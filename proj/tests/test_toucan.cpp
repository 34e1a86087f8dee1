#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "gradient_check.hpp"
#include "oracles.hpp"
#include "toucan/metrics.hpp"
#include "toucan/toucan.hpp"

using namespace toucan;

namespace {

Tensor3 slice_from(const FsmEstimate& u, const RMatrix& w) {
  WeightSlice ws{fft::forward_lateral(w), u.n3()};
  return predict_slice(u, ws);
}

RMatrix random_weights(Index r, Index n3, Rng& rng) {
  RMatrix w(r, n3);
  for (Index k = 0; k < n3; ++k)
    for (Index j = 0; j < r; ++j) w(j, k) = rng.normal();
  return w;
}

// Column-major vec of an r x n3 weight matrix matches unfold of the r x 1 x n3 tensor.
Eigen::VectorXd vec(const RMatrix& m) { return Eigen::Map<const Eigen::VectorXd>(m.data(), m.size()); }

RMatrix unvec(const Eigen::VectorXd& v, Index rows, Index cols) { return Eigen::Map<const RMatrix>(v.data(), rows, cols); }

// Rows of bcirc(U) selected by the mask, as an explicit dense matrix.
RMatrix dense_sampled_operator(const FsmEstimate& u, const SampleMask& mask) {
  const RMatrix b = bcirc(u.canonical());
  RMatrix out(mask.entry_count(), b.cols());
  Index row = 0;
  for (const auto& [i, k] : mask.entries()) out.row(row++) = b.row(k * u.n1() + i);
  return out;
}

Eigen::VectorXd masked_vec(const Tensor3& v, const SampleMask& mask) {
  Eigen::VectorXd out(mask.entry_count());
  Index row = 0;
  for (const auto& [i, k] : mask.entries()) out(row++) = v(i, 0, k);
  return out;
}

}  // namespace

TEST(InitRandomFsm, OrthonormalAndDeterministic) {
  FsmEstimate u = init_random_fsm(9, 3, 6, 4);
  EXPECT_LE(u.orthonormality_error(), 1e-10);
  FsmEstimate again = init_random_fsm(9, 3, 6, 4);
  for (std::size_t n = 0; n < u.spectral().data().size(); ++n) EXPECT_EQ(u.spectral().data()[n], again.spectral().data()[n]);
  const Tensor3 c = u.canonical();
  EXPECT_LE(frobenius_norm(tprod(conj_transpose(c), c) - identity_tensor(3, 6)), 1e-8);
  EXPECT_THROW(init_random_fsm(4, 4, 3, 1), RankOutOfRange);
  EXPECT_THROW(init_random_fsm(4, 0, 3, 1), RankOutOfRange);
}

TEST(InitRandomFsm, SelfConjugateSlicesAreReal) {
  FsmEstimate u = init_random_fsm(7, 2, 6, 8);
  EXPECT_EQ(u.slice(0).imag().norm(), 0.0);
  EXPECT_EQ(u.slice(3).imag().norm(), 0.0);
  EXPECT_EQ(u.state_size(), 7 * 2 * 4);
}

TEST(FsmFromCanonical, RoundTrip) {
  FsmEstimate u = init_random_fsm(6, 2, 5, 1);
  FsmEstimate back = fsm_from_canonical(u.canonical());
  EXPECT_LE(fsm_tracking_error(back, u), 1e-10);
  Tensor3 bad = u.canonical();
  bad *= 2.0;
  EXPECT_THROW(fsm_from_canonical(bad), NotOrthonormal);
}

TEST(SampledGram, FullAndEmptyMasks) {
  Rng rng(1);
  FsmEstimate u = init_random_fsm(8, 2, 4, 2);
  const CMatrix x = fft::forward_lateral(random_weights(2, 4, rng));
  const CMatrix full = apply_sampled_gram(u, SampleMask::full(MaskKind::Entries, 8, 4), x);
  EXPECT_LE((full - x).norm(), 1e-12 * x.norm());
  const CMatrix none = apply_sampled_gram(u, SampleMask::none(MaskKind::Entries, 8, 4), x);
  EXPECT_EQ(none.norm(), 0.0);
}

TEST(SampledGram, MatchesDenseOperator) {
  Rng rng(2);
  for (Index n3 : {4, 5}) {
    FsmEstimate u = init_random_fsm(8, 2, n3, 3 + n3);
    SampleMask mask = gen_mask(8, n3, MaskKind::Entries, 0.5, 10 + n3);
    const RMatrix a = dense_sampled_operator(u, mask);
    const RMatrix w = random_weights(2, n3, rng);
    const RMatrix want = unvec(a.transpose() * (a * vec(w)), 2, n3);
    const CMatrix got = apply_sampled_gram(u, mask, fft::forward_lateral(w));
    EXPECT_LE((got - fft::forward_lateral(want)).norm(), 1e-10 * fft::forward_lateral(want).norm());
  }
}

TEST(SolveWeightsCgd, ExactUnderFullObservation) {
  Rng rng(3);
  FsmEstimate u = init_random_fsm(10, 3, 6, 5);
  const RMatrix w0 = random_weights(3, 6, rng);
  const Tensor3 v = slice_from(u, w0);
  WeightSolve s = solve_weights_cgd(u, v, SampleMask::full(MaskKind::Entries, 10, 6));
  EXPECT_LE((RMatrix(s.weights.canonical().lateral(0)) - w0).norm(), 1e-8 * w0.norm());
  EXPECT_LE(s.iterations, 2);
}

TEST(SolveWeightsCgd, EmptyMask) {
  Rng rng(4);
  FsmEstimate u = init_random_fsm(8, 2, 4, 6);
  const Tensor3 v = oracle::random_tensor(8, 1, 4, rng);
  WeightSolve s = solve_weights_cgd(u, v, SampleMask::none(MaskKind::Entries, 8, 4));
  EXPECT_EQ(s.iterations, 0);
  EXPECT_EQ(s.weights.spectral.norm(), 0.0);
}

TEST(SolveWeightsCgd, MatchesDenseLeastSquares) {
  Rng rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    FsmEstimate u = init_random_fsm(8, 2, 4, 100 + trial);
    SampleMask mask = gen_mask(8, 4, MaskKind::Entries, 0.5, 200 + trial);
    const Tensor3 v = oracle::random_tensor(8, 1, 4, rng);
    const RMatrix a = dense_sampled_operator(u, mask);
    const Eigen::VectorXd want = a.colPivHouseholderQr().solve(masked_vec(v, mask));
    WeightSolve s = solve_weights_cgd(u, v, mask);
    const RMatrix got = s.weights.canonical().lateral(0);
    EXPECT_LE((vec(got) - want).norm(), 1e-6 * want.norm()) << "trial " << trial;
    EXPECT_LE(s.relative_residual, 1e-9);
  }
}

TEST(SolveWeightsCgd, RespectsIterationCap) {
  Rng rng(6);
  FsmEstimate u = init_random_fsm(20, 4, 8, 7);
  SampleMask mask = gen_mask(20, 8, MaskKind::Entries, 0.3, 8);
  const Tensor3 v = oracle::random_tensor(20, 1, 8, rng);
  WeightSolve s = solve_weights_cgd(u, v, mask, {1e-14, 3});
  EXPECT_EQ(s.iterations, 3);
  EXPECT_GT(s.relative_residual, 1e-14);
  EXPECT_THROW(solve_weights_cgd(u, v, mask, {0.0, 10}), std::invalid_argument);
  EXPECT_THROW(solve_weights_cgd(u, v, mask, {1e-9, 0}), std::invalid_argument);
}

TEST(SolveWeightsCgd, ShapeChecks) {
  FsmEstimate u = init_random_fsm(8, 2, 4, 1);
  EXPECT_THROW(solve_weights_cgd(u, Tensor3(8, 2, 4), SampleMask::full(MaskKind::Entries, 8, 4)), DimensionMismatch);
  EXPECT_THROW(solve_weights_cgd(u, Tensor3(8, 1, 4), SampleMask::full(MaskKind::Entries, 7, 4)), DimensionMismatch);
}

TEST(GradientTerms, ZeroForInSpanSlice) {
  Rng rng(7);
  FsmEstimate u = init_random_fsm(9, 2, 5, 9);
  const Tensor3 v = slice_from(u, random_weights(2, 5, rng));
  const SampleMask full = SampleMask::full(MaskKind::Entries, 9, 5);
  const WeightSolve s = solve_weights_cgd(u, v, full);
  const GradientTerms g = compute_gradient_terms(u, v, full, s.weights);
  EXPECT_LE(g.rho.norm(), 1e-10 * frobenius_norm(v));
  EXPECT_LE(g.residual_norm, 1e-10 * frobenius_norm(v));
}

TEST(GradientTerms, RhoIsOrthogonalToBasis) {
  Rng rng(8);
  for (int trial = 0; trial < 5; ++trial) {
    FsmEstimate u = init_random_fsm(12, 3, 6, 30 + trial);
    const Tensor3 v = oracle::random_tensor(12, 1, 6, rng);
    const SampleMask mask = gen_mask(12, 6, MaskKind::Entries, 0.5, 40 + trial);
    const GradientTerms g = compute_gradient_terms(u, v, mask, solve_weights_cgd(u, v, mask).weights);
    for (Index k = 0; k < u.stored_slices(); ++k) EXPECT_LE((u.slice(k).adjoint() * g.rho.col(k)).norm(), 1e-10 * (1 + g.rho.norm()));
  }
}

TEST(GradientTerms, MatchFiniteDifferences) {
  Rng rng(9);
  for (int trial = 0; trial < 5; ++trial) {
    const Index n3 = 5 + trial % 2;
    FsmEstimate u = init_random_fsm(10, 2, n3, 50 + trial);
    const Tensor3 v = oracle::random_tensor(10, 1, n3, rng);
    const SampleMask mask = gen_mask(10, n3, MaskKind::Entries, 0.5, 60 + trial);
    const WeightSlice w = solve_weights_cgd(u, v, mask).weights;
    const GradientTerms g = compute_gradient_terms(u, v, mask, w);
    for (int dir = 0; dir < 10; ++dir) {
      const Index k = dir % u.stored_slices();
      const CMatrix d = gradcheck::random_tangent(u, k, rng);
      const gradcheck::Comparison cmp = gradcheck::compare_direction(u, v, mask, w, g, k, d);
      EXPECT_LE(cmp.relative_error(), 1e-5) << "trial " << trial << " slice " << k;
    }
  }
}

TEST(GeodesicUpdate, ZeroDirectionLeavesBasis) {
  FsmEstimate u = init_random_fsm(8, 2, 4, 11);
  const SpectralTensor before = u.spectral();
  GeodesicInfo info = geodesic_update(u, CMatrix::Zero(8, 3), CMatrix::Ones(2, 3));
  for (std::size_t n = 0; n < before.data().size(); ++n) EXPECT_EQ(before.data()[n], u.spectral().data()[n]);
  for (double t : info.theta) EXPECT_EQ(t, 0.0);
  EXPECT_THROW(geodesic_update(u, CMatrix::Zero(8, 2), CMatrix::Ones(2, 3)), DimensionMismatch);
}

TEST(GeodesicUpdate, GreedyStepFitsAFullyObservedSlice) {
  Rng rng(10);
  for (int trial = 0; trial < 5; ++trial) {
    FsmEstimate u = init_random_fsm(12, 3, 6, 70 + trial);
    const Tensor3 v = oracle::random_tensor(12, 1, 6, rng);
    const SampleMask full = SampleMask::full(MaskKind::Entries, 12, 6);
    const double loss_before = compute_gradient_terms(u, v, full, solve_weights_cgd(u, v, full).weights).residual_norm;
    StepOutput out = toucan_step(u, v, full);
    EXPECT_LE(u.orthonormality_error(), 1e-10);
    for (double t : out.report.theta) {
      EXPECT_GE(t, 0.0);
      EXPECT_LT(t, std::numbers::pi / 2);
    }
    const double loss_after = compute_gradient_terms(u, v, full, solve_weights_cgd(u, v, full).weights).residual_norm;
    EXPECT_LT(loss_after, loss_before);
    EXPECT_LE(loss_after, 1e-10 * frobenius_norm(v));
  }
}

TEST(GeodesicUpdate, DescentUnderPartialObservation) {
  Rng rng(11);
  int decreased = 0;
  for (int trial = 0; trial < 20; ++trial) {
    FsmEstimate u = init_random_fsm(15, 2, 6, 80 + trial);
    const Tensor3 v = oracle::random_tensor(15, 1, 6, rng);
    const SampleMask mask = gen_mask(15, 6, MaskKind::Entries, 0.7, 90 + trial);
    const double before = compute_gradient_terms(u, v, mask, solve_weights_cgd(u, v, mask).weights).residual_norm;
    toucan_step(u, v, mask);
    const double after = compute_gradient_terms(u, v, mask, solve_weights_cgd(u, v, mask).weights).residual_norm;
    if (after < before) ++decreased;
  }
  EXPECT_EQ(decreased, 20);
}

TEST(ToucanStep, InSpanSliceIsAFixedPoint) {
  Rng rng(12);
  FsmEstimate u = init_random_fsm(9, 3, 4, 13);
  const Tensor3 v = slice_from(u, random_weights(3, 4, rng));
  const SpectralTensor before = u.spectral();
  StepOutput out = toucan_step(u, v, SampleMask::full(MaskKind::Entries, 9, 4), {}, 5);
  EXPECT_EQ(out.report.t, 5);
  EXPECT_LE(out.report.residual_norm, 1e-10 * frobenius_norm(v));
  double drift = 0.0;
  for (std::size_t n = 0; n < before.data().size(); ++n) drift = std::max(drift, std::abs(before.data()[n] - u.spectral().data()[n]));
  EXPECT_LE(drift, 1e-10);
}

TEST(ToucanStep, EmptyMaskSkips) {
  FsmEstimate u = init_random_fsm(6, 2, 4, 3);
  StepOutput out = toucan_step(u, Tensor3(6, 1, 4), SampleMask::none(MaskKind::Entries, 6, 4));
  EXPECT_TRUE(out.report.skipped);
  EXPECT_EQ(out.report.cg_iters, 0);
}

TEST(ToucanStep, ReportFields) {
  Rng rng(13);
  FsmEstimate u = init_random_fsm(20, 3, 7, 15);
  const Tensor3 v = oracle::random_tensor(20, 1, 7, rng);
  StepOutput out = toucan_step(u, v, gen_mask(20, 7, MaskKind::Entries, 0.5, 1), {1e-9, 300});
  EXPECT_GT(out.report.cg_iters, 0);
  EXPECT_LE(out.report.cg_iters, 300);
  EXPECT_EQ(out.report.theta.size(), 4u);
  EXPECT_GE(out.report.wall_time, 0.0);
  EXPECT_GT(out.report.residual_norm, 0.0);
}

TEST(SolveWeightsPinv, AllTubesIsProjection) {
  Rng rng(14);
  FsmEstimate u = init_random_fsm(9, 3, 6, 17);
  const Tensor3 v = oracle::random_tensor(9, 1, 6, rng);
  const WeightSlice w = solve_weights_pinv(u, v, SampleMask::full(MaskKind::Tubes, 9, 6));
  const CMatrix vbar = fft::forward_lateral(v.lateral(0));
  for (Index k = 0; k < u.stored_slices(); ++k) EXPECT_LE((w.spectral.col(k) - u.slice(k).adjoint() * vbar.col(k)).norm(), 1e-10 * vbar.norm());
  EXPECT_THROW(solve_weights_pinv(u, v, SampleMask::full(MaskKind::Entries, 9, 6)), std::invalid_argument);
}

TEST(SolveWeightsPinv, RecoversKnownWeights) {
  Rng rng(15);
  FsmEstimate u = init_random_fsm(12, 3, 5, 19);
  const RMatrix w0 = random_weights(3, 5, rng);
  const Tensor3 v = slice_from(u, w0);
  const WeightSlice w = solve_weights_pinv(u, v, SampleMask::from_tubes(12, 5, {1, 4, 7, 10}));
  EXPECT_LE((RMatrix(w.canonical().lateral(0)) - w0).norm(), 1e-8 * w0.norm());
}

TEST(SolveWeightsPinv, AgreesWithCgdOnExpandedMask) {
  Rng rng(16);
  for (int trial = 0; trial < 5; ++trial) {
    FsmEstimate u = init_random_fsm(12, 3, 6, 120 + trial);
    const Tensor3 v = oracle::random_tensor(12, 1, 6, rng);
    const SampleMask tubes = gen_mask(12, 6, MaskKind::Tubes, 0.6, 130 + trial);
    if (tubes.size() < 3) continue;
    const WeightSlice p = solve_weights_pinv(u, v, tubes);
    const WeightSlice c = solve_weights_cgd(u, v, tubes.as_entries()).weights;
    EXPECT_LE((p.spectral - c.spectral).norm(), 1e-6 * p.spectral.norm());
  }
}

TEST(SolveWeightsPinv, UnderdeterminedIsMinimumNorm) {
  Rng rng(17);
  FsmEstimate u = init_random_fsm(10, 3, 4, 21);
  const Tensor3 v = oracle::random_tensor(10, 1, 4, rng);
  const SampleMask two = SampleMask::from_tubes(10, 4, {2, 6});
  const WeightSlice w = solve_weights_pinv(u, v, two);
  EXPECT_TRUE(w.spectral.allFinite());
  const CMatrix vbar = fft::forward_lateral(v.lateral(0));
  for (Index k = 0; k < u.stored_slices(); ++k) {
    const CMatrix rows = u.slice(k)(two.rows(), Eigen::all);
    const CVector fit = rows * w.spectral.col(k);
    EXPECT_LE((fit - CVector(vbar.col(k)(two.rows()))).norm(), 1e-10 * vbar.norm());
    // Minimum norm: no component in the null space of the sampled rows.
    Eigen::FullPivLU<CMatrix> lu(rows);
    const CMatrix null = lu.kernel();
    EXPECT_LE((null.adjoint() * w.spectral.col(k)).norm(), 1e-10 * (1 + w.spectral.norm()));
  }
}

TEST(ToucanTubeStep, InSpanAllTubesNoUpdate) {
  Rng rng(18);
  FsmEstimate u = init_random_fsm(9, 2, 5, 23);
  const Tensor3 v = slice_from(u, random_weights(2, 5, rng));
  const SpectralTensor before = u.spectral();
  StepOutput out = toucan_tube_step(u, v, SampleMask::full(MaskKind::Tubes, 9, 5));
  EXPECT_LE(out.report.residual_norm, 1e-10 * frobenius_norm(v));
  for (std::size_t n = 0; n < before.data().size(); ++n) EXPECT_LE(std::abs(before.data()[n] - u.spectral().data()[n]), 1e-10);
  EXPECT_THROW(toucan_tube_step(u, v, SampleMask::full(MaskKind::Entries, 9, 5)), std::invalid_argument);
}

TEST(ToucanTubeStep, KeepsOrthonormality) {
  Rng rng(19);
  FsmEstimate u = init_random_fsm(15, 3, 6, 25);
  for (int t = 0; t < 50; ++t) {
    toucan_tube_step(u, oracle::random_tensor(15, 1, 6, rng), gen_mask(15, 6, MaskKind::Tubes, 0.5, 300 + t), t);
    EXPECT_LE(u.orthonormality_error(), 1e-10);
  }
}

TEST(RunStream, NoiselessFullObservationSpansTheData) {
  StreamSpec s;
  s.n1 = 15;
  s.n3 = 6;
  s.rank = 3;
  s.steps = 150;
  s.change_period = 0;
  s.sample_rate = 1.0;
  s.seed = 3;
  FsmStream stream(s);
  RunOptions opt;
  opt.keep_reports = true;
  RunResult r = run_stream(init_random_fsm(15, 3, 6, 4), stream, opt);
  EXPECT_EQ(r.steps, 150);
  EXPECT_EQ(r.reports.size(), 150u);
  EXPECT_LE(fsm_tracking_error(r.fsm, stream.truth()), 1e-10);
  EXPECT_EQ(r.fsm.state_size(), 15 * 3 * 4);
}

TEST(RunBatch, StaticCompletionConverges) {
  const Tensor3 x = gen_low_tubal_rank(20, 60, 6, 2, 5);
  const auto masks = gen_masks(60, 20, 6, MaskKind::Entries, 0.6, 5);
  RunOptions opt;
  opt.passes = 20;
  opt.keep_imputed = true;
  double last = 1.0;
  RunResult r = run_batch(init_random_fsm(20, 2, 6, 6), x, masks, opt, IgnoreStep{}, [&](Index, const FsmEstimate& u) {
    last = nrmse(complete_with_fsm(u, x, masks, Variant::Entries), x);
    return last > 1e-8;
  });
  EXPECT_LE(last, 1e-8);
  EXPECT_LT(r.passes_completed, 20);
  ASSERT_TRUE(r.imputed.has_value());
  EXPECT_EQ(r.imputed->n2(), 60);
}

TEST(RunBatch, ShuffleIsSeeded) {
  const Tensor3 x = gen_low_tubal_rank(10, 12, 4, 2, 7);
  const auto masks = gen_masks(12, 10, 4, MaskKind::Entries, 0.7, 7);
  RunOptions opt;
  opt.passes = 2;
  opt.shuffle = true;
  opt.shuffle_seed = 3;
  std::vector<Index> first, second;
  run_batch(init_random_fsm(10, 2, 4, 1), x, masks, opt, [&](const StepEvent& e) { first.push_back(e.t); });
  run_batch(init_random_fsm(10, 2, 4, 1), x, masks, opt, [&](const StepEvent& e) { second.push_back(e.t); });
  EXPECT_EQ(first, second);
  std::vector<Index> in_order(12);
  std::iota(in_order.begin(), in_order.end(), 0);
  EXPECT_NE(std::vector<Index>(first.begin(), first.begin() + 12), in_order);
  EXPECT_THROW(run_batch(init_random_fsm(10, 2, 4, 1), x, std::vector<SampleMask>(3), opt), DimensionMismatch);
}

TEST(RunBatch, TubeVariant) {
  const Tensor3 x = gen_low_tubal_rank(20, 60, 6, 2, 9);
  const auto masks = gen_masks(60, 20, 6, MaskKind::Tubes, 0.5, 9);
  RunOptions opt;
  opt.variant = Variant::Tubes;
  opt.passes = 20;
  double last = 1.0;
  run_batch(init_random_fsm(20, 2, 6, 10), x, masks, opt, IgnoreStep{}, [&](Index, const FsmEstimate& u) {
    last = nrmse(complete_with_fsm(u, x, masks, Variant::Tubes), x);
    return last > 1e-8;
  });
  EXPECT_LE(last, 1e-8);
}

TEST(Orthonormality, LongRunStaysOrthonormal) {
  Rng rng(20);
  FsmEstimate u = init_random_fsm(20, 4, 8, 27);
  for (int t = 0; t < 500; ++t) {
    toucan_step(u, oracle::random_tensor(20, 1, 8, rng), gen_mask(20, 8, MaskKind::Entries, 0.5, 400 + t), {}, t);
  }
  EXPECT_LE(u.orthonormality_error(), 1e-10);
}
