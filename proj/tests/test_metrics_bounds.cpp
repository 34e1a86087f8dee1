#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "oracles.hpp"
#include "toucan/bounds.hpp"
#include "toucan/metrics.hpp"
#include "toucan/toucan.hpp"

using namespace toucan;

TEST(Nrmse, Basics) {
  Rng rng(1);
  Tensor3 x = oracle::random_tensor(4, 3, 5, rng);
  EXPECT_EQ(nrmse(x, x), 0.0);
  EXPECT_DOUBLE_EQ(nrmse(Tensor3(4, 3, 5), x), 1.0);
  EXPECT_THROW(nrmse(x, Tensor3(4, 3, 5)), ZeroReference);
  EXPECT_THROW(nrmse(x, Tensor3(4, 3, 4)), DimensionMismatch);
}

TEST(Nrmse, LinearInPerturbation) {
  Rng rng(2);
  Tensor3 x = oracle::random_tensor(5, 4, 3, rng);
  Tensor3 e = oracle::random_tensor(5, 4, 3, rng);
  e *= 1.0 / frobenius_norm(e);
  for (double delta : {1e-6, 1e-3, 0.5}) {
    EXPECT_NEAR(nrmse(x + delta * e, x), delta / frobenius_norm(x), 1e-12);
  }
}

TEST(FsmTrackingError, IdentityAndRotation) {
  FsmEstimate u = init_random_fsm(10, 3, 6, 3);
  EXPECT_LE(fsm_tracking_error(u, u), 1e-12);

  Rng rng(4);
  const Tensor3 q = random_orthonormal_basis(3, 3, 6, rng).canonical();
  const FsmEstimate rotated = fsm_from_canonical(tprod(u.canonical(), q));
  EXPECT_LE(fsm_tracking_error(rotated, u), 1e-10);
  EXPECT_LE(fsm_tracking_error(u, rotated), 1e-10);
}

TEST(FsmTrackingError, OrthogonalLinesGiveSqrtTwo) {
  SpectralTensor a(2, 1, 1), b(2, 1, 1);
  a.slice(0)(0, 0) = 1.0;
  b.slice(0)(1, 0) = 1.0;
  EXPECT_NEAR(fsm_tracking_error(FsmEstimate(a), FsmEstimate(b)), std::sqrt(2.0), 1e-15);
}

TEST(FsmTrackingError, MatchesCanonicalProjectors) {
  FsmEstimate a = init_random_fsm(7, 2, 5, 5), b = init_random_fsm(7, 3, 5, 6);
  const Tensor3 ua = a.canonical(), ub = b.canonical();
  const Tensor3 pa = tprod(ua, conj_transpose(ua)), pb = tprod(ub, conj_transpose(ub));
  EXPECT_NEAR(fsm_tracking_error(a, b), frobenius_norm(pa - pb) / frobenius_norm(pb), 1e-12);
  EXPECT_THROW(fsm_tracking_error(a, init_random_fsm(8, 2, 5, 1)), DimensionMismatch);
}

TEST(SliceNrmseCurve, Extremes) {
  Rng rng(7);
  Tensor3 x = oracle::random_tensor(4, 6, 3, rng);
  for (const auto& rec : slice_nrmse_curve(x, x)) EXPECT_EQ(rec.nrmse_slice, 0.0);
  const auto zero = slice_nrmse_curve(Tensor3(4, 6, 3), x);
  ASSERT_EQ(zero.size(), 6u);
  for (const auto& rec : zero) EXPECT_DOUBLE_EQ(rec.nrmse_slice, 1.0);
}

TEST(SliceNrmseCurve, SpikesAtChangePoints) {
  StreamSpec s;
  s.n1 = 20;
  s.n3 = 6;
  s.rank = 2;
  s.steps = 600;
  s.change_period = 200;
  s.sample_rate = 0.8;
  s.seed = 2;
  FsmStream stream(s);
  Tensor3 truth(20, 600, 6), imputed(20, 600, 6);
  run_stream(init_random_fsm(20, 2, 6, 3), stream, RunOptions{}, [&](const StepEvent& e) {
    truth.set_lateral_slice(e.t, e.slice);
    imputed.set_lateral_slice(e.t, e.prediction);
  });
  const auto curve = slice_nrmse_curve(imputed, truth);
  for (Index change : {200, 400}) {
    const double before = curve[static_cast<std::size_t>(change - 1)].nrmse_slice;
    const double at = curve[static_cast<std::size_t>(change)].nrmse_slice;
    const double later = curve[static_cast<std::size_t>(change + 150)].nrmse_slice;
    EXPECT_GT(at, 100 * before);
    EXPECT_LT(later, 1e-2 * at);
  }
}

TEST(MetricsCsv, Format) {
  std::ostringstream os;
  MetricRecord a;
  a.t = 0;
  a.nrmse_slice = 0.5;
  a.cg_iters = 3;
  MetricRecord b = a;
  b.t = 1;
  b.fsm_error = 0.25;
  b.wall_ms = 1.5;
  write_metrics_csv(os, {a, b});
  EXPECT_EQ(os.str(), "t,nrmse,fsm_error,cg_iters,wall_ms\n0,0.5,,3,\n1,0.5,0.25,3,1.5\n");
  EXPECT_EQ(std::stod(format_double(0.1 + 0.2)), 0.1 + 0.2);
}

TEST(Coherence, Extremes) {
  RMatrix e = RMatrix::Identity(6, 2);
  EXPECT_DOUBLE_EQ(coherence(e), 1.0);
  Eigen::HouseholderQR<RMatrix> qr(RMatrix::Random(4, 4));
  RMatrix q = qr.householderQ();
  EXPECT_NEAR(coherence(q), 1.0, 1e-12);
  EXPECT_THROW(coherence(RMatrix::Constant(4, 2, 1.0)), NotOrthonormal);
}

TEST(Coherence, RandomBasisIsIncoherent) {
  // Calibrate C2 in mu <= C2 max(r, log m) / m over 100 random 200 x 5 bases.
  Rng rng(8);
  const Index m = 200, r = 5;
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    RMatrix g(m, r);
    for (Index j = 0; j < r; ++j)
      for (Index i = 0; i < m; ++i) g(i, j) = rng.normal();
    Eigen::HouseholderQR<RMatrix> qr(g);
    const RMatrix basis = qr.householderQ() * RMatrix::Identity(m, r);
    const double mu = coherence(basis);
    EXPECT_GE(mu, static_cast<double>(r) / m - 1e-12);
    EXPECT_LE(mu, 1.0);
    worst = std::max(worst, mu * m / std::max<double>(r, std::log(static_cast<double>(m))));
  }
  EXPECT_LT(worst, 8.0);
}

TEST(CgdIterationBound, Limits) {
  CgdIterationBound zero = cgd_iteration_bound(0.0, 10, 4, 20);
  ASSERT_TRUE(zero.feasible());
  EXPECT_NEAR(*zero.k_max, 0.5 * std::log(2.0 / 1e-9), 1e-12);
  EXPECT_EQ(zero.tau, 0.0);

  CgdIterationBound vacuous = cgd_iteration_bound(1.0, 50, 20, 500);
  EXPECT_FALSE(vacuous.feasible());

  const double mu = 0.01;
  CgdIterationBound b = cgd_iteration_bound(mu, 10, 10, 100000);
  const double tau = std::sqrt(100 * mu * std::log(100000.0) / 100000.0);
  EXPECT_NEAR(b.tau, tau, 1e-15);
  ASSERT_TRUE(b.feasible());
  EXPECT_NEAR(*b.k_max, 0.5 * std::sqrt((1 + tau / 0.1) / (1 - tau / 0.1)) * std::log(2e9), 1e-9);

  EXPECT_THROW(cgd_iteration_bound(0.1, 10, 4, 0), std::invalid_argument);
  EXPECT_THROW(cgd_iteration_bound(0.1, 10, 4, 5, {1.0, 1.5, 1e-9}), std::invalid_argument);
}

TEST(SampledOperator, FullMaskIsOrthonormal) {
  FsmEstimate u = init_random_fsm(8, 2, 5, 9);
  EXPECT_NEAR(sampled_operator_condition(u, SampleMask::full(MaskKind::Entries, 8, 5)), 1.0, 1e-10);
  const RMatrix b = basis_operator(u);
  EXPECT_LE((b.transpose() * b - RMatrix::Identity(10, 10)).norm(), 1e-10);
  EXPECT_THROW(sampled_operator_condition(u, SampleMask::from_entries(8, 5, {{0, 0}, {1, 1}})), SingularOperator);
}

TEST(SampledOperator, ConditionBoundsCgIterations) {
  Rng rng(10);
  for (int trial = 0; trial < 10; ++trial) {
    FsmEstimate u = init_random_fsm(12, 2, 6, 20 + trial);
    SampleMask mask = gen_mask(12, 6, MaskKind::Entries, 0.5, 30 + trial);
    const double kappa = sampled_operator_condition(u, mask);
    WeightSolve s = solve_weights_cgd(u, oracle::random_tensor(12, 1, 6, rng), mask, {1e-9, 300});
    EXPECT_LE(s.iterations, kappa_iteration_bound(kappa, 1e-9));
  }
}

TEST(EmpiricalConditionBound, GrowsAsSamplingDrops) {
  FsmEstimate u = init_random_fsm(12, 2, 6, 40);
  double previous = 0.0;
  for (double rate : {1.0, 0.8, 0.6, 0.4}) {
    ConditionStats s = empirical_condition_bound(u, gen_masks(20, 12, 6, MaskKind::Entries, rate, 41), 1e-9);
    EXPECT_EQ(s.kappas.size(), 20u);
    EXPECT_GT(s.bound, previous);
    previous = s.bound;
  }
  EXPECT_THROW(empirical_condition_bound(u, {}, 1e-9), std::invalid_argument);
}
