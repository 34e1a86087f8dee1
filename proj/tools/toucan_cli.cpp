// toucan: synthetic data generation, streaming completion and experiment sweeps.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "toucan/bounds.hpp"
#include "toucan/io.hpp"
#include "toucan/metrics.hpp"
#include "toucan/parallel.hpp"
#include "toucan/toucan.hpp"
#include "toucan/tsvd.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace toucan;

namespace {

// Bad flag values or combinations; reported with exit code 2.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Common {
  std::uint64_t seed = 1;
  std::string out_dir = ".";
  int threads = 1;

  fs::path path(const std::string& name) const { return fs::path(out_dir) / name; }
};

std::ofstream open_text(const fs::path& p) {
  std::ofstream os(p, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open " + p.string() + " for writing");
  return os;
}

void write_json(const fs::path& p, const json& j) {
  auto os = open_text(p);
  os << j.dump(2) << '\n';
}

std::optional<double> elapsed_ms(bool record, std::chrono::steady_clock::time_point start) {
  if (!record) return std::nullopt;
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
}

CgdConfig make_cgd(double tol, int max_iters) {
  CgdConfig cfg{tol, max_iters};
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  return cfg;
}

std::string fmt(double x) { return format_double(x); }

// --- gen -----------------------------------------------------------------

struct GenArgs {
  Index n1 = 50, n2 = 300, n3 = 12, rank = 3;
  double rate = 0.5;
  std::string kind = "entries";
  std::string model = "tsvd";
};

void run_gen(const Common& c, const GenArgs& a) {
  const MaskKind kind = parse_mask_kind(a.kind);
  if (a.model == "tsvd" && a.rank > std::min(a.n1, a.n2)) throw UsageError("--rank must not exceed min(n1, n2)");
  const Tensor3 x = a.model == "tsvd" ? gen_low_tubal_rank(a.n1, a.n2, a.n3, a.rank, c.seed)
                                      : gen_cp(a.n1, a.n2, a.n3, a.rank, c.seed);
  const auto masks = gen_masks(a.n2, a.n1, a.n3, kind, a.rate, c.seed);

  io::write_tensor(c.path("tensor.tns"), x);
  io::write_masks(c.path("mask.csv"), masks);

  Index observed = 0;
  for (const auto& m : masks) observed += m.entry_count();
  json spec;
  spec["model"] = a.model;
  spec["n1"] = a.n1;
  spec["n2"] = a.n2;
  spec["n3"] = a.n3;
  spec["rank"] = a.rank;
  spec["sample_rate"] = a.rate;
  spec["kind"] = a.kind;
  spec["seed"] = c.seed;
  spec["observed_entries"] = observed;
  write_json(c.path("spec.json"), spec);
  std::cout << "wrote " << c.path("tensor.tns").string() << ", " << c.path("mask.csv").string() << ", "
            << c.path("spec.json").string() << " (" << observed << " observed entries)\n";
}

// --- complete ----------------------------------------------------------------

struct CompleteArgs {
  std::string input, mask, reference;
  std::string variant;
  Index rank = 3;
  Index passes = 10;
  double threshold = 1e-6;
  double cg_tol = 1e-9;
  int cg_max_iters = 300;
  bool shuffle = false;
  bool record_timing = false;
};

// Relative residual on the observed entries of every slice.
double observed_residual(const Tensor3& estimate, const Tensor3& data, const std::vector<SampleMask>& masks) {
  double num = 0.0, den = 0.0;
  for (Index t = 0; t < data.n2(); ++t) {
    RMatrix diff = estimate.lateral(t) - data.lateral(t);
    RMatrix obs = data.lateral(t);
    masks[static_cast<std::size_t>(t)].apply(diff);
    masks[static_cast<std::size_t>(t)].apply(obs);
    num += diff.squaredNorm();
    den += obs.squaredNorm();
  }
  return den > 0.0 ? std::sqrt(num / den) : std::sqrt(num);
}

void run_complete(const Common& c, const CompleteArgs& a) {
  const Tensor3 data = io::read_tensor(a.input);
  const auto masks = io::read_masks(a.mask, data.n2());
  const MaskKind kind = masks.front().kind();
  if (masks.front().n1() != data.n1() || masks.front().n3() != data.n3()) {
    throw DimensionMismatch("mask dimensions do not match the input tensor");
  }
  const Variant variant = a.variant.empty() ? (kind == MaskKind::Tubes ? Variant::Tubes : Variant::Entries)
                          : a.variant == "tubes" ? Variant::Tubes
                                                 : Variant::Entries;
  if (variant == Variant::Tubes && kind != MaskKind::Tubes) {
    throw UsageError("--variant tubes needs a tube mask; " + a.mask + " holds entries");
  }
  if (a.rank < 1 || a.rank >= data.n1()) throw UsageError("--rank must satisfy 1 <= r < n1");

  std::optional<Tensor3> reference;
  if (!a.reference.empty()) {
    reference = io::read_tensor(a.reference);
    if (!reference->same_shape(data)) throw DimensionMismatch("reference and input shapes differ");
  }

  RunOptions opt;
  opt.variant = variant;
  opt.cgd = make_cgd(a.cg_tol, a.cg_max_iters);
  opt.passes = a.passes;
  opt.shuffle = a.shuffle;
  opt.shuffle_seed = c.seed;

  auto metrics = open_text(c.path("metrics.csv"));
  metrics << kMetricsHeader << '\n';
  auto passes = open_text(c.path("passes.csv"));
  passes << "pass,nrmse,mean_cg_iters\n";

  auto step_start = std::chrono::steady_clock::now();
  double pass_cg = 0.0;
  Index pass_steps = 0;
  double final_error = 0.0;
  std::optional<Tensor3> final_estimate;

  auto on_step = [&](const StepEvent& e) {
    MetricRecord rec;
    rec.t = e.step;
    if (reference) {
      const RMatrix truth = reference->lateral(e.t);
      const double ref = truth.norm();
      const double err = (e.prediction.lateral(0) - truth).norm();
      rec.nrmse_slice = ref > 0.0 ? err / ref : err;
    } else {
      RMatrix diff = e.prediction.lateral(0) - e.slice.lateral(0);
      RMatrix obs = e.slice.lateral(0);
      e.mask.apply(diff);
      e.mask.apply(obs);
      rec.nrmse_slice = obs.norm() > 0.0 ? diff.norm() / obs.norm() : diff.norm();
    }
    rec.cg_iters = e.report.cg_iters;
    rec.wall_ms = elapsed_ms(a.record_timing, step_start);
    write_metric_row(metrics, rec);
    pass_cg += e.report.cg_iters;
    ++pass_steps;
    step_start = std::chrono::steady_clock::now();
  };
  auto on_pass = [&](Index pass, const FsmEstimate& u) {
    Tensor3 estimate = complete_with_fsm(u, data, masks, variant, opt.cgd);
    final_error = reference ? nrmse(estimate, *reference) : observed_residual(estimate, data, masks);
    passes << pass << ',' << fmt(final_error) << ',' << fmt(pass_cg / static_cast<double>(pass_steps)) << '\n';
    std::cout << "pass " << pass << ": " << (reference ? "nrmse " : "observed residual ") << final_error << '\n';
    final_estimate = std::move(estimate);
    pass_cg = 0.0;
    pass_steps = 0;
    step_start = std::chrono::steady_clock::now();
    return final_error > a.threshold;
  };

  const FsmEstimate u0 = init_random_fsm(data.n1(), a.rank, data.n3(), c.seed);
  const RunResult result = run_batch(u0, data, masks, opt, on_step, on_pass);

  io::write_tensor(c.path("imputed.tns"), *final_estimate);
  io::write_checkpoint(c.path("fsm.tns"), c.path("fsm.json"), result.fsm, result.steps, c.seed);
  std::cout << (final_error <= a.threshold ? "converged" : "stopped") << " after " << result.passes_completed
            << " pass(es); " << (reference ? "nrmse " : "observed residual ") << final_error << '\n';
}

// --- track -------------------------------------------------------------------

struct TrackArgs {
  Index n1 = 50, n3 = 10, steps = 1500, change_period = 500;
  std::vector<Index> ranks{1, 3, 5};
  double rate = 0.7;
  std::string kind = "entries";
  double cg_tol = 1e-9;
  int cg_max_iters = 300;
  bool record_timing = false;
  bool save_stream = false;
};

struct TrackSummary {
  Index rank = 0;
  std::vector<double> segment_min;
  std::vector<double> segment_last;
};

TrackSummary track_one(const Common& c, const TrackArgs& a, Index rank) {
  StreamSpec spec;
  spec.n1 = a.n1;
  spec.n3 = a.n3;
  spec.rank = rank;
  spec.steps = a.steps;
  spec.change_period = a.change_period;
  spec.sample_rate = a.rate;
  spec.kind = parse_mask_kind(a.kind);
  spec.seed = c.seed;
  spec.validate();

  RunOptions opt;
  opt.variant = spec.kind == MaskKind::Tubes ? Variant::Tubes : Variant::Entries;
  opt.cgd = make_cgd(a.cg_tol, a.cg_max_iters);

  std::optional<Tensor3> stream_data;
  std::vector<SampleMask> stream_masks;
  if (a.save_stream) stream_data.emplace(a.n1, a.steps, a.n3);

  TrackSummary summary;
  summary.rank = rank;
  auto csv = open_text(c.path("track_r" + std::to_string(rank) + ".csv"));
  csv << kMetricsHeader << '\n';
  FsmStream source(spec);
  auto step_start = std::chrono::steady_clock::now();
  const FsmEstimate u0 = init_random_fsm(a.n1, rank, a.n3, derive_seed(c.seed, static_cast<std::uint64_t>(Substream::Auxiliary), static_cast<std::uint64_t>(rank)));
  run_stream(u0, source, opt, [&](const StepEvent& e) {
    MetricRecord rec;
    rec.t = e.t;
    const double ref = e.slice.lateral(0).norm();
    const double err = (e.prediction.lateral(0) - e.slice.lateral(0)).norm();
    rec.nrmse_slice = ref > 0.0 ? err / ref : err;
    rec.fsm_error = fsm_tracking_error(e.fsm, source.truth());
    rec.cg_iters = e.report.cg_iters;
    rec.wall_ms = elapsed_ms(a.record_timing, step_start);
    write_metric_row(csv, rec);

    const auto segment = static_cast<std::size_t>(spec.fsm_id(e.t));
    if (summary.segment_min.size() <= segment) {
      summary.segment_min.push_back(*rec.fsm_error);
      summary.segment_last.push_back(*rec.fsm_error);
    }
    summary.segment_min[segment] = std::min(summary.segment_min[segment], *rec.fsm_error);
    summary.segment_last[segment] = *rec.fsm_error;
    if (stream_data) {
      stream_data->set_lateral_slice(e.t, e.slice);
      stream_masks.push_back(e.mask);
    }
    step_start = std::chrono::steady_clock::now();
  });

  if (stream_data) {
    const std::string stem = "stream_r" + std::to_string(rank);
    io::write_tensor(c.path(stem + ".tns"), *stream_data);
    io::write_masks(c.path(stem + "_mask.csv"), stream_masks);
    json j;
    j["n1"] = spec.n1;
    j["n3"] = spec.n3;
    j["rank"] = spec.rank;
    j["steps"] = spec.steps;
    j["change_period"] = spec.change_period;
    j["sample_rate"] = spec.sample_rate;
    j["kind"] = to_string(spec.kind);
    j["seed"] = spec.seed;
    write_json(c.path(stem + ".json"), j);
  }
  return summary;
}

void run_track(const Common& c, const TrackArgs& a) {
  std::vector<TrackSummary> summaries(a.ranks.size());
  parallel_for(static_cast<Index>(a.ranks.size()), [&](Index i) {
    summaries[static_cast<std::size_t>(i)] = track_one(c, a, a.ranks[static_cast<std::size_t>(i)]);
  });
  for (const auto& s : summaries) {
    std::cout << "rank " << s.rank << ": segment minimum fsm_error";
    for (double m : s.segment_min) std::cout << ' ' << m;
    std::cout << '\n';
  }
}

// --- cgd-study -----------------------------------------------------------------

struct CgdStudyArgs {
  Index n1 = 50, n2 = 200, n3 = 20, rank = 5;
  std::vector<double> rates{1.0, 0.8, 0.65, 0.5, 0.4, 0.33, 0.27, 0.22, 0.18, 0.15};
  Index trials = 20;
  double c1 = 1.0, delta = 0.1;
  double cg_tol = 1e-9;
  int cg_max_iters = 300;
  std::string bound_omega = "slice";
  bool check_instances = false;
};

struct RateResult {
  double rate = 0.0;
  Index observed = 0;
  double mean_cg = 0.0;
  int max_cg = 0;
  double kappa_bound = 0.0;
  CgdIterationBound theorem;
  double nrmse = 0.0;
  std::vector<std::pair<int, double>> instances;  // (cg_iters, kappa) per step
};

void run_cgd_study(const Common& c, const CgdStudyArgs& a) {
  if (a.rank < 1 || a.rank >= a.n1 || a.rank > a.n2) throw UsageError("--rank must satisfy 1 <= r < n1 and r <= n2");
  if (a.trials < 1) throw UsageError("--trials must be at least 1");
  for (double r : a.rates) check_sample_rate(r);
  const BoundParams params{a.c1, a.delta, a.cg_tol};
  try {
    params.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  const CgdConfig cgd = make_cgd(a.cg_tol, a.cg_max_iters);

  const Tensor3 x = gen_low_tubal_rank(a.n1, a.n2, a.n3, a.rank, c.seed);
  const FsmEstimate u0 = init_random_fsm(a.n1, a.rank, a.n3, c.seed);
  const double mu = coherence(basis_operator(u0));
  const std::uint64_t trial_seed = derive_seed(c.seed, static_cast<std::uint64_t>(Substream::Auxiliary));

  std::vector<RateResult> results(a.rates.size());
  parallel_for(static_cast<Index>(a.rates.size()), [&](Index idx) {
    RateResult& res = results[static_cast<std::size_t>(idx)];
    res.rate = a.rates[static_cast<std::size_t>(idx)];
    const auto masks = gen_masks(a.n2, a.n1, a.n3, MaskKind::Entries, res.rate, c.seed);
    for (const auto& m : masks) res.observed += m.size();

    FsmEstimate u = u0;
    double total_cg = 0.0;
    for (Index t = 0; t < a.n2; ++t) {
      const SampleMask& mask = masks[static_cast<std::size_t>(t)];
      double kappa = 0.0;
      if (a.check_instances) {
        try {
          kappa = sampled_operator_condition(u, mask);
        } catch (const SingularOperator&) {
          kappa = std::numeric_limits<double>::infinity();
        }
      }
      const StepOutput step = toucan_step(u, x.lateral_slice(t), mask, cgd, t);
      total_cg += step.report.cg_iters;
      res.max_cg = std::max(res.max_cg, step.report.cg_iters);
      if (a.check_instances) res.instances.emplace_back(step.report.cg_iters, kappa);
    }
    res.mean_cg = total_cg / static_cast<double>(a.n2);
    res.nrmse = nrmse(complete_with_fsm(u, x, masks, Variant::Entries, cgd), x);

    const auto trial_masks = gen_masks(a.trials, a.n1, a.n3, MaskKind::Entries, res.rate, trial_seed);
    try {
      res.kappa_bound = empirical_condition_bound(u0, trial_masks, a.cg_tol).bound;
    } catch (const SingularOperator&) {
      res.kappa_bound = std::numeric_limits<double>::infinity();
    }
    const double per_slice = static_cast<double>(res.observed) / static_cast<double>(a.n2);
    const Index omega = a.bound_omega == "total" ? res.observed : std::max<Index>(1, std::llround(per_slice));
    res.theorem = cgd_iteration_bound(mu, a.n1, a.n3, omega, params);
  });

  const double dof = static_cast<double>(a.n3 * a.rank * (a.n1 + a.n2 - a.rank));
  auto study = open_text(c.path("cgd_study.csv"));
  study << "rate,dof_ratio,mean_cg,kappa_bound,theorem_bound\n";
  auto recovery = open_text(c.path("cgd_recovery.csv"));
  recovery << "rate,nrmse,max_cg,tau\n";
  for (const auto& r : results) {
    study << fmt(r.rate) << ',' << fmt(dof / static_cast<double>(r.observed)) << ',' << fmt(r.mean_cg) << ','
          << fmt(r.kappa_bound) << ',';
    if (r.theorem.feasible()) study << fmt(*r.theorem.k_max);
    study << '\n';
    recovery << fmt(r.rate) << ',' << fmt(r.nrmse) << ',' << r.max_cg << ',' << fmt(r.theorem.tau) << '\n';
  }
  if (a.check_instances) {
    auto inst = open_text(c.path("cgd_instances.csv"));
    inst << "rate,t,cg_iters,kappa,kappa_iteration_bound\n";
    for (const auto& r : results) {
      for (std::size_t t = 0; t < r.instances.size(); ++t) {
        const auto [iters, kappa] = r.instances[t];
        inst << fmt(r.rate) << ',' << t << ',' << iters << ',' << fmt(kappa) << ','
             << fmt(kappa_iteration_bound(kappa, a.cg_tol)) << '\n';
      }
    }
  }
  for (const auto& r : results) {
    std::cout << "rate " << r.rate << ": mean cg " << r.mean_cg << ", kappa bound " << r.kappa_bound
              << ", theorem bound " << (r.theorem.feasible() ? fmt(*r.theorem.k_max) : "infeasible") << ", nrmse "
              << r.nrmse << '\n';
  }
}

// --- tsvd ---------------------------------------------------------------------

struct TsvdArgs {
  std::string input;
  double tol = kDefaultTubalRankTol;
};

void run_tsvd(const Common& c, const TsvdArgs& a) {
  if (a.tol < 0.0) throw UsageError("--tol must be nonnegative");
  const Tensor3 x = io::read_tensor(a.input);
  const TsvdFactors f = tsvd(x);
  io::write_tensor(c.path("U.tns"), f.U);
  io::write_tensor(c.path("S.tns"), f.S);
  io::write_tensor(c.path("V.tns"), f.V);

  const auto norms = singular_tube_norms(x);
  auto csv = open_text(c.path("tube_norms.csv"));
  csv << "index,norm\n";
  for (std::size_t i = 0; i < norms.size(); ++i) csv << i << ',' << fmt(norms[i]) << '\n';

  const Tensor3 back = reconstruct(f);
  const double ref = frobenius_norm(x);
  const double err = frobenius_norm(back - x);
  json summary;
  summary["tubal_rank"] = tubal_rank(x, a.tol);
  summary["reconstruction_error"] = err;
  summary["reconstruction_nrmse"] = ref > 0.0 ? json(err / ref) : json(nullptr);
  write_json(c.path("tsvd.json"), summary);
  std::cout << "tubal rank " << summary["tubal_rank"].get<Index>() << ", reconstruction nrmse "
            << (ref > 0.0 ? fmt(err / ref) : std::string("n/a (zero tensor)")) << '\n';
}

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--seed", c.seed, "Random seed")->capture_default_str();
  sub->add_option("--out-dir", c.out_dir, "Output directory (created if missing)")->capture_default_str();
  sub->add_option("--threads", c.threads, "Worker threads")->check(CLI::PositiveNumber)->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Streaming low-tubal-rank tensor completion"};
  app.require_subcommand(1);

  Common common;
  GenArgs gen;
  CompleteArgs complete;
  TrackArgs track;
  CgdStudyArgs study;
  TsvdArgs tsvd_args;

  const auto rate_check = CLI::Validator(
      [](std::string& s) -> std::string {
        double v = 0.0;
        try {
          v = std::stod(s);
        } catch (const std::exception&) {
          return "not a number: " + s;
        }
        return v > 0.0 && v <= 1.0 ? std::string() : "sample rate must lie in (0, 1]";
      },
      "RATE in (0,1]");

  auto* g = app.add_subcommand("gen", "Generate a low-rank tensor, masks and a spec file");
  add_common(g, common);
  g->add_option("--n1", gen.n1)->check(CLI::PositiveNumber)->capture_default_str();
  g->add_option("--n2", gen.n2)->check(CLI::PositiveNumber)->capture_default_str();
  g->add_option("--n3", gen.n3)->check(CLI::PositiveNumber)->capture_default_str();
  g->add_option("--rank", gen.rank)->check(CLI::PositiveNumber)->capture_default_str();
  g->add_option("--rate", gen.rate, "Bernoulli sampling rate")->check(rate_check)->capture_default_str();
  g->add_option("--kind", gen.kind)->check(CLI::IsMember({"entries", "tubes"}))->capture_default_str();
  g->add_option("--model", gen.model, "tsvd: t-product of Gaussian factors; cp: sum of rank-one terms")
      ->check(CLI::IsMember({"tsvd", "cp"}))
      ->capture_default_str();

  auto* cmp = app.add_subcommand("complete", "Complete a tensor from its observed entries");
  add_common(cmp, common);
  cmp->add_option("--input", complete.input, "TNS1 tensor (unobserved values are ignored)")->required();
  cmp->add_option("--mask", complete.mask, "Mask CSV")->required();
  cmp->add_option("--reference", complete.reference, "TNS1 ground truth for NRMSE");
  cmp->add_option("--variant", complete.variant, "entries or tubes (default: from the mask)")
      ->check(CLI::IsMember({"entries", "tubes"}));
  cmp->add_option("--rank", complete.rank)->check(CLI::PositiveNumber)->capture_default_str();
  cmp->add_option("--passes", complete.passes)->check(CLI::PositiveNumber)->capture_default_str();
  cmp->add_option("--threshold", complete.threshold, "Stop once the pass NRMSE is at or below this")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  cmp->add_option("--cg-tol", complete.cg_tol)->check(CLI::PositiveNumber)->capture_default_str();
  cmp->add_option("--cg-max-iters", complete.cg_max_iters)->check(CLI::PositiveNumber)->capture_default_str();
  cmp->add_flag("--shuffle", complete.shuffle, "Reshuffle the slice order every pass");
  cmp->add_flag("--record-timing", complete.record_timing, "Fill the wall_ms column");

  auto* trk = app.add_subcommand("track", "Track a free submodule that changes periodically");
  add_common(trk, common);
  trk->add_option("--n1", track.n1)->check(CLI::PositiveNumber)->capture_default_str();
  trk->add_option("--n3", track.n3)->check(CLI::PositiveNumber)->capture_default_str();
  trk->add_option("--rank", track.ranks, "One or more tubal ranks")->check(CLI::PositiveNumber)->capture_default_str();
  trk->add_option("--steps", track.steps)->check(CLI::PositiveNumber)->capture_default_str();
  trk->add_option("--change-period", track.change_period, "Slices between redraws (0: never)")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  trk->add_option("--rate", track.rate)->check(rate_check)->capture_default_str();
  trk->add_option("--kind", track.kind)->check(CLI::IsMember({"entries", "tubes"}))->capture_default_str();
  trk->add_option("--cg-tol", track.cg_tol)->check(CLI::PositiveNumber)->capture_default_str();
  trk->add_option("--cg-max-iters", track.cg_max_iters)->check(CLI::PositiveNumber)->capture_default_str();
  trk->add_flag("--record-timing", track.record_timing, "Fill the wall_ms column");
  trk->add_flag("--save-stream", track.save_stream, "Also write the generated slices and masks");

  auto* cgs = app.add_subcommand("cgd-study", "CG iteration counts and bounds across sampling rates");
  add_common(cgs, common);
  cgs->add_option("--n1", study.n1)->check(CLI::PositiveNumber)->capture_default_str();
  cgs->add_option("--n2", study.n2)->check(CLI::PositiveNumber)->capture_default_str();
  cgs->add_option("--n3", study.n3)->check(CLI::PositiveNumber)->capture_default_str();
  cgs->add_option("--rank", study.rank)->check(CLI::PositiveNumber)->capture_default_str();
  cgs->add_option("--rates", study.rates)->check(rate_check)->capture_default_str();
  cgs->add_option("--trials", study.trials, "Masks per rate for the condition number average")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cgs->add_option("--c1", study.c1)->check(CLI::PositiveNumber)->capture_default_str();
  cgs->add_option("--delta", study.delta)->check(CLI::Range(0.0, 1.0))->capture_default_str();
  cgs->add_option("--cg-tol", study.cg_tol, "CG tolerance, also the bound precision")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cgs->add_option("--cg-max-iters", study.cg_max_iters)->check(CLI::PositiveNumber)->capture_default_str();
  cgs->add_option("--bound-omega", study.bound_omega, "|Omega| in the bound: per-slice or whole batch")
      ->check(CLI::IsMember({"slice", "total"}))
      ->capture_default_str();
  cgs->add_flag("--check-instances", study.check_instances, "Write per-step condition numbers");

  auto* tsv = app.add_subcommand("tsvd", "t-SVD factors and singular tube norms");
  add_common(tsv, common);
  tsv->add_option("--input", tsvd_args.input, "TNS1 tensor")->required();
  tsv->add_option("--tol", tsvd_args.tol, "Relative tubal-rank tolerance")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    set_num_threads(common.threads);
    fs::create_directories(common.out_dir);
    if (*g) run_gen(common, gen);
    if (*cmp) run_complete(common, complete);
    if (*trk) run_track(common, track);
    if (*cgs) run_cgd_study(common, study);
    if (*tsv) run_tsvd(common, tsvd_args);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const RankOutOfRange& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
