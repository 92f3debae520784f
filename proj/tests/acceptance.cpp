// Acceptance suite: runs every top-level criterion at its stated tolerance
// and prints one PASS/FAIL line per criterion. Exit code is the number of
// failed criteria.

#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <functional>
#include <iostream>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "doptsel/doptsel.hpp"
#include "support/generators.hpp"
#include "support/oracles.hpp"

using namespace doptsel;
using namespace std::chrono_literals;
using testsupport::all_candidates;
using testsupport::random_hessian;

namespace {

struct Failure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void require(bool ok, const std::string& msg) {
  if (!ok) throw Failure(msg);
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::vector<int> sequence_of(const SelectionTrace& trace) {
  std::vector<int> out;
  for (const TraceRow& r : trace.rows) out.push_back(r.chosen_index);
  return out;
}

// shared across criteria: the standard wave benchmark and its Hessian
const LtiProblem& benchmark() {
  static const LtiProblem p = testsupport::benchmark_problem(0);
  return p;
}
const DataSpaceHessian& benchmark_k() {
  static const DataSpaceHessian k = assemble_k(benchmark());
  return k;
}

// ---------------------------------------------------------------- criteria

// 1. score_candidate matches scratch log-determinant differences within
//    1e-8 absolute on 200 random SPD block instances, in under a minute.
std::string criterion_schur_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(1001);
  double worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const int nd = 2 + rng.uniform_int(11);  // up to 12
    const int nt = 1 + rng.uniform_int(4);   // up to 4
    const DataSpaceHessian k = random_hessian(nd, nt, 0.9, nd * nt, 5000 + trial);
    std::vector<int> order = all_candidates(nd);
    rng.shuffle(order);
    const int ksize = rng.uniform_int(nd);
    const std::vector<int> chosen(order.begin(), order.begin() + ksize);
    const int candidate = order[static_cast<std::size_t>(ksize)];

    SelectionState<double> state(nd, nt);
    CandidateWorkspace<double> ws(nd, nt);
    for (int s : chosen) {
      score_candidate(state, k, s, ws);
      state.factor.append_block_column(
          ConstMatView<double>(ws.y.top_rows(state.factor.active_dim())), ws.m.view());
      state.chosen.push_back(s);
    }
    const double d = score_candidate(state, k, candidate, ws);

    Matrix<double> scratch((ksize + 1) * nt, (ksize + 1) * nt);
    std::vector<int> with = chosen;
    with.push_back(candidate);
    const double ld_with = logdet_of_principal(k, with, scratch);
    const double ld_without =
        chosen.empty() ? 0.0 : logdet_of_principal(k, chosen, scratch);
    worst = std::max(worst, std::abs(d - (ld_with - ld_without)));
  }
  require(worst <= 1e-8, "max |schur - scratch| = " + std::to_string(worst));
  const double secs = seconds_since(t0);
  require(secs < 60.0, "took " + std::to_string(secs) + " s (budget 60 s)");
  return "max deviation " + std::to_string(worst) + ", " + std::to_string(secs) + " s";
}

// 2. Greedy and refactorizing selections produce identical index sequences
//    on 50 random instances and on the standard benchmark (budget 12).
std::string criterion_greedy_equals_naive() {
  Rng rng(1002);
  for (int trial = 0; trial < 50; ++trial) {
    const int nd = 4 + rng.uniform_int(9);  // up to 12
    const int nt = 1 + rng.uniform_int(3);
    const int budget = 1 + rng.uniform_int(nd - 1);
    const DataSpaceHessian k = random_hessian(nd, nt, 0.8, nd * nt, 6000 + trial);
    auto [gs, gt] = greedy_select<double>(k, all_candidates(nd), budget);
    auto [ns, ntr] = naive_select<double>(k, all_candidates(nd), budget);
    require(gs.chosen == ns.chosen,
            "sequence mismatch on random instance " + std::to_string(trial));
  }
  const DataSpaceHessian& k = benchmark_k();
  auto [gs, gt] = greedy_select<double>(k, all_candidates(k.n_sensors()),
                                        testsupport::kBenchmarkBudget);
  auto [ns, ntr] = naive_select<double>(k, all_candidates(k.n_sensors()),
                                        testsupport::kBenchmarkBudget);
  require(gs.chosen == ns.chosen, "sequence mismatch on the wave benchmark");
  return "50 random instances + benchmark, all sequences identical";
}

// 3. Zero diminishing-returns violations in 500 probes (slack 1e-8), and the
//    greedy value is >= (1 - 1/e) of the exact optimum on 200 instances.
std::string criterion_submodularity_guarantee() {
  const DataSpaceHessian probe_k = random_hessian(10, 3, 0.9, 30, 1003);
  const SubmodularityReport report = submodularity_probe(probe_k, 500, 1003);
  require(report.min_slack >= -1e-8, "probe slack " + std::to_string(report.min_slack));

  const double bound = 1.0 - 1.0 / std::numbers::e;
  int within95 = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const DataSpaceHessian k = random_hessian(8, 1, 0.8, 8, 7000 + trial);
    const std::vector<double> nld = noise_block_logdets(k);
    SelectionOptions opts;
    opts.mode = ObjectiveMode::normalized;
    opts.noise_logdets = nld;
    auto [gs, gt] = greedy_select<double>(k, all_candidates(8), 3, opts);
    const double greedy_value = gt.rows.back().objective;
    const SelectionState<double> ex = exact_select<double>(k, all_candidates(8), 3, nld);
    double exact_value = ex.objective;
    for (int s : ex.chosen) exact_value -= nld[static_cast<std::size_t>(s)];
    require(greedy_value >= bound * exact_value - 1e-9,
            "guarantee violated on instance " + std::to_string(trial) + ": greedy " +
                std::to_string(greedy_value) + " vs exact " + std::to_string(exact_value));
    if (greedy_value >= 0.95 * exact_value) ++within95;
  }
  return "0/500 probe violations (min slack " + std::to_string(report.min_slack) +
         "); guarantee held on 200/200; within 95% of exact on " + std::to_string(within95) +
         "/200 (reported)";
}

// 4. Data-space posterior covariance equals parameter-space direct inversion
//    within 1e-6 relative on 50 random small problems.
std::string criterion_smw_consistency() {
  Rng rng(1004);
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const int nm = 2 + rng.uniform_int(7);  // up to 8
    const int nd = 1 + rng.uniform_int(4);  // up to 4
    const int nt = 1 + rng.uniform_int(4);  // up to 4
    const LtiProblem p = make_wave_problem(nm, nd, nt, 1.0 + rng.uniform(), 0.2 + rng.uniform(),
                                           8000 + trial);
    const int subset_size = 1 + rng.uniform_int(nd);
    Rng pick(9000 + trial);
    const std::vector<int> s = pick.sample_without_replacement(nd, subset_size);

    const Matrix<double> data_space = posterior_covariance_small(p, s);

    // parameter-space oracle via Gauss-Jordan
    const int n = nm * nt;
    Matrix<double> f(static_cast<int>(s.size()) * nt, n);
    for (std::size_t si = 0; si < s.size(); ++si)
      for (int j = 0; j < nm; ++j) {
        const auto h = p.kernel(s[si], j);
        for (int t = 0; t < nt; ++t)
          for (int tp = 0; tp <= t; ++tp)
            f(static_cast<int>(si) * nt + t, j * nt + tp) =
                h[static_cast<std::size_t>(t - tp)];
      }
    Matrix<double> hess = testsupport::gj_inverse(materialize_prior(p));
    const Matrix<double> ftf = testsupport::matmul(testsupport::transpose(f), f);
    const double inv_gamma2 = 1.0 / (p.noise_sigma() * p.noise_sigma());
    for (int r = 0; r < n; ++r)
      for (int c = 0; c < n; ++c) hess(r, c) += inv_gamma2 * ftf(r, c);
    const Matrix<double> direct = testsupport::gj_inverse(hess);

    const double scale = max_abs(ConstMatView<double>(direct.view()));
    worst = std::max(worst, testsupport::max_abs_diff(data_space, direct) / scale);
  }
  require(worst <= 1e-6, "max relative deviation " + std::to_string(worst));
  return "max relative deviation " + std::to_string(worst) + " over 50 problems";
}

// 5. Per-candidate cost trends at n_steps = 32: Schur slope in [1.6, 2.4],
//    refactorizing slope in [2.5, 3.5] over the top decade, Schur strictly
//    faster for k >= 5, all within a 10-minute budget.
std::string criterion_complexity_trend() {
  const auto t0 = std::chrono::steady_clock::now();
  ComplexityConfig cfg;  // defaults: n_steps 32, k 5..100 step 5, 5 reps
  const std::vector<ComplexityRow> rows = complexity_sweep(cfg);
  const SlopeFit fit = fit_loglog_slopes(rows, cfg.k_max);
  require(fit.schur_valid && fit.naive_valid, "slope fit had too few points");
  require(fit.schur_slope >= 1.6 && fit.schur_slope <= 2.4,
          "schur slope " + std::to_string(fit.schur_slope) + " outside [1.6, 2.4]");
  require(fit.naive_slope >= 2.5 && fit.naive_slope <= 3.5,
          "naive slope " + std::to_string(fit.naive_slope) + " outside [2.5, 3.5]");
  for (const ComplexityRow& r : rows)
    if (r.k >= 5)
      require(r.schur_ms < r.naive_ms,
              "schur not faster at k = " + std::to_string(r.k));
  const double secs = seconds_since(t0);
  require(secs < 600.0, "took " + std::to_string(secs) + " s (budget 600 s)");
  std::ostringstream out;
  out << "schur slope " << fit.schur_slope << ", naive slope " << fit.naive_slope << ", "
      << secs << " s";
  return out.str();
}

// 6. Chosen sequence invariant across 1/2/4/8 workers; per-round channel
//    traffic independent of both the iterate and n_steps.
std::string criterion_parallel_determinism() {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "doptsel_acceptance";
  fs::create_directories(dir);

  std::vector<std::uint64_t> bytes_by_steps;
  for (int nt : {8, 16}) {
    const LtiProblem p = make_wave_problem(24, 16, nt, 3.0, 0.25, 17);
    const fs::path path = dir / ("det_" + std::to_string(nt) + ".kbf");
    write_kbf(assemble_k(p), path);
    const KStoreReader store(path);

    std::vector<int> reference;
    for (int workers : {1, 2, 4, 8}) {
      ParallelOptions opts;
      opts.n_workers = workers;
      opts.seed = 11;
      auto [state, report] = run_parallel_greedy<double>(
          store, all_candidates(store.n_sensors()), 8, opts);
      if (reference.empty()) reference = state.chosen;
      require(state.chosen == reference,
              "sequence changed at " + std::to_string(workers) + " workers");
      // per-round bytes: constant across rounds (k grows within the run)
      const std::uint64_t expect =
          2 * kResultWireBytes * static_cast<std::uint64_t>(workers);
      for (const RoundResult& r : report.rounds)
        require(r.bytes_exchanged == expect,
                "round bytes varied with the iterate k");
      if (workers == 4) bytes_by_steps.push_back(report.rounds[0].bytes_exchanged);
    }
  }
  require(bytes_by_steps[0] == bytes_by_steps[1], "round bytes varied with n_steps");
  return "sequences identical for workers {1,2,4,8}; per-round bytes constant in k and n_steps";
}

// 7. With 5 ms synthetic I/O and 5 ms synthetic compute per candidate over
//    100 candidates, the pipelined wall is at most 0.6x the sequential wall.
std::string criterion_pipeline_overlap() {
  const DataSpaceHessian k = random_hessian(100, 2, 0.9, 24, 1007);
  SelectionState<double> state(4, 2);
  PipelineBuffers<double> bufs(4, 2);
  const std::vector<int> shard = all_candidates(100);

  PipelineOptions opt;
  opt.io_delay = 5ms;
  opt.compute_delay = 5ms;
  opt.pipeline = false;
  const ShardEvalResult off = pipelined_evaluate(k, state, shard, bufs, opt);
  opt.pipeline = true;
  const ShardEvalResult on = pipelined_evaluate(k, state, shard, bufs, opt);

  require(on.best_s == off.best_s && on.best_d == off.best_d,
          "pipelining changed the evaluation result");
  const double ratio = on.timing.wall_ms / off.timing.wall_ms;
  require(ratio <= 0.6, "pipelined/sequential wall ratio " + std::to_string(ratio));
  std::ostringstream out;
  out << "wall ratio " << ratio << " (ideal 0.5), overlap " << on.timing.overlap;
  return out.str();
}

// 8. Every pointwise posterior variance is non-increasing in k on the wave
//    benchmark with budget 12 (slack 1e-10).
std::string criterion_variance_monotonicity() {
  const LtiProblem& p = benchmark();
  const DataSpaceHessian& k = benchmark_k();
  auto [state, trace] = greedy_select<double>(k, all_candidates(k.n_sensors()),
                                              testsupport::kBenchmarkBudget);
  std::vector<double> prev = pointwise_variance(p, {});
  for (int kk = 1; kk <= testsupport::kBenchmarkBudget; ++kk) {
    const std::span<const int> prefix(state.chosen.data(), static_cast<std::size_t>(kk));
    const std::vector<double> cur = pointwise_variance(p, prefix);
    for (std::size_t i = 0; i < cur.size(); ++i)
      require(cur[i] <= prev[i] + 1e-10,
              "variance increased at checkpoint " + std::to_string(kk) + ", entry " +
                  std::to_string(i));
    prev = cur;
  }
  return "all " + std::to_string(prev.size()) + " variances non-increasing over 12 checkpoints";
}

// 9. Greedy normalized objective beats the mean of 100 seeded random
//    configurations on the benchmark; strict dominance reported.
std::string criterion_greedy_vs_random() {
  const DataSpaceHessian& k = benchmark_k();
  const std::vector<double> nld = noise_block_logdets(k);
  SelectionOptions opts;
  opts.mode = ObjectiveMode::normalized;
  opts.noise_logdets = nld;
  auto [state, trace] = greedy_select<double>(k, all_candidates(k.n_sensors()),
                                              testsupport::kBenchmarkBudget, opts);
  const double greedy_value = trace.rows.back().objective;

  const std::vector<double> samples = random_baseline(
      k, all_candidates(k.n_sensors()), testsupport::kBenchmarkBudget, 100, 1009, nld);
  double mean = 0.0, best = -1e300;
  int dominated = 0;
  for (double v : samples) {
    mean += v;
    best = std::max(best, v);
    if (greedy_value > v) ++dominated;
  }
  mean /= static_cast<double>(samples.size());
  require(greedy_value > mean,
          "greedy " + std::to_string(greedy_value) + " <= mean " + std::to_string(mean));
  std::ostringstream out;
  out << "greedy " << greedy_value << " vs mean " << mean << " (max " << best
      << "); dominates " << dominated << "/100 (reported)";
  return out.str();
}

// 10. f32 candidate scoring selects the identical sensor sequence as f64 on
//     the standard benchmark.
std::string criterion_precision_agreement() {
  const DataSpaceHessian& k = benchmark_k();
  auto [s64, t64] = greedy_select<double>(k, all_candidates(k.n_sensors()),
                                          testsupport::kBenchmarkBudget);
  auto [s32, t32] = greedy_select<float>(k, all_candidates(k.n_sensors()),
                                         testsupport::kBenchmarkBudget);
  require(s64.chosen == s32.chosen, "f32 selection diverged from f64");
  return "identical 12-sensor sequence in f32 and f64";
}

// 11. All-ones weights reproduce the unweighted K bitwise; a zero mask over
//     a parameter region equals removing those kernels (1e-12).
std::string criterion_weighting_masking() {
  const LtiProblem& p = benchmark();
  const DataSpaceHessian& plain = benchmark_k();

  WeightSpec ones;
  ones.cost_weights.assign(static_cast<std::size_t>(p.n_sensors()), 1.0);
  ones.mask_weights = Matrix<double>(p.n_params(), p.n_steps());
  for (int j = 0; j < p.n_params(); ++j)
    for (int t = 0; t < p.n_steps(); ++t) ones.mask_weights(j, t) = 1.0;
  const DataSpaceHessian weighted = assemble_k(p, &ones);
  require(std::memcmp(plain.raw(), weighted.raw(), plain.raw_size() * sizeof(double)) == 0,
          "all-ones weights changed K");

  WeightSpec mask;
  mask.mask_weights = Matrix<double>(p.n_params(), p.n_steps());
  for (int j = 0; j < p.n_params(); ++j)
    for (int t = 0; t < p.n_steps(); ++t)
      mask.mask_weights(j, t) = j < p.n_params() / 2 ? 0.0 : 1.0;
  const DataSpaceHessian masked = assemble_k(p, &mask);

  std::vector<double> impulse;
  impulse.reserve(static_cast<std::size_t>(p.n_sensors()) * p.n_params() * p.n_steps());
  for (int s = 0; s < p.n_sensors(); ++s)
    for (int j = 0; j < p.n_params(); ++j) {
      const auto h = p.kernel(s, j);
      for (int t = 0; t < p.n_steps(); ++t)
        impulse.push_back(j < p.n_params() / 2 ? 0.0 : h[static_cast<std::size_t>(t)]);
    }
  const LtiProblem removed(p.n_params(), p.n_sensors(), p.n_steps(), impulse, p.prior(),
                           p.noise_sigma());
  const DataSpaceHessian expect = assemble_k(removed);
  double max_diff = 0.0;
  for (std::size_t v = 0; v < expect.raw_size(); ++v)
    max_diff = std::max(max_diff, std::abs(expect.raw()[v] - masked.raw()[v]));
  require(max_diff <= 1e-12, "zero-mask equivalence deviation " + std::to_string(max_diff));
  return "all-ones bitwise identical; mask-vs-removal deviation " + std::to_string(max_diff);
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    std::function<std::string()> run;
  };
  const std::vector<Criterion> criteria{
      {1, "Schur-vs-refactorization oracle (200 instances, 1e-8)", criterion_schur_oracle},
      {2, "greedy == naive sequences (50 random + benchmark)", criterion_greedy_equals_naive},
      {3, "submodularity probes + (1-1/e) guarantee", criterion_submodularity_guarantee},
      {4, "Woodbury posterior consistency (50 problems, 1e-6)", criterion_smw_consistency},
      {5, "complexity trend: schur ~k^2, naive ~k^3 at n_steps=32", criterion_complexity_trend},
      {6, "parallel determinism + message-size bound", criterion_parallel_determinism},
      {7, "pipeline overlap <= 0.6x sequential (5ms/5ms, 100 cand)", criterion_pipeline_overlap},
      {8, "pointwise variance monotone over 12 checkpoints", criterion_variance_monotonicity},
      {9, "greedy beats the random-baseline mean (100 samples)", criterion_greedy_vs_random},
      {10, "f32/f64 selection agreement on the benchmark", criterion_precision_agreement},
      {11, "weighting bitwise + masking equivalence", criterion_weighting_masking},
  };

  int failures = 0;
  for (const Criterion& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    try {
      const std::string detail = c.run();
      std::cout << "[PASS] criterion " << c.id << ": " << c.name << " -- " << detail << " ("
                << seconds_since(t0) << " s)\n";
    } catch (const std::exception& e) {
      ++failures;
      std::cout << "[FAIL] criterion " << c.id << ": " << c.name << " -- " << e.what() << "\n";
    }
  }
  if (failures == 0)
    std::cout << "all " << criteria.size() << " acceptance criteria passed\n";
  else
    std::cout << failures << " acceptance criteria FAILED\n";
  return failures;
}
