#pragma once

#include <chrono>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "doptsel/errors.hpp"
#include "doptsel/kaccess.hpp"
#include "doptsel/linalg.hpp"
#include "doptsel/matrix.hpp"
#include "doptsel/rng.hpp"

namespace doptsel {

enum class ObjectiveMode { raw, normalized };

// raw mode reports log det(K_S); normalized mode reports the expected-
// information-gain form log det(K_S) - sum_{s in S} log det(noise block s),
// which is nonnegative and monotone. Selection itself always ranks
// candidates by the raw marginal gain, which is argmax-equivalent under
// isotropic noise.
struct SelectionOptions {
  ObjectiveMode mode = ObjectiveMode::raw;
  std::vector<double> noise_logdets;  // per sensor; required for normalized mode
};

template <class Real>
struct SelectionState {
  std::vector<int> chosen;              // ordered as selected
  LowerTriangularFactor<Real> factor;   // Cholesky factor of K_S
  double objective = 0.0;               // log det(K_S)

  SelectionState(int budget, int n_steps) : factor(budget, n_steps) {}
};

struct TraceRow {
  int k = 0;            // 1-based selection round
  int chosen_index = -1;
  double objective = 0.0;
  double gain = 0.0;
  int n_evaluated = 0;
  int n_infeasible = 0;  // candidates skipped this round (failed to factorize)
  double wall_ms = 0.0;
  double mean_candidate_ms = 0.0;
};

struct SelectionTrace {
  std::vector<TraceRow> rows;
  std::string warning;  // nonempty when fewer than `budget` sensors were selectable
};

// Preallocated buffers for one candidate evaluation. Reads stage into f64
// (the storage precision); the scoring kernels run in Real. Nothing here is
// allocated after construction.
template <class Real>
struct CandidateWorkspace {
  Matrix<double> col_f64;  // budget*n_steps x n_steps
  Matrix<double> ss_f64;   // n_steps x n_steps
  Matrix<Real> y;          // budget*n_steps x n_steps, holds solved Y_s
  Matrix<Real> m;          // n_steps x n_steps, holds L_M after scoring

  CandidateWorkspace(int budget, int n_steps)
      : col_f64(budget * n_steps, n_steps),
        ss_f64(n_steps, n_steps),
        y(budget * n_steps, n_steps),
        m(n_steps, n_steps) {}
};

namespace detail {
inline double now_ms() {
  return std::chrono::duration<double, std::milli>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}
}  // namespace detail

// Scoring given already-fetched buffers: solve L_S Y = K_{S,s}, form the
// Schur complement M = K_ss - Y^T Y, factorize it, and return
// d_s = log det(M) = log det(K_{S+s}) - log det(K_S).
// On return `y` (top k*n_steps rows) holds Y_s and `m` holds L_M, exactly
// what the block update needs. O(k^2 n_steps^3) work, no allocation.
template <class Real>
double score_from_buffers(const LowerTriangularFactor<Real>& factor, ConstMatView<double> col,
                          ConstMatView<double> ss, Matrix<Real>& y, Matrix<Real>& m) {
  const int k_dim = factor.active_dim();
  MatView<Real> mv = m.view();
  copy_into(mv, ss);
  if (k_dim > 0) {
    MatView<Real> yv = y.top_rows(k_dim);
    copy_into(yv, col);
    solve_lower_triangular_in_place(factor.active(), yv);
    schur_complement(ConstMatView<Real>(mv), ConstMatView<Real>(yv), mv);
  }
  cholesky_in_place(mv);
  return logdet_from_factor(ConstMatView<Real>(mv));
}

// Fetch-and-score for candidate s against the current selection.
// Throws NotPositiveDefinite when M_s fails to factorize; the caller treats
// that candidate as infeasible for the round.
template <class Real, KAccess A>
double score_candidate(const SelectionState<Real>& state, const A& k, int s,
                       CandidateWorkspace<Real>& ws) {
  const int nt = k.n_steps();
  const int kd = static_cast<int>(state.chosen.size()) * nt;
  if (kd != state.factor.active_dim())
    throw DimensionMismatch("selection state out of sync with its factor");
  if (kd > 0) read_test_column(k, state.chosen, s, ws.col_f64.top_rows(kd));
  k.read_block(s, s, ws.ss_f64.view());
  return score_from_buffers(state.factor, ws.col_f64.top_rows(kd), ws.ss_f64.view(), ws.y,
                            ws.m);
}

namespace detail {

inline void check_candidates(std::span<const int> candidates, int n_sensors) {
  std::vector<bool> seen(static_cast<std::size_t>(n_sensors), false);
  for (int c : candidates) {
    if (c < 0 || c >= n_sensors) throw IndexOutOfRange("candidate index out of range");
    if (seen[static_cast<std::size_t>(c)]) throw InvalidConfig("duplicate candidate index");
    seen[static_cast<std::size_t>(c)] = true;
  }
}

// (gain, sensor) ordering used everywhere: larger gain wins, exact ties go
// to the lower sensor index. Keeps runs reproducible and independent of
// candidate iteration order and worker count.
inline bool better_candidate(double d, int s, double best_d, int best_s) {
  return d > best_d || (d == best_d && (best_s < 0 || s < best_s));
}

inline double reported_objective(double raw, const SelectionOptions& opts,
                                 std::span<const int> chosen) {
  if (opts.mode == ObjectiveMode::raw) return raw;
  double acc = raw;
  for (int s : chosen) acc -= opts.noise_logdets[static_cast<std::size_t>(s)];
  return acc;
}

inline void require_noise_info(const SelectionOptions& opts, int n_sensors) {
  if (opts.mode == ObjectiveMode::normalized &&
      static_cast<int>(opts.noise_logdets.size()) != n_sensors)
    throw InvalidConfig("normalized mode requires one noise log-determinant per sensor");
}

}  // namespace detail

// Materializes K_S into `out` (|S|*n_steps square window).
template <KAccess A>
void materialize_principal(const A& k, std::span<const int> s, MatView<double> out) {
  const int nt = k.n_steps();
  const int n = static_cast<int>(s.size());
  if (out.rows != n * nt || out.cols != n * nt)
    throw DimensionMismatch("materialize_principal: bad output shape");
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b) {
      MatView<double> window{out.row(a * nt) + b * nt, nt, nt, out.stride};
      k.read_block(s[static_cast<std::size_t>(a)], s[static_cast<std::size_t>(b)], window);
    }
}

// log det(K_S) by scratch factorization; `scratch` must hold |S|*n_steps
// rows/cols. Used by the exact and random baselines and by oracles.
template <KAccess A>
double logdet_of_principal(const A& k, std::span<const int> s, Matrix<double>& scratch) {
  const int dim = static_cast<int>(s.size()) * k.n_steps();
  MatView<double> window{scratch.data(), dim, dim, scratch.cols()};
  materialize_principal(k, s, window);
  cholesky_in_place(window);
  return logdet_from_factor(ConstMatView<double>(window));
}

// Sequential greedy D-optimal selection with the block Cholesky update:
// each round scores every remaining candidate via triangular solve + Schur
// complement against the shared factor, then appends the winner's
// (Y, L_M) so no factorization is ever repeated.
template <class Real, KAccess A>
std::pair<SelectionState<Real>, SelectionTrace> greedy_select(
    const A& k, std::span<const int> candidates, int budget,
    const SelectionOptions& opts = {}) {
  const int nt = k.n_steps();
  detail::check_candidates(candidates, k.n_sensors());
  detail::require_noise_info(opts, k.n_sensors());
  if (budget < 0) throw InvalidConfig("budget must be nonnegative");

  SelectionState<Real> state(std::max(budget, 1), nt);
  SelectionTrace trace;
  if (budget > static_cast<int>(candidates.size()))
    trace.warning = "budget exceeds candidate count; selecting all candidates";
  const int effective_budget = std::min<int>(budget, static_cast<int>(candidates.size()));

  std::vector<int> remaining(candidates.begin(), candidates.end());
  CandidateWorkspace<Real> ws_cur(std::max(budget, 1), nt);
  CandidateWorkspace<Real> ws_best(std::max(budget, 1), nt);

  for (int round = 1; round <= effective_budget; ++round) {
    const double t0 = detail::now_ms();
    double best_d = -std::numeric_limits<double>::infinity();
    int best_s = -1;
    int n_eval = 0;
    int n_infeasible = 0;
    for (int s : remaining) {
      ++n_eval;
      double d;
      try {
        d = score_candidate(state, k, s, ws_cur);
      } catch (const NotPositiveDefinite&) {
        ++n_infeasible;  // skipped for this round only
        continue;
      }
      if (detail::better_candidate(d, s, best_d, best_s)) {
        best_d = d;
        best_s = s;
        std::swap(ws_cur, ws_best);
      }
    }
    if (best_s < 0) {
      if (state.chosen.empty()) throw InfeasibleRound(round);
      trace.warning = "no feasible candidates remain; returning partial selection";
      break;
    }
    const int kd = state.factor.active_dim();
    state.factor.append_block_column(ConstMatView<Real>(ws_best.y.top_rows(kd)),
                                     ws_best.m.view());
    state.chosen.push_back(best_s);
    state.objective = logdet_from_factor(state.factor.active());
    remaining.erase(std::find(remaining.begin(), remaining.end(), best_s));

    const double wall = detail::now_ms() - t0;
    TraceRow row;
    row.k = round;
    row.chosen_index = best_s;
    row.objective = detail::reported_objective(state.objective, opts, state.chosen);
    row.gain = opts.mode == ObjectiveMode::raw
                   ? best_d
                   : best_d - opts.noise_logdets[static_cast<std::size_t>(best_s)];
    row.n_evaluated = n_eval;
    row.n_infeasible = n_infeasible;
    row.wall_ms = wall;
    row.mean_candidate_ms = n_eval > 0 ? wall / n_eval : 0.0;
    trace.rows.push_back(row);
  }
  return {std::move(state), std::move(trace)};
}

// Refactorizing baseline: identical selection contract to greedy_select, but
// every candidate is scored by building the full augmented test matrix and
// factorizing it from scratch, O(k^3 n_steps^3) per candidate.
template <class Real, KAccess A>
std::pair<SelectionState<Real>, SelectionTrace> naive_select(
    const A& k, std::span<const int> candidates, int budget,
    const SelectionOptions& opts = {}) {
  const int nt = k.n_steps();
  detail::check_candidates(candidates, k.n_sensors());
  detail::require_noise_info(opts, k.n_sensors());
  if (budget < 0) throw InvalidConfig("budget must be nonnegative");

  SelectionState<Real> state(std::max(budget, 1), nt);
  SelectionTrace trace;
  if (budget > static_cast<int>(candidates.size()))
    trace.warning = "budget exceeds candidate count; selecting all candidates";
  const int effective_budget = std::min<int>(budget, static_cast<int>(candidates.size()));
  const int cap = std::max(budget, 1) * nt;

  Matrix<Real> pristine(cap, cap);  // K_S, kept unfactorized
  Matrix<Real> work(cap, cap);      // per-candidate scratch, destroyed by Cholesky
  Matrix<double> col_f64(cap, nt);
  Matrix<double> ss_f64(nt, nt);
  std::vector<int> remaining(candidates.begin(), candidates.end());
  double logdet_prev = 0.0;

  auto fill_augmented = [&](MatView<Real> dst, int kd, int s) {
    // dst window is (kd + nt)^2; top-left kd^2 comes from pristine
    for (int r = 0; r < kd; ++r) {
      const Real* src = pristine.view().row(r);
      Real* d = dst.row(r);
      for (int c = 0; c < kd; ++c) d[c] = src[c];
    }
    if (kd > 0) read_test_column(k, state.chosen, s, col_f64.top_rows(kd));
    k.read_block(s, s, ss_f64.view());
    for (int r = 0; r < kd; ++r) {
      const double* src = col_f64.view().row(r);
      Real* d = dst.row(r);
      for (int b = 0; b < nt; ++b) {
        d[kd + b] = static_cast<Real>(src[b]);
        dst(kd + b, r) = static_cast<Real>(src[b]);
      }
    }
    for (int a = 0; a < nt; ++a)
      for (int b = 0; b < nt; ++b) dst(kd + a, kd + b) = static_cast<Real>(ss_f64(a, b));
  };

  for (int round = 1; round <= effective_budget; ++round) {
    const double t0 = detail::now_ms();
    const int kd = static_cast<int>(state.chosen.size()) * nt;
    double best_d = -std::numeric_limits<double>::infinity();
    int best_s = -1;
    int n_eval = 0;
    int n_infeasible = 0;
    for (int s : remaining) {
      ++n_eval;
      MatView<Real> window{work.data(), kd + nt, kd + nt, cap};
      fill_augmented(window, kd, s);
      double d;
      try {
        cholesky_in_place(window);
        d = logdet_from_factor(ConstMatView<Real>(window)) - logdet_prev;
      } catch (const NotPositiveDefinite&) {
        ++n_infeasible;
        continue;
      }
      if (detail::better_candidate(d, s, best_d, best_s)) {
        best_d = d;
        best_s = s;
      }
    }
    if (best_s < 0) {
      if (state.chosen.empty()) throw InfeasibleRound(round);
      trace.warning = "no feasible candidates remain; returning partial selection";
      break;
    }
    {
      // extend pristine K_S with the winner's row/column/diagonal
      MatView<Real> window{pristine.data(), kd + nt, kd + nt, cap};
      fill_augmented(window, kd, best_s);
    }
    state.chosen.push_back(best_s);
    logdet_prev += best_d;
    remaining.erase(std::find(remaining.begin(), remaining.end(), best_s));

    const double wall = detail::now_ms() - t0;
    TraceRow row;
    row.k = round;
    row.chosen_index = best_s;
    row.n_evaluated = n_eval;
    row.n_infeasible = n_infeasible;
    row.wall_ms = wall;
    row.mean_candidate_ms = n_eval > 0 ? wall / n_eval : 0.0;
    row.gain = opts.mode == ObjectiveMode::raw
                   ? best_d
                   : best_d - opts.noise_logdets[static_cast<std::size_t>(best_s)];
    row.objective = detail::reported_objective(logdet_prev, opts, state.chosen);
    trace.rows.push_back(row);
  }

  // publish the factor and the exact objective for the final set
  if (!state.chosen.empty()) {
    const int kd = static_cast<int>(state.chosen.size()) * nt;
    state.factor.load_from_spd(ConstMatView<Real>{pristine.data(), kd, kd, cap});
    state.objective = logdet_from_factor(state.factor.active());
  }
  return {std::move(state), std::move(trace)};
}

// Exhaustive D-optimal baseline over all size-budget subsets, maximizing the
// normalized objective. Ties go to the lexicographically smallest subset.
// Guarded to ~1e6 subsets.
template <class Real, KAccess A>
SelectionState<Real> exact_select(const A& k, std::span<const int> candidates, int budget,
                                  std::span<const double> noise_logdets = {}) {
  const int n = static_cast<int>(candidates.size());
  const int nt = k.n_steps();
  detail::check_candidates(candidates, k.n_sensors());
  if (budget < 0 || budget > n) throw InvalidConfig("budget must be within 0..|C|");

  double n_subsets = 1.0;
  for (int i = 0; i < budget; ++i) n_subsets = n_subsets * (n - i) / (i + 1);
  if (n_subsets > 1e6)
    throw TooLarge("exact_select would enumerate " + std::to_string(n_subsets) + " subsets");

  std::vector<int> sorted(candidates.begin(), candidates.end());
  std::sort(sorted.begin(), sorted.end());

  SelectionState<Real> state(std::max(budget, 1), nt);
  if (budget == 0) return state;

  Matrix<double> scratch(budget * nt, budget * nt);
  std::vector<int> pick(static_cast<std::size_t>(budget));
  std::vector<int> subset(static_cast<std::size_t>(budget));
  for (int i = 0; i < budget; ++i) pick[static_cast<std::size_t>(i)] = i;

  double best_value = -std::numeric_limits<double>::infinity();
  std::vector<int> best_subset;
  double best_raw = 0.0;
  while (true) {
    for (int i = 0; i < budget; ++i)
      subset[static_cast<std::size_t>(i)] =
          sorted[static_cast<std::size_t>(pick[static_cast<std::size_t>(i)])];
    double value;
    bool feasible = true;
    double raw = 0.0;
    try {
      raw = logdet_of_principal(k, subset, scratch);
      value = raw;
      if (!noise_logdets.empty())
        for (int s : subset) value -= noise_logdets[static_cast<std::size_t>(s)];
    } catch (const NotPositiveDefinite&) {
      feasible = false;
      value = -std::numeric_limits<double>::infinity();
    }
    if (feasible && value > best_value) {
      best_value = value;
      best_subset = subset;
      best_raw = raw;
    }
    // next lexicographic combination
    int i = budget - 1;
    while (i >= 0 && pick[static_cast<std::size_t>(i)] == i + n - budget) --i;
    if (i < 0) break;
    ++pick[static_cast<std::size_t>(i)];
    for (int j = i + 1; j < budget; ++j)
      pick[static_cast<std::size_t>(j)] = pick[static_cast<std::size_t>(j - 1)] + 1;
  }
  if (best_subset.empty()) throw AllInfeasible("every size-budget subset failed to factorize");

  state.chosen = best_subset;
  Matrix<double> full(budget * nt, budget * nt);
  materialize_principal(k, best_subset, full.view());
  Matrix<Real> full_r(budget * nt, budget * nt);
  copy_into(full_r.view(), full.view());
  state.factor.load_from_spd(full_r.view());
  state.objective = best_raw;
  return state;
}

// Objective values of uniformly drawn size-budget subsets; deterministic in
// the seed. Values are normalized when noise log-determinants are supplied.
template <KAccess A>
std::vector<double> random_baseline(const A& k, std::span<const int> candidates, int budget,
                                    int n_samples, std::uint64_t seed,
                                    std::span<const double> noise_logdets = {}) {
  detail::check_candidates(candidates, k.n_sensors());
  if (n_samples < 1) throw InvalidConfig("n_samples must be >= 1");
  if (budget < 0 || budget > static_cast<int>(candidates.size()))
    throw InvalidConfig("budget must be within 0..|C|");
  Rng rng(seed);
  Matrix<double> scratch(budget * k.n_steps(), budget * k.n_steps());
  std::vector<double> values;
  values.reserve(static_cast<std::size_t>(n_samples));
  std::vector<int> subset(static_cast<std::size_t>(budget));
  for (int sample = 0; sample < n_samples; ++sample) {
    const std::vector<int> picks =
        rng.sample_without_replacement(static_cast<int>(candidates.size()), budget);
    for (int i = 0; i < budget; ++i)
      subset[static_cast<std::size_t>(i)] = candidates[static_cast<std::size_t>(
          picks[static_cast<std::size_t>(i)])];
    double value = logdet_of_principal(k, subset, scratch);
    if (!noise_logdets.empty())
      for (int s : subset) value -= noise_logdets[static_cast<std::size_t>(s)];
    values.push_back(value);
  }
  return values;
}

struct SubmodularityReport {
  int trials = 0;
  double min_slack = std::numeric_limits<double>::infinity();
};

// Randomized diminishing-returns probe for f(S) = log det(K_S): draws
// X subset of Y strictly inside C and e outside Y, and checks
// f(X+e) - f(X) >= f(Y+e) - f(Y) - tol. Throws with the witness sets on
// violation; otherwise reports the smallest observed slack.
template <KAccess A>
SubmodularityReport submodularity_probe(const A& k, int trials, std::uint64_t seed,
                                        double tol = 1e-8) {
  const int n = k.n_sensors();
  if (n < 2) throw InvalidConfig("submodularity probe needs at least 2 sensors");
  Rng rng(seed);
  Matrix<double> scratch(n * k.n_steps(), n * k.n_steps());
  SubmodularityReport report;
  report.trials = trials;

  auto f = [&](std::vector<int> s) {
    std::sort(s.begin(), s.end());
    return s.empty() ? 0.0 : logdet_of_principal(k, s, scratch);
  };
  auto with = [](std::vector<int> s, int e) {
    s.push_back(e);
    return s;
  };
  auto format = [](const std::vector<int>& s) {
    std::string out = "{";
    for (std::size_t i = 0; i < s.size(); ++i)
      out += (i ? "," : "") + std::to_string(s[i]);
    return out + "}";
  };

  for (int trial = 0; trial < trials; ++trial) {
    const int y_size = 1 + rng.uniform_int(n - 1);  // 1 .. n-1, so Y is proper
    std::vector<int> y = rng.sample_without_replacement(n, y_size);
    std::vector<int> x_pool = y;
    rng.shuffle(x_pool);
    const int x_size = rng.uniform_int(y_size + 1);  // 0 .. |Y|
    std::vector<int> x(x_pool.begin(), x_pool.begin() + x_size);

    std::vector<int> complement;
    for (int i = 0; i < n; ++i)
      if (std::find(y.begin(), y.end(), i) == y.end()) complement.push_back(i);
    const int e = complement[static_cast<std::size_t>(
        rng.uniform_int(static_cast<int>(complement.size())))];

    const double gain_x = f(with(x, e)) - f(x);
    const double gain_y = f(with(y, e)) - f(y);
    const double slack = gain_x - gain_y;
    if (slack < -tol)
      throw PropertyViolation("diminishing returns violated: X=" + format(x) +
                              " Y=" + format(y) + " e=" + std::to_string(e) +
                              " slack=" + std::to_string(slack));
    report.min_slack = std::min(report.min_slack, slack);
  }
  return report;
}

}  // namespace doptsel
