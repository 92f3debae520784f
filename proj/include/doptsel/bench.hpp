#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include "doptsel/errors.hpp"
#include "doptsel/kaccess.hpp"
#include "doptsel/parallel.hpp"
#include "doptsel/selector.hpp"

namespace doptsel {

struct ComplexityRow {
  int k = 0;
  double naive_ms = 0.0;
  double schur_ms = 0.0;
  double naive_std_ms = 0.0;
  double schur_std_ms = 0.0;
  bool naive_oom = false;
  bool schur_oom = false;
};

struct ComplexityConfig {
  int n_steps = 32;
  int k_max = 100;
  int step = 5;
  int reps = 5;  // timed repetitions after one warm-up
  std::uint64_t seed = 2024;
  std::size_t mem_budget_bytes = 0;  // 0 = uncapped; else mark OOM rows
};

namespace detail {

inline double mean_of(const std::vector<double>& xs) {
  double acc = 0.0;
  for (double x : xs) acc += x;
  return xs.empty() ? 0.0 : acc / static_cast<double>(xs.size());
}

inline double std_of(const std::vector<double>& xs, double mean) {
  if (xs.size() < 2) return 0.0;
  double acc = 0.0;
  for (double x : xs) acc += (x - mean) * (x - mean);
  return std::sqrt(acc / static_cast<double>(xs.size()));
}

inline double tick_ms() { return now_ms(); }

}  // namespace detail

// Working-set sizes of the two candidate-evaluation formulations at iterate
// k, used for the OOM truncation markers: the refactorizing baseline keeps
// the pristine test matrix plus the copy it destroys, the Schur path keeps
// the factor plus one test column.
inline std::size_t naive_working_set_bytes(int k, int n_steps) {
  const std::size_t dim = static_cast<std::size_t>(k + 1) * n_steps;
  return 2 * dim * dim * sizeof(double);
}
inline std::size_t schur_working_set_bytes(int k, int n_steps) {
  const std::size_t dim = static_cast<std::size_t>(k) * n_steps;
  return (dim * dim + dim * n_steps) * sizeof(double);
}

// Per-candidate scoring time of the refactorizing vs Schur-update
// formulations as the iterate k grows, on a synthetic SPD Hessian. Emits
// one row per k with mean and standard deviation over `reps` runs after one
// warm-up. A formulation whose working set exceeds the memory budget is
// marked OOM and excluded from larger k.
inline std::vector<ComplexityRow> complexity_sweep(const ComplexityConfig& cfg) {
  if (cfg.n_steps < 1 || cfg.k_max < 1 || cfg.step < 1 || cfg.reps < 1)
    throw InvalidConfig("complexity_sweep: all parameters must be >= 1");
  const int nt = cfg.n_steps;
  const SyntheticKAccess k(cfg.k_max + 1, nt, nt, 1.0, cfg.seed);

  LowerTriangularFactor<double> factor(cfg.k_max, nt);
  Matrix<double> col(cfg.k_max * nt, nt);
  Matrix<double> ss(nt, nt);
  Matrix<double> y(cfg.k_max * nt, nt);
  Matrix<double> m(nt, nt);

  std::vector<int> chosen;
  bool naive_dead = false;
  bool schur_dead = false;
  std::vector<ComplexityRow> rows;
  std::vector<double> samples;

  for (int iterate = cfg.step; iterate <= cfg.k_max; iterate += cfg.step) {
    // grow the shared factor to hold K_{0..iterate-1}
    while (static_cast<int>(chosen.size()) < iterate) {
      const int s = static_cast<int>(chosen.size());
      const int kd = s * nt;
      if (kd > 0) read_test_column(k, chosen, s, col.top_rows(kd));
      k.read_block(s, s, ss.view());
      score_from_buffers(factor, col.top_rows(kd), ss.view(), y, m);
      factor.append_block_column(ConstMatView<double>(y.top_rows(kd)), m.view());
      chosen.push_back(s);
    }

    ComplexityRow row;
    row.k = iterate;
    const int candidate = iterate;  // next unselected index
    const int kd = iterate * nt;

    // Schur formulation: triangular solve + Schur complement + Cholesky
    if (!schur_dead && cfg.mem_budget_bytes != 0 &&
        schur_working_set_bytes(iterate, nt) > cfg.mem_budget_bytes)
      schur_dead = true;
    row.schur_oom = schur_dead;
    if (!schur_dead) {
      read_test_column(k, chosen, candidate, col.top_rows(kd));
      k.read_block(candidate, candidate, ss.view());
      samples.clear();
      for (int rep = 0; rep <= cfg.reps; ++rep) {
        const double t0 = detail::tick_ms();
        score_from_buffers(factor, col.top_rows(kd), ss.view(), y, m);
        const double dt = detail::tick_ms() - t0;
        if (rep > 0) samples.push_back(dt);
      }
      row.schur_ms = detail::mean_of(samples);
      row.schur_std_ms = detail::std_of(samples, row.schur_ms);
    }

    // Refactorizing baseline: rebuild and factorize the whole test matrix
    if (!naive_dead && cfg.mem_budget_bytes != 0 &&
        naive_working_set_bytes(iterate, nt) > cfg.mem_budget_bytes)
      naive_dead = true;
    if (!naive_dead) {
      try {
        const int dim = (iterate + 1) * nt;
        Matrix<double> pristine(dim, dim);
        Matrix<double> work(dim, dim);
        std::vector<int> subset = chosen;
        subset.push_back(candidate);
        materialize_principal(k, subset, pristine.view());
        samples.clear();
        for (int rep = 0; rep <= cfg.reps; ++rep) {
          const double t0 = detail::tick_ms();
          copy_into(work.view(), pristine.view());
          cholesky_in_place(work.view());
          const double logdet = logdet_from_factor(ConstMatView<double>(work.view()));
          (void)logdet;
          const double dt = detail::tick_ms() - t0;
          if (rep > 0) samples.push_back(dt);
        }
        row.naive_ms = detail::mean_of(samples);
        row.naive_std_ms = detail::std_of(samples, row.naive_ms);
      } catch (const std::bad_alloc&) {
        naive_dead = true;
      }
    }
    row.naive_oom = naive_dead;
    rows.push_back(row);
  }
  return rows;
}

inline void write_complexity_csv(std::ostream& os, const std::vector<ComplexityRow>& rows) {
  os << "k,naive_ms,schur_ms,naive_std_ms,schur_std_ms\n";
  for (const ComplexityRow& r : rows) {
    os << r.k << ',';
    if (r.naive_oom)
      os << "oom,";
    else
      os << r.naive_ms << ',';
    if (r.schur_oom)
      os << "oom,";
    else
      os << r.schur_ms << ',';
    os << (r.naive_oom ? std::string("oom") : std::to_string(r.naive_std_ms)) << ','
       << (r.schur_oom ? std::string("oom") : std::to_string(r.schur_std_ms)) << '\n';
  }
}

struct SlopeFit {
  double naive_slope = 0.0;
  double schur_slope = 0.0;
  bool naive_valid = false;
  bool schur_valid = false;
};

// Least-squares slope of log(time) vs log(k) over the top decade of k.
inline SlopeFit fit_loglog_slopes(const std::vector<ComplexityRow>& rows, int k_max) {
  auto fit = [&](auto value, auto oom) -> std::pair<double, bool> {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    int n = 0;
    for (const ComplexityRow& r : rows) {
      if (r.k * 10 < k_max || oom(r) || value(r) <= 0.0) continue;
      const double x = std::log(static_cast<double>(r.k));
      const double y = std::log(value(r));
      sx += x;
      sy += y;
      sxx += x * x;
      sxy += x * y;
      ++n;
    }
    if (n < 2) return {0.0, false};
    return {(n * sxy - sx * sy) / (n * sxx - sx * sx), true};
  };
  SlopeFit out;
  std::tie(out.naive_slope, out.naive_valid) =
      fit([](const ComplexityRow& r) { return r.naive_ms; },
          [](const ComplexityRow& r) { return r.naive_oom; });
  std::tie(out.schur_slope, out.schur_valid) =
      fit([](const ComplexityRow& r) { return r.schur_ms; },
          [](const ComplexityRow& r) { return r.schur_oom; });
  return out;
}

struct ScalingRow {
  std::string mode;  // "strong" or "weak"
  int workers = 0;
  int candidates = 0;
  double wall_ms = 0.0;
  double efficiency = 0.0;
};

struct ScalingConfig {
  int round_iterate = 8;              // selection iterate k at which rounds are timed
  std::vector<int> worker_counts = {1, 2, 4};
  int per_worker_candidates = 64;     // weak-scaling workload per worker
  std::uint64_t seed = 0;
  bool pipeline = true;
};

namespace detail {

// one fork-join evaluation round over pre-sharded candidates; returns wall ms
template <class A, class Real>
double timed_round(const A& k, const SelectionState<Real>& state,
                   const WorkerPlan& plan, int budget_cap, bool pipeline) {
  const int nw = plan.n_workers;
  std::vector<PipelineBuffers<Real>> bufs;
  bufs.reserve(static_cast<std::size_t>(nw));
  for (int w = 0; w < nw; ++w) bufs.emplace_back(budget_cap, k.n_steps());
  PipelineOptions popt;
  popt.pipeline = pipeline;
  const double t0 = tick_ms();
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(nw));
  for (int w = 0; w < nw; ++w)
    pool.emplace_back([&, w] {
      pipelined_evaluate(k, state, plan.shards[static_cast<std::size_t>(w)],
                         bufs[static_cast<std::size_t>(w)], popt);
    });
  for (std::thread& t : pool) t.join();
  return tick_ms() - t0;
}

}  // namespace detail

// Strong scaling: fixed surviving candidate pool, one evaluation round at
// iterate `round_iterate` per worker count. Weak scaling: the pool grows as
// per_worker_candidates * workers via modulo indexing into the store.
// Efficiencies are relative to the smallest worker count.
template <KAccess A>
std::vector<ScalingRow> strong_weak_scaling(const A& k, const ScalingConfig& cfg) {
  if (cfg.worker_counts.empty()) throw InvalidConfig("worker_counts must be nonempty");
  for (std::size_t i = 0; i < cfg.worker_counts.size(); ++i) {
    if (cfg.worker_counts[i] < 1) throw InvalidConfig("worker counts must be >= 1");
    if (i > 0 && cfg.worker_counts[i] <= cfg.worker_counts[i - 1])
      throw InvalidConfig("worker counts must be strictly ascending");
  }
  if (cfg.round_iterate < 1 || cfg.round_iterate >= k.n_sensors())
    throw InvalidConfig("round_iterate must be in 1..n_sensors-1");

  // reach iterate k once; the timed rounds all evaluate against this state
  std::vector<int> all(static_cast<std::size_t>(k.n_sensors()));
  for (int i = 0; i < k.n_sensors(); ++i) all[static_cast<std::size_t>(i)] = i;
  auto [state, trace] = greedy_select<double>(k, all, cfg.round_iterate);

  std::vector<int> survivors;
  for (int i = 0; i < k.n_sensors(); ++i)
    if (std::find(state.chosen.begin(), state.chosen.end(), i) == state.chosen.end())
      survivors.push_back(i);
  Rng rng(cfg.seed);
  rng.shuffle(survivors);

  const int cap = cfg.round_iterate + 1;
  std::vector<ScalingRow> rows;

  double strong_base = 0.0;
  for (int w : cfg.worker_counts) {
    const WorkerPlan plan = make_worker_plan(survivors, w);
    const double wall = detail::timed_round(k, state, plan, cap, cfg.pipeline);
    if (rows.empty()) strong_base = wall * w;
    ScalingRow row{"strong", w, static_cast<int>(survivors.size()), wall,
                   strong_base / (wall * w)};
    rows.push_back(row);
  }

  double weak_base = 0.0;
  bool weak_first = true;
  for (int w : cfg.worker_counts) {
    const int pool_size = cfg.per_worker_candidates * w;
    const ModuloKAccess<A> virt(k, std::max(pool_size, k.n_sensors()));
    std::vector<int> pool(static_cast<std::size_t>(pool_size));
    for (int i = 0; i < pool_size; ++i) pool[static_cast<std::size_t>(i)] = i;
    rng.shuffle(pool);
    const WorkerPlan plan = make_worker_plan(pool, w);
    const double wall = detail::timed_round(virt, state, plan, cap, cfg.pipeline);
    if (weak_first) {
      weak_base = wall;
      weak_first = false;
    }
    ScalingRow row{"weak", w, pool_size, wall, weak_base / wall};
    rows.push_back(row);
  }
  return rows;
}

inline void write_scaling_csv(std::ostream& os, const std::vector<ScalingRow>& rows) {
  os << "mode,workers,candidates,wall_ms,efficiency\n";
  for (const ScalingRow& r : rows)
    os << r.mode << ',' << r.workers << ',' << r.candidates << ',' << r.wall_ms << ','
       << r.efficiency << '\n';
}

}  // namespace doptsel
