#pragma once

#include <atomic>
#include <barrier>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <exception>
#include <functional>
#include <limits>
#include <mutex>
#include <span>
#include <thread>
#include <utility>
#include <vector>

#include "doptsel/errors.hpp"
#include "doptsel/kaccess.hpp"
#include "doptsel/selector.hpp"

namespace doptsel {

struct WorkerTiming {
  double io_ms = 0.0;
  double compute_ms = 0.0;
  double wall_ms = 0.0;
  double overlap = 0.0;  // 1 - wall/(io+compute), clamped at 0
};

struct RoundResult {
  double d_max = -std::numeric_limits<double>::infinity();
  int s_star = -1;
  std::vector<WorkerTiming> workers;
  std::uint64_t bytes_exchanged = 0;
};

struct ParallelOptions {
  int n_workers = 1;
  bool pipeline = true;
  std::uint64_t seed = 0;
  ObjectiveMode mode = ObjectiveMode::raw;
  std::vector<double> noise_logdets;
  // give reads/scores an artificial fixed cost; used by the overlap
  // benchmarks to make the pipeline effect measurable
  std::chrono::microseconds synthetic_io_delay{0};
  std::chrono::microseconds synthetic_compute_delay{0};
};

struct ParallelRunReport {
  SelectionTrace trace;
  std::vector<RoundResult> rounds;
};

// Wire cost of one reduction message: a gain and a sensor index. The factor
// itself is never shipped, so per-round traffic is these messages only,
// independent of the iterate k and of n_steps.
inline constexpr std::uint64_t kResultWireBytes = sizeof(double) + sizeof(std::int32_t);

// Deterministic argmax reduction: max by gain, exact ties to the lower
// sensor index. Associative and commutative, so fold order is irrelevant.
inline std::pair<double, int> reduce_argmax(
    std::span<const std::pair<double, int>> locals) {
  double best_d = -std::numeric_limits<double>::infinity();
  int best_s = -1;
  for (const auto& [d, s] : locals) {
    if (s < 0) continue;  // infeasible local
    if (detail::better_candidate(d, s, best_d, best_s)) {
      best_d = d;
      best_s = s;
    }
  }
  if (best_s < 0) throw AllInfeasible("no feasible local result to reduce");
  return {best_d, best_s};
}

// Contiguous shards over the (already shuffled) surviving candidates;
// shard sizes differ by at most one.
struct WorkerPlan {
  int n_workers = 1;
  std::vector<std::vector<int>> shards;
};

inline WorkerPlan make_worker_plan(std::span<const int> survivors, int n_workers) {
  if (n_workers < 1) throw InvalidConfig("n_workers must be >= 1");
  WorkerPlan plan;
  plan.n_workers = n_workers;
  plan.shards.resize(static_cast<std::size_t>(n_workers));
  const int n = static_cast<int>(survivors.size());
  const int base = n / n_workers;
  const int rem = n % n_workers;
  int pos = 0;
  for (int w = 0; w < n_workers; ++w) {
    const int len = base + (w < rem ? 1 : 0);
    auto& shard = plan.shards[static_cast<std::size_t>(w)];
    shard.assign(survivors.begin() + pos, survivors.begin() + pos + len);
    pos += len;
  }
  return plan;
}

// Double-buffered staging for one worker: while candidate s is being scored
// out of one (column, diagonal) pair, the companion reader fills the other.
template <class Real>
struct PipelineBuffers {
  Matrix<double> col[2];
  Matrix<double> ss[2];
  Matrix<Real> y;
  Matrix<Real> m;

  PipelineBuffers(int budget, int n_steps)
      : col{Matrix<double>(budget * n_steps, n_steps),
            Matrix<double>(budget * n_steps, n_steps)},
        ss{Matrix<double>(n_steps, n_steps), Matrix<double>(n_steps, n_steps)},
        y(budget * n_steps, n_steps),
        m(n_steps, n_steps) {}
};

struct PipelineOptions {
  bool pipeline = true;
  std::chrono::microseconds io_delay{0};
  std::chrono::microseconds compute_delay{0};
};

struct ShardEvalResult {
  double best_d = -std::numeric_limits<double>::infinity();
  int best_s = -1;
  int n_evaluated = 0;
  int n_infeasible = 0;
  WorkerTiming timing;
};

namespace detail {

// one-slot request/response handoff between a worker and its reader thread
struct FetchHandoff {
  std::mutex mu;
  std::condition_variable cv;
  int requested_slot = -1;  // -1 idle, -2 quit
  int requested_candidate = -1;
  bool ready = false;
  double io_ms = 0.0;
  std::exception_ptr error;
};

}  // namespace detail

// Evaluates one shard of candidates against a fixed selection state. With
// the pipeline on, the read for candidate i+1 overlaps the scoring of
// candidate i; results are bitwise identical either way. Y_s / L_M of every
// candidate are discarded here: the winner is recomputed after the global
// reduction, so factor content never moves between workers.
template <class Real, KAccess A>
ShardEvalResult pipelined_evaluate(const A& k, const SelectionState<Real>& state,
                                   std::span<const int> shard, PipelineBuffers<Real>& bufs,
                                   const PipelineOptions& opt = {}) {
  ShardEvalResult result;
  const int kd = state.factor.active_dim();
  const auto chosen = std::span<const int>(state.chosen);

  auto fetch = [&](int candidate, int slot) {
    const auto t0 = std::chrono::steady_clock::now();
    if (kd > 0) read_test_column(k, chosen, candidate, bufs.col[slot].top_rows(kd));
    k.read_block(candidate, candidate, bufs.ss[slot].view());
    if (opt.io_delay.count() > 0) std::this_thread::sleep_for(opt.io_delay);
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
        .count();
  };

  auto compute = [&](int candidate, int slot) {
    const auto t0 = std::chrono::steady_clock::now();
    bool feasible = true;
    double d = 0.0;
    try {
      d = score_from_buffers(state.factor, bufs.col[slot].top_rows(kd),
                             ConstMatView<double>(bufs.ss[slot].view()), bufs.y, bufs.m);
    } catch (const NotPositiveDefinite&) {
      feasible = false;
    }
    if (opt.compute_delay.count() > 0) std::this_thread::sleep_for(opt.compute_delay);
    result.timing.compute_ms +=
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
            .count();
    ++result.n_evaluated;
    if (!feasible)
      ++result.n_infeasible;
    else if (detail::better_candidate(d, candidate, result.best_d, result.best_s)) {
      result.best_d = d;
      result.best_s = candidate;
    }
  };

  const int n = static_cast<int>(shard.size());
  if (n == 0) return result;
  const auto wall0 = std::chrono::steady_clock::now();

  if (!opt.pipeline) {
    for (int i = 0; i < n; ++i) {
      result.timing.io_ms += fetch(shard[static_cast<std::size_t>(i)], 0);
      compute(shard[static_cast<std::size_t>(i)], 0);
    }
  } else {
    detail::FetchHandoff handoff;
    std::thread reader([&] {
      std::unique_lock lock(handoff.mu);
      while (true) {
        handoff.cv.wait(lock, [&] { return handoff.requested_slot != -1; });
        if (handoff.requested_slot == -2) return;
        const int slot = handoff.requested_slot;
        const int candidate = handoff.requested_candidate;
        lock.unlock();
        double io_ms = 0.0;
        std::exception_ptr error;
        try {
          io_ms = fetch(candidate, slot);
        } catch (...) {
          error = std::current_exception();
        }
        lock.lock();
        handoff.io_ms = io_ms;
        handoff.error = error;
        handoff.requested_slot = -1;
        handoff.ready = true;
        handoff.cv.notify_all();
      }
    });
    auto request = [&](int candidate, int slot) {
      std::lock_guard lock(handoff.mu);
      handoff.requested_slot = slot;
      handoff.requested_candidate = candidate;
      handoff.ready = false;
      handoff.cv.notify_all();
    };
    auto wait_ready = [&] {
      std::unique_lock lock(handoff.mu);
      handoff.cv.wait(lock, [&] { return handoff.ready; });
      handoff.ready = false;
      if (handoff.error) std::rethrow_exception(handoff.error);
      result.timing.io_ms += handoff.io_ms;
    };
    auto shutdown = [&]() noexcept {
      {
        std::lock_guard lock(handoff.mu);
        handoff.requested_slot = -2;
        handoff.cv.notify_all();
      }
      reader.join();
    };

    try {
      request(shard[0], 0);
      for (int i = 0; i < n; ++i) {
        const int slot = i % 2;
        wait_ready();
        if (i + 1 < n) request(shard[static_cast<std::size_t>(i + 1)], 1 - slot);
        compute(shard[static_cast<std::size_t>(i)], slot);
      }
    } catch (...) {
      shutdown();
      throw;
    }
    shutdown();
  }

  result.timing.wall_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - wall0)
          .count();
  const double busy = result.timing.io_ms + result.timing.compute_ms;
  result.timing.overlap = busy > 0.0 ? std::max(0.0, 1.0 - result.timing.wall_ms / busy) : 0.0;
  return result;
}

// Desk-scale reproduction of the distributed greedy protocol: candidates are
// shuffled once (seeded), re-sharded over the workers each round, evaluated
// with double-buffered reads, reduced to a global argmax, and then every
// worker re-reads the winner column and redoes the solve/Schur/Cholesky to
// extend its own factor replica. The chosen sequence is identical for any
// worker count and with the pipeline on or off.
//
// round_hook, when set, runs on the coordinating thread after each round
// with read access to all worker factor replicas (test instrumentation).
template <class Real, KAccess A>
std::pair<SelectionState<Real>, ParallelRunReport> run_parallel_greedy(
    const A& k, std::span<const int> candidates, int budget, const ParallelOptions& opts = {},
    const std::function<void(int, const std::vector<const LowerTriangularFactor<Real>*>&)>&
        round_hook = {}) {
  const int nt = k.n_steps();
  detail::check_candidates(candidates, k.n_sensors());
  if (budget < 0) throw InvalidConfig("budget must be nonnegative");
  if (opts.n_workers < 1) throw InvalidConfig("n_workers must be >= 1");
  SelectionOptions sel_opts{opts.mode, opts.noise_logdets};
  detail::require_noise_info(sel_opts, k.n_sensors());

  const int n_workers = opts.n_workers;
  ParallelRunReport report;
  if (budget > static_cast<int>(candidates.size()))
    report.trace.warning = "budget exceeds candidate count; selecting all candidates";
  const int effective_budget = std::min<int>(budget, static_cast<int>(candidates.size()));

  // global seeded shuffle, applied once before any sharding
  std::vector<int> survivors(candidates.begin(), candidates.end());
  {
    Rng rng(opts.seed);
    rng.shuffle(survivors);
  }

  struct WorkerCtx {
    SelectionState<Real> state;
    PipelineBuffers<Real> bufs;
    ShardEvalResult local;
    std::exception_ptr error;
    WorkerCtx(int budget_, int nt_) : state(budget_, nt_), bufs(budget_, nt_) {}
  };
  std::vector<WorkerCtx> workers;
  workers.reserve(static_cast<std::size_t>(n_workers));
  for (int w = 0; w < n_workers; ++w) workers.emplace_back(std::max(budget, 1), nt);

  // Shared round state. Main writes strictly between barrier phases; the
  // phase completions order those writes against the worker reads.
  WorkerPlan plan;
  std::atomic<std::uint64_t> channel_bytes{0};
  bool stop = false;
  int winner = -1;
  const PipelineOptions pipe_opts{opts.pipeline, opts.synthetic_io_delay,
                                  opts.synthetic_compute_delay};

  std::barrier<> sync(n_workers + 1);
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(n_workers));
  for (int w = 0; w < n_workers; ++w) {
    pool.emplace_back([&, w] {
      WorkerCtx& ctx = workers[static_cast<std::size_t>(w)];
      while (true) {
        sync.arrive_and_wait();  // A: shards published (or stop requested)
        if (stop) return;
        ctx.local = ShardEvalResult{};
        try {
          ctx.local = pipelined_evaluate(k, ctx.state,
                                         plan.shards[static_cast<std::size_t>(w)], ctx.bufs,
                                         pipe_opts);
        } catch (...) {
          ctx.error = std::current_exception();
          ctx.local = ShardEvalResult{};  // post an infeasible local
        }
        channel_bytes.fetch_add(kResultWireBytes, std::memory_order_relaxed);
        sync.arrive_and_wait();  // B: locals posted
        sync.arrive_and_wait();  // C: winner published
        if (winner >= 0 && !ctx.error) {
          try {
            // winner recomputation: re-read the column, redo the forward
            // substitution + Schur complement + Cholesky, extend the replica
            const int kd = ctx.state.factor.active_dim();
            if (kd > 0)
              read_test_column(k, ctx.state.chosen, winner, ctx.bufs.col[0].top_rows(kd));
            k.read_block(winner, winner, ctx.bufs.ss[0].view());
            score_from_buffers(ctx.state.factor, ctx.bufs.col[0].top_rows(kd),
                               ConstMatView<double>(ctx.bufs.ss[0].view()), ctx.bufs.y,
                               ctx.bufs.m);
            ctx.state.factor.append_block_column(
                ConstMatView<Real>(ctx.bufs.y.top_rows(kd)), ctx.bufs.m.view());
            ctx.state.chosen.push_back(winner);
          } catch (...) {
            ctx.error = std::current_exception();
          }
        }
        sync.arrive_and_wait();  // D: recomputation done
      }
    });
  }

  std::exception_ptr worker_error;
  std::exception_ptr main_error;
  int failed_round = -1;
  std::vector<std::pair<double, int>> locals;
  locals.reserve(static_cast<std::size_t>(n_workers));
  int chosen_count = 0;
  int round = 1;

  while (true) {
    if (round > effective_budget || worker_error || main_error) stop = true;
    if (!stop) {
      try {
        plan = make_worker_plan(survivors, n_workers);
        channel_bytes.store(0, std::memory_order_relaxed);
        winner = -1;
      } catch (...) {
        main_error = std::current_exception();
        stop = true;
      }
    }
    const double t0 = detail::now_ms();
    sync.arrive_and_wait();  // A
    if (stop) break;

    sync.arrive_and_wait();  // B
    locals.clear();
    for (const WorkerCtx& ctx : workers) locals.emplace_back(ctx.local.best_d, ctx.local.best_s);
    double d_max = -std::numeric_limits<double>::infinity();
    try {
      std::tie(d_max, winner) = reduce_argmax(locals);
    } catch (const AllInfeasible&) {
      winner = -1;
    }
    // broadcast of (d_max, s*) back to every worker
    channel_bytes.fetch_add(kResultWireBytes * static_cast<std::uint64_t>(n_workers),
                            std::memory_order_relaxed);
    sync.arrive_and_wait();  // C
    sync.arrive_and_wait();  // D

    try {
      for (WorkerCtx& ctx : workers)
        if (ctx.error && !worker_error) {
          worker_error = ctx.error;
          failed_round = round;
        }
      if (!worker_error) {
        if (winner < 0) {
          if (chosen_count == 0) {
            main_error = std::make_exception_ptr(InfeasibleRound(round));
          } else {
            report.trace.warning = "no feasible candidates remain; returning partial selection";
            round = effective_budget + 1;  // graceful stop
          }
        } else {
          RoundResult rr;
          rr.d_max = d_max;
          rr.s_star = winner;
          rr.bytes_exchanged = channel_bytes.load(std::memory_order_relaxed);
          for (const WorkerCtx& ctx : workers) rr.workers.push_back(ctx.local.timing);

          ++chosen_count;
          survivors.erase(std::find(survivors.begin(), survivors.end(), winner));
          const double objective = logdet_from_factor(workers[0].state.factor.active());

          TraceRow row;
          row.k = round;
          row.chosen_index = winner;
          row.objective =
              detail::reported_objective(objective, sel_opts, workers[0].state.chosen);
          row.gain = opts.mode == ObjectiveMode::raw
                         ? d_max
                         : d_max - opts.noise_logdets[static_cast<std::size_t>(winner)];
          int evaluated = 0;
          int infeasible = 0;
          for (const WorkerCtx& ctx : workers) {
            evaluated += ctx.local.n_evaluated;
            infeasible += ctx.local.n_infeasible;
          }
          row.n_evaluated = evaluated;
          row.n_infeasible = infeasible;
          row.wall_ms = detail::now_ms() - t0;
          row.mean_candidate_ms = evaluated > 0 ? row.wall_ms / evaluated : 0.0;
          report.trace.rows.push_back(row);
          report.rounds.push_back(std::move(rr));

          if (round_hook) {
            std::vector<const LowerTriangularFactor<Real>*> factors;
            for (const WorkerCtx& ctx : workers) factors.push_back(&ctx.state.factor);
            round_hook(round, factors);
          }
          ++round;
        }
      }
    } catch (...) {
      main_error = std::current_exception();
    }
  }
  for (std::thread& t : pool) t.join();

  if (worker_error) {
    try {
      std::rethrow_exception(worker_error);
    } catch (const std::exception& e) {
      throw WorkerFailure(failed_round, e.what());
    }
  }
  if (main_error) std::rethrow_exception(main_error);

  // adopt worker 0's replica as the result
  SelectionState<Real> final_state = std::move(workers[0].state);
  if (!final_state.chosen.empty())
    final_state.objective = logdet_from_factor(final_state.factor.active());
  return {std::move(final_state), std::move(report)};
}

}  // namespace doptsel
