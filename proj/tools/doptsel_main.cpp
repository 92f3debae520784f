// doptsel: greedy D-optimal sensor subset selection on data-space Hessians.
//
// Subcommands:
//   build     assemble K from a problem config and write it as a KBF file
//   select    run greedy (Schur-update or refactorizing) selection on a KBF
//   evaluate  posterior-variance and random-baseline study for a selection
//   bench     complexity sweep and strong/weak scaling measurements

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "doptsel/doptsel.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;      // config or argument problems
constexpr int kExitInfeasible = 2;  // selection could not proceed
constexpr int kExitIo = 3;          // file I/O or corrupt store
constexpr int kExitAssert = 4;      // --assert / --strict check failed

std::vector<int> parse_int_list(const std::string& csv) {
  std::vector<int> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    out.push_back(std::stoi(item));
  }
  return out;
}

void write_text_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw doptsel::IoError("cannot write " + path.string());
  out << text;
}

// per-sensor noise log-determinants straight from the problem config; no
// Hessian assembly needed
std::vector<double> noise_logdets_from_config(const doptsel::ProblemConfig& cfg) {
  const doptsel::LtiProblem problem = doptsel::problem_from_config(cfg);
  const double gamma2 = problem.noise_sigma() * problem.noise_sigma();
  std::vector<double> out(static_cast<std::size_t>(cfg.n_sensors));
  for (int i = 0; i < cfg.n_sensors; ++i) {
    const double wc =
        cfg.cost_weights.empty() ? 1.0 : cfg.cost_weights[static_cast<std::size_t>(i)];
    out[static_cast<std::size_t>(i)] = cfg.n_steps * std::log(wc * gamma2);
  }
  return out;
}

int cmd_build(const std::string& config_path, const std::string& out_path) {
  const doptsel::ProblemConfig cfg = doptsel::load_problem_config(config_path);
  const doptsel::LtiProblem problem = doptsel::problem_from_config(cfg);
  const doptsel::WeightSpec weights = doptsel::weights_from_config(cfg);
  const doptsel::DataSpaceHessian k = doptsel::assemble_k(problem, &weights);
  doptsel::write_kbf(k, out_path);
  std::cout << "wrote " << out_path << ": n_sensors=" << k.n_sensors()
            << " n_steps=" << k.n_steps() << " bytes="
            << doptsel::kbf_file_bytes(k.n_sensors(), k.n_steps()) << "\n";
  return kExitOk;
}

struct SelectArgs {
  std::string kbf_path;
  std::string out_dir = ".";
  std::string mode = "schur";
  std::string precision = "f64";
  std::string pipeline = "on";
  std::string config_path;  // optional, enables normalized reporting
  int budget = 0;
  int workers = 1;
  std::uint64_t seed = 0;
};

template <class Real>
int run_select(const SelectArgs& args) {
  const doptsel::KStoreReader store(args.kbf_path);
  if (args.budget < 0 || args.budget > store.n_sensors()) {
    std::cerr << "budget must be within 0.." << store.n_sensors() << "\n";
    return kExitUsage;
  }
  std::vector<int> candidates(static_cast<std::size_t>(store.n_sensors()));
  for (int i = 0; i < store.n_sensors(); ++i) candidates[static_cast<std::size_t>(i)] = i;

  std::vector<double> noise_logdets;
  if (!args.config_path.empty())
    noise_logdets = noise_logdets_from_config(doptsel::load_problem_config(args.config_path));

  doptsel::SelectionTrace trace;
  std::vector<doptsel::RoundResult> rounds;
  std::vector<int> chosen;
  std::vector<double> objective_raw;

  if (args.mode == "naive") {
    if (args.workers != 1)
      std::cout << "note: naive mode is single-threaded; ignoring --workers\n";
    auto [state, t] = doptsel::naive_select<Real>(store, candidates, args.budget);
    trace = std::move(t);
    chosen = state.chosen;
  } else {
    doptsel::ParallelOptions opts;
    opts.n_workers = args.workers;
    opts.pipeline = args.pipeline != "off";
    opts.seed = args.seed;
    auto [state, report] = doptsel::run_parallel_greedy<Real>(store, candidates, args.budget,
                                                              opts);
    trace = std::move(report.trace);
    rounds = std::move(report.rounds);
    chosen = state.chosen;
  }
  for (const doptsel::TraceRow& r : trace.rows) objective_raw.push_back(r.objective);

  fs::create_directories(args.out_dir);
  {
    std::ofstream tf(fs::path(args.out_dir) / "trace.csv");
    doptsel::write_trace_csv(tf, trace);
  }
  if (!rounds.empty()) {
    std::ofstream rf(fs::path(args.out_dir) / "timing.csv");
    doptsel::write_round_timing_csv(rf, rounds);
  }

  json sel;
  sel["kbf"] = args.kbf_path;
  sel["mode"] = args.mode;
  sel["budget"] = args.budget;
  sel["workers"] = args.workers;
  sel["seed"] = args.seed;
  sel["precision"] = args.precision;
  sel["pipeline"] = args.pipeline != "off";
  sel["n_sensors"] = store.n_sensors();
  sel["n_steps"] = store.n_steps();
  sel["chosen"] = chosen;
  sel["objective_raw"] = objective_raw;
  if (!noise_logdets.empty()) {
    std::vector<double> normalized;
    double noise_sum = 0.0;
    for (std::size_t i = 0; i < chosen.size(); ++i) {
      noise_sum += noise_logdets[static_cast<std::size_t>(chosen[i])];
      normalized.push_back(objective_raw[i] - noise_sum);
    }
    sel["objective_normalized"] = normalized;
    sel["objective_normalized_final"] = normalized.empty() ? 0.0 : normalized.back();
  } else if (args.budget == 0) {
    sel["objective_normalized"] = json::array();
    sel["objective_normalized_final"] = 0.0;
  }
  if (!trace.warning.empty()) sel["warning"] = trace.warning;
  write_text_file(fs::path(args.out_dir) / "selection.json", sel.dump(2) + "\n");
  std::cout << "selected " << chosen.size() << " sensors -> " << args.out_dir
            << "/selection.json\n";
  return kExitOk;
}

struct EvaluateArgs {
  std::string config_path;
  std::string selection_path;
  std::string out_dir = ".";
  std::string checkpoints;  // csv of k values; default all 0..B
  int samples = 100;
  std::uint64_t seed = 0;
  bool strict = false;
};

int cmd_evaluate(const EvaluateArgs& args) {
  const doptsel::ProblemConfig cfg = doptsel::load_problem_config(args.config_path);
  const doptsel::LtiProblem problem = doptsel::problem_from_config(cfg);
  if (problem.n_params() * problem.n_steps() > doptsel::kPosteriorDimLimit) {
    std::cerr << "problem too large for posterior evaluation: n_params*n_steps = "
              << problem.n_params() * problem.n_steps() << " > "
              << doptsel::kPosteriorDimLimit << "; shrink n_params or n_steps\n";
    return kExitUsage;
  }

  std::ifstream sf(args.selection_path);
  if (!sf) {
    std::cerr << "cannot open " << args.selection_path << "\n";
    return kExitIo;
  }
  json sel = json::parse(sf, nullptr, false);
  if (sel.is_discarded() || !sel.contains("chosen")) {
    std::cerr << args.selection_path << " is not a selection.json\n";
    return kExitUsage;
  }
  const std::vector<int> chosen = sel["chosen"].get<std::vector<int>>();
  const int budget = static_cast<int>(chosen.size());

  std::vector<int> checkpoints;
  if (args.checkpoints.empty())
    for (int k = 0; k <= budget; ++k) checkpoints.push_back(k);
  else {
    checkpoints = parse_int_list(args.checkpoints);
    for (int k : checkpoints)
      if (k < 0 || k > budget) {
        std::cerr << "checkpoint " << k << " outside 0.." << budget << "\n";
        return kExitUsage;
      }
  }

  fs::create_directories(args.out_dir);

  // pointwise posterior variance per checkpoint
  {
    std::ofstream vf(fs::path(args.out_dir) / "variance.csv");
    vf << std::setprecision(17);
    vf << "k";
    const int n = problem.n_params() * problem.n_steps();
    for (int i = 0; i < n; ++i) vf << ",var_" << i;
    vf << "\n";
    for (int k : checkpoints) {
      const std::span<const int> prefix(chosen.data(), static_cast<std::size_t>(k));
      const std::vector<double> variance = doptsel::pointwise_variance(problem, prefix);
      vf << k;
      for (double v : variance) vf << ',' << v;
      vf << "\n";
    }
  }

  // objective study: greedy prefixes vs random configurations
  const doptsel::WeightSpec weights = doptsel::weights_from_config(cfg);
  const doptsel::DataSpaceHessian k = doptsel::assemble_k(problem, &weights);
  const std::vector<double> noise_logdets = doptsel::noise_block_logdets(k);
  std::vector<int> candidates(static_cast<std::size_t>(k.n_sensors()));
  for (int i = 0; i < k.n_sensors(); ++i) candidates[static_cast<std::size_t>(i)] = i;

  doptsel::Matrix<double> scratch(budget * k.n_steps(), budget * k.n_steps());
  std::vector<double> greedy_normalized{0.0};
  for (int kk = 1; kk <= budget; ++kk) {
    const std::span<const int> prefix(chosen.data(), static_cast<std::size_t>(kk));
    double value = doptsel::logdet_of_principal(k, prefix, scratch);
    for (int s : prefix) value -= noise_logdets[static_cast<std::size_t>(s)];
    greedy_normalized.push_back(value);
  }
  const double greedy_value = greedy_normalized.back();

  const std::vector<double> samples = doptsel::random_baseline(
      k, candidates, budget, args.samples, args.seed, noise_logdets);
  {
    std::ofstream hf(fs::path(args.out_dir) / "histogram.csv");
    hf << std::setprecision(17) << "sample,objective_normalized\n";
    for (std::size_t i = 0; i < samples.size(); ++i) hf << i << ',' << samples[i] << "\n";
  }

  double mean = 0.0;
  double best = -std::numeric_limits<double>::infinity();
  double worst = std::numeric_limits<double>::infinity();
  int dominated = 0;
  for (double v : samples) {
    mean += v;
    best = std::max(best, v);
    worst = std::min(worst, v);
    if (greedy_value > v) ++dominated;
  }
  mean /= samples.empty() ? 1.0 : static_cast<double>(samples.size());

  json out;
  out["budget"] = budget;
  out["greedy_objective_normalized"] = greedy_value;
  out["greedy_objective_normalized_per_k"] = greedy_normalized;
  out["random_samples"] = static_cast<int>(samples.size());
  out["random_mean"] = mean;
  out["random_min"] = worst;
  out["random_max"] = best;
  out["dominated_fraction"] =
      samples.empty() ? 1.0 : static_cast<double>(dominated) / samples.size();
  write_text_file(fs::path(args.out_dir) / "evaluation.json", out.dump(2) + "\n");

  std::cout << "greedy normalized objective: " << greedy_value << "\n"
            << "random baseline mean:        " << mean << " (max " << best << ")\n"
            << "dominated " << dominated << "/" << samples.size() << " random samples\n";
  if (args.strict && budget > 0 && !(greedy_value > best)) {
    std::cerr << "--strict: greedy objective does not dominate every random sample\n";
    return kExitAssert;
  }
  return kExitOk;
}

struct BenchComplexityArgs {
  int nt = 32;
  int kmax = 100;
  int step = 5;
  int reps = 5;
  std::uint64_t mem_budget = 0;
  std::string out_path = "complexity.csv";
  bool assert_slopes = false;
};

int cmd_bench_complexity(const BenchComplexityArgs& args) {
  doptsel::ComplexityConfig cfg;
  cfg.n_steps = args.nt;
  cfg.k_max = args.kmax;
  cfg.step = args.step;
  cfg.reps = args.reps;
  cfg.mem_budget_bytes = args.mem_budget;
  const std::vector<doptsel::ComplexityRow> rows = doptsel::complexity_sweep(cfg);
  {
    std::ofstream out(args.out_path);
    doptsel::write_complexity_csv(out, rows);
  }
  const doptsel::SlopeFit fit = doptsel::fit_loglog_slopes(rows, cfg.k_max);
  std::cout << "schur slope: " << fit.schur_slope << "  naive slope: " << fit.naive_slope
            << "  (top decade of k)\n"
            << "wrote " << args.out_path << "\n";
  if (args.assert_slopes) {
    bool ok = fit.schur_valid && fit.naive_valid;
    ok = ok && fit.schur_slope >= 1.6 && fit.schur_slope <= 2.4;
    ok = ok && fit.naive_slope >= 2.5 && fit.naive_slope <= 3.5;
    for (const doptsel::ComplexityRow& r : rows)
      if (r.k >= 5 && !r.naive_oom && !r.schur_oom && !(r.schur_ms < r.naive_ms)) ok = false;
    if (!ok) {
      std::cerr << "--assert: complexity trend check failed\n";
      return kExitAssert;
    }
    std::cout << "complexity trend assertions passed\n";
  }
  return kExitOk;
}

struct BenchScalingArgs {
  std::string kbf_path;
  std::string workers = "1,2,4";
  std::string out_path = "scaling.csv";
  int round_iterate = 8;
  int per_worker = 64;
  std::uint64_t seed = 0;
  std::string pipeline = "on";
};

int cmd_bench_scaling(const BenchScalingArgs& args) {
  const doptsel::KStoreReader store(args.kbf_path);
  doptsel::ScalingConfig cfg;
  cfg.round_iterate = args.round_iterate;
  cfg.worker_counts = parse_int_list(args.workers);
  cfg.per_worker_candidates = args.per_worker;
  cfg.seed = args.seed;
  cfg.pipeline = args.pipeline != "off";
  const std::vector<doptsel::ScalingRow> rows = doptsel::strong_weak_scaling(store, cfg);
  {
    std::ofstream out(args.out_path);
    doptsel::write_scaling_csv(out, rows);
  }
  for (const doptsel::ScalingRow& r : rows)
    std::cout << r.mode << " workers=" << r.workers << " wall_ms=" << r.wall_ms
              << " efficiency=" << r.efficiency << "\n";
  std::cout << "wrote " << args.out_path << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"greedy D-optimal sensor selection on data-space Hessians"};
  app.require_subcommand(1);

  std::string build_config, build_out;
  CLI::App* build = app.add_subcommand("build", "assemble K from a config and write a KBF file");
  build->add_option("config", build_config, "problem config file")->required();
  build->add_option("out", build_out, "output .kbf path")->required();

  SelectArgs sel;
  CLI::App* select = app.add_subcommand("select", "greedy sensor selection on a KBF store");
  select->add_option("kbf", sel.kbf_path, "input .kbf file")->required();
  select->add_option("--budget", sel.budget, "number of sensors to select")->required();
  select->add_option("--workers", sel.workers, "worker count (schur mode)");
  select->add_option("--mode", sel.mode, "schur | naive")
      ->check(CLI::IsMember({"schur", "naive"}));
  select->add_option("--seed", sel.seed, "shuffle seed");
  select->add_option("--pipeline", sel.pipeline, "on | off")
      ->check(CLI::IsMember({"on", "off"}));
  select->add_option("--precision", sel.precision, "f64 | f32")
      ->check(CLI::IsMember({"f64", "f32"}));
  select->add_option("--config", sel.config_path,
                     "problem config (enables normalized objective reporting)");
  select->add_option("--out", sel.out_dir, "output directory");

  EvaluateArgs ev;
  CLI::App* evaluate =
      app.add_subcommand("evaluate", "posterior variance and random-baseline study");
  evaluate->add_option("config", ev.config_path, "problem config file")->required();
  evaluate->add_option("selection", ev.selection_path, "selection.json from select")->required();
  evaluate->add_option("--out", ev.out_dir, "output directory");
  evaluate->add_option("--samples", ev.samples, "random configurations to draw");
  evaluate->add_option("--seed", ev.seed, "baseline sampling seed");
  evaluate->add_option("--checkpoints", ev.checkpoints, "comma list of k values");
  evaluate->add_flag("--strict", ev.strict, "fail unless greedy dominates every sample");

  CLI::App* bench = app.add_subcommand("bench", "performance measurements");
  bench->require_subcommand(1);
  BenchComplexityArgs bc;
  CLI::App* complexity = bench->add_subcommand("complexity", "per-candidate cost vs iterate k");
  complexity->add_option("--nt", bc.nt, "timesteps per sensor");
  complexity->add_option("--kmax", bc.kmax, "largest iterate");
  complexity->add_option("--step", bc.step, "iterate step");
  complexity->add_option("--reps", bc.reps, "timed repetitions");
  complexity->add_option("--mem-budget", bc.mem_budget, "working-set cap in bytes (0 = none)");
  complexity->add_option("--out", bc.out_path, "output CSV path");
  complexity->add_flag("--assert", bc.assert_slopes, "fail unless slopes match the expected trends");

  BenchScalingArgs bs;
  CLI::App* scaling = bench->add_subcommand("scaling", "strong/weak scaling of one round");
  scaling->add_option("kbf", bs.kbf_path, "input .kbf file")->required();
  scaling->add_option("--round", bs.round_iterate, "iterate k for the timed round");
  scaling->add_option("--workers", bs.workers, "comma list of worker counts");
  scaling->add_option("--per-worker", bs.per_worker, "weak-scaling candidates per worker");
  scaling->add_option("--seed", bs.seed, "shuffle seed");
  scaling->add_option("--pipeline", bs.pipeline, "on | off");
  scaling->add_option("--out", bs.out_path, "output CSV path");

  CLI11_PARSE(app, argc, argv);

  try {
    if (build->parsed()) return cmd_build(build_config, build_out);
    if (select->parsed())
      return sel.precision == "f32" ? run_select<float>(sel) : run_select<double>(sel);
    if (evaluate->parsed()) return cmd_evaluate(ev);
    if (complexity->parsed()) return cmd_bench_complexity(bc);
    if (scaling->parsed()) return cmd_bench_scaling(bs);
  } catch (const doptsel::InfeasibleRound& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInfeasible;
  } catch (const doptsel::AllInfeasible& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInfeasible;
  } catch (const doptsel::CorruptFile& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const doptsel::IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}
