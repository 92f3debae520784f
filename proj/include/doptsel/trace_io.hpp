#pragma once

#include <iomanip>
#include <ostream>
#include <string>

#include "json.hpp"

#include "doptsel/parallel.hpp"
#include "doptsel/selector.hpp"

namespace doptsel {

// trace.csv: one row per selection round
inline void write_trace_csv(std::ostream& os, const SelectionTrace& trace) {
  os << "k,chosen_index,objective,gain,n_evaluated,wall_ms\n";
  os << std::setprecision(17);
  for (const TraceRow& r : trace.rows)
    os << r.k << ',' << r.chosen_index << ',' << r.objective << ',' << r.gain << ','
       << r.n_evaluated << ',' << r.wall_ms << '\n';
}

inline nlohmann::json trace_to_json(const SelectionTrace& trace) {
  nlohmann::json rows = nlohmann::json::array();
  for (const TraceRow& r : trace.rows)
    rows.push_back({{"k", r.k},
                    {"chosen_index", r.chosen_index},
                    {"objective", r.objective},
                    {"gain", r.gain},
                    {"n_evaluated", r.n_evaluated},
                    {"n_infeasible", r.n_infeasible},
                    {"wall_ms", r.wall_ms},
                    {"mean_candidate_ms", r.mean_candidate_ms}});
  nlohmann::json out{{"rows", std::move(rows)}};
  if (!trace.warning.empty()) out["warning"] = trace.warning;
  return out;
}

// timing.csv: one row per (round, worker)
inline void write_round_timing_csv(std::ostream& os, const std::vector<RoundResult>& rounds) {
  os << "round,worker,io_ms,compute_ms,wall_ms,overlap\n";
  for (std::size_t r = 0; r < rounds.size(); ++r)
    for (std::size_t w = 0; w < rounds[r].workers.size(); ++w) {
      const WorkerTiming& t = rounds[r].workers[w];
      os << (r + 1) << ',' << w << ',' << t.io_ms << ',' << t.compute_ms << ',' << t.wall_ms
         << ',' << t.overlap << '\n';
    }
}

}  // namespace doptsel
