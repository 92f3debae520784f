#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "json.hpp"

#include "doptsel/config.hpp"
#include "doptsel/kstore.hpp"
#include "doptsel/trace_io.hpp"

using namespace doptsel;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path work_dir() {
  const fs::path dir = fs::temp_directory_path() / "doptsel_cli_tests";
  fs::create_directories(dir);
  return dir;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(DOPTSEL_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p);
  out << text;
}

json read_json(const fs::path& p) {
  std::ifstream in(p);
  REQUIRE(in.good());
  return json::parse(in);
}

const char* kSmallConfig =
    "# small smoke problem\n"
    "n_params = 10\n"
    "n_sensors = 8\n"
    "n_steps = 6\n"
    "wave_speed = 2.0\n"
    "decay = 0.3\n"
    "seed = 3\n";

}  // namespace

TEST_CASE("config parsing") {
  SECTION("all keys") {
    std::istringstream in(
        "n_params = 4\nn_sensors=3\nn_steps = 5 # trailing comment\n"
        "wave_speed = 2.5\ndecay = 0.125\nseed = 99\nnoise_sigma = 0.25\n"
        "prior.kind = identity\nprior.variance = 2.0\nprior.length_scale = 3.5\n"
        "cost_weights = 1.0, 2.0, 0.5\n"
        "mask_param_weights = 1,1,0,0\n"
        "mask_step_weights = 1,1,1,0.5,0\n");
    const ProblemConfig cfg = parse_problem_config(in);
    CHECK(cfg.n_params == 4);
    CHECK(cfg.n_sensors == 3);
    CHECK(cfg.n_steps == 5);
    CHECK(cfg.wave_speed == 2.5);
    CHECK(cfg.decay == 0.125);
    CHECK(cfg.seed == 99);
    CHECK(cfg.noise_sigma == 0.25);
    CHECK(cfg.prior.kind == PriorKind::identity);
    CHECK(cfg.prior.variance == 2.0);
    CHECK(cfg.prior.length_scale == 3.5);
    CHECK(cfg.cost_weights == std::vector<double>{1.0, 2.0, 0.5});

    const WeightSpec w = weights_from_config(cfg);
    REQUIRE(w.mask_weights.rows() == 4);
    REQUIRE(w.mask_weights.cols() == 5);
    CHECK(w.mask_weights(0, 3) == 0.5);  // outer product 1 * 0.5
    CHECK(w.mask_weights(2, 0) == 0.0);
  }
  SECTION("errors name the offending key") {
    std::istringstream bad_value("n_params = banana\n");
    try {
      parse_problem_config(bad_value);
      FAIL("expected InvalidConfig");
    } catch (const InvalidConfig& e) {
      CHECK(std::string(e.what()).find("n_params") != std::string::npos);
    }
    std::istringstream unknown("mystery_key = 3\n");
    try {
      parse_problem_config(unknown);
      FAIL("expected InvalidConfig");
    } catch (const InvalidConfig& e) {
      CHECK(std::string(e.what()).find("mystery_key") != std::string::npos);
    }
  }
  SECTION("mask list length mismatch") {
    ProblemConfig cfg;
    cfg.n_params = 4;
    cfg.mask_param_weights = {1.0, 0.0};
    CHECK_THROWS_AS(weights_from_config(cfg), InvalidConfig);
  }
}

TEST_CASE("trace serialization") {
  SelectionTrace trace;
  trace.rows.push_back({.k = 1, .chosen_index = 4, .objective = -2.5, .gain = -2.5,
                        .n_evaluated = 8, .n_infeasible = 1, .wall_ms = 0.25,
                        .mean_candidate_ms = 0.03125});
  trace.rows.push_back({.k = 2, .chosen_index = 0, .objective = -1.0, .gain = 1.5,
                        .n_evaluated = 7, .n_infeasible = 0, .wall_ms = 0.14,
                        .mean_candidate_ms = 0.02});
  trace.warning = "partial";

  std::ostringstream csv;
  write_trace_csv(csv, trace);
  std::istringstream lines(csv.str());
  std::string line;
  std::getline(lines, line);
  CHECK(line == "k,chosen_index,objective,gain,n_evaluated,wall_ms");
  std::getline(lines, line);
  CHECK(line.rfind("1,4,-2.5,-2.5,8,", 0) == 0);

  const json j = trace_to_json(trace);
  REQUIRE(j["rows"].size() == 2);
  CHECK(j["rows"][1]["chosen_index"] == 0);
  CHECK(j["rows"][1]["gain"] == 1.5);
  CHECK(j["rows"][0]["n_infeasible"] == 1);
  CHECK(j["warning"] == "partial");
}

TEST_CASE("cli end-to-end workflow") {
  const fs::path dir = work_dir();
  const fs::path cfg_path = dir / "small.cfg";
  write_file(cfg_path, kSmallConfig);
  const fs::path kbf = dir / "small.kbf";

  REQUIRE(run_cli("build " + cfg_path.string() + " " + kbf.string()) == 0);
  // deterministic rebuild is bit-identical
  const fs::path kbf2 = dir / "small2.kbf";
  REQUIRE(run_cli("build " + cfg_path.string() + " " + kbf2.string()) == 0);
  {
    std::ifstream a(kbf, std::ios::binary), b(kbf2, std::ios::binary);
    std::stringstream sa, sb;
    sa << a.rdbuf();
    sb << b.rdbuf();
    CHECK(sa.str() == sb.str());
    CHECK(sa.str().size() == kbf_file_bytes(8, 6));
  }

  SECTION("select: schur vs naive, workers 1 vs 2, f32 vs f64") {
    const fs::path out_a = dir / "out_schur";
    const fs::path out_b = dir / "out_naive";
    const fs::path out_c = dir / "out_w2";
    const fs::path out_d = dir / "out_f32";
    REQUIRE(run_cli("select " + kbf.string() + " --budget 4 --out " + out_a.string() +
                    " --config " + cfg_path.string()) == 0);
    REQUIRE(run_cli("select " + kbf.string() + " --budget 4 --mode naive --out " +
                    out_b.string()) == 0);
    REQUIRE(run_cli("select " + kbf.string() + " --budget 4 --workers 2 --out " +
                    out_c.string()) == 0);
    REQUIRE(run_cli("select " + kbf.string() + " --budget 4 --precision f32 --out " +
                    out_d.string()) == 0);

    const json a = read_json(out_a / "selection.json");
    const json b = read_json(out_b / "selection.json");
    const json c = read_json(out_c / "selection.json");
    const json d = read_json(out_d / "selection.json");
    CHECK(a["chosen"] == b["chosen"]);
    CHECK(a["chosen"] == c["chosen"]);
    CHECK(a["chosen"] == d["chosen"]);
    CHECK(a["objective_normalized"].size() == 4);
    CHECK(fs::exists(out_a / "trace.csv"));
    CHECK(fs::exists(out_a / "timing.csv"));

    // trace.csv header contract
    std::ifstream tf(out_a / "trace.csv");
    std::string header;
    std::getline(tf, header);
    CHECK(header == "k,chosen_index,objective,gain,n_evaluated,wall_ms");

    SECTION("evaluate") {
      const fs::path eval_dir = dir / "eval";
      REQUIRE(run_cli("evaluate " + cfg_path.string() + " " +
                      (out_a / "selection.json").string() + " --samples 20 --out " +
                      eval_dir.string()) == 0);
      const json ev = read_json(eval_dir / "evaluation.json");
      CHECK(ev["budget"] == 4);
      CHECK(ev["random_samples"] == 20);
      CHECK(ev["greedy_objective_normalized"].get<double>() >
            ev["random_mean"].get<double>());
      REQUIRE(fs::exists(eval_dir / "variance.csv"));
      REQUIRE(fs::exists(eval_dir / "histogram.csv"));

      // variance rows: k=0 equals the prior variance; columns non-increasing
      std::ifstream vf(eval_dir / "variance.csv");
      std::string line;
      std::getline(vf, line);  // header
      std::vector<std::vector<double>> rows;
      while (std::getline(vf, line)) {
        std::vector<double> row;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
        rows.push_back(row);
      }
      REQUIRE(rows.size() == 5);  // k = 0..4
      for (std::size_t c = 1; c < rows[0].size(); ++c) {
        CHECK(rows[0][c] == Catch::Approx(1.0));  // default prior variance
        for (std::size_t r = 1; r < rows.size(); ++r)
          CHECK(rows[r][c] <= rows[r - 1][c] + 1e-10);
      }
    }
  }

  SECTION("budget 0 yields an empty selection reporting objective 0") {
    const fs::path out = dir / "out_b0";
    REQUIRE(run_cli("select " + kbf.string() + " --budget 0 --out " + out.string()) == 0);
    const json sel = read_json(out / "selection.json");
    CHECK(sel["chosen"].empty());
    CHECK(sel["objective_raw"].empty());
    CHECK(sel["objective_normalized_final"] == 0.0);
  }

  SECTION("select exit codes") {
    CHECK(run_cli("select " + kbf.string() + " --budget 99 --out " + (dir / "x").string()) ==
          1);
    const fs::path bad = dir / "bad.kbf";
    write_file(bad, "not a kbf");
    CHECK(run_cli("select " + bad.string() + " --budget 2 --out " + (dir / "y").string()) ==
          3);
  }

  SECTION("bench complexity smoke run") {
    const fs::path csv = dir / "complexity.csv";
    REQUIRE(run_cli("bench complexity --nt 4 --kmax 6 --step 2 --reps 2 --out " +
                    csv.string()) == 0);
    std::ifstream in(csv);
    std::string header;
    std::getline(in, header);
    CHECK(header == "k,naive_ms,schur_ms,naive_std_ms,schur_std_ms");
  }

  SECTION("bench complexity --assert exits nonzero when the trend cannot be measured") {
    // a 1-byte memory budget marks every row OOM, so the slope fit has no
    // points and the assertion must fail with the dedicated exit code
    const fs::path csv = dir / "complexity_oom.csv";
    CHECK(run_cli("bench complexity --nt 4 --kmax 6 --step 2 --reps 1 --mem-budget 1 "
                  "--assert --out " +
                  csv.string()) == 4);
  }

  SECTION("bench scaling smoke run") {
    const fs::path csv = dir / "scaling.csv";
    REQUIRE(run_cli("bench scaling " + kbf.string() + " --round 2 --workers 1,2 --per-worker 4 --out " +
                    csv.string()) == 0);
    std::ifstream in(csv);
    std::string header;
    std::getline(in, header);
    CHECK(header == "mode,workers,candidates,wall_ms,efficiency");
  }

  SECTION("masked build differs from unmasked") {
    const fs::path masked_cfg = dir / "masked.cfg";
    write_file(masked_cfg, std::string(kSmallConfig) +
                               "mask_param_weights = 0,0,0,0,0,1,1,1,1,1\n");
    const fs::path masked_kbf = dir / "masked.kbf";
    REQUIRE(run_cli("build " + masked_cfg.string() + " " + masked_kbf.string()) == 0);
    std::ifstream a(kbf, std::ios::binary), b(masked_kbf, std::ios::binary);
    std::stringstream sa, sb;
    sa << a.rdbuf();
    sb << b.rdbuf();
    CHECK(sa.str() != sb.str());
  }
}
