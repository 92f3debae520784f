#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "doptsel/errors.hpp"
#include "doptsel/lti.hpp"

namespace doptsel {

// Plain-text key = value problem configuration. '#' starts a comment.
// Recognized keys:
//   n_params, n_sensors, n_steps, wave_speed, decay, seed, noise_sigma,
//   prior.kind (identity | exponential), prior.variance, prior.length_scale,
//   cost_weights          (comma list, one per sensor)
//   mask_param_weights    (comma list, one per parameter)
//   mask_step_weights     (comma list, one per timestep)
// The mask over the (param, timestep) field is the outer product of the two
// mask lists; omitted lists default to all ones.
struct ProblemConfig {
  int n_params = 16;
  int n_sensors = 8;
  int n_steps = 8;
  double wave_speed = 1.0;
  double decay = 0.25;
  std::uint64_t seed = 0;
  double noise_sigma = -1.0;  // <= 0: default 0.1 * max kernel amplitude
  PriorSpec prior;
  std::vector<double> cost_weights;
  std::vector<double> mask_param_weights;
  std::vector<double> mask_step_weights;
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::vector<double> parse_double_list(const std::string& value, const std::string& key) {
  std::vector<double> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw InvalidConfig("config key '" + key + "': bad number '" + item + "'");
    }
  }
  return out;
}

template <class T>
T parse_number(const std::string& value, const std::string& key) {
  std::stringstream ss(value);
  T out{};
  ss >> out;
  if (ss.fail() || !ss.eof()) throw InvalidConfig("config key '" + key + "': bad value '" + value + "'");
  return out;
}

}  // namespace detail

inline ProblemConfig parse_problem_config(std::istream& in) {
  ProblemConfig cfg;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw InvalidConfig("config line " + std::to_string(line_no) + ": expected key = value");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    if (key == "n_params")
      cfg.n_params = detail::parse_number<int>(value, key);
    else if (key == "n_sensors")
      cfg.n_sensors = detail::parse_number<int>(value, key);
    else if (key == "n_steps")
      cfg.n_steps = detail::parse_number<int>(value, key);
    else if (key == "wave_speed")
      cfg.wave_speed = detail::parse_number<double>(value, key);
    else if (key == "decay")
      cfg.decay = detail::parse_number<double>(value, key);
    else if (key == "seed")
      cfg.seed = detail::parse_number<std::uint64_t>(value, key);
    else if (key == "noise_sigma")
      cfg.noise_sigma = detail::parse_number<double>(value, key);
    else if (key == "prior.kind") {
      if (value == "identity")
        cfg.prior.kind = PriorKind::identity;
      else if (value == "exponential")
        cfg.prior.kind = PriorKind::exponential;
      else
        throw InvalidConfig("config key 'prior.kind': expected identity or exponential, got '" +
                            value + "'");
    } else if (key == "prior.variance")
      cfg.prior.variance = detail::parse_number<double>(value, key);
    else if (key == "prior.length_scale")
      cfg.prior.length_scale = detail::parse_number<double>(value, key);
    else if (key == "cost_weights")
      cfg.cost_weights = detail::parse_double_list(value, key);
    else if (key == "mask_param_weights")
      cfg.mask_param_weights = detail::parse_double_list(value, key);
    else if (key == "mask_step_weights")
      cfg.mask_step_weights = detail::parse_double_list(value, key);
    else
      throw InvalidConfig("unknown config key '" + key + "'");
  }
  return cfg;
}

inline ProblemConfig load_problem_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path.string());
  return parse_problem_config(in);
}

inline LtiProblem problem_from_config(const ProblemConfig& cfg) {
  return make_wave_problem(cfg.n_params, cfg.n_sensors, cfg.n_steps, cfg.wave_speed, cfg.decay,
                           cfg.seed, cfg.prior, cfg.noise_sigma);
}

// Expands the config's weight lists into a WeightSpec; returns an all-ones
// (empty) spec when no weight keys were given.
inline WeightSpec weights_from_config(const ProblemConfig& cfg) {
  WeightSpec w;
  w.cost_weights = cfg.cost_weights;
  if (!cfg.mask_param_weights.empty() || !cfg.mask_step_weights.empty()) {
    std::vector<double> wp = cfg.mask_param_weights;
    std::vector<double> wt = cfg.mask_step_weights;
    if (wp.empty()) wp.assign(static_cast<std::size_t>(cfg.n_params), 1.0);
    if (wt.empty()) wt.assign(static_cast<std::size_t>(cfg.n_steps), 1.0);
    if (static_cast<int>(wp.size()) != cfg.n_params)
      throw InvalidConfig("mask_param_weights must have n_params entries");
    if (static_cast<int>(wt.size()) != cfg.n_steps)
      throw InvalidConfig("mask_step_weights must have n_steps entries");
    w.mask_weights = Matrix<double>(cfg.n_params, cfg.n_steps);
    for (int j = 0; j < cfg.n_params; ++j)
      for (int t = 0; t < cfg.n_steps; ++t)
        w.mask_weights(j, t) =
            wp[static_cast<std::size_t>(j)] * wt[static_cast<std::size_t>(t)];
  }
  return w;
}

}  // namespace doptsel
