#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "doptsel/errors.hpp"
#include "doptsel/matrix.hpp"
#include "doptsel/rng.hpp"

namespace doptsel {

enum class PriorKind { identity, exponential };

// Gaussian prior over the (param, timestep) field. The spatial covariance is
// sigma2 * exp(-|i-j| / length_scale) (or sigma2 * I); time is uncorrelated,
// i.e. the full covariance is the spatial kernel Kronecker the identity.
struct PriorSpec {
  PriorKind kind = PriorKind::exponential;
  double variance = 1.0;
  double length_scale = 0.0;  // <= 0 means "default to n_params / 8"

  double spatial_entry(int i, int j) const {
    if (kind == PriorKind::identity) return i == j ? variance : 0.0;
    return variance * std::exp(-std::abs(i - j) / length_scale);
  }
};

// Objective modifications: per-sensor cost factors scale the noise block of
// that sensor; per-(param, timestep) mask weights scale the prior term.
// Empty containers mean "all ones".
struct WeightSpec {
  std::vector<double> cost_weights;  // per sensor, > 0
  Matrix<double> mask_weights;       // n_params x n_steps, >= 0

  void validate(int n_sensors, int n_params, int n_steps) const {
    if (!cost_weights.empty()) {
      if (static_cast<int>(cost_weights.size()) != n_sensors)
        throw InvalidConfig("cost_weights must have one entry per sensor");
      for (double w : cost_weights)
        if (!(w > 0.0)) throw InvalidConfig("cost_weights entries must be positive");
    }
    if (mask_weights.size() != 0) {
      if (mask_weights.rows() != n_params || mask_weights.cols() != n_steps)
        throw InvalidConfig("mask_weights must be n_params x n_steps");
      for (int j = 0; j < n_params; ++j)
        for (int t = 0; t < n_steps; ++t)
          if (!(mask_weights(j, t) >= 0.0))
            throw InvalidConfig("mask_weights entries must be nonnegative");
    }
  }
};

// Synthetic inverse problem: the forward map acts as a causal per-(sensor,
// param) temporal convolution, so its block structure is block-lower-
// triangular Toeplitz and the map is time-shift invariant by construction.
class LtiProblem {
 public:
  LtiProblem(int n_params, int n_sensors, int n_steps, std::vector<double> impulse,
             PriorSpec prior, double noise_sigma, std::vector<double> sensor_positions = {})
      : n_params_(n_params),
        n_sensors_(n_sensors),
        n_steps_(n_steps),
        impulse_(std::move(impulse)),
        prior_(prior),
        noise_sigma_(noise_sigma),
        sensor_positions_(std::move(sensor_positions)) {
    if (n_params < 1 || n_sensors < 1 || n_steps < 1)
      throw InvalidConfig("problem sizes must be >= 1");
    if (impulse_.size() != static_cast<std::size_t>(n_params) * n_sensors * n_steps)
      throw InvalidConfig("impulse table size mismatch");
    for (double v : impulse_)
      if (!std::isfinite(v)) throw InvalidConfig("impulse kernels must be finite");
    if (!(noise_sigma_ > 0.0)) throw InvalidConfig("noise_sigma must be positive");
    if (!(prior_.variance > 0.0)) throw InvalidConfig("prior.variance must be positive");
    if (prior_.kind == PriorKind::exponential && !(prior_.length_scale > 0.0))
      throw InvalidConfig("prior.length_scale must be positive");
  }

  int n_params() const { return n_params_; }
  int n_sensors() const { return n_sensors_; }
  int n_steps() const { return n_steps_; }
  double noise_sigma() const { return noise_sigma_; }
  const PriorSpec& prior() const { return prior_; }
  const std::vector<double>& sensor_positions() const { return sensor_positions_; }

  // h[s][j][.] as a length-n_steps span
  std::span<const double> kernel(int sensor, int param) const {
    const std::size_t off =
        (static_cast<std::size_t>(sensor) * n_params_ + param) * n_steps_;
    return {impulse_.data() + off, static_cast<std::size_t>(n_steps_)};
  }

  double max_kernel_amplitude() const {
    double m = 0.0;
    for (double v : impulse_) m = std::max(m, std::abs(v));
    return m;
  }

 private:
  int n_params_;
  int n_sensors_;
  int n_steps_;
  std::vector<double> impulse_;  // [(s * n_params + j) * n_steps + tau]
  PriorSpec prior_;
  double noise_sigma_;
  std::vector<double> sensor_positions_;
};

// Causal pulse arriving at delay = distance / wave_speed: zero before
// arrival, Gaussian-shaped decay after it, amplitude attenuated with
// distance. The delay structure (rather than smoothing) is what makes the
// resulting operator hyperbolic-like.
inline void wave_kernel_into(double distance, double wave_speed, double decay, int n_steps,
                             double* out) {
  const double delay = distance / wave_speed;
  const double amp = 1.0 / (1.0 + distance);
  for (int tau = 0; tau < n_steps; ++tau) {
    const double u = tau - delay;
    out[tau] = u < 0.0 ? 0.0 : amp * std::exp(-decay * u * u);
  }
}

// Problem with explicit sensor positions; parameters sit on the integer grid
// 0..n_params-1 of the same line.
inline LtiProblem make_wave_problem_at(std::vector<double> sensor_positions, int n_params,
                                       int n_steps, double wave_speed, double decay,
                                       PriorSpec prior, double noise_sigma) {
  if (n_params < 1 || sensor_positions.empty() || n_steps < 1)
    throw InvalidConfig("problem sizes must be >= 1");
  if (!(wave_speed > 0.0)) throw InvalidConfig("wave_speed must be positive");
  if (!(decay >= 0.0)) throw InvalidConfig("decay must be nonnegative");
  if (prior.kind == PriorKind::exponential && prior.length_scale <= 0.0)
    prior.length_scale = std::max(1.0, n_params / 8.0);
  const int n_sensors = static_cast<int>(sensor_positions.size());
  std::vector<double> impulse(static_cast<std::size_t>(n_sensors) * n_params * n_steps);
  for (int s = 0; s < n_sensors; ++s)
    for (int j = 0; j < n_params; ++j) {
      const double dist = std::abs(sensor_positions[static_cast<std::size_t>(s)] - j);
      double* out =
          impulse.data() + (static_cast<std::size_t>(s) * n_params + j) * n_steps;
      wave_kernel_into(dist, wave_speed, decay, n_steps, out);
    }
  if (!(noise_sigma > 0.0)) {
    double amp = 0.0;
    for (double v : impulse) amp = std::max(amp, std::abs(v));
    noise_sigma = 0.1 * (amp > 0.0 ? amp : 1.0);
  }
  return LtiProblem(n_params, n_sensors, n_steps, std::move(impulse), prior, noise_sigma,
                    std::move(sensor_positions));
}

// Seeded generator: sensors at uniform positions on the parameter line,
// sorted ascending. noise_sigma <= 0 selects the default 0.1 * max |h|.
inline LtiProblem make_wave_problem(int n_params, int n_sensors, int n_steps,
                                    double wave_speed, double decay, std::uint64_t seed,
                                    PriorSpec prior = {}, double noise_sigma = -1.0) {
  if (n_params < 1 || n_sensors < 1 || n_steps < 1)
    throw InvalidConfig("problem sizes must be >= 1");
  if (!(wave_speed > 0.0)) throw InvalidConfig("wave_speed must be positive");
  Rng rng(seed);
  std::vector<double> pos(static_cast<std::size_t>(n_sensors));
  for (double& p : pos) p = rng.uniform() * (n_params > 1 ? n_params - 1 : 0);
  std::sort(pos.begin(), pos.end());
  return make_wave_problem_at(std::move(pos), n_params, n_steps, wave_speed, decay, prior,
                              noise_sigma);
}

// d[s][t] = sum_j sum_{tau<=t} h[s][j][tau] * m[j][t-tau]
inline void apply_forward(const LtiProblem& p, ConstMatView<double> m, MatView<double> d) {
  if (m.rows != p.n_params() || m.cols != p.n_steps())
    throw DimensionMismatch("apply_forward: parameter field must be n_params x n_steps");
  if (d.rows != p.n_sensors() || d.cols != p.n_steps())
    throw DimensionMismatch("apply_forward: data must be n_sensors x n_steps");
  const int nt = p.n_steps();
  for (int s = 0; s < p.n_sensors(); ++s) {
    double* ds = d.row(s);
    std::fill(ds, ds + nt, 0.0);
    for (int j = 0; j < p.n_params(); ++j) {
      const auto h = p.kernel(s, j);
      const double* mj = m.row(j);
      for (int tau = 0; tau < nt; ++tau) {
        const double c = h[static_cast<std::size_t>(tau)];
        if (c == 0.0) continue;
        for (int t = tau; t < nt; ++t) ds[t] += c * mj[t - tau];
      }
    }
  }
}

// Exact discrete adjoint of apply_forward:
// (F* d)[j][t] = sum_s sum_{tau} h[s][j][tau] * d[s][t+tau]
inline void apply_adjoint(const LtiProblem& p, ConstMatView<double> d, MatView<double> m) {
  if (d.rows != p.n_sensors() || d.cols != p.n_steps())
    throw DimensionMismatch("apply_adjoint: data must be n_sensors x n_steps");
  if (m.rows != p.n_params() || m.cols != p.n_steps())
    throw DimensionMismatch("apply_adjoint: parameter field must be n_params x n_steps");
  const int nt = p.n_steps();
  for (int j = 0; j < p.n_params(); ++j) {
    double* mj = m.row(j);
    std::fill(mj, mj + nt, 0.0);
    for (int s = 0; s < p.n_sensors(); ++s) {
      const auto h = p.kernel(s, j);
      const double* ds = d.row(s);
      for (int tau = 0; tau < nt; ++tau) {
        const double c = h[static_cast<std::size_t>(tau)];
        if (c == 0.0) continue;
        for (int t = 0; t < nt - tau; ++t) mj[t] += c * ds[t + tau];
      }
    }
  }
}

// Applies the (optionally masked) prior covariance to a field in place:
// v <- W_m (Sigma_space (x) I) W_m v. `spatial` is the materialized spatial
// kernel; `mask` may be empty.
inline void apply_masked_prior(const LtiProblem& p, ConstMatView<double> spatial,
                               const Matrix<double>& mask, MatView<double> v,
                               std::vector<double>& scratch_col) {
  const int nm = p.n_params();
  const int nt = p.n_steps();
  const bool masked = mask.size() != 0;
  if (masked) {
    for (int j = 0; j < nm; ++j)
      for (int t = 0; t < nt; ++t) v(j, t) *= mask(j, t);
  }
  scratch_col.resize(static_cast<std::size_t>(nm));
  for (int t = 0; t < nt; ++t) {
    for (int j = 0; j < nm; ++j) scratch_col[static_cast<std::size_t>(j)] = v(j, t);
    for (int i = 0; i < nm; ++i) {
      const double* row = spatial.row(i);
      double acc = 0.0;
      for (int j = 0; j < nm; ++j) acc += row[j] * scratch_col[static_cast<std::size_t>(j)];
      v(i, t) = acc;
    }
  }
  if (masked) {
    for (int j = 0; j < nm; ++j)
      for (int t = 0; t < nt; ++t) v(j, t) *= mask(j, t);
  }
}

inline Matrix<double> materialize_spatial_prior(const LtiProblem& p) {
  const int nm = p.n_params();
  Matrix<double> spatial(nm, nm);
  for (int i = 0; i < nm; ++i)
    for (int j = 0; j < nm; ++j) spatial(i, j) = p.prior().spatial_entry(i, j);
  return spatial;
}

}  // namespace doptsel
