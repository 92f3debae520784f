#pragma once

#include <span>
#include <vector>

#include "doptsel/errors.hpp"
#include "doptsel/linalg.hpp"
#include "doptsel/lti.hpp"
#include "doptsel/matrix.hpp"

namespace doptsel {

// Guard for the desk-scale posterior routines, which materialize the
// (n_params * n_steps)^2 prior covariance.
inline constexpr int kPosteriorDimLimit = 4096;

// F restricted to the sensors in S, materialized as a (|S| * n_steps) x
// (n_params * n_steps) matrix directly from the kernels. Row (si, t),
// column (j, t'): h[S[si]][j][t - t'] for t >= t', else 0 (block-lower-
// triangular Toeplitz).
inline Matrix<double> materialize_forward_rows(const LtiProblem& p, std::span<const int> s) {
  const int nt = p.n_steps();
  const int nm = p.n_params();
  Matrix<double> f(static_cast<int>(s.size()) * nt, nm * nt);
  for (int si = 0; si < static_cast<int>(s.size()); ++si) {
    const int sensor = s[static_cast<std::size_t>(si)];
    if (sensor < 0 || sensor >= p.n_sensors()) throw IndexOutOfRange("sensor index out of range");
    for (int j = 0; j < nm; ++j) {
      const auto h = p.kernel(sensor, j);
      for (int t = 0; t < nt; ++t)
        for (int tp = 0; tp <= t; ++tp)
          f(si * nt + t, j * nt + tp) = h[static_cast<std::size_t>(t - tp)];
    }
  }
  return f;
}

// Full prior covariance over the flattened (param, timestep) field,
// index = param * n_steps + timestep.
inline Matrix<double> materialize_prior(const LtiProblem& p) {
  const int nm = p.n_params();
  const int nt = p.n_steps();
  Matrix<double> cov(nm * nt, nm * nt);
  for (int i = 0; i < nm; ++i)
    for (int j = 0; j < nm; ++j) {
      const double v = p.prior().spatial_entry(i, j);
      if (v == 0.0) continue;
      for (int t = 0; t < nt; ++t) cov(i * nt + t, j * nt + t) = v;
    }
  return cov;
}

// Data-space posterior covariance Gamma_prior - G_S* K_S^{-1} G_S for the
// sensors in S, with G_S = F_S Gamma_prior and K_S = gamma^2 I + F_S
// Gamma_prior F_S*. S may be empty (posterior = prior).
inline Matrix<double> posterior_covariance_small(const LtiProblem& p, std::span<const int> s) {
  const int n = p.n_params() * p.n_steps();
  if (n > kPosteriorDimLimit)
    throw TooLarge("posterior routines require n_params * n_steps <= " +
                   std::to_string(kPosteriorDimLimit));
  Matrix<double> prior = materialize_prior(p);
  if (s.empty()) return prior;

  const int m = static_cast<int>(s.size()) * p.n_steps();
  const Matrix<double> f = materialize_forward_rows(p, s);

  // G = F_S * prior  (m x n)
  Matrix<double> g(m, n);
  for (int r = 0; r < m; ++r) {
    const double* fr = f.view().row(r);
    double* gr = g.view().row(r);
    for (int kcol = 0; kcol < n; ++kcol) {
      const double c = fr[kcol];
      if (c == 0.0) continue;
      const double* pr = prior.view().row(kcol);
      for (int jcol = 0; jcol < n; ++jcol) gr[jcol] += c * pr[jcol];
    }
  }

  // K_S = noise + G * F_S^T  (m x m)
  Matrix<double> k(m, m);
  const double gamma2 = p.noise_sigma() * p.noise_sigma();
  for (int r = 0; r < m; ++r)
    for (int c = 0; c < m; ++c) {
      double acc = 0.0;
      const double* gr = g.view().row(r);
      const double* fc = f.view().row(c);
      for (int t = 0; t < n; ++t) acc += gr[t] * fc[t];
      k(r, c) = acc + (r == c ? gamma2 : 0.0);
    }

  // X = K_S^{-1} G, then posterior = prior - G^T X
  Matrix<double> x = g;
  spd_solve_in_place(k.view(), x.view());
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) {
      double acc = 0.0;
      for (int t = 0; t < m; ++t) acc -= g(t, r) * x(t, c);
      prior(r, c) += acc;
    }
  // symmetrize against roundoff
  for (int r = 0; r < n; ++r)
    for (int c = r + 1; c < n; ++c) {
      const double avg = 0.5 * (prior(r, c) + prior(c, r));
      prior(r, c) = avg;
      prior(c, r) = avg;
    }
  return prior;
}

// Diagonal of the posterior covariance, flattened param-major.
inline std::vector<double> pointwise_variance(const LtiProblem& p, std::span<const int> s) {
  const Matrix<double> cov = posterior_covariance_small(p, s);
  std::vector<double> diag(static_cast<std::size_t>(cov.rows()));
  for (int i = 0; i < cov.rows(); ++i) diag[static_cast<std::size_t>(i)] = cov(i, i);
  return diag;
}

}  // namespace doptsel
