#pragma once

#include <cmath>
#include <cstring>
#include <vector>

#include "doptsel/errors.hpp"
#include "doptsel/linalg.hpp"
#include "doptsel/lti.hpp"
#include "doptsel/matrix.hpp"

namespace doptsel {

// Dense SPD grid of n_sensors^2 blocks of n_steps^2 entries each, stored
// contiguously per block in row-major order. This is the sole input to
// sensor selection.
class DataSpaceHessian {
 public:
  DataSpaceHessian(int n_sensors, int n_steps)
      : n_sensors_(n_sensors),
        n_steps_(n_steps),
        blocks_(static_cast<std::size_t>(n_sensors) * n_sensors *
                static_cast<std::size_t>(n_steps) * n_steps),
        noise_diag_(static_cast<std::size_t>(n_sensors), 0.0) {}

  int n_sensors() const { return n_sensors_; }
  int n_steps() const { return n_steps_; }

  MatView<double> block(int i, int j) {
    return {block_ptr(i, j), n_steps_, n_steps_, n_steps_};
  }
  ConstMatView<double> block(int i, int j) const {
    return {block_ptr(i, j), n_steps_, n_steps_, n_steps_};
  }

  // copy block (i, j) into a caller-provided buffer; no allocation
  void read_block(int i, int j, MatView<double> out) const {
    if (i < 0 || i >= n_sensors_ || j < 0 || j >= n_sensors_)
      throw IndexOutOfRange("block index out of range");
    copy_into(out, block(i, j));
  }

  double noise_diag(int sensor) const { return noise_diag_[static_cast<std::size_t>(sensor)]; }
  void set_noise_diag(int sensor, double v) { noise_diag_[static_cast<std::size_t>(sensor)] = v; }

  const double* raw() const { return blocks_.data(); }
  double* raw() { return blocks_.data(); }
  std::size_t raw_size() const { return blocks_.size(); }

  // max relative block asymmetry, |K(i,j) - K(j,i)^T| / (1 + max |K|)
  double symmetry_defect() const {
    const double scale = 1.0;
    double mx = 0.0;
    for (std::size_t v = 0; v < blocks_.size(); ++v)
      mx = std::max(mx, std::abs(blocks_[v]));
    double defect = 0.0;
    for (int i = 0; i < n_sensors_; ++i)
      for (int j = i; j < n_sensors_; ++j) {
        ConstMatView<double> a = block(i, j);
        ConstMatView<double> b = block(j, i);
        for (int r = 0; r < n_steps_; ++r)
          for (int c = 0; c < n_steps_; ++c)
            defect = std::max(defect, std::abs(a(r, c) - b(c, r)));
      }
    return defect / (scale + mx);
  }

 private:
  double* block_ptr(int i, int j) {
    return blocks_.data() +
           (static_cast<std::size_t>(i) * n_sensors_ + j) *
               (static_cast<std::size_t>(n_steps_) * n_steps_);
  }
  const double* block_ptr(int i, int j) const {
    return blocks_.data() +
           (static_cast<std::size_t>(i) * n_sensors_ + j) *
               (static_cast<std::size_t>(n_steps_) * n_steps_);
  }

  int n_sensors_;
  int n_steps_;
  std::vector<double> blocks_;
  std::vector<double> noise_diag_;
};

// K = Gamma_noise + F W_m Gamma_prior W_m^T F*, with the per-sensor cost
// weights entering only the diagonal noise blocks. Each column of the prior
// term is produced by pushing a unit data impulse through adjoint, masked
// prior, forward. Passing no weights is exactly the all-ones case: the code
// path is identical, so the unweighted K is reproduced bit for bit.
inline DataSpaceHessian assemble_k(const LtiProblem& p, const WeightSpec* weights = nullptr) {
  const int nd = p.n_sensors();
  const int nt = p.n_steps();
  const int nm = p.n_params();
  static const WeightSpec kNoWeights{};
  const WeightSpec& w = weights ? *weights : kNoWeights;
  w.validate(nd, nm, nt);

  DataSpaceHessian k(nd, nt);
  const Matrix<double> spatial = materialize_spatial_prior(p);
  Matrix<double> impulse(nd, nt);
  Matrix<double> field(nm, nt);
  Matrix<double> response(nd, nt);
  std::vector<double> scratch;

  for (int j = 0; j < nd; ++j) {
    for (int tp = 0; tp < nt; ++tp) {
      impulse.fill(0.0);
      impulse(j, tp) = 1.0;
      apply_adjoint(p, impulse.view(), field.view());
      apply_masked_prior(p, spatial.view(), w.mask_weights, field.view(), scratch);
      apply_forward(p, field.view(), response.view());
      // response column fills column tp of every block in block-column j
      for (int i = 0; i < nd; ++i) {
        MatView<double> b = k.block(i, j);
        for (int t = 0; t < nt; ++t) b(t, tp) = response(i, t);
      }
    }
  }

  // noise on the block diagonal
  const double gamma2 = p.noise_sigma() * p.noise_sigma();
  for (int i = 0; i < nd; ++i) {
    const double wc = w.cost_weights.empty() ? 1.0 : w.cost_weights[static_cast<std::size_t>(i)];
    k.set_noise_diag(i, wc * gamma2);
    MatView<double> b = k.block(i, i);
    for (int t = 0; t < nt; ++t) b(t, t) += wc * gamma2;
  }

  // enforce exact block symmetry against roundoff from the column sweep
  for (int i = 0; i < nd; ++i)
    for (int j = i; j < nd; ++j) {
      MatView<double> a = k.block(i, j);
      MatView<double> b = k.block(j, i);
      for (int r = 0; r < nt; ++r)
        for (int c = 0; c < nt; ++c) {
          if (i == j && c < r) continue;
          const double avg = 0.5 * (a(r, c) + b(c, r));
          a(r, c) = avg;
          b(c, r) = avg;
        }
    }
  return k;
}

// Per-sensor log-determinants of the noise blocks, n_steps * log(w_c *
// gamma^2). These normalize the selection objective into the expected-
// information-gain form.
inline std::vector<double> noise_block_logdets(const DataSpaceHessian& k) {
  std::vector<double> out(static_cast<std::size_t>(k.n_sensors()));
  for (int i = 0; i < k.n_sensors(); ++i)
    out[static_cast<std::size_t>(i)] = k.n_steps() * std::log(k.noise_diag(i));
  return out;
}

}  // namespace doptsel
