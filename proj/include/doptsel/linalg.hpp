#pragma once

#include <cmath>
#include <cstring>
#include <vector>

#include "doptsel/errors.hpp"
#include "doptsel/matrix.hpp"

namespace doptsel {

// In-place dense Cholesky of an SPD matrix: the lower triangle is
// overwritten with L and the upper triangle is zeroed. No allocation.
// A nonpositive or nonfinite pivot throws NotPositiveDefinite; the input is
// never jittered, since selection correctness depends on true determinants.
template <class T>
void cholesky_in_place(MatView<T> a) {
  if (a.rows != a.cols) throw DimensionMismatch("cholesky_in_place: matrix not square");
  const int n = a.rows;
  for (int j = 0; j < n; ++j) {
    T* rj = a.row(j);
    double pivot = static_cast<double>(rj[j]);
    for (int t = 0; t < j; ++t) pivot -= static_cast<double>(rj[t]) * static_cast<double>(rj[t]);
    if (!(pivot > 0.0) || !std::isfinite(pivot)) throw NotPositiveDefinite(j);
    const T diag = static_cast<T>(std::sqrt(pivot));
    rj[j] = diag;
    for (int i = j + 1; i < n; ++i) {
      T* ri = a.row(i);
      double acc = static_cast<double>(ri[j]);
      for (int t = 0; t < j; ++t) acc -= static_cast<double>(ri[t]) * static_cast<double>(rj[t]);
      ri[j] = static_cast<T>(acc / static_cast<double>(diag));
    }
    for (int c = j + 1; c < n; ++c) rj[c] = T(0);
  }
}

// Forward substitution, solving L * X = B in place: on entry `x` holds B, on
// exit it holds X. L is the active window of a lower-triangular factor.
template <class T>
void solve_lower_triangular_in_place(ConstMatView<T> l, MatView<T> x) {
  if (l.rows != l.cols) throw DimensionMismatch("solve_lower_triangular: factor not square");
  if (l.rows != x.rows) throw DimensionMismatch("solve_lower_triangular: rhs rows mismatch");
  const int n = l.rows;
  const int m = x.cols;
  for (int r = 0; r < n; ++r) {
    const T* lr = l.row(r);
    T* xr = x.row(r);
    for (int t = 0; t < r; ++t) {
      const T c = lr[t];
      if (c != T(0)) {
        const T* xt = x.row(t);
        for (int j = 0; j < m; ++j) xr[j] -= c * xt[j];
      }
    }
    const T d = lr[r];
    if (d == T(0) || !std::isfinite(static_cast<double>(d))) throw SingularFactor(r);
    for (int j = 0; j < m; ++j) xr[j] /= d;
  }
}

template <class T>
void solve_lower_triangular(ConstMatView<T> l, ConstMatView<T> rhs, MatView<T> out) {
  copy_into(out, rhs);
  solve_lower_triangular_in_place(l, out);
}

// Back substitution for L^T * X = B in place (used by the SPD solver below).
template <class T>
void solve_lower_transposed_in_place(ConstMatView<T> l, MatView<T> x) {
  if (l.rows != l.cols || l.rows != x.rows)
    throw DimensionMismatch("solve_lower_transposed: shape mismatch");
  const int n = l.rows;
  const int m = x.cols;
  for (int r = n - 1; r >= 0; --r) {
    T* xr = x.row(r);
    const T d = l(r, r);
    if (d == T(0) || !std::isfinite(static_cast<double>(d))) throw SingularFactor(r);
    for (int j = 0; j < m; ++j) xr[j] /= d;
    for (int t = 0; t < r; ++t) {
      const T c = l(r, t);
      if (c != T(0)) {
        T* xt = x.row(t);
        for (int j = 0; j < m; ++j) xt[j] -= c * xr[j];
      }
    }
  }
}

// M = K_ss - Y^T Y, symmetrized by averaging with its transpose to suppress
// roundoff asymmetry before factorization. `out` may alias `k_ss`.
template <class T>
void schur_complement(ConstMatView<T> k_ss, ConstMatView<T> y, MatView<T> out) {
  if (k_ss.rows != k_ss.cols) throw DimensionMismatch("schur_complement: K_ss not square");
  if (y.cols != k_ss.rows) throw DimensionMismatch("schur_complement: Y cols mismatch");
  if (out.rows != k_ss.rows || out.cols != k_ss.cols)
    throw DimensionMismatch("schur_complement: out shape mismatch");
  const int n = k_ss.rows;
  if (out.data != k_ss.data) copy_into(out, k_ss);
  // rank-k downdate, accumulated row by row of Y for row-major locality
  for (int r = 0; r < y.rows; ++r) {
    const T* yr = y.row(r);
    for (int a = 0; a < n; ++a) {
      const T ya = yr[a];
      T* oa = out.row(a);
      for (int b = 0; b < n; ++b) oa[b] -= ya * yr[b];
    }
  }
  for (int a = 0; a < n; ++a)
    for (int b = a + 1; b < n; ++b) {
      const T avg = (out(a, b) + out(b, a)) / T(2);
      out(a, b) = avg;
      out(b, a) = avg;
    }
}

// 2 * sum(log(diag(L))). Accumulated in double regardless of T.
template <class T>
double logdet_from_factor(ConstMatView<T> l) {
  double acc = 0.0;
  const int n = std::min(l.rows, l.cols);
  for (int i = 0; i < n; ++i) {
    const double d = static_cast<double>(l(i, i));
    if (!(d > 0.0) || !std::isfinite(d))
      throw NonFiniteResult("logdet_from_factor: nonpositive diagonal at " + std::to_string(i));
    acc += std::log(d);
  }
  return 2.0 * acc;
}

// Growing block Cholesky factor living in one contiguous preallocated
// (B*N_t)^2 buffer. Appending a block column leaves the buffer address
// stable, so candidate evaluation allocates nothing.
template <class T>
class LowerTriangularFactor {
 public:
  LowerTriangularFactor(int max_blocks, int block_dim)
      : storage_(static_cast<std::size_t>(max_blocks) * block_dim *
                 static_cast<std::size_t>(max_blocks) * block_dim),
        block_dim_(block_dim),
        max_blocks_(max_blocks) {}

  int block_dim() const { return block_dim_; }
  int max_blocks() const { return max_blocks_; }
  int active_blocks() const { return active_blocks_; }
  int active_dim() const { return active_blocks_ * block_dim_; }
  int capacity_dim() const { return max_blocks_ * block_dim_; }

  ConstMatView<T> active() const {
    return {storage_.data(), active_dim(), active_dim(), capacity_dim()};
  }
  MatView<T> active_mut() {
    return {storage_.data(), active_dim(), active_dim(), capacity_dim()};
  }

  // L_S <- [[L_S, 0], [Y^T, L_M]]. `y` is the solved test column
  // (active_dim x block_dim); `chol_m` is the Cholesky factor of the Schur
  // complement. The new block row/column is written inside the preallocated
  // buffer and active_dim grows by one block.
  void append_block_column(ConstMatView<T> y, ConstMatView<T> chol_m) {
    if (active_blocks_ + 1 > max_blocks_)
      throw BudgetExceeded("factor capacity of " + std::to_string(max_blocks_) +
                           " blocks exhausted");
    if (y.rows != active_dim() || y.cols != block_dim_)
      throw DimensionMismatch("append_block_column: Y shape mismatch");
    if (chol_m.rows != block_dim_ || chol_m.cols != block_dim_)
      throw DimensionMismatch("append_block_column: L_M shape mismatch");
    const int k = active_dim();
    const int ld = capacity_dim();
    T* base = storage_.data() + static_cast<std::size_t>(k) * ld;
    for (int a = 0; a < block_dim_; ++a) {
      T* dst = base + static_cast<std::size_t>(a) * ld;
      for (int c = 0; c < k; ++c) dst[c] = y(c, a);
      // lower triangle of the new diagonal block; keep the upper zero
      for (int b = 0; b <= a; ++b) dst[k + b] = chol_m(a, b);
      for (int b = a + 1; b < block_dim_; ++b) dst[k + b] = T(0);
    }
    ++active_blocks_;
  }

  void reset() {
    std::fill(storage_.begin(), storage_.end(), T(0));
    active_blocks_ = 0;
  }

  // One-shot load: overwrite with the Cholesky factor of `full` (a k-block
  // SPD matrix). Used by the refactorizing baseline to publish its state.
  void load_from_spd(ConstMatView<T> full) {
    if (full.rows != full.cols || full.rows % block_dim_ != 0 ||
        full.rows > capacity_dim())
      throw DimensionMismatch("load_from_spd: bad shape");
    reset();
    active_blocks_ = full.rows / block_dim_;
    MatView<T> window = active_mut();
    copy_into(window, full);
    cholesky_in_place(window);
  }

 private:
  std::vector<T> storage_;
  int block_dim_;
  int max_blocks_;
  int active_blocks_ = 0;
};

// Solves A * X = B for SPD A via Cholesky, overwriting both (A becomes its
// factor, B becomes X). Desk-scale helper for the posterior computations.
template <class T>
void spd_solve_in_place(MatView<T> a, MatView<T> b) {
  cholesky_in_place(a);
  solve_lower_triangular_in_place(ConstMatView<T>(a), b);
  solve_lower_transposed_in_place(ConstMatView<T>(a), b);
}

}  // namespace doptsel
