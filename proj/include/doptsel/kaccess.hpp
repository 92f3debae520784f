#pragma once

#include <chrono>
#include <concepts>
#include <span>
#include <thread>
#include <vector>

#include "doptsel/errors.hpp"
#include "doptsel/matrix.hpp"
#include "doptsel/rng.hpp"

namespace doptsel {

// Anything the selector can pull K blocks from: the in-memory Hessian, the
// on-disk store, or the synthetic/benchmark wrappers below. read_block must
// be const and safe for concurrent callers on disjoint output buffers.
template <class A>
concept KAccess = requires(const A& a, int i, int j, MatView<double> out) {
  { a.n_sensors() } -> std::convertible_to<int>;
  { a.n_steps() } -> std::convertible_to<int>;
  a.read_block(i, j, out);
};

// Stacks blocks (chosen[0], s), ..., (chosen[k-1], s) into a tall
// (k * n_steps) x n_steps buffer, in chosen order.
template <KAccess A>
void read_test_column(const A& k, std::span<const int> chosen, int candidate,
                      MatView<double> out) {
  const int nt = k.n_steps();
  if (out.cols != nt || out.rows != static_cast<int>(chosen.size()) * nt)
    throw DimensionMismatch("read_test_column: output must be |S|*n_steps x n_steps");
  for (int t = 0; t < static_cast<int>(chosen.size()); ++t)
    k.read_block(chosen[static_cast<std::size_t>(t)], candidate, out.row_block(t * nt, nt));
}

// Maps a virtual candidate pool onto a smaller store by index modulo, the
// standard trick for scaling candidate counts past what is stored.
template <KAccess A>
class ModuloKAccess {
 public:
  ModuloKAccess(const A& base, int virtual_sensors)
      : base_(&base), virtual_sensors_(virtual_sensors) {}

  int n_sensors() const { return virtual_sensors_; }
  int n_steps() const { return base_->n_steps(); }
  void read_block(int i, int j, MatView<double> out) const {
    if (i < 0 || i >= virtual_sensors_ || j < 0 || j >= virtual_sensors_)
      throw IndexOutOfRange("virtual block index out of range");
    base_->read_block(i % base_->n_sensors(), j % base_->n_sensors(), out);
  }

 private:
  const A* base_;
  int virtual_sensors_;
};

// Adds a fixed sleep to every block read; used to give I/O a controlled,
// visible cost in the pipeline overlap tests and benchmarks.
template <KAccess A>
class DelayedKAccess {
 public:
  DelayedKAccess(const A& base, std::chrono::microseconds delay_per_block)
      : base_(&base), delay_(delay_per_block) {}

  int n_sensors() const { return base_->n_sensors(); }
  int n_steps() const { return base_->n_steps(); }
  void read_block(int i, int j, MatView<double> out) const {
    if (delay_.count() > 0) std::this_thread::sleep_for(delay_);
    base_->read_block(i, j, out);
  }

 private:
  const A* base_;
  std::chrono::microseconds delay_;
};

// SPD-by-construction Hessian whose blocks are generated on the fly:
// K = noise^2 I + V V^T with V a tall seeded random matrix. Lets the
// complexity sweep reach block counts that would be wasteful to materialize.
class SyntheticKAccess {
 public:
  SyntheticKAccess(int n_sensors, int n_steps, int rank, double noise_sigma,
                   std::uint64_t seed)
      : n_sensors_(n_sensors),
        n_steps_(n_steps),
        rank_(rank),
        noise2_(noise_sigma * noise_sigma),
        v_(static_cast<std::size_t>(n_sensors) * n_steps * rank) {
    Rng rng(seed);
    for (double& x : v_) x = rng.normal();
  }

  int n_sensors() const { return n_sensors_; }
  int n_steps() const { return n_steps_; }
  double noise_variance() const { return noise2_; }

  void read_block(int i, int j, MatView<double> out) const {
    if (i < 0 || i >= n_sensors_ || j < 0 || j >= n_sensors_)
      throw IndexOutOfRange("block index out of range");
    if (out.rows != n_steps_ || out.cols != n_steps_)
      throw DimensionMismatch("read_block: output must be n_steps x n_steps");
    const double* vi = v_.data() + static_cast<std::size_t>(i) * n_steps_ * rank_;
    const double* vj = v_.data() + static_cast<std::size_t>(j) * n_steps_ * rank_;
    for (int r = 0; r < n_steps_; ++r) {
      const double* a = vi + static_cast<std::size_t>(r) * rank_;
      double* o = out.row(r);
      for (int c = 0; c < n_steps_; ++c) {
        const double* b = vj + static_cast<std::size_t>(c) * rank_;
        double acc = 0.0;
        for (int t = 0; t < rank_; ++t) acc += a[t] * b[t];
        o[c] = acc;
      }
      if (i == j) o[r] += noise2_;
    }
  }

 private:
  int n_sensors_;
  int n_steps_;
  int rank_;
  double noise2_;
  std::vector<double> v_;
};

}  // namespace doptsel
