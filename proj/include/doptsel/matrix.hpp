#pragma once

#include <algorithm>
#include <cstddef>
#include <vector>

#include "doptsel/errors.hpp"

namespace doptsel {

// Non-owning view of a row-major matrix with a leading dimension (stride).
// Views are how every kernel touches memory: the owning buffers are
// preallocated up front and the hot loops never allocate.
template <class T>
struct ConstMatView {
  const T* data = nullptr;
  int rows = 0;
  int cols = 0;
  int stride = 0;  // elements between consecutive rows

  const T& operator()(int r, int c) const { return data[static_cast<std::size_t>(r) * stride + c]; }
  const T* row(int r) const { return data + static_cast<std::size_t>(r) * stride; }
  bool contiguous() const { return stride == cols; }

  ConstMatView<T> row_block(int first_row, int n_rows) const {
    return {row(first_row), n_rows, cols, stride};
  }
};

template <class T>
struct MatView {
  T* data = nullptr;
  int rows = 0;
  int cols = 0;
  int stride = 0;

  T& operator()(int r, int c) const { return data[static_cast<std::size_t>(r) * stride + c]; }
  T* row(int r) const { return data + static_cast<std::size_t>(r) * stride; }
  bool contiguous() const { return stride == cols; }

  MatView<T> row_block(int first_row, int n_rows) const {
    return {row(first_row), n_rows, cols, stride};
  }
  operator ConstMatView<T>() const { return {data, rows, cols, stride}; }
};

// Owning row-major matrix.
template <class T>
class Matrix {
 public:
  Matrix() = default;
  Matrix(int rows, int cols)
      : data_(static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols)),
        rows_(rows),
        cols_(cols) {}

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::size_t size() const { return data_.size(); }

  T& operator()(int r, int c) { return data_[static_cast<std::size_t>(r) * cols_ + c]; }
  const T& operator()(int r, int c) const { return data_[static_cast<std::size_t>(r) * cols_ + c]; }

  MatView<T> view() { return {data_.data(), rows_, cols_, cols_}; }
  ConstMatView<T> view() const { return {data_.data(), rows_, cols_, cols_}; }
  MatView<T> top_rows(int n) { return {data_.data(), n, cols_, cols_}; }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  bool operator==(const Matrix& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_ && data_ == other.data_;
  }

 private:
  std::vector<T> data_;
  int rows_ = 0;
  int cols_ = 0;
};

template <class Dst, class Src>
inline void copy_into(MatView<Dst> dst, ConstMatView<Src> src) {
  if (dst.rows != src.rows || dst.cols != src.cols)
    throw DimensionMismatch("copy_into: shape mismatch");
  for (int r = 0; r < src.rows; ++r) {
    const Src* s = src.row(r);
    Dst* d = dst.row(r);
    for (int c = 0; c < src.cols; ++c) d[c] = static_cast<Dst>(s[c]);
  }
}

template <class Dst, class Src>
inline void copy_into(MatView<Dst> dst, MatView<Src> src) {
  copy_into(dst, ConstMatView<Src>(src));
}

template <class T>
inline double max_abs(ConstMatView<T> a) {
  double m = 0.0;
  for (int r = 0; r < a.rows; ++r)
    for (int c = 0; c < a.cols; ++c) m = std::max(m, static_cast<double>(std::abs(a(r, c))));
  return m;
}

}  // namespace doptsel
