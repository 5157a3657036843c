#pragma once

#include <cmath>
#include <cstddef>
#include <cstdlib>
#include <new>
#include <span>
#include <vector>

#include "chunkode/errors.hpp"

namespace chunkode {

// Page-aligned storage for the numeric buffers. Alignment keeps the
// cache-set and TLB layout of the hot arrays identical from run to run
// (heap placement otherwise varies with address randomization) and is
// friendly to wide loads.
template <class T, std::size_t Align = 4096>
struct AlignedAlloc {
  using value_type = T;
  template <class U>
  struct rebind {
    using other = AlignedAlloc<U, Align>;
  };
  AlignedAlloc() = default;
  template <class U>
  AlignedAlloc(const AlignedAlloc<U, Align>&) {}
  T* allocate(std::size_t n) {
    const std::size_t bytes = (n * sizeof(T) + Align - 1) / Align * Align;
    void* p = std::aligned_alloc(Align, bytes < Align ? Align : bytes);
    if (!p) throw std::bad_alloc();
    return static_cast<T*>(p);
  }
  void deallocate(T* p, std::size_t) noexcept { std::free(p); }
  template <class U>
  bool operator==(const AlignedAlloc<U, Align>&) const {
    return true;
  }
};

using DoubleBuffer = std::vector<double, AlignedAlloc<double>>;

// Dense row-major (rows, cols) array of doubles. Used for time grids
// (rows = chunk or step axis, cols = batch) and for per-batch state
// matrices (rows = batch, cols = state component).
class Array2d {
 public:
  Array2d() = default;
  Array2d(int rows, int cols) : rows_(rows), cols_(cols), v_(size_t(rows) * cols, 0.0) {}

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  double& operator()(int i, int j) { return v_[size_t(i) * cols_ + j]; }
  double operator()(int i, int j) const { return v_[size_t(i) * cols_ + j]; }
  double* data() { return v_.data(); }
  const double* data() const { return v_.data(); }
  size_t size() const { return v_.size(); }
  std::span<double> row(int i) { return {v_.data() + size_t(i) * cols_, size_t(cols_)}; }
  std::span<const double> row(int i) const { return {v_.data() + size_t(i) * cols_, size_t(cols_)}; }

 private:
  int rows_ = 0, cols_ = 0;
  DoubleBuffer v_;
};

// Value vector laid out as (n_chunk, n_batch, n_size), contiguous row-major.
// The chunk axis is "whatever the leading grouping is": chunk rows inside a
// solve, or time steps when holding a whole trajectory.
class BatchedChunkVector {
 public:
  BatchedChunkVector() = default;
  BatchedChunkVector(int n_chunk, int n_batch, int n_size)
      : nc_(n_chunk), nb_(n_batch), ns_(n_size),
        v_(size_t(n_chunk) * n_batch * n_size, 0.0) {}

  int n_chunk() const { return nc_; }
  int n_batch() const { return nb_; }
  int n_size() const { return ns_; }

  double& operator()(int k, int b, int i) { return v_[(size_t(k) * nb_ + b) * ns_ + i]; }
  double operator()(int k, int b, int i) const { return v_[(size_t(k) * nb_ + b) * ns_ + i]; }

  std::span<double> point(int k, int b) { return {v_.data() + (size_t(k) * nb_ + b) * ns_, size_t(ns_)}; }
  std::span<const double> point(int k, int b) const {
    return {v_.data() + (size_t(k) * nb_ + b) * ns_, size_t(ns_)};
  }

  double* data() { return v_.data(); }
  const double* data() const { return v_.data(); }
  size_t size() const { return v_.size(); }

  void fill(double x) { v_.assign(v_.size(), x); }

  bool same_shape(const BatchedChunkVector& o) const {
    return nc_ == o.nc_ && nb_ == o.nb_ && ns_ == o.ns_;
  }

 private:
  int nc_ = 0, nb_ = 0, ns_ = 0;
  DoubleBuffer v_;
};

// Square blocks laid out as (n_chunk, n_batch, n_size, n_size), each block
// row-major and contiguous.
class BatchedBlockArray {
 public:
  BatchedBlockArray() = default;
  BatchedBlockArray(int n_chunk, int n_batch, int n_size)
      : nc_(n_chunk), nb_(n_batch), ns_(n_size),
        v_(size_t(n_chunk) * n_batch * n_size * n_size, 0.0) {}

  int n_chunk() const { return nc_; }
  int n_batch() const { return nb_; }
  int n_size() const { return ns_; }

  double* block(int k, int b) { return v_.data() + (size_t(k) * nb_ + b) * ns_ * ns_; }
  const double* block(int k, int b) const { return v_.data() + (size_t(k) * nb_ + b) * ns_ * ns_; }

  double& operator()(int k, int b, int r, int c) { return block(k, b)[size_t(r) * ns_ + c]; }
  double operator()(int k, int b, int r, int c) const { return block(k, b)[size_t(r) * ns_ + c]; }

  double* data() { return v_.data(); }
  const double* data() const { return v_.data(); }
  size_t size() const { return v_.size(); }

  void fill(double x) { v_.assign(v_.size(), x); }

 private:
  int nc_ = 0, nb_ = 0, ns_ = 0;
  DoubleBuffer v_;
};

inline void require(bool ok, const char* what) {
  if (!ok) throw ShapeMismatch(what);
}

inline bool all_finite(std::span<const double> v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

// Evenly spaced values including both endpoints; n == 1 collapses to {lo}.
std::vector<double> linspace(double lo, double hi, int n);

}  // namespace chunkode
