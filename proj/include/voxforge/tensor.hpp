#pragma once

#include <cstddef>
#include <numeric>
#include <vector>

#include "voxforge/common.hpp"

namespace voxforge::nd {

// Dense row-major f64 tensor. Gradients live in tape nodes / ParamStore,
// not here; this is a plain value buffer.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> v;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape_)
      : shape(std::move(shape_)), v(numel_of(shape), 0.0) {}
  Tensor(std::vector<std::size_t> shape_, std::vector<double> data)
      : shape(std::move(shape_)), v(std::move(data)) {
    if (v.size() != numel_of(shape)) throw Error("Tensor: data/shape mismatch");
  }

  static std::size_t numel_of(const std::vector<std::size_t>& s) {
    std::size_t n = 1;
    for (auto d : s) n *= d;
    return n;
  }
  static Tensor scalar(double x) { return Tensor({1}, {x}); }

  std::size_t numel() const { return v.size(); }
  std::size_t ndim() const { return shape.size(); }
  std::size_t rows() const { return shape.size() == 2 ? shape[0] : (shape.empty() ? 0 : shape[0]); }
  std::size_t cols() const { return shape.size() == 2 ? shape[1] : 1; }

  double& at(std::size_t r, std::size_t c) { return v[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return v[r * cols() + c]; }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }
};

// C[n,m] = A[n,k] * B[k,m]  (+= when accumulate). Parallel over rows of C;
// each output row is computed serially, so results are thread-count invariant.
void gemm_nn(const double* A, const double* B, double* C, std::size_t n,
             std::size_t k, std::size_t m, bool accumulate = false);

// C[n,k] = A[n,m] * B^T where B is [k,m]  (dX = dY * W^T with W[k->?]).
void gemm_nt(const double* A, const double* B, double* C, std::size_t n,
             std::size_t m, std::size_t k, bool accumulate = false);

// C[k,m] = A^T * B where A is [n,k], B is [n,m]  (dW = X^T * dY).
void gemm_tn(const double* A, const double* B, double* C, std::size_t n,
             std::size_t k, std::size_t m, bool accumulate = false);

}  // namespace voxforge::nd
