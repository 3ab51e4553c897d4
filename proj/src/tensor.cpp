#include "voxforge/tensor.hpp"

namespace voxforge::nd {

void gemm_nn(const double* A, const double* B, double* C, std::size_t n,
             std::size_t k, std::size_t m, bool accumulate) {
  parallel_for_chunks(n, 32, [&](std::size_t r0, std::size_t r1) {
    for (std::size_t i = r0; i < r1; ++i) {
      double* crow = C + i * m;
      if (!accumulate)
        for (std::size_t j = 0; j < m; ++j) crow[j] = 0.0;
      const double* arow = A + i * k;
      for (std::size_t p = 0; p < k; ++p) {
        double a = arow[p];
        if (a == 0.0) continue;
        const double* brow = B + p * m;
        for (std::size_t j = 0; j < m; ++j) crow[j] += a * brow[j];
      }
    }
  });
}

void gemm_nt(const double* A, const double* B, double* C, std::size_t n,
             std::size_t m, std::size_t k, bool accumulate) {
  parallel_for_chunks(n, 32, [&](std::size_t r0, std::size_t r1) {
    for (std::size_t i = r0; i < r1; ++i) {
      const double* arow = A + i * m;
      double* crow = C + i * k;
      for (std::size_t p = 0; p < k; ++p) {
        const double* brow = B + p * m;
        double s = 0.0;
        for (std::size_t j = 0; j < m; ++j) s += arow[j] * brow[j];
        if (accumulate)
          crow[p] += s;
        else
          crow[p] = s;
      }
    }
  });
}

void gemm_tn(const double* A, const double* B, double* C, std::size_t n,
             std::size_t k, std::size_t m, bool accumulate) {
  parallel_for_chunks(k, 16, [&](std::size_t p0, std::size_t p1) {
    for (std::size_t p = p0; p < p1; ++p) {
      double* crow = C + p * m;
      if (!accumulate)
        for (std::size_t j = 0; j < m; ++j) crow[j] = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        double a = A[i * k + p];
        if (a == 0.0) continue;
        const double* brow = B + i * m;
        for (std::size_t j = 0; j < m; ++j) crow[j] += a * brow[j];
      }
    }
  });
}

}  // namespace voxforge::nd
