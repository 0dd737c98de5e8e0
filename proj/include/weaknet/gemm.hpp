#pragma once

#include <cstddef>

namespace weaknet {

/// Strided view of a dense matrix: element (i, j) is data[i*row_stride + j*col_stride].
template <class T>
struct MatrixView {
  const T* data;
  std::ptrdiff_t row_stride;
  std::ptrdiff_t col_stride;
};

/// C (M x N, row-major, leading dimension ldc) = A * B, or C += A * B when
/// `accumulate` is set.
///
/// Every output element is reduced over k in one fixed order that does not
/// depend on its row/column position or on M and N, so a column computed
/// inside a wide product is bit-identical to the same column computed inside
/// a narrow one. The convolution layers rely on this for exact translation
/// equivariance along time.
template <class T>
void gemm(std::size_t m, std::size_t n, std::size_t k, MatrixView<T> a,
          MatrixView<T> b, T* c, std::ptrdiff_t ldc, bool accumulate = false);

}  // namespace weaknet
