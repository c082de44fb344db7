#pragma once

#include "dcd/matrix.hpp"

namespace dcd::kern {

// Data-parallel kernels. Each output row (or column block) is owned by one
// thread and accumulated in a fixed serial order, so results are bit-identical
// to the serial twins in kern::serial regardless of thread count.

/// C = A * B.
Matrix matmul(const Matrix& a, const Matrix& b);

/// C = A * B^T (rows of B are dotted against rows of A).
Matrix matmul_abt(const Matrix& a, const Matrix& b);

/// C = A^T * B.
Matrix matmul_atb(const Matrix& a, const Matrix& b);

/// m[r] += bias (bias is 1 x m.cols), broadcast over rows.
void add_row_vector(Matrix& m, const Matrix& bias);

/// Elementwise tanh.
Matrix tanh_map(const Matrix& m);

/// upstream ⊙ (1 - activated²), the tanh backward rule.
Matrix tanh_backward(const Matrix& upstream, const Matrix& activated);

/// 1 x cols vector of column sums.
Matrix col_sums(const Matrix& m);

namespace serial {
// Reference implementations, kept for equivalence tests and benchmarks.
Matrix matmul(const Matrix& a, const Matrix& b);
Matrix matmul_abt(const Matrix& a, const Matrix& b);
Matrix matmul_atb(const Matrix& a, const Matrix& b);
void add_row_vector(Matrix& m, const Matrix& bias);
Matrix tanh_map(const Matrix& m);
Matrix tanh_backward(const Matrix& upstream, const Matrix& activated);
Matrix col_sums(const Matrix& m);
}  // namespace serial

}  // namespace dcd::kern
