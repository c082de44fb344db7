#include "dcd/kernels.hpp"

#include <cmath>
#include <cstdint>

namespace dcd::kern {

namespace {

void check_mul(const Matrix& a, const Matrix& b, size_t a_inner, size_t b_inner,
               const char* op) {
    if (a_inner != b_inner) {
        throw ShapeError(std::string(op) + ": inner dimensions differ, left " + a.shape_str() +
                         " vs right " + b.shape_str());
    }
}

// Per-row workers shared by the parallel and serial entry points so both
// perform identical floating-point operation sequences.

inline void matmul_row(const Matrix& a, const Matrix& b, Matrix& c, size_t i) {
    const size_t inner = a.cols(), n = b.cols();
    double* crow = c.row_ptr(i);
    const double* arow = a.row_ptr(i);
    for (size_t k = 0; k < inner; ++k) {
        const double av = arow[k];
        const double* brow = b.row_ptr(k);
        for (size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
}

inline void matmul_abt_row(const Matrix& a, const Matrix& b, Matrix& c, size_t i) {
    const size_t inner = a.cols(), n = b.rows();
    double* crow = c.row_ptr(i);
    const double* arow = a.row_ptr(i);
    for (size_t j = 0; j < n; ++j) {
        const double* brow = b.row_ptr(j);
        double acc = 0.0;
        for (size_t k = 0; k < inner; ++k) acc += arow[k] * brow[k];
        crow[j] = acc;
    }
}

// Output row k of A^T*B accumulates over the rows of A/B in ascending order.
inline void matmul_atb_row(const Matrix& a, const Matrix& b, Matrix& c, size_t k) {
    const size_t m = a.rows(), n = b.cols();
    double* crow = c.row_ptr(k);
    for (size_t i = 0; i < m; ++i) {
        const double av = a.at(i, k);
        const double* brow = b.row_ptr(i);
        for (size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
}

}  // namespace

Matrix matmul(const Matrix& a, const Matrix& b) {
    check_mul(a, b, a.cols(), b.rows(), "matmul");
    Matrix c(a.rows(), b.cols());
    const int64_t m = static_cast<int64_t>(a.rows());
#pragma omp parallel for schedule(static) if (m > 4)
    for (int64_t i = 0; i < m; ++i) matmul_row(a, b, c, static_cast<size_t>(i));
    return c;
}

Matrix matmul_abt(const Matrix& a, const Matrix& b) {
    check_mul(a, b, a.cols(), b.cols(), "matmul_abt");
    Matrix c(a.rows(), b.rows());
    const int64_t m = static_cast<int64_t>(a.rows());
#pragma omp parallel for schedule(static) if (m > 4)
    for (int64_t i = 0; i < m; ++i) matmul_abt_row(a, b, c, static_cast<size_t>(i));
    return c;
}

Matrix matmul_atb(const Matrix& a, const Matrix& b) {
    check_mul(a, b, a.rows(), b.rows(), "matmul_atb");
    Matrix c(a.cols(), b.cols());
    const int64_t n = static_cast<int64_t>(a.cols());
#pragma omp parallel for schedule(static) if (n > 4)
    for (int64_t k = 0; k < n; ++k) matmul_atb_row(a, b, c, static_cast<size_t>(k));
    return c;
}

void add_row_vector(Matrix& m, const Matrix& bias) {
    if (bias.rows() != 1 || bias.cols() != m.cols()) {
        throw ShapeError("add_row_vector: bias " + bias.shape_str() + " does not broadcast over " +
                         m.shape_str());
    }
    const int64_t rows = static_cast<int64_t>(m.rows());
    const double* b = bias.row_ptr(0);
#pragma omp parallel for schedule(static) if (rows > 16)
    for (int64_t i = 0; i < rows; ++i) {
        double* row = m.row_ptr(static_cast<size_t>(i));
        for (size_t j = 0; j < m.cols(); ++j) row[j] += b[j];
    }
}

Matrix tanh_map(const Matrix& m) {
    Matrix out(m.rows(), m.cols());
    const int64_t n = static_cast<int64_t>(m.size());
#pragma omp parallel for schedule(static) if (n > 2048)
    for (int64_t i = 0; i < n; ++i) out.data()[i] = std::tanh(m.data()[i]);
    return out;
}

Matrix tanh_backward(const Matrix& upstream, const Matrix& activated) {
    if (!upstream.same_shape(activated)) {
        throw ShapeError("tanh_backward: " + upstream.shape_str() + " vs " + activated.shape_str());
    }
    Matrix out(upstream.rows(), upstream.cols());
    const int64_t n = static_cast<int64_t>(out.size());
#pragma omp parallel for schedule(static) if (n > 2048)
    for (int64_t i = 0; i < n; ++i) {
        const double a = activated.data()[i];
        out.data()[i] = upstream.data()[i] * (1.0 - a * a);
    }
    return out;
}

Matrix col_sums(const Matrix& m) {
    Matrix out(1, m.cols());
    double* o = out.row_ptr(0);
    for (size_t i = 0; i < m.rows(); ++i) {
        const double* row = m.row_ptr(i);
        for (size_t j = 0; j < m.cols(); ++j) o[j] += row[j];
    }
    return out;
}

namespace serial {

Matrix matmul(const Matrix& a, const Matrix& b) {
    check_mul(a, b, a.cols(), b.rows(), "matmul");
    Matrix c(a.rows(), b.cols());
    for (size_t i = 0; i < a.rows(); ++i) matmul_row(a, b, c, i);
    return c;
}

Matrix matmul_abt(const Matrix& a, const Matrix& b) {
    check_mul(a, b, a.cols(), b.cols(), "matmul_abt");
    Matrix c(a.rows(), b.rows());
    for (size_t i = 0; i < a.rows(); ++i) matmul_abt_row(a, b, c, i);
    return c;
}

Matrix matmul_atb(const Matrix& a, const Matrix& b) {
    check_mul(a, b, a.rows(), b.rows(), "matmul_atb");
    Matrix c(a.cols(), b.cols());
    for (size_t k = 0; k < a.cols(); ++k) matmul_atb_row(a, b, c, k);
    return c;
}

void add_row_vector(Matrix& m, const Matrix& bias) {
    if (bias.rows() != 1 || bias.cols() != m.cols()) {
        throw ShapeError("add_row_vector: bias " + bias.shape_str() + " does not broadcast over " +
                         m.shape_str());
    }
    const double* b = bias.row_ptr(0);
    for (size_t i = 0; i < m.rows(); ++i) {
        double* row = m.row_ptr(i);
        for (size_t j = 0; j < m.cols(); ++j) row[j] += b[j];
    }
}

Matrix tanh_map(const Matrix& m) {
    Matrix out(m.rows(), m.cols());
    for (size_t i = 0; i < m.size(); ++i) out.data()[i] = std::tanh(m.data()[i]);
    return out;
}

Matrix tanh_backward(const Matrix& upstream, const Matrix& activated) {
    if (!upstream.same_shape(activated)) {
        throw ShapeError("tanh_backward: " + upstream.shape_str() + " vs " + activated.shape_str());
    }
    Matrix out(upstream.rows(), upstream.cols());
    for (size_t i = 0; i < out.size(); ++i) {
        const double a = activated.data()[i];
        out.data()[i] = upstream.data()[i] * (1.0 - a * a);
    }
    return out;
}

Matrix col_sums(const Matrix& m) { return kern::col_sums(m); }

}  // namespace serial

}  // namespace dcd::kern
