#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "dcd/errors.hpp"

namespace dcd {

/// Dense row-major matrix of 64-bit floats. The single container for
/// features, logits and network parameters.
class Matrix {
public:
    Matrix() = default;
    Matrix(size_t rows, size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
    Matrix(size_t rows, size_t cols, std::vector<double> data);

    size_t rows() const { return rows_; }
    size_t cols() const { return cols_; }
    size_t size() const { return data_.size(); }

    double& at(size_t r, size_t c) { return data_[r * cols_ + c]; }
    double at(size_t r, size_t c) const { return data_[r * cols_ + c]; }

    double* row_ptr(size_t r) { return data_.data() + r * cols_; }
    const double* row_ptr(size_t r) const { return data_.data() + r * cols_; }

    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

    bool same_shape(const Matrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }
    std::string shape_str() const;

    /// True when every entry is finite.
    bool all_finite() const;

    /// Throws NumericError naming `what` if any entry is non-finite.
    void require_finite(const char* what) const;

    bool operator==(const Matrix& o) const = default;

private:
    size_t rows_ = 0;
    size_t cols_ = 0;
    std::vector<double> data_;
};

/// Throws ShapeError naming both operands unless a.cols == b.rows style
/// constraints hold; used by the kernels below.
void require_shape(bool ok, const std::string& message);

}  // namespace dcd
