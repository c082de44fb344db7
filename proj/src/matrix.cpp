#include "dcd/matrix.hpp"

#include <cmath>
#include <utility>

namespace dcd {

Matrix::Matrix(size_t rows, size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
        throw ShapeError("matrix data length " + std::to_string(data_.size()) +
                         " does not match " + std::to_string(rows_) + "x" + std::to_string(cols_));
    }
}

std::string Matrix::shape_str() const {
    return std::to_string(rows_) + "x" + std::to_string(cols_);
}

bool Matrix::all_finite() const {
    for (double v : data_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

void Matrix::require_finite(const char* what) const {
    if (!all_finite()) {
        throw NumericError(std::string(what) + ": non-finite value in " + shape_str() + " result");
    }
}

void require_shape(bool ok, const std::string& message) {
    if (!ok) throw ShapeError(message);
}

}  // namespace dcd
