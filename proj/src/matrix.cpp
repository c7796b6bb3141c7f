#include "hrge/matrix.hpp"

#include <algorithm>
#include <cmath>

#include "hrge/errors.hpp"

namespace hrge {

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows * cols) {
        throw ShapeError("matrix data length " + std::to_string(data_.size()) +
                         " does not match " + std::to_string(rows) + "x" + std::to_string(cols));
    }
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
    rows_ = rows.size();
    cols_ = rows_ == 0 ? 0 : rows.begin()->size();
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
        if (r.size() != cols_) throw ShapeError("ragged matrix literal");
        data_.insert(data_.end(), r.begin(), r.end());
    }
}

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

void Matrix::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Matrix::all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Matrix Matrix::select_rows(std::span<const std::size_t> indices) const {
    Matrix out(indices.size(), cols_);
    for (std::size_t i = 0; i < indices.size(); ++i) {
        if (indices[i] >= rows_) throw ShapeError("row index " + std::to_string(indices[i]) + " out of range");
        std::copy_n(row(indices[i]).begin(), cols_, out.row(i).begin());
    }
    return out;
}

Matrix Matrix::rotate_rows(std::ptrdiff_t shift) const {
    Matrix out(rows_, cols_);
    if (rows_ == 0) return out;
    const auto n = static_cast<std::ptrdiff_t>(rows_);
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        const auto src = static_cast<std::size_t>(((i + shift) % n + n) % n);
        std::copy_n(row(src).begin(), cols_, out.row(static_cast<std::size_t>(i)).begin());
    }
    return out;
}

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw ShapeError("max_abs_diff: length mismatch");
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) throw ShapeError("max_abs_diff: shape mismatch");
    return max_abs_diff(a.values(), b.values());
}

void require_dim(std::size_t got, std::size_t want, const std::string& what) {
    if (got != want) {
        throw ShapeError(what + ": got dimension " + std::to_string(got) + ", expected " + std::to_string(want));
    }
}

} // namespace hrge
