// clevercatch/matrix.hpp
// Dense row-major matrix of doubles. Products go through Eigen maps; every
// operation checks shapes and never broadcasts.
#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "clevercatch/error.hpp"

namespace clevercatch {

class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
        : rows_(rows), cols_(cols), data_(std::move(data)) {
        if (data_.size() != rows_ * cols_)
            throw ShapeError("Matrix: data length " + std::to_string(data_.size()) + " != " +
                             std::to_string(rows_) + "x" + std::to_string(cols_));
    }

    static Matrix from_rows(const std::vector<std::vector<double>>& rows) {
        if (rows.empty()) return {};
        Matrix m(rows.size(), rows.front().size());
        for (std::size_t r = 0; r < rows.size(); ++r) {
            if (rows[r].size() != m.cols_) throw ShapeError("Matrix::from_rows: ragged rows");
            std::copy(rows[r].begin(), rows[r].end(), m.row(r).begin());
        }
        return m;
    }

    static Matrix identity(std::size_t n) {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    std::span<double> values() noexcept { return data_; }
    std::span<const double> values() const noexcept { return data_; }
    const std::vector<double>& data() const noexcept { return data_; }

    bool all_finite() const {
        for (double x : data_)
            if (!std::isfinite(x)) return false;
        return true;
    }

    bool operator==(const Matrix& other) const = default;

    using EigenRowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    Eigen::Map<EigenRowMajor> eigen() {
        return {data_.data(), static_cast<Eigen::Index>(rows_), static_cast<Eigen::Index>(cols_)};
    }
    Eigen::Map<const EigenRowMajor> eigen() const {
        return {data_.data(), static_cast<Eigen::Index>(rows_), static_cast<Eigen::Index>(cols_)};
    }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

inline std::string shape_str(const Matrix& m) {
    return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

// a * b
inline Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows())
        throw ShapeError("matmul: " + shape_str(a) + " * " + shape_str(b));
    Matrix out(a.rows(), b.cols());
    if (!out.empty() && a.cols() > 0) out.eigen().noalias() = a.eigen() * b.eigen();
    return out;
}

// a^T * b
inline Matrix matmul_tn(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows())
        throw ShapeError("matmul_tn: " + shape_str(a) + "^T * " + shape_str(b));
    Matrix out(a.cols(), b.cols());
    if (!out.empty() && a.rows() > 0) out.eigen().noalias() = a.eigen().transpose() * b.eigen();
    return out;
}

// a * b^T
inline Matrix matmul_nt(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.cols())
        throw ShapeError("matmul_nt: " + shape_str(a) + " * " + shape_str(b) + "^T");
    Matrix out(a.rows(), b.rows());
    if (!out.empty() && a.cols() > 0) out.eigen().noalias() = a.eigen() * b.eigen().transpose();
    return out;
}

// Rows `indices` of `m`, in order.
inline Matrix gather_rows(const Matrix& m, std::span<const std::size_t> indices) {
    Matrix out(indices.size(), m.cols());
    for (std::size_t k = 0; k < indices.size(); ++k) {
        if (indices[k] >= m.rows()) throw ShapeError("gather_rows: row index out of range");
        const auto src = m.row(indices[k]);
        std::copy(src.begin(), src.end(), out.row(k).begin());
    }
    return out;
}

inline Matrix hconcat(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows())
        throw ShapeError("hconcat: " + shape_str(a) + " | " + shape_str(b));
    Matrix out(a.rows(), a.cols() + b.cols());
    for (std::size_t r = 0; r < a.rows(); ++r) {
        auto dst = out.row(r);
        std::copy(a.row(r).begin(), a.row(r).end(), dst.begin());
        std::copy(b.row(r).begin(), b.row(r).end(), dst.begin() + static_cast<std::ptrdiff_t>(a.cols()));
    }
    return out;
}

inline Matrix vconcat(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.cols() && !a.empty() && !b.empty())
        throw ShapeError("vconcat: " + shape_str(a) + " / " + shape_str(b));
    const std::size_t cols = a.empty() ? b.cols() : a.cols();
    std::vector<double> data(a.data());
    data.insert(data.end(), b.data().begin(), b.data().end());
    return Matrix(a.rows() + b.rows(), cols, std::move(data));
}

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size())
        throw ShapeError("squared_distance: lengths " + std::to_string(a.size()) + " vs " +
                         std::to_string(b.size()));
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        const double d = a[k] - b[k];
        s += d * d;
    }
    return s;
}

}  // namespace clevercatch
