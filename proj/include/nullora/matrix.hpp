// Copyright 2026 The nullora Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace nullora {

/// Row-major dense matrix of doubles. Zero-sized dimensions are allowed so
/// that empty bases (e.g. a 4x0 null space) are ordinary values.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
    Matrix(std::initializer_list<std::initializer_list<double>> rows);

    static Matrix identity(std::size_t n);
    static Matrix diagonal(std::span<const double> d);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const noexcept { return {data_.data() + r * cols_, cols_}; }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }

    Matrix transposed() const;
    std::vector<double> column(std::size_t c) const;
    void set_column(std::size_t c, std::span<const double> values);

    /// Columns [first, first + count).
    Matrix col_block(std::size_t first, std::size_t count) const;
    /// Rows [first, first + count).
    Matrix row_block(std::size_t first, std::size_t count) const;

    bool all_finite() const noexcept;
    std::string shape_str() const;

    friend bool operator==(const Matrix&, const Matrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

Matrix operator+(const Matrix& a, const Matrix& b);
Matrix operator-(const Matrix& a, const Matrix& b);
Matrix operator*(double s, const Matrix& a);
Matrix& operator+=(Matrix& a, const Matrix& b);

/// C = A * B
Matrix matmul(const Matrix& a, const Matrix& b);
/// C = A^T * B
Matrix matmul_tn(const Matrix& a, const Matrix& b);
/// C = A * B^T
Matrix matmul_nt(const Matrix& a, const Matrix& b);

/// diag(d) * A
Matrix scale_rows(std::span<const double> d, const Matrix& a);
/// A * diag(d)
Matrix scale_cols(const Matrix& a, std::span<const double> d);

Matrix hstack(const Matrix& a, const Matrix& b);
Matrix vstack(const Matrix& a, const Matrix& b);

double frobenius_norm(const Matrix& a);
double max_abs(const Matrix& a);
double max_abs_diff(const Matrix& a, const Matrix& b);

/// max |Q^T Q - I|, the column-orthonormality defect.
double orthonormality_defect_cols(const Matrix& q);
/// max |Q Q^T - I|, the row-orthonormality defect.
double orthonormality_defect_rows(const Matrix& q);

/// Worker count for row-parallel kernels. Results never depend on it: each
/// output row is reduced by exactly one worker in a fixed order.
void set_num_threads(unsigned n);
unsigned num_threads();

} // namespace nullora
