// Copyright 2026 The nullora Authors
// SPDX-License-Identifier: Apache-2.0

#include "nullora/matrix.hpp"

#include "nullora/error.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <thread>

namespace nullora {

namespace {

std::atomic<unsigned> g_num_threads{1};

void check_same_shape(const Matrix& a, const Matrix& b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw ShapeError(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " + b.shape_str());
    }
}

// Runs body(first_row, last_row) over [0, rows). Partitioning only decides
// which worker owns a row; per-row arithmetic is identical.
template <typename Body>
void for_rows(std::size_t rows, std::size_t work_per_row, Body&& body) {
    const unsigned workers = std::min<std::size_t>(g_num_threads.load(), rows);
    if (workers <= 1 || rows * work_per_row < (1u << 16)) {
        body(std::size_t{0}, rows);
        return;
    }
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    const std::size_t chunk = (rows + workers - 1) / workers;
    for (unsigned w = 0; w < workers; ++w) {
        const std::size_t lo = w * chunk;
        const std::size_t hi = std::min(rows, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([&body, lo, hi] { body(lo, hi); });
    }
}

} // namespace

const char* to_string(FormatErrc code) noexcept {
    switch (code) {
    case FormatErrc::io: return "io error";
    case FormatErrc::bad_magic: return "bad magic";
    case FormatErrc::unsupported_version: return "unsupported version";
    case FormatErrc::truncated: return "truncated payload";
    case FormatErrc::bad_header: return "bad header";
    case FormatErrc::duplicate_name: return "duplicate tensor name";
    case FormatErrc::invalid_name: return "invalid tensor name";
    case FormatErrc::shape_mismatch: return "shape/byte-length mismatch";
    case FormatErrc::non_finite: return "non-finite value";
    case FormatErrc::missing_tensor: return "missing tensor";
    case FormatErrc::layer_mismatch: return "layer mismatch";
    }
    return "unknown";
}

void set_num_threads(unsigned n) { g_num_threads.store(std::max(1u, n)); }
unsigned num_threads() { return g_num_threads.load(); }

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
        throw ShapeError("Matrix: data length " + std::to_string(data_.size()) + " does not match " +
                         shape_str());
    }
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) : rows_(rows.size()) {
    cols_ = rows_ == 0 ? 0 : rows.begin()->size();
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
        if (r.size() != cols_) throw ShapeError("Matrix: ragged initializer list");
        data_.insert(data_.end(), r.begin(), r.end());
    }
}

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

Matrix Matrix::diagonal(std::span<const double> d) {
    Matrix m(d.size(), d.size());
    for (std::size_t i = 0; i < d.size(); ++i) m(i, i) = d[i];
    return m;
}

Matrix Matrix::transposed() const {
    Matrix t(cols_, rows_);
    for (std::size_t r = 0; r < rows_; ++r)
        for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
    return t;
}

std::vector<double> Matrix::column(std::size_t c) const {
    std::vector<double> out(rows_);
    for (std::size_t r = 0; r < rows_; ++r) out[r] = (*this)(r, c);
    return out;
}

void Matrix::set_column(std::size_t c, std::span<const double> values) {
    if (values.size() != rows_) throw ShapeError("set_column: length mismatch");
    for (std::size_t r = 0; r < rows_; ++r) (*this)(r, c) = values[r];
}

Matrix Matrix::col_block(std::size_t first, std::size_t count) const {
    if (first + count > cols_) throw ShapeError("col_block: range exceeds " + shape_str());
    Matrix out(rows_, count);
    for (std::size_t r = 0; r < rows_; ++r)
        std::copy_n(data_.begin() + r * cols_ + first, count, out.data_.begin() + r * count);
    return out;
}

Matrix Matrix::row_block(std::size_t first, std::size_t count) const {
    if (first + count > rows_) throw ShapeError("row_block: range exceeds " + shape_str());
    std::vector<double> d(data_.begin() + first * cols_, data_.begin() + (first + count) * cols_);
    return Matrix(count, cols_, std::move(d));
}

bool Matrix::all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

std::string Matrix::shape_str() const { return std::to_string(rows_) + "x" + std::to_string(cols_); }

Matrix operator+(const Matrix& a, const Matrix& b) {
    Matrix out = a;
    out += b;
    return out;
}

Matrix& operator+=(Matrix& a, const Matrix& b) {
    check_same_shape(a, b, "add");
    auto x = a.data();
    auto y = b.data();
    for (std::size_t i = 0; i < x.size(); ++i) x[i] += y[i];
    return a;
}

Matrix operator-(const Matrix& a, const Matrix& b) {
    check_same_shape(a, b, "sub");
    Matrix out = a;
    auto x = out.data();
    auto y = b.data();
    for (std::size_t i = 0; i < x.size(); ++i) x[i] -= y[i];
    return out;
}

Matrix operator*(double s, const Matrix& a) {
    Matrix out = a;
    for (double& v : out.data()) v *= s;
    return out;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) {
        throw ShapeError("matmul: " + a.shape_str() + " * " + b.shape_str());
    }
    Matrix c(a.rows(), b.cols());
    const std::size_t inner = a.cols();
    const std::size_t n = b.cols();
    for_rows(a.rows(), inner * n, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i) {
            auto out = c.row(i);
            for (std::size_t k = 0; k < inner; ++k) {
                const double aik = a(i, k);
                if (aik == 0.0) continue;
                auto brow = b.row(k);
                for (std::size_t j = 0; j < n; ++j) out[j] += aik * brow[j];
            }
        }
    });
    return c;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows()) {
        throw ShapeError("matmul_tn: " + a.shape_str() + "^T * " + b.shape_str());
    }
    return matmul(a.transposed(), b);
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.cols()) {
        throw ShapeError("matmul_nt: " + a.shape_str() + " * " + b.shape_str() + "^T");
    }
    Matrix c(a.rows(), b.rows());
    const std::size_t inner = a.cols();
    for_rows(a.rows(), inner * b.rows(), [&](std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i) {
            auto arow = a.row(i);
            for (std::size_t j = 0; j < b.rows(); ++j) {
                auto brow = b.row(j);
                double acc = 0.0;
                for (std::size_t k = 0; k < inner; ++k) acc += arow[k] * brow[k];
                c(i, j) = acc;
            }
        }
    });
    return c;
}

Matrix scale_rows(std::span<const double> d, const Matrix& a) {
    if (d.size() != a.rows()) throw ShapeError("scale_rows: diagonal length mismatch");
    Matrix out = a;
    for (std::size_t r = 0; r < a.rows(); ++r)
        for (double& v : out.row(r)) v *= d[r];
    return out;
}

Matrix scale_cols(const Matrix& a, std::span<const double> d) {
    if (d.size() != a.cols()) throw ShapeError("scale_cols: diagonal length mismatch");
    Matrix out = a;
    for (std::size_t r = 0; r < a.rows(); ++r) {
        auto row = out.row(r);
        for (std::size_t c = 0; c < a.cols(); ++c) row[c] *= d[c];
    }
    return out;
}

Matrix hstack(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows()) throw ShapeError("hstack: " + a.shape_str() + " | " + b.shape_str());
    Matrix out(a.rows(), a.cols() + b.cols());
    for (std::size_t r = 0; r < a.rows(); ++r) {
        auto dst = out.row(r);
        std::copy(a.row(r).begin(), a.row(r).end(), dst.begin());
        std::copy(b.row(r).begin(), b.row(r).end(), dst.begin() + static_cast<std::ptrdiff_t>(a.cols()));
    }
    return out;
}

Matrix vstack(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.cols()) throw ShapeError("vstack: " + a.shape_str() + " ; " + b.shape_str());
    std::vector<double> d(a.data().begin(), a.data().end());
    d.insert(d.end(), b.data().begin(), b.data().end());
    return Matrix(a.rows() + b.rows(), a.cols(), std::move(d));
}

double frobenius_norm(const Matrix& a) {
    double acc = 0.0;
    for (double v : a.data()) acc += v * v;
    return std::sqrt(acc);
}

double max_abs(const Matrix& a) {
    double m = 0.0;
    for (double v : a.data()) m = std::max(m, std::abs(v));
    return m;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
    check_same_shape(a, b, "max_abs_diff");
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
    return m;
}

double orthonormality_defect_cols(const Matrix& q) {
    return q.cols() == 0 ? 0.0 : max_abs_diff(matmul_tn(q, q), Matrix::identity(q.cols()));
}

double orthonormality_defect_rows(const Matrix& q) {
    return q.rows() == 0 ? 0.0 : max_abs_diff(matmul_nt(q, q), Matrix::identity(q.rows()));
}

} // namespace nullora
