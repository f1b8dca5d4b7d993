// Copyright 2026 The nullora Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "nullora/matrix.hpp"

#include <cstdint>
#include <string_view>
#include <vector>

namespace nullora {

/// Default relative threshold below which a singular value counts as zero.
inline constexpr double kDefaultTau = 1e-5;

/// Thin SVD M = U * diag(sigma) * Vt with k = min(rows, cols).
///
/// sigma is non-increasing. In every column of U the entry of largest
/// magnitude is non-negative (ties go to the lowest row index); the matching
/// row of Vt carries the compensating sign. Output is a pure function of the
/// input bytes.
struct SvdResult {
    Matrix U;                  // rows x k
    std::vector<double> sigma; // k
    Matrix Vt;                 // k x cols
};

/// One-sided Jacobi SVD. `label` names the matrix in convergence errors.
SvdResult svd(const Matrix& m, std::string_view label = "matrix");

/// Count of sigma[i] > tau * sigma[0]; 0 when sigma is empty or sigma[0] == 0.
std::size_t numerical_rank(std::span<const double> sigma, double tau = kDefaultTau);

struct RankReport {
    std::size_t rows = 0; // d_out
    std::size_t cols = 0; // d_in
    std::size_t numerical_rank = 0;
    std::size_t nullity_left = 0;  // rows - rank
    std::size_t nullity_right = 0; // cols - rank
    double sigma_max = 0.0;
    double sigma_min = 0.0;
    double tau = kDefaultTau;
};

RankReport rank_report(const SvdResult& s, std::size_t rows, std::size_t cols, double tau = kDefaultTau);
RankReport rank_report(const Matrix& m, double tau = kDefaultTau, std::string_view label = "matrix");

/// Orthonormal basis (as columns, rows x nullity_left) of {y : W^T y = 0}.
///
/// Ordered by increasing associated singular value: directions outside the
/// thin SVD's column space (implicit sigma = 0) come first, then the
/// sub-threshold columns of U. Returns a rows x 0 matrix at full row rank.
Matrix null_space_left(const Matrix& w, double tau = kDefaultTau);
Matrix null_space_left(const SvdResult& s, double tau = kDefaultTau);

/// Orthonormal basis (as rows, nullity_right x cols) of {x : W x = 0}, in the
/// same order convention as null_space_left.
Matrix null_space_right(const Matrix& w, double tau = kDefaultTau);
Matrix null_space_right(const SvdResult& s, double tau = kDefaultTau);

/// Orthonormal basis of the orthogonal complement of span(q) where q has
/// orthonormal columns. Result is q.rows() x (q.rows() - q.cols()).
Matrix orthonormal_complement(const Matrix& q);

/// Gram-Schmidt with one re-orthogonalization pass. Throws if the columns
/// are numerically dependent.
Matrix orthonormalize_columns(const Matrix& a);

/// Seeded Gaussian rows x cols followed by orthonormalization.
Matrix random_orthonormal(std::size_t rows, std::size_t cols, std::uint64_t seed);

/// Flip each column of q so its largest-magnitude entry is non-negative
/// (ties to the lowest row index).
void canonicalize_column_signs(Matrix& q);

} // namespace nullora
