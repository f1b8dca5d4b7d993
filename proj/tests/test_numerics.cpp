// Copyright 2026 The nullora Authors
// SPDX-License-Identifier: Apache-2.0

#include "nullora/error.hpp"
#include "nullora/linalg.hpp"
#include "nullora/matrix.hpp"
#include "nullora/random.hpp"

#include <doctest.h>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <vector>

using namespace nullora;

namespace {

Eigen::MatrixXd to_eigen(const Matrix& m) {
    Eigen::MatrixXd e(m.rows(), m.cols());
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = 0; j < m.cols(); ++j) e(i, j) = m(i, j);
    return e;
}

Matrix reconstruct(const SvdResult& s) {
    return matmul(scale_cols(s.U, s.sigma), s.Vt);
}

Matrix planted_rank(std::size_t rows, std::size_t cols, std::size_t rank, std::uint64_t seed) {
    Rng rng(seed);
    return matmul(rng.gaussian(rows, rank), rng.gaussian(rank, cols));
}

} // namespace

TEST_CASE("matrix basics") {
    const Matrix a{{1, 2, 3}, {4, 5, 6}};
    CHECK(a.rows() == 2);
    CHECK(a.cols() == 3);
    CHECK(a.transposed() == Matrix{{1, 4}, {2, 5}, {3, 6}});
    CHECK(matmul(a, a.transposed()) == Matrix{{14, 32}, {32, 77}});
    CHECK(matmul_tn(a, a) == matmul(a.transposed(), a));
    CHECK(matmul_nt(a, a) == matmul(a, a.transposed()));
    CHECK(hstack(a, a).cols() == 6);
    CHECK(vstack(a, a).rows() == 4);
    CHECK(frobenius_norm(Matrix{{3, 4}}) == 5.0);
    CHECK_THROWS_AS(matmul(a, a), ShapeError);
    CHECK_THROWS_AS(a + a.transposed(), ShapeError);

    const Matrix empty(4, 0);
    CHECK(matmul(empty, Matrix(0, 3)) == Matrix(4, 3));
}

TEST_CASE("threaded products match the serial result bitwise") {
    Rng rng(11);
    const Matrix a = rng.gaussian(300, 257);
    const Matrix b = rng.gaussian(257, 190);
    const unsigned saved = num_threads();
    set_num_threads(1);
    const Matrix serial = matmul(a, b);
    set_num_threads(4);
    const Matrix parallel = matmul(a, b);
    set_num_threads(saved);
    CHECK(serial == parallel);
}

TEST_CASE("svd hand examples") {
    SUBCASE("identity") {
        const SvdResult s = svd(Matrix::identity(3));
        CHECK(s.sigma == std::vector<double>{1, 1, 1});
        CHECK(s.U == Matrix::identity(3));
        CHECK(s.Vt == Matrix::identity(3));
    }
    SUBCASE("zero") {
        const SvdResult s = svd(Matrix(3, 3));
        CHECK(s.sigma == std::vector<double>{0, 0, 0});
        CHECK(orthonormality_defect_cols(s.U) < 1e-12);
    }
    SUBCASE("outer product") {
        const Matrix m{{3, 0, 4}, {6, 0, 8}, {6, 0, 8}};
        const SvdResult s = svd(m);
        CHECK(s.sigma[0] == doctest::Approx(15.0).epsilon(1e-14));
        CHECK(std::abs(s.sigma[1]) < 1e-13);
        CHECK(std::abs(s.sigma[2]) < 1e-13);
        CHECK(max_abs_diff(reconstruct(s), m) < 1e-13);
    }
}

TEST_CASE("svd agrees with an independent implementation") {
    struct Shape {
        std::size_t rows, cols, rank;
    };
    const std::vector<Shape> shapes{{8, 8, 8}, {12, 7, 7}, {7, 12, 7}, {40, 40, 31}, {33, 50, 10}, {64, 64, 56}};
    for (std::size_t i = 0; i < shapes.size(); ++i) {
        const auto [rows, cols, rank] = shapes[i];
        CAPTURE(rows);
        CAPTURE(cols);
        const Matrix m = planted_rank(rows, cols, rank, 100 + i);
        const SvdResult s = svd(m);
        Eigen::JacobiSVD<Eigen::MatrixXd> oracle(to_eigen(m));
        const auto& ref = oracle.singularValues();
        REQUIRE(s.sigma.size() == static_cast<std::size_t>(ref.size()));
        for (std::size_t k = 0; k < s.sigma.size(); ++k) CHECK(std::abs(s.sigma[k] - ref[k]) <= 1e-12 * ref[0]);
        CHECK(max_abs_diff(reconstruct(s), m) <= 1e-12 * ref[0]);
        CHECK(orthonormality_defect_cols(s.U) < 1e-12);
        CHECK(orthonormality_defect_rows(s.Vt) < 1e-12);
        CHECK(numerical_rank(s.sigma) == rank);
    }
}

TEST_CASE("svd sign convention") {
    const Matrix m = Rng(5).gaussian(9, 6);
    const SvdResult s = svd(m);
    for (std::size_t c = 0; c < s.U.cols(); ++c) {
        const auto col = s.U.column(c);
        std::size_t best = 0;
        for (std::size_t r = 1; r < col.size(); ++r)
            if (std::abs(col[r]) > std::abs(col[best])) best = r;
        CHECK(col[best] > 0.0);
    }
}

TEST_CASE("numerical rank") {
    CHECK(numerical_rank(std::vector<double>{1, 1, 1}) == 3);
    CHECK(numerical_rank(std::vector<double>{0, 0}) == 0);
    CHECK(numerical_rank(std::vector<double>{10, 1e-3, 1e-9}) == 2);
    CHECK_THROWS_AS(numerical_rank(std::vector<double>{1}, 0.0), ArgumentError);
}

TEST_CASE("rank-nullity on planted deficiencies") {
    for (std::size_t k : {0u, 1u, 4u, 16u}) {
        CAPTURE(k);
        const RankReport r = rank_report(planted_rank(64, 64, 64 - k, 7 + k));
        CHECK(r.numerical_rank == 64 - k);
        CHECK(r.numerical_rank + r.nullity_right == 64);
        CHECK(r.numerical_rank + r.nullity_left == 64);
    }
    const RankReport wide = rank_report(planted_rank(20, 48, 12, 3));
    CHECK(wide.nullity_left == 8);
    CHECK(wide.nullity_right == 36);
}

TEST_CASE("null space hand examples") {
    const Matrix w{{1, 0}, {0, 0}};
    CHECK(null_space_left(w) == Matrix{{0}, {1}});
    CHECK(null_space_right(w) == Matrix{{0, 1}});

    CHECK(null_space_left(Matrix::identity(4)).cols() == 0);
    CHECK(null_space_left(Matrix::identity(4)).rows() == 4);
    CHECK(null_space_right(Matrix::identity(4)).rows() == 0);
    CHECK(null_space_right(Matrix::identity(4)).cols() == 4);

    const Matrix u = null_space_left(Matrix(3, 3));
    CHECK(max_abs_diff(matmul_nt(u, u), Matrix::identity(3)) < 1e-14);
    const Matrix v = null_space_right(Matrix(2, 3));
    CHECK(v.rows() == 3);
    CHECK(max_abs_diff(matmul_nt(v, v), Matrix::identity(3)) < 1e-14);
}

TEST_CASE("null spaces annihilate planted weights") {
    const Matrix w = planted_rank(50, 30, 22, 9);
    const Matrix left = null_space_left(w);
    const Matrix right = null_space_right(w);
    CHECK(left.cols() == 28);
    CHECK(right.rows() == 8);
    const double scale = svd(w).sigma[0];
    CHECK(max_abs(matmul_tn(w, left)) < 1e-12 * scale);
    CHECK(max_abs(matmul_nt(w, right)) < 1e-12 * scale);
    CHECK(orthonormality_defect_cols(left) < 1e-12);
    CHECK(orthonormality_defect_rows(right) < 1e-12);
}

TEST_CASE("random orthonormal") {
    CHECK(random_orthonormal(4, 0, 1).cols() == 0);
    const Matrix a = random_orthonormal(8, 3, 7);
    CHECK(a == random_orthonormal(8, 3, 7));
    CHECK(orthonormality_defect_cols(a) < 1e-10);
    CHECK_THROWS_AS(random_orthonormal(3, 4, 1), ArgumentError);
}

TEST_CASE("orthonormal complement") {
    const Matrix q = random_orthonormal(10, 4, 21);
    const Matrix c = orthonormal_complement(q);
    CHECK(c.cols() == 6);
    CHECK(orthonormality_defect_cols(hstack(q, c)) < 1e-12);
    CHECK(orthonormal_complement(Matrix(5, 0)) == Matrix::identity(5));
    CHECK_THROWS_AS(orthonormalize_columns(Matrix{{1, 2}, {1, 2}}), ArgumentError);
}

TEST_CASE("rng determinism and ranges") {
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) CHECK(a.normal() == b.normal());
    Rng c(1);
    for (int i = 0; i < 1000; ++i) {
        const double u = c.uniform();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
        CHECK(c.below(7) < 7);
    }
    auto p = Rng(3).permutation(50);
    std::sort(p.begin(), p.end());
    for (std::size_t i = 0; i < p.size(); ++i) CHECK(p[i] == i);
}
