// Copyright 2026 The nullora Authors
// SPDX-License-Identifier: Apache-2.0

#include "nullora/linalg.hpp"

#include "nullora/error.hpp"
#include "nullora/random.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace nullora {

namespace {

using Column = std::vector<double>;

constexpr int kMaxSweeps = 80;

double dot(const Column& a, const Column& b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

void axpy(double alpha, const Column& x, Column& y) {
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += alpha * x[i];
}

// Orthogonalize v against every column in `basis` twice, then normalize.
// Returns the norm before normalization.
double orthogonalize_into(const std::vector<Column>& basis, Column& v) {
    for (int pass = 0; pass < 2; ++pass)
        for (const Column& q : basis) axpy(-dot(q, v), q, v);
    const double n = std::sqrt(dot(v, v));
    if (n > 0.0)
        for (double& x : v) x /= n;
    return n;
}

std::vector<Column> complement_columns(const std::vector<Column>& q, std::size_t m) {
    const std::size_t need = m - q.size();
    std::vector<Column> basis = q;
    std::vector<Column> out;
    out.reserve(need);
    if (need == 0) return out;

    // Residual projector R = I - Q Q^T, kept symmetric; its column j is the
    // component of e_j outside the current span.
    Matrix r = Matrix::identity(m);
    for (const Column& c : q)
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < m; ++j) r(i, j) -= c[i] * c[j];

    while (out.size() < need) {
        std::size_t best = 0;
        double best_norm = -1.0;
        for (std::size_t j = 0; j < m; ++j) {
            double n2 = 0.0;
            for (std::size_t i = 0; i < m; ++i) n2 += r(i, j) * r(i, j);
            if (n2 > best_norm) {
                best_norm = n2;
                best = j;
            }
        }
        Column v = r.column(best);
        orthogonalize_into(basis, v);
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < m; ++j) r(i, j) -= v[i] * v[j];
        basis.push_back(v);
        out.push_back(std::move(v));
    }
    return out;
}

void canonicalize_sign(Column& v, double* flip = nullptr) {
    std::size_t arg = 0;
    double best = -1.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (std::abs(v[i]) > best) {
            best = std::abs(v[i]);
            arg = i;
        }
    }
    const bool negate = !v.empty() && v[arg] < 0.0;
    if (negate)
        for (double& x : v) x = -x;
    if (flip) *flip = negate ? -1.0 : 1.0;
}

Matrix from_columns(const std::vector<Column>& cols, std::size_t rows) {
    Matrix m(rows, cols.size());
    for (std::size_t c = 0; c < cols.size(); ++c) m.set_column(c, cols[c]);
    return m;
}

std::vector<Column> to_columns(const Matrix& m) {
    std::vector<Column> cols(m.cols());
    for (std::size_t c = 0; c < m.cols(); ++c) cols[c] = m.column(c);
    return cols;
}

// Hestenes one-sided Jacobi on a tall (m >= n) matrix. Produces sorted sigma,
// U (m x n) with unnormalizable columns completed, and V (n x n).
struct TallSvd {
    std::vector<Column> u;
    std::vector<double> sigma;
    std::vector<Column> v;
};

TallSvd jacobi_tall(const Matrix& m, std::string_view label) {
    const std::size_t rows = m.rows();
    const std::size_t n = m.cols();
    std::vector<Column> a = to_columns(m);
    std::vector<Column> v(n, Column(n, 0.0));
    for (std::size_t i = 0; i < n; ++i) v[i][i] = 1.0;

    const double tol = std::numeric_limits<double>::epsilon() * static_cast<double>(std::max<std::size_t>(rows, 1));
    bool converged = n < 2;
    for (int sweep = 0; sweep < kMaxSweeps && !converged; ++sweep) {
        converged = true;
        for (std::size_t i = 0; i + 1 < n; ++i) {
            for (std::size_t j = i + 1; j < n; ++j) {
                const double alpha = dot(a[i], a[i]);
                const double beta = dot(a[j], a[j]);
                if (alpha == 0.0 || beta == 0.0) continue;
                const double gamma = dot(a[i], a[j]);
                if (std::abs(gamma) <= tol * std::sqrt(alpha) * std::sqrt(beta)) continue;
                converged = false;

                const double zeta = (beta - alpha) / (2.0 * gamma);
                const double t = (zeta >= 0.0 ? 1.0 : -1.0) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                for (std::size_t k = 0; k < rows; ++k) {
                    const double ai = a[i][k];
                    const double aj = a[j][k];
                    a[i][k] = c * ai - s * aj;
                    a[j][k] = s * ai + c * aj;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double vi = v[i][k];
                    const double vj = v[j][k];
                    v[i][k] = c * vi - s * vj;
                    v[j][k] = s * vi + c * vj;
                }
            }
        }
    }
    if (!converged) {
        throw ConvergenceError("svd: one-sided Jacobi did not converge within " + std::to_string(kMaxSweeps) +
                               " sweeps for '" + std::string(label) + "' (" + m.shape_str() + ")");
    }

    std::vector<double> norms(n);
    for (std::size_t j = 0; j < n; ++j) norms[j] = std::sqrt(dot(a[j], a[j]));
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return norms[x] > norms[y]; });

    TallSvd out;
    out.sigma.resize(n);
    out.v.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
        out.sigma[k] = norms[order[k]];
        out.v[k] = std::move(v[order[k]]);
    }

    // Columns whose norm is at rounding level carry no direction; replace
    // them with a completion of the well-defined ones.
    const double smax = n > 0 ? out.sigma[0] : 0.0;
    const double floor = smax * std::numeric_limits<double>::epsilon() * static_cast<double>(std::max(rows, n));
    std::vector<Column> good;
    std::size_t n_good = 0;
    while (n_good < n && out.sigma[n_good] > floor && out.sigma[n_good] > 0.0) ++n_good;
    good.reserve(n);
    for (std::size_t k = 0; k < n_good; ++k) {
        Column col = a[order[k]];
        for (double& x : col) x /= out.sigma[k];
        good.push_back(std::move(col));
    }
    if (n_good < n) {
        std::vector<Column> fill = complement_columns(good, rows);
        for (std::size_t k = n_good; k < n; ++k) good.push_back(std::move(fill[k - n_good]));
    }
    out.u = std::move(good);
    return out;
}

} // namespace

void canonicalize_column_signs(Matrix& q) {
    for (std::size_t c = 0; c < q.cols(); ++c) {
        Column col = q.column(c);
        canonicalize_sign(col);
        q.set_column(c, col);
    }
}

SvdResult svd(const Matrix& m, std::string_view label) {
    if (!m.all_finite()) throw ArgumentError("svd: non-finite entry in '" + std::string(label) + "'");
    const bool wide = m.rows() < m.cols();
    TallSvd t = jacobi_tall(wide ? m.transposed() : m, label);

    // For a wide input we decomposed M^T = U' S V'^T, so M = V' S U'^T.
    std::vector<Column>& left = wide ? t.v : t.u;
    std::vector<Column>& right = wide ? t.u : t.v;
    const std::size_t k = t.sigma.size();

    SvdResult out;
    out.sigma = std::move(t.sigma);
    out.U = Matrix(m.rows(), k);
    out.Vt = Matrix(k, m.cols());
    for (std::size_t c = 0; c < k; ++c) {
        double flip = 1.0;
        canonicalize_sign(left[c], &flip);
        out.U.set_column(c, left[c]);
        for (std::size_t j = 0; j < m.cols(); ++j) out.Vt(c, j) = flip * right[c][j];
    }
    return out;
}

std::size_t numerical_rank(std::span<const double> sigma, double tau) {
    if (!(tau > 0.0)) throw ArgumentError("numerical_rank: tau must be positive");
    if (sigma.empty() || sigma[0] == 0.0) return 0;
    const double threshold = tau * sigma[0];
    return static_cast<std::size_t>(std::count_if(sigma.begin(), sigma.end(), [&](double s) { return s > threshold; }));
}

RankReport rank_report(const SvdResult& s, std::size_t rows, std::size_t cols, double tau) {
    RankReport r;
    r.rows = rows;
    r.cols = cols;
    r.tau = tau;
    r.numerical_rank = numerical_rank(s.sigma, tau);
    r.nullity_left = rows - r.numerical_rank;
    r.nullity_right = cols - r.numerical_rank;
    r.sigma_max = s.sigma.empty() ? 0.0 : s.sigma.front();
    r.sigma_min = s.sigma.empty() ? 0.0 : s.sigma.back();
    return r;
}

RankReport rank_report(const Matrix& m, double tau, std::string_view label) {
    return rank_report(svd(m, label), m.rows(), m.cols(), tau);
}

namespace {

// Sub-threshold SVD indices ordered by increasing sigma (stable).
std::vector<std::size_t> null_indices(const SvdResult& s, double tau) {
    const std::size_t rank = numerical_rank(s.sigma, tau);
    std::vector<std::size_t> idx(s.sigma.size() - rank);
    std::iota(idx.begin(), idx.end(), rank);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return s.sigma[a] < s.sigma[b]; });
    return idx;
}

} // namespace

Matrix null_space_left(const SvdResult& s, double tau) {
    const std::size_t m = s.U.rows();
    std::vector<Column> basis = complement_columns(to_columns(s.U), m);
    for (Column& c : basis) canonicalize_sign(c);
    for (std::size_t i : null_indices(s, tau)) basis.push_back(s.U.column(i));
    return from_columns(basis, m);
}

Matrix null_space_left(const Matrix& w, double tau) { return null_space_left(svd(w), tau); }

Matrix null_space_right(const SvdResult& s, double tau) {
    const std::size_t n = s.Vt.cols();
    std::vector<Column> basis = complement_columns(to_columns(s.Vt.transposed()), n);
    for (std::size_t i : null_indices(s, tau)) basis.push_back(Column(s.Vt.row(i).begin(), s.Vt.row(i).end()));
    for (Column& c : basis) canonicalize_sign(c);
    return from_columns(basis, n).transposed();
}

Matrix null_space_right(const Matrix& w, double tau) { return null_space_right(svd(w), tau); }

Matrix orthonormal_complement(const Matrix& q) {
    if (q.cols() > q.rows()) throw ShapeError("orthonormal_complement: more columns than rows in " + q.shape_str());
    std::vector<Column> basis = complement_columns(to_columns(q), q.rows());
    for (Column& c : basis) canonicalize_sign(c);
    return from_columns(basis, q.rows());
}

Matrix orthonormalize_columns(const Matrix& a) {
    std::vector<Column> basis;
    basis.reserve(a.cols());
    for (std::size_t c = 0; c < a.cols(); ++c) {
        Column v = a.column(c);
        const double before = std::sqrt(dot(v, v));
        const double after = orthogonalize_into(basis, v);
        if (!(after > 1e-10 * before) || after == 0.0) {
            throw ArgumentError("orthonormalize_columns: column " + std::to_string(c) + " is linearly dependent");
        }
        basis.push_back(std::move(v));
    }
    return from_columns(basis, a.rows());
}

Matrix random_orthonormal(std::size_t rows, std::size_t cols, std::uint64_t seed) {
    if (cols > rows) {
        throw ArgumentError("random_orthonormal: cols (" + std::to_string(cols) + ") exceeds rows (" +
                            std::to_string(rows) + ")");
    }
    Rng rng(seed);
    return orthonormalize_columns(rng.gaussian(rows, cols));
}

} // namespace nullora
