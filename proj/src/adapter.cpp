// Copyright 2026 The nullora Authors
// SPDX-License-Identifier: Apache-2.0

#include "nullora/adapter.hpp"

#include "nullora/error.hpp"
#include "nullora/random.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace nullora {

namespace {

void require_weight(const std::string& name, const Matrix& weight) {
    if (weight.rows() == 0 || weight.cols() == 0) {
        throw ShapeError("layer '" + name + "': weight must be non-empty, got " + weight.shape_str());
    }
    if (!weight.all_finite()) throw ArgumentError("layer '" + name + "': weight has non-finite entries");
}

void require_shape(const AdapterLayer& layer, const char* what, const Matrix& m, std::size_t rows,
                   std::size_t cols) {
    if (m.rows() != rows || m.cols() != cols) {
        throw ShapeError("layer '" + layer.name + "': " + what + " is " + m.shape_str() + ", expected " +
                         std::to_string(rows) + "x" + std::to_string(cols));
    }
}

// sum_b x(i, b) * y(i, b) for each row i.
std::vector<double> rowwise_dot(const Matrix& x, const Matrix& y) {
    std::vector<double> out(x.rows(), 0.0);
    for (std::size_t i = 0; i < x.rows(); ++i) {
        auto xr = x.row(i);
        auto yr = y.row(i);
        double acc = 0.0;
        for (std::size_t b = 0; b < xr.size(); ++b) acc += xr[b] * yr[b];
        out[i] = acc;
    }
    return out;
}

std::size_t rank_of(const Matrix& m, double tau) {
    if (m.rows() == 0 || m.cols() == 0) return 0;
    return numerical_rank(svd(m).sigma, tau);
}

} // namespace

std::string_view to_string(AdapterMode mode) noexcept {
    switch (mode) {
    case AdapterMode::null_lora: return "null_lora";
    case AdapterMode::ablation_random: return "ablation_random";
    case AdapterMode::vanilla_lora: return "vanilla_lora";
    }
    return "unknown";
}

AdapterMode parse_adapter_mode(std::string_view text) {
    if (text == "null_lora" || text == "null") return AdapterMode::null_lora;
    if (text == "ablation_random" || text == "ablation") return AdapterMode::ablation_random;
    if (text == "vanilla_lora" || text == "lora") return AdapterMode::vanilla_lora;
    throw ArgumentError("unknown adapter mode '" + std::string(text) + "'");
}

std::size_t AdapterLayer::trainable_count() const noexcept {
    if (mode == AdapterMode::vanilla_lora) return rank * (d_out() + d_in());
    return half_rank() * (d_out() + d_in()) + rank;
}

void AdapterLayer::check_shapes() const {
    const std::size_t h = half_rank();
    if (mode == AdapterMode::vanilla_lora) {
        require_shape(*this, "B", lora_B, d_out(), rank);
        require_shape(*this, "A", lora_A, rank, d_in());
        return;
    }
    if (rank == 0 || rank % 2 != 0) {
        throw ShapeError("layer '" + name + "': rank must be even and positive, got " + std::to_string(rank));
    }
    require_shape(*this, "B", lora_B, d_out(), h);
    require_shape(*this, "A", lora_A, h, d_in());
    require_shape(*this, "B_f", frozen_B, d_out(), h);
    require_shape(*this, "A_f", frozen_A, h, d_in());
    if (scale.size() != rank) {
        throw ShapeError("layer '" + name + "': scale has length " + std::to_string(scale.size()) + ", expected " +
                         std::to_string(rank));
    }
    if (mode == AdapterMode::null_lora) require_shape(*this, "U_hat", null_basis, d_out(), h);
}

NullLoraInit init_null_lora(std::string name, Matrix weight, double tau, std::optional<std::size_t> max_rank) {
    require_weight(name, weight);
    if (!(tau > 0.0)) throw ArgumentError("init_null_lora: tau must be positive");
    if (max_rank && *max_rank < 2) throw ArgumentError("init_null_lora: max_rank must be at least 2");

    const SvdResult s = svd(weight, name);
    const RankReport report = rank_report(s, weight.rows(), weight.cols(), tau);
    std::size_t half = std::min(report.nullity_left, report.nullity_right);
    if (max_rank) half = std::min(half, *max_rank / 2);
    if (half == 0) return SkippedLayer{std::move(name), weight.rows(), weight.cols(), report};

    // Both bases are ordered by increasing singular value, so the leading
    // columns/rows are the "most null" directions.
    const Matrix left = null_space_left(s, tau);
    const Matrix right = null_space_right(s, tau);

    AdapterLayer layer;
    layer.name = std::move(name);
    layer.mode = AdapterMode::null_lora;
    layer.rank = 2 * half;
    layer.tau = tau;
    layer.frozen_B = left.col_block(0, half);
    layer.frozen_A = right.row_block(0, half);
    layer.null_basis = layer.frozen_B;
    layer.lora_B = Matrix(weight.rows(), half);
    layer.lora_A = Matrix(half, weight.cols());
    layer.scale.assign(layer.rank, 1.0);
    layer.weight = std::move(weight);
    return layer;
}

AdapterLayer init_ablation(std::string name, Matrix weight, std::size_t rank, std::uint64_t seed) {
    require_weight(name, weight);
    if (rank == 0 || rank % 2 != 0) {
        throw ArgumentError("init_ablation: rank must be even and positive, got " + std::to_string(rank));
    }
    const std::size_t half = rank / 2;
    if (half > std::min(weight.rows(), weight.cols())) {
        throw ArgumentError("init_ablation: rank " + std::to_string(rank) + " too large for " + weight.shape_str());
    }
    Rng seeds(seed);
    const std::uint64_t seed_b = seeds.below(std::numeric_limits<std::uint64_t>::max());
    const std::uint64_t seed_a = seeds.below(std::numeric_limits<std::uint64_t>::max());

    AdapterLayer layer;
    layer.name = std::move(name);
    layer.mode = AdapterMode::ablation_random;
    layer.rank = rank;
    layer.frozen_B = random_orthonormal(weight.rows(), half, seed_b);
    layer.frozen_A = random_orthonormal(weight.cols(), half, seed_a).transposed();
    layer.lora_B = Matrix(weight.rows(), half);
    layer.lora_A = Matrix(half, weight.cols());
    layer.scale.assign(rank, 1.0);
    layer.weight = std::move(weight);
    return layer;
}

AdapterLayer init_vanilla_lora(std::string name, Matrix weight, std::size_t rank, std::uint64_t seed,
                               std::optional<double> lora_alpha) {
    require_weight(name, weight);
    if (rank == 0 || rank > std::min(weight.rows(), weight.cols())) {
        throw ArgumentError("init_vanilla_lora: rank " + std::to_string(rank) + " invalid for " +
                            weight.shape_str());
    }
    Rng rng(seed);
    AdapterLayer layer;
    layer.name = std::move(name);
    layer.mode = AdapterMode::vanilla_lora;
    layer.rank = rank;
    layer.lora_alpha = lora_alpha.value_or(static_cast<double>(rank));
    layer.lora_B = Matrix(weight.rows(), rank);
    layer.lora_A = rng.gaussian(rank, weight.cols(), 1.0 / std::sqrt(static_cast<double>(weight.cols())));
    layer.weight = std::move(weight);
    return layer;
}

double gradient_norm(const GradientSet& g) {
    double acc = 0.0;
    for (double v : g.dB.data()) acc += v * v;
    for (double v : g.dA.data()) acc += v * v;
    for (double v : g.ds) acc += v * v;
    return std::sqrt(acc);
}

Matrix projected_B(const AdapterLayer& layer) {
    if (layer.mode != AdapterMode::null_lora) return layer.lora_B;
    return matmul(layer.null_basis, matmul_tn(layer.null_basis, layer.lora_B));
}

Matrix delta_weight(const AdapterLayer& layer) {
    layer.check_shapes();
    if (layer.mode == AdapterMode::vanilla_lora) {
        return (layer.lora_alpha / static_cast<double>(layer.rank)) * matmul(layer.lora_B, layer.lora_A);
    }
    Matrix dw = matmul(scale_cols(projected_B(layer), layer.scale_first()), layer.frozen_A);
    dw += matmul(scale_cols(layer.frozen_B, layer.scale_second()), layer.lora_A);
    return dw;
}

Matrix forward(const AdapterLayer& layer, const Matrix& x) {
    layer.check_shapes();
    if (x.rows() != layer.d_in()) {
        throw ShapeError("layer '" + layer.name + "': input has " + std::to_string(x.rows()) + " rows, expected d_in=" +
                         std::to_string(layer.d_in()));
    }
    if (!x.all_finite()) throw ArgumentError("layer '" + layer.name + "': input has non-finite entries");

    Matrix y = matmul(layer.weight, x);
    if (layer.mode == AdapterMode::vanilla_lora) {
        const double c = layer.lora_alpha / static_cast<double>(layer.rank);
        y += c * matmul(layer.lora_B, matmul(layer.lora_A, x));
        return y;
    }
    const Matrix z1 = scale_rows(layer.scale_first(), matmul(layer.frozen_A, x));
    if (layer.mode == AdapterMode::null_lora) {
        const Matrix coeff = matmul_tn(layer.null_basis, layer.lora_B); // U^T B
        y += matmul(layer.null_basis, matmul(coeff, z1));
    } else {
        y += matmul(layer.lora_B, z1);
    }
    const Matrix z2 = scale_rows(layer.scale_second(), matmul(layer.lora_A, x));
    y += matmul(layer.frozen_B, z2);
    return y;
}

GradientSet backward(const AdapterLayer& layer, const Matrix& x, const Matrix& upstream) {
    layer.check_shapes();
    if (x.rows() != layer.d_in() || upstream.rows() != layer.d_out() || x.cols() != upstream.cols()) {
        throw ShapeError("layer '" + layer.name + "': backward got X " + x.shape_str() + " and G " +
                         upstream.shape_str() + " for a " + layer.weight.shape_str() + " weight");
    }
    GradientSet g;
    if (layer.mode == AdapterMode::vanilla_lora) {
        const double c = layer.lora_alpha / static_cast<double>(layer.rank);
        g.dB = c * matmul_nt(upstream, matmul(layer.lora_A, x));
        g.dA = c * matmul_nt(matmul_tn(layer.lora_B, upstream), x);
        return g;
    }

    const Matrix z1 = matmul(layer.frozen_A, x); // A_f X
    const Matrix z2 = matmul(layer.lora_A, x);   // A X
    const Matrix f = matmul_tn(layer.frozen_B, upstream); // B_f^T G

    if (layer.mode == AdapterMode::null_lora) {
        const Matrix h = matmul_tn(layer.null_basis, upstream); // U^T G
        const Matrix coeff = matmul_tn(layer.null_basis, layer.lora_B);
        g.dB = matmul(layer.null_basis, scale_cols(matmul_nt(h, z1), layer.scale_first()));
        const std::vector<double> ds1 = rowwise_dot(matmul_tn(coeff, h), z1);
        g.ds.assign(ds1.begin(), ds1.end());
    } else {
        g.dB = scale_cols(matmul_nt(upstream, z1), layer.scale_first());
        const std::vector<double> ds1 = rowwise_dot(matmul_tn(layer.lora_B, upstream), z1);
        g.ds.assign(ds1.begin(), ds1.end());
    }
    g.dA = scale_rows(layer.scale_second(), matmul_nt(f, x));
    const std::vector<double> ds2 = rowwise_dot(f, z2);
    g.ds.insert(g.ds.end(), ds2.begin(), ds2.end());
    return g;
}

Matrix merge(const AdapterLayer& layer) { return layer.weight + delta_weight(layer); }

EffectiveRank effective_rank(const AdapterLayer& layer, double tau) {
    layer.check_shapes();
    EffectiveRank out;
    const Matrix dw = delta_weight(layer);
    out.delta = rank_of(dw, tau);
    if (layer.mode == AdapterMode::vanilla_lora) {
        out.stacked_B = out.stacked_B_projected = rank_of(layer.lora_B, tau);
        out.stacked_A = rank_of(layer.lora_A, tau);
        return out;
    }
    const Matrix frozen_half = scale_cols(layer.frozen_B, layer.scale_second());
    out.stacked_B = rank_of(hstack(scale_cols(layer.lora_B, layer.scale_first()), frozen_half), tau);
    out.stacked_B_projected = rank_of(hstack(scale_cols(projected_B(layer), layer.scale_first()), frozen_half), tau);
    out.stacked_A = rank_of(vstack(layer.frozen_A, layer.lora_A), tau);
    return out;
}

bool overall_pass(const InvariantReport& report) {
    return std::all_of(report.begin(), report.end(), [](const auto& kv) { return !kv.second.applicable || kv.second.pass; });
}

TolProfile TolProfile::strict() {
    TolProfile t;
    t.null_constraint = 1e-9;
    t.norm_decomposition = 1e-9;
    t.projection = 1e-11;
    t.orthonormality = 1e-11;
    t.merge = 1e-11;
    t.basis_null = 1e-9;
    t.probes = 256;
    return t;
}

TolProfile TolProfile::named(std::string_view name) {
    if (name == "default" || name == "standard") return standard();
    if (name == "strict") return strict();
    throw ArgumentError("unknown tolerance profile '" + std::string(name) + "'");
}

InvariantReport verify_invariants(const AdapterLayer& layer, const TolProfile& tol) {
    layer.check_shapes();
    const bool is_null = layer.mode == AdapterMode::null_lora;
    const bool has_frozen = layer.mode != AdapterMode::vanilla_lora;
    InvariantReport report;
    auto record = [&](const std::string& key, double measured, double tolerance, bool applicable) {
        report[key] = InvariantCheck{measured, tolerance, measured <= tolerance, applicable};
    };

    const Matrix dw = delta_weight(layer);
    const Matrix merged = layer.weight + dw;

    {
        const double num = frobenius_norm(matmul_tn(layer.weight, dw));
        const double den = frobenius_norm(layer.weight) * frobenius_norm(dw) + std::numeric_limits<double>::min();
        record("null_constraint", num / den, tol.null_constraint, is_null);
    }

    Rng rng(tol.seed);
    {
        double worst = 0.0;
        for (std::size_t p = 0; p < tol.probes; ++p) {
            Matrix x = rng.gaussian(layer.d_in(), 1);
            const double n = frobenius_norm(x);
            x = (1.0 / n) * x;
            const double full = std::pow(frobenius_norm(matmul(merged, x)), 2);
            const double base = std::pow(frobenius_norm(matmul(layer.weight, x)), 2);
            const double incr = std::pow(frobenius_norm(matmul(dw, x)), 2);
            const double gap = std::abs(full - base - incr);
            worst = std::max(worst, full > 0.0 ? gap / full : gap);
        }
        record("norm_decomposition", worst, tol.norm_decomposition, is_null);
    }

    if (has_frozen) {
        const double proj = is_null ? max_abs_diff(matmul(layer.null_basis, matmul_tn(layer.null_basis, layer.frozen_B)),
                                                   layer.frozen_B)
                                    : 0.0;
        record("projection_fixes_frozen_B", proj, tol.projection, is_null);

        double ortho = std::max(orthonormality_defect_cols(layer.frozen_B), orthonormality_defect_rows(layer.frozen_A));
        if (is_null) ortho = std::max(ortho, orthonormality_defect_cols(layer.null_basis));
        record("frozen_orthonormality", ortho, tol.orthonormality, true);

        const double smax = svd(layer.weight, layer.name).sigma.front();
        const double leak = std::max(max_abs(matmul_tn(layer.weight, layer.frozen_B)),
                                     max_abs(matmul_nt(layer.weight, layer.frozen_A)));
        record("frozen_basis_null", smax > 0.0 ? leak / smax : leak, tol.basis_null, is_null);
    }

    {
        const Matrix x = rng.gaussian(layer.d_in(), std::max<std::size_t>(1, tol.probes / 2));
        const Matrix y = forward(layer, x);
        const double diff = max_abs_diff(y, matmul(merged, x));
        record("merge_equivalence", diff / std::max(1.0, max_abs(y)), tol.merge, true);
    }
    return report;
}

} // namespace nullora
