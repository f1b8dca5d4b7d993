// Copyright 2026 The nullora Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "nullora/linalg.hpp"
#include "nullora/matrix.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace nullora {

enum class AdapterMode {
    null_lora,       // frozen halves from the weight's null spaces, update projected onto them
    ablation_random, // frozen halves random orthonormal, no projection
    vanilla_lora,    // single trainable pair, no frozen halves
};

std::string_view to_string(AdapterMode mode) noexcept;
/// Accepts "null_lora"/"null", "ablation_random"/"ablation", "vanilla_lora"/"lora".
AdapterMode parse_adapter_mode(std::string_view text);

/// One adapted linear layer y = (W0 + dW) x.
///
/// For the cross-frozen modes the update is
///
///     dW = P * B * S1 * A_f + B_f * S2 * A
///
/// where S1 = diag(scale[0, r/2)), S2 = diag(scale[r/2, r)) and
/// P = null_basis * null_basis^T. In null_lora mode null_basis == frozen_B
/// spans part of the left null space of W0 and frozen_A's rows span part of
/// its right null space, so W0^T dW = 0 for any B, A, scale. P is never
/// materialized. In ablation_random mode P is the identity.
///
/// vanilla_lora uses dW = (lora_alpha / r) * B * A with B: d_out x r.
struct AdapterLayer {
    std::string name;
    Matrix weight; // W0, d_out x d_in, frozen
    AdapterMode mode = AdapterMode::null_lora;
    std::size_t rank = 0; // r, total adapter rank

    Matrix frozen_B;           // d_out x r/2
    Matrix frozen_A;           // r/2 x d_in
    Matrix lora_B;             // d_out x r/2 (vanilla: d_out x r)
    Matrix lora_A;             // r/2 x d_in (vanilla: r x d_in)
    std::vector<double> scale; // length r (vanilla: empty)
    Matrix null_basis;         // d_out x r/2, null_lora only

    double lora_alpha = 0.0; // vanilla_lora only
    double tau = kDefaultTau;

    std::size_t d_out() const noexcept { return weight.rows(); }
    std::size_t d_in() const noexcept { return weight.cols(); }
    std::size_t half_rank() const noexcept { return rank / 2; }
    std::span<const double> scale_first() const noexcept { return std::span(scale).first(half_rank()); }
    std::span<const double> scale_second() const noexcept { return std::span(scale).subspan(half_rank()); }

    std::size_t trainable_count() const noexcept;

    /// Throws ShapeError if any factor disagrees with the mode's layout.
    void check_shapes() const;
};

/// Layer left without an adapter because its weight has no usable null space.
struct SkippedLayer {
    std::string name;
    std::size_t d_out = 0;
    std::size_t d_in = 0;
    RankReport rank;
};

using NullLoraInit = std::variant<AdapterLayer, SkippedLayer>;

/// Rank self-adaptation: r/2 = min(nullity_left, nullity_right) at `tau`,
/// optionally capped at max_rank/2. Full-rank weights come back as SkippedLayer.
NullLoraInit init_null_lora(std::string name, Matrix weight, double tau = kDefaultTau,
                            std::optional<std::size_t> max_rank = std::nullopt);

/// "w/o null space" ablation: random orthonormal frozen halves, no projection.
AdapterLayer init_ablation(std::string name, Matrix weight, std::size_t rank, std::uint64_t seed);

/// Plain LoRA baseline: B = 0, A ~ N(0, 1/d_in). lora_alpha defaults to r.
AdapterLayer init_vanilla_lora(std::string name, Matrix weight, std::size_t rank, std::uint64_t seed,
                               std::optional<double> lora_alpha = std::nullopt);

struct GradientSet {
    Matrix dB;
    Matrix dA;
    std::vector<double> ds;
};

double gradient_norm(const GradientSet& g);

/// P * B, computed as U (U^T B). Returns B unchanged outside null_lora mode.
Matrix projected_B(const AdapterLayer& layer);

Matrix delta_weight(const AdapterLayer& layer);

/// Y = W0 X + dW X through the low-rank factors. X is d_in x batch.
Matrix forward(const AdapterLayer& layer, const Matrix& x);

/// Gradients of a scalar loss with respect to B, A and scale, given the
/// upstream gradient G = dL/dY (d_out x batch).
GradientSet backward(const AdapterLayer& layer, const Matrix& x, const Matrix& upstream);

/// W' = W0 + dW.
Matrix merge(const AdapterLayer& layer);

struct EffectiveRank {
    std::size_t stacked_B = 0;           // [B S1 | B_f S2]
    std::size_t stacked_B_projected = 0; // [P B S1 | B_f S2]
    std::size_t stacked_A = 0;           // [A_f ; A]
    std::size_t delta = 0;               // dW
};

EffectiveRank effective_rank(const AdapterLayer& layer, double tau = kDefaultTau);

struct InvariantCheck {
    double measured = 0.0;
    double tolerance = 0.0;
    bool pass = false;
    bool applicable = true; // false: reported for information, ignored by overall pass
};

using InvariantReport = std::map<std::string, InvariantCheck>;

bool overall_pass(const InvariantReport& report);

struct TolProfile {
    double null_constraint = 1e-8;
    double norm_decomposition = 1e-8;
    double projection = 1e-10;
    double orthonormality = 1e-10;
    double merge = 1e-10;
    double basis_null = 1e-8; // relative to sigma_max(W0)
    std::size_t probes = 16;
    std::uint64_t seed = 0x5eed;

    static TolProfile standard() { return {}; }
    static TolProfile strict();
    static TolProfile named(std::string_view name);
};

/// Checks, each reported with its measured value:
///   null_constraint     ||W0^T dW||_F / (||W0||_F ||dW||_F)
///   norm_decomposition  max_x | ||W'x||^2 - ||W0 x||^2 - ||dW x||^2 | / ||W'x||^2
///   projection_fixes_frozen_B  ||P B_f - B_f||_max
///   frozen_orthonormality      max orthonormality defect of B_f, A_f, U
///   frozen_basis_null   max(||W0^T B_f||_max, ||W0 A_f^T||_max) / sigma_max(W0)
///   merge_equivalence   forward vs merged-weight product, max-abs relative to max(1, |Y|_max)
InvariantReport verify_invariants(const AdapterLayer& layer, const TolProfile& tol = TolProfile::standard());

} // namespace nullora
