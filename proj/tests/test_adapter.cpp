// Copyright 2026 The nullora Authors
// SPDX-License-Identifier: Apache-2.0

#include "nullora/adapter.hpp"
#include "nullora/error.hpp"
#include "nullora/random.hpp"
#include "nullora/training.hpp"

#include <doctest.h>

#include <cmath>

using namespace nullora;

namespace {

const Matrix kTiny{{1, 0}, {0, 0}};

AdapterLayer null_layer(const Matrix& w, const std::string& name = "w") {
    NullLoraInit init = init_null_lora(name, w);
    REQUIRE(std::holds_alternative<AdapterLayer>(init));
    return std::get<AdapterLayer>(std::move(init));
}

void randomize_trainables(AdapterLayer& l, std::uint64_t seed) {
    Rng rng(seed);
    l.lora_B = rng.gaussian(l.lora_B.rows(), l.lora_B.cols());
    l.lora_A = rng.gaussian(l.lora_A.rows(), l.lora_A.cols());
    for (double& s : l.scale) s = rng.uniform(0.5, 1.5);
}

double max_rel_error(const Matrix& a, const Matrix& fd) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double ref = fd.data()[i];
        const double diff = std::abs(a.data()[i] - ref);
        worst = std::max(worst, std::abs(ref) < 1e-8 ? (diff <= 1e-8 ? 0.0 : 1.0) : diff / std::abs(ref));
    }
    return worst;
}

} // namespace

TEST_CASE("init on the 2x2 example") {
    const AdapterLayer l = null_layer(kTiny);
    CHECK(l.rank == 2);
    CHECK(l.frozen_B == Matrix{{0}, {1}});
    CHECK(l.frozen_A == Matrix{{0, 1}});
    CHECK(l.null_basis == l.frozen_B);
    CHECK(l.lora_B == Matrix(2, 1));
    CHECK(l.lora_A == Matrix(1, 2));
    CHECK(l.scale == std::vector<double>{1, 1});
    CHECK(delta_weight(l) == Matrix(2, 2));
    CHECK(merge(l) == kTiny);
}

TEST_CASE("full-rank weights are skipped") {
    const NullLoraInit init = init_null_lora("eye", Matrix::identity(4));
    REQUIRE(std::holds_alternative<SkippedLayer>(init));
    CHECK(std::get<SkippedLayer>(init).name == "eye");
}

TEST_CASE("rank self-adaptation and parameter count") {
    const PlantedTask task = gen_planted_task(64, 64, 8, 4, 1);
    const AdapterLayer l = null_layer(task.weight);
    CHECK(l.rank == 16);
    CHECK(l.trainable_count() == 1040);

    NullLoraInit capped = init_null_lora("w", task.weight, kDefaultTau, 6);
    CHECK(std::get<AdapterLayer>(capped).rank == 6);
    NullLoraInit odd_cap = init_null_lora("w", task.weight, kDefaultTau, 5);
    CHECK(std::get<AdapterLayer>(odd_cap).rank == 4);

    const PlantedTask rect = gen_planted_task(48, 24, 5, 4, 2);
    const AdapterLayer r = null_layer(rect.weight);
    CHECK(r.rank == 10);
    CHECK(r.trainable_count() == 5 * (48 + 24) + 10);
    CHECK(r.trainable_count() < init_vanilla_lora("w", rect.weight, r.rank, 0).trainable_count());
}

TEST_CASE("delta weight on the 2x2 example") {
    AdapterLayer l = null_layer(kTiny);
    l.lora_B = Matrix{{5}, {7}};
    l.lora_A = Matrix{{2, 3}};
    CHECK(projected_B(l) == Matrix{{0}, {7}});
    CHECK(delta_weight(l) == Matrix{{0, 0}, {2, 10}});
    CHECK(merge(l) == Matrix{{1, 0}, {2, 10}});
    CHECK(max_abs(matmul_tn(l.weight, delta_weight(l))) == 0.0);
}

TEST_CASE("projection is idempotent and fixes the frozen half") {
    const PlantedTask task = gen_planted_task(40, 30, 6, 4, 3);
    AdapterLayer l = null_layer(task.weight);
    randomize_trainables(l, 4);
    const Matrix pb = projected_B(l);
    AdapterLayer again = l;
    again.lora_B = pb;
    CHECK(max_abs_diff(projected_B(again), pb) < 1e-14);
    again.lora_B = l.frozen_B;
    CHECK(max_abs_diff(projected_B(again), l.frozen_B) < 1e-14);
}

TEST_CASE("null constraint holds for random trainables") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const PlantedTask task = gen_planted_task(32 + 8 * seed, 48 - 4 * seed, 4 + seed, 4, seed);
        AdapterLayer l = null_layer(task.weight);
        randomize_trainables(l, seed + 50);
        const Matrix dw = delta_weight(l);
        CHECK(frobenius_norm(matmul_tn(l.weight, dw)) / (frobenius_norm(l.weight) * frobenius_norm(dw)) < 1e-12);
        CHECK(overall_pass(verify_invariants(l)));
    }
}

TEST_CASE("factored forward matches the merged weight") {
    const PlantedTask task = gen_planted_task(24, 16, 4, 4, 5);
    AdapterLayer l = null_layer(task.weight);
    randomize_trainables(l, 6);
    const Matrix x = Rng(7).gaussian(16, 9);
    CHECK(max_abs_diff(forward(l, x), matmul(merge(l), x)) < 1e-12);
    CHECK_THROWS_AS(forward(l, Matrix(15, 2)), ShapeError);
}

TEST_CASE("backward matches finite differences") {
    for (const AdapterMode mode : {AdapterMode::null_lora, AdapterMode::ablation_random, AdapterMode::vanilla_lora}) {
        CAPTURE(to_string(mode));
        const PlantedTask task = gen_planted_task(8, 12, 3, 5, 8);
        AdapterLayer l = mode == AdapterMode::null_lora        ? null_layer(task.weight)
                         : mode == AdapterMode::ablation_random ? init_ablation("w", task.weight, 6, 9)
                                                                : init_vanilla_lora("w", task.weight, 4, 9);
        randomize_trainables(l, 10);
        const LossResult loss = mse_loss(forward(l, task.inputs), task.targets);
        const GradientSet g = backward(l, task.inputs, loss.grad);
        const GradientSet fd = fd_gradient(l, task.inputs, task.targets);
        CHECK(max_rel_error(g.dB, fd.dB) < 1e-6);
        CHECK(max_rel_error(g.dA, fd.dA) < 1e-6);
        if (!g.ds.empty()) {
            const Matrix ds(1, g.ds.size(), g.ds);
            const Matrix fds(1, fd.ds.size(), fd.ds);
            CHECK(max_rel_error(ds, fds) < 1e-6);
        }
    }
}

TEST_CASE("zero upstream gives zero gradients") {
    AdapterLayer l = null_layer(kTiny);
    randomize_trainables(l, 1);
    const GradientSet g = backward(l, Matrix{{1, 2}, {3, 4}}, Matrix(2, 2));
    CHECK(gradient_norm(g) == 0.0);
}

TEST_CASE("scale gradient is flat at init") {
    const PlantedTask task = gen_planted_task(10, 10, 3, 6, 12);
    const AdapterLayer l = null_layer(task.weight);
    const GradientSet fd = fd_gradient(l, task.inputs, task.targets);
    for (double v : fd.ds) CHECK(std::abs(v) < 1e-9);
}

TEST_CASE("ablation and vanilla initializers") {
    const Matrix w = Rng(1).gaussian(4, 4);
    const AdapterLayer a = init_ablation("w", w, 2, 3);
    const AdapterLayer b = init_ablation("w", w, 2, 3);
    CHECK(a.frozen_B == b.frozen_B);
    CHECK(a.frozen_A == b.frozen_A);
    CHECK(orthonormality_defect_cols(a.frozen_B) < 1e-10);
    CHECK(orthonormality_defect_rows(a.frozen_A) < 1e-10);
    CHECK_THROWS_AS(init_ablation("w", w, 3, 1), ArgumentError);
    CHECK_THROWS_AS(init_ablation("w", w, 10, 1), ArgumentError);

    const AdapterLayer v = init_vanilla_lora("w", w, 2, 4);
    CHECK(v.lora_B == Matrix(4, 2));
    CHECK(v.lora_A.rows() == 2);
    CHECK(v.lora_alpha == 2.0);
    CHECK(delta_weight(v) == Matrix(4, 4));
    CHECK(v.trainable_count() == 2 * (4 + 4));
}

TEST_CASE("effective rank at init") {
    const PlantedTask task = gen_planted_task(32, 32, 4, 4, 13);
    const AdapterLayer l = null_layer(task.weight);
    const EffectiveRank er = effective_rank(l);
    CHECK(er.stacked_B == l.half_rank());
    CHECK(er.delta == 0);
}

TEST_CASE("invariant checks are mode aware") {
    const PlantedTask task = gen_planted_task(16, 16, 4, 4, 14);
    AdapterLayer abl = init_ablation("w", task.weight, 8, 15);
    randomize_trainables(abl, 16);
    const InvariantReport report = verify_invariants(abl);
    CHECK(!report.at("null_constraint").applicable);
    CHECK(!report.at("null_constraint").pass);
    CHECK(report.at("frozen_orthonormality").applicable);
    CHECK(overall_pass(report));

    AdapterLayer perturbed = null_layer(task.weight);
    perturbed.weight = perturbed.weight + Rng(17).gaussian(16, 16, 0.1);
    CHECK(!overall_pass(verify_invariants(perturbed)));
}

TEST_CASE("tolerance profiles") {
    CHECK(TolProfile::named("default").null_constraint == TolProfile::standard().null_constraint);
    CHECK(TolProfile::named("strict").null_constraint < TolProfile::standard().null_constraint);
    CHECK_THROWS_AS(TolProfile::named("loose"), ArgumentError);
}
