// Copyright 2026 The nullora Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "nullora/adapter.hpp"
#include "nullora/matrix.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

namespace nullora {

enum class OptimizerKind { sgd, adamw };

OptimizerKind parse_optimizer(std::string_view text);
std::string_view to_string(OptimizerKind kind) noexcept;

struct TrainConfig {
    std::size_t steps = 500;
    std::size_t batch_size = 64;
    double learning_rate = 1e-4;
    OptimizerKind optimizer = OptimizerKind::adamw;
    double weight_decay = 0.05;
    std::uint64_t seed = 0;
    bool decay_exempt_s = true;
    std::size_t log_every = 10;

    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;

    void validate() const;
};

/// Synthetic regression whose target update lies in the span reachable by a
/// null-space adapter: delta_star = left_basis * coeff * right_basis.
struct PlantedTask {
    Matrix weight;      // d_out x d_in, rank min(d_out, d_in) - nullity
    Matrix delta_star;  // d_out x d_in
    Matrix left_basis;  // d_out x nullity, W0^T left_basis = 0
    Matrix right_basis; // nullity x d_in, W0 right_basis^T = 0
    Matrix coeff;       // nullity x nullity, N(0, 1)
    Matrix inputs;      // d_in x n
    Matrix targets;     // d_out x n, (W0 + delta_star) inputs
};

/// W0 = U diag(sigma) V^T from random orthonormal factors with sigma drawn
/// uniformly from [1, 10]; `nullity` is counted on the smaller dimension.
PlantedTask gen_planted_task(std::size_t d_out, std::size_t d_in, std::size_t nullity, std::size_t n_samples,
                             std::uint64_t seed);

/// Plants a task on an existing weight: delta_star = L C R where L, R are
/// the leading `nullity` left/right null directions of `weight` at `tau`.
/// Throws ArgumentError if the weight's nullity is smaller than requested.
PlantedTask plant_task_on_weight(const Matrix& weight, std::size_t nullity, std::size_t n_samples, std::uint64_t seed,
                                 double tau = kDefaultTau);

struct LossResult {
    double loss = 0.0;
    Matrix grad; // dL/dY
};

/// loss = ||Y - T||_F^2 / (2 batch), grad = (Y - T) / batch.
LossResult mse_loss(const Matrix& y, const Matrix& t);

/// Per-tensor optimizer moments.
struct Moments {
    std::vector<double> first;
    std::vector<double> second;
};

/// One update of a flat parameter block. `step` is 1-based. SGD folds decay
/// into the gradient; AdamW applies decoupled decay p -= lr * wd * p before
/// the bias-corrected moment step.
void apply_update(std::span<double> params, std::span<const double> grads, Moments& moments, std::size_t step,
                  const TrainConfig& cfg, bool apply_decay);

struct OptimizerState {
    std::size_t step = 0;
    Moments B;
    Moments A;
    Moments s;
};

void optimizer_step(AdapterLayer& layer, const GradientSet& grads, OptimizerState& state, const TrainConfig& cfg);

/// Central finite differences of mse_loss(forward(layer, X), T) with respect
/// to every entry of B, A and scale, one scalar at a time.
GradientSet fd_gradient(const AdapterLayer& layer, const Matrix& x, const Matrix& t, double h = 1e-6);

struct HistoryRecord {
    std::size_t step = 0;
    double loss = 0.0;          // full-dataset MSE
    double grad_norm = 0.0;     // full-dataset gradient norm
    double null_residual = 0.0; // ||W0^T dW||_F / (||W0||_F ||dW||_F)
    std::size_t effective_rank = 0;
};

using TrainHistory = std::vector<HistoryRecord>;

/// Records are taken before the first update, every log_every steps, and
/// after the final step. The layer is updated in place.
TrainHistory train(AdapterLayer& layer, const Matrix& inputs, const Matrix& targets, const TrainConfig& cfg);
TrainHistory train(AdapterLayer& layer, const PlantedTask& task, const TrainConfig& cfg);

double null_residual(const AdapterLayer& layer);

void write_history_csv(const std::filesystem::path& path, const TrainHistory& history);

} // namespace nullora
