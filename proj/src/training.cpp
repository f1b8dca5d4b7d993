// Copyright 2026 The nullora Authors
// SPDX-License-Identifier: Apache-2.0

#include "nullora/training.hpp"

#include "nullora/error.hpp"
#include "nullora/linalg.hpp"
#include "nullora/random.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace nullora {

OptimizerKind parse_optimizer(std::string_view text) {
    if (text == "sgd" || text == "SGD") return OptimizerKind::sgd;
    if (text == "adamw" || text == "ADAMW" || text == "AdamW") return OptimizerKind::adamw;
    throw ArgumentError("unknown optimizer '" + std::string(text) + "'");
}

std::string_view to_string(OptimizerKind kind) noexcept { return kind == OptimizerKind::sgd ? "sgd" : "adamw"; }

void TrainConfig::validate() const {
    if (steps < 1) throw ArgumentError("train: steps must be >= 1");
    if (batch_size < 1) throw ArgumentError("train: batch_size must be >= 1");
    if (!(learning_rate > 0.0)) throw ArgumentError("train: learning_rate must be > 0");
    if (!(weight_decay >= 0.0)) throw ArgumentError("train: weight_decay must be >= 0");
    if (log_every < 1) throw ArgumentError("train: log_every must be >= 1");
}

PlantedTask gen_planted_task(std::size_t d_out, std::size_t d_in, std::size_t nullity, std::size_t n_samples,
                             std::uint64_t seed) {
    const std::size_t min_dim = std::min(d_out, d_in);
    if (nullity < 1 || nullity > min_dim) {
        throw ArgumentError("gen_planted_task: nullity " + std::to_string(nullity) + " outside [1, " +
                            std::to_string(min_dim) + "]");
    }
    if (n_samples < 1) throw ArgumentError("gen_planted_task: n_samples must be >= 1");
    const std::size_t rank = min_dim - nullity;

    Rng rng(seed);
    const Matrix u = random_orthonormal(d_out, rank, rng.below(std::numeric_limits<std::uint64_t>::max()));
    const Matrix v = random_orthonormal(d_in, rank, rng.below(std::numeric_limits<std::uint64_t>::max()));
    std::vector<double> sigma(rank);
    for (double& x : sigma) x = rng.uniform(1.0, 10.0);
    std::sort(sigma.begin(), sigma.end(), std::greater<>());

    PlantedTask task;
    task.weight = matmul_nt(scale_cols(u, sigma), v);
    task.left_basis = orthonormal_complement(u).col_block(0, nullity);
    task.right_basis = orthonormal_complement(v).col_block(0, nullity).transposed();
    task.coeff = rng.gaussian(nullity, nullity);
    task.delta_star = matmul(task.left_basis, matmul(task.coeff, task.right_basis));
    task.inputs = rng.gaussian(d_in, n_samples);
    task.targets = matmul(task.weight + task.delta_star, task.inputs);
    return task;
}

PlantedTask plant_task_on_weight(const Matrix& weight, std::size_t nullity, std::size_t n_samples, std::uint64_t seed,
                                 double tau) {
    if (nullity < 1) throw ArgumentError("plant_task_on_weight: nullity must be >= 1");
    if (n_samples < 1) throw ArgumentError("plant_task_on_weight: n_samples must be >= 1");
    const SvdResult s = svd(weight);
    const RankReport report = rank_report(s, weight.rows(), weight.cols(), tau);
    if (std::min(report.nullity_left, report.nullity_right) < nullity) {
        throw ArgumentError("plant_task_on_weight: weight " + weight.shape_str() + " has nullity " +
                            std::to_string(std::min(report.nullity_left, report.nullity_right)) + ", requested " +
                            std::to_string(nullity));
    }
    Rng rng(seed);
    PlantedTask task;
    task.weight = weight;
    task.left_basis = null_space_left(s, tau).col_block(0, nullity);
    task.right_basis = null_space_right(s, tau).row_block(0, nullity);
    task.coeff = rng.gaussian(nullity, nullity);
    task.delta_star = matmul(task.left_basis, matmul(task.coeff, task.right_basis));
    task.inputs = rng.gaussian(weight.cols(), n_samples);
    task.targets = matmul(task.weight + task.delta_star, task.inputs);
    return task;
}

LossResult mse_loss(const Matrix& y, const Matrix& t) {
    if (y.rows() != t.rows() || y.cols() != t.cols()) {
        throw ShapeError("mse_loss: prediction " + y.shape_str() + " vs target " + t.shape_str());
    }
    const double batch = static_cast<double>(std::max<std::size_t>(1, y.cols()));
    LossResult out;
    out.grad = y - t;
    double acc = 0.0;
    for (double& v : out.grad.data()) {
        acc += v * v;
        v /= batch;
    }
    out.loss = acc / (2.0 * batch);
    return out;
}

void apply_update(std::span<double> params, std::span<const double> grads, Moments& moments, std::size_t step,
                  const TrainConfig& cfg, bool apply_decay) {
    if (params.size() != grads.size()) throw ShapeError("apply_update: parameter/gradient length mismatch");
    const double lr = cfg.learning_rate;
    const double wd = apply_decay ? cfg.weight_decay : 0.0;

    if (cfg.optimizer == OptimizerKind::sgd) {
        for (std::size_t i = 0; i < params.size(); ++i) params[i] -= lr * (grads[i] + wd * params[i]);
        return;
    }

    if (moments.first.size() != params.size()) {
        moments.first.assign(params.size(), 0.0);
        moments.second.assign(params.size(), 0.0);
    }
    const double t = static_cast<double>(step);
    const double bc1 = 1.0 - std::pow(cfg.beta1, t);
    const double bc2 = 1.0 - std::pow(cfg.beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        params[i] -= lr * wd * params[i];
        const double g = grads[i];
        moments.first[i] = cfg.beta1 * moments.first[i] + (1.0 - cfg.beta1) * g;
        moments.second[i] = cfg.beta2 * moments.second[i] + (1.0 - cfg.beta2) * g * g;
        const double m_hat = moments.first[i] / bc1;
        const double v_hat = moments.second[i] / bc2;
        params[i] -= lr * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
    }
}

void optimizer_step(AdapterLayer& layer, const GradientSet& grads, OptimizerState& state, const TrainConfig& cfg) {
    ++state.step;
    apply_update(layer.lora_B.data(), grads.dB.data(), state.B, state.step, cfg, true);
    apply_update(layer.lora_A.data(), grads.dA.data(), state.A, state.step, cfg, true);
    apply_update(layer.scale, grads.ds, state.s, state.step, cfg, !cfg.decay_exempt_s);
}

GradientSet fd_gradient(const AdapterLayer& layer, const Matrix& x, const Matrix& t, double h) {
    if (!(h > 0.0)) throw ArgumentError("fd_gradient: step h must be positive");
    AdapterLayer probe = layer;
    const double batch = static_cast<double>(std::max<std::size_t>(1, x.cols()));
    // L(p+h) - L(p-h) is formed as sum((r+ - r-) (r+ + r-)) / (2 batch)
    // rather than by subtracting two losses, which would cancel most digits.
    auto central = [&](std::span<double> params, std::span<double> out) {
        for (std::size_t i = 0; i < params.size(); ++i) {
            const double saved = params[i];
            params[i] = saved + h;
            const Matrix up = forward(probe, x);
            params[i] = saved - h;
            const Matrix down = forward(probe, x);
            params[i] = saved;
            double diff = 0.0;
            for (std::size_t k = 0; k < up.size(); ++k) {
                const double tk = t.data()[k];
                diff += (up.data()[k] - down.data()[k]) * ((up.data()[k] - tk) + (down.data()[k] - tk));
            }
            out[i] = diff / (2.0 * batch) / (2.0 * h);
        }
    };
    if (x.cols() != t.cols() || t.rows() != layer.d_out()) {
        throw ShapeError("fd_gradient: targets " + t.shape_str() + " do not match inputs " + x.shape_str());
    }
    GradientSet g;
    g.dB = Matrix(layer.lora_B.rows(), layer.lora_B.cols());
    g.dA = Matrix(layer.lora_A.rows(), layer.lora_A.cols());
    g.ds.assign(layer.scale.size(), 0.0);
    central(probe.lora_B.data(), g.dB.data());
    central(probe.lora_A.data(), g.dA.data());
    central(probe.scale, g.ds);
    return g;
}

double null_residual(const AdapterLayer& layer) {
    const Matrix dw = delta_weight(layer);
    const double den = frobenius_norm(layer.weight) * frobenius_norm(dw) + std::numeric_limits<double>::min();
    return frobenius_norm(matmul_tn(layer.weight, dw)) / den;
}

namespace {

Matrix gather_columns(const Matrix& m, std::span<const std::size_t> idx) {
    Matrix out(m.rows(), idx.size());
    for (std::size_t r = 0; r < m.rows(); ++r) {
        auto src = m.row(r);
        auto dst = out.row(r);
        for (std::size_t j = 0; j < idx.size(); ++j) dst[j] = src[idx[j]];
    }
    return out;
}

bool finite(const GradientSet& g) {
    return g.dB.all_finite() && g.dA.all_finite() &&
           std::all_of(g.ds.begin(), g.ds.end(), [](double v) { return std::isfinite(v); });
}

HistoryRecord evaluate(const AdapterLayer& layer, const Matrix& inputs, const Matrix& targets, std::size_t step) {
    const LossResult l = mse_loss(forward(layer, inputs), targets);
    HistoryRecord rec;
    rec.step = step;
    rec.loss = l.loss;
    rec.grad_norm = gradient_norm(backward(layer, inputs, l.grad));
    rec.null_residual = null_residual(layer);
    rec.effective_rank = effective_rank(layer, kDefaultTau).stacked_B;
    return rec;
}

} // namespace

TrainHistory train(AdapterLayer& layer, const Matrix& inputs, const Matrix& targets, const TrainConfig& cfg) {
    cfg.validate();
    layer.check_shapes();
    if (inputs.rows() != layer.d_in() || targets.rows() != layer.d_out() || inputs.cols() != targets.cols() ||
        inputs.cols() == 0) {
        throw ShapeError("train: layer '" + layer.name + "' (" + layer.weight.shape_str() + ") given inputs " +
                         inputs.shape_str() + " and targets " + targets.shape_str());
    }

    const std::size_t n = inputs.cols();
    const std::size_t batch = std::min(cfg.batch_size, n);
    Rng rng(cfg.seed);
    std::vector<std::size_t> order = rng.permutation(n);
    std::size_t cursor = 0;
    std::vector<std::size_t> idx(batch);

    TrainHistory history;
    history.push_back(evaluate(layer, inputs, targets, 0));

    OptimizerState state;
    for (std::size_t step = 1; step <= cfg.steps; ++step) {
        for (std::size_t j = 0; j < batch; ++j) {
            if (cursor == n) {
                order = rng.permutation(n);
                cursor = 0;
            }
            idx[j] = order[cursor++];
        }
        const Matrix xb = gather_columns(inputs, idx);
        const Matrix tb = gather_columns(targets, idx);
        const LossResult l = mse_loss(forward(layer, xb), tb);
        const GradientSet g = backward(layer, xb, l.grad);
        if (!std::isfinite(l.loss) || !finite(g)) {
            std::ostringstream msg;
            msg << "train: layer '" << layer.name << "' diverged at step " << step << ": loss=" << l.loss
                << " |dB|=" << frobenius_norm(g.dB) << " |dA|=" << frobenius_norm(g.dA)
                << " |grad|=" << gradient_norm(g);
            throw TrainingDiverged(msg.str());
        }
        optimizer_step(layer, g, state, cfg);

        if (step % cfg.log_every == 0 || step == cfg.steps) {
            HistoryRecord rec = evaluate(layer, inputs, targets, step);
            if (!std::isfinite(rec.loss)) {
                std::ostringstream msg;
                msg << "train: layer '" << layer.name << "' diverged at step " << step << ": loss=" << rec.loss;
                throw TrainingDiverged(msg.str());
            }
            history.push_back(rec);
        }
    }
    return history;
}

TrainHistory train(AdapterLayer& layer, const PlantedTask& task, const TrainConfig& cfg) {
    return train(layer, task.inputs, task.targets, cfg);
}

void write_history_csv(const std::filesystem::path& path, const TrainHistory& history) {
    std::ofstream out(path);
    if (!out) throw FormatError(FormatErrc::io, "cannot open '" + path.string() + "' for writing");
    out << "step,loss,grad_norm,null_residual,effective_rank\n";
    out.precision(17);
    for (const HistoryRecord& r : history) {
        out << r.step << ',' << r.loss << ',' << r.grad_norm << ',' << r.null_residual << ',' << r.effective_rank
            << '\n';
    }
    if (!out) throw FormatError(FormatErrc::io, "write failed for '" + path.string() + "'");
}

} // namespace nullora
