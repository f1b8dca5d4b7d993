// Copyright 2026 The nullora Authors
// SPDX-License-Identifier: Apache-2.0

// Acceptance run. Prints one PASS/FAIL line per criterion and exits nonzero
// if any criterion fails. Tolerances and budgets are fixed here on purpose.

#include "nullora/adapter.hpp"
#include "nullora/adapter_io.hpp"
#include "nullora/linalg.hpp"
#include "nullora/random.hpp"
#include "nullora/tensor_file.hpp"
#include "nullora/training.hpp"

#include <json.hpp>

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

using namespace nullora;
namespace fs = std::filesystem;

namespace {

constexpr double kNullTol = 1e-8;
constexpr double kNormTol = 1e-8;
constexpr double kGradRelTol = 1e-5;
constexpr double kGradAbsTol = 1e-8;
constexpr double kRecoveryLoss = 1e-6;
constexpr double kClosedFormTol = 1e-10;
constexpr double kRankTau = 1e-5;

struct Outcome {
    bool pass = false;
    std::string detail;
};

struct Criterion {
    int id;
    std::string name;
    double budget_s; // 0: no runtime bound
    std::function<Outcome()> body;
};

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

AdapterLayer null_layer(const std::string& name, const Matrix& w) {
    return std::get<AdapterLayer>(init_null_lora(name, w, kRankTau));
}

void randomize(AdapterLayer& l, Rng& rng) {
    l.lora_B = rng.gaussian(l.lora_B.rows(), l.lora_B.cols());
    l.lora_A = rng.gaussian(l.lora_A.rows(), l.lora_A.cols());
    for (double& s : l.scale) s = rng.uniform(0.5, 1.5);
}

// Twenty layers with shapes drawn from [8, 128] and nullity up to a quarter
// of the smaller side, each with random trainables.
std::vector<AdapterLayer> random_layers(std::uint64_t seed) {
    Rng rng(seed);
    std::vector<AdapterLayer> layers;
    for (int i = 0; i < 20; ++i) {
        const std::size_t d_out = i == 0 ? 128 : 8 + rng.below(121);
        const std::size_t d_in = i == 0 ? 128 : 8 + rng.below(121);
        const std::size_t nullity = 1 + rng.below(std::min(d_out, d_in) / 4);
        const PlantedTask t = gen_planted_task(d_out, d_in, nullity, 1, rng.below(1u << 31));
        AdapterLayer l = null_layer("layer" + std::to_string(i), t.weight);
        randomize(l, rng);
        layers.push_back(std::move(l));
    }
    return layers;
}

TrainConfig recovery_config() {
    TrainConfig cfg;
    cfg.optimizer = OptimizerKind::adamw;
    cfg.learning_rate = 1e-3;
    cfg.steps = 500;
    return cfg;
}

struct RecoveryRun {
    double closed_form_error = 0.0;
    double final_loss = 0.0;
    double ablation_loss = 0.0;
    double max_residual = 0.0;
    EffectiveRank rank;
};

// The planted-task experiment shared by criteria 4, 5 and 6, one per seed.
std::vector<RecoveryRun>& recovery_runs() {
    static std::vector<RecoveryRun> runs = [] {
        std::vector<RecoveryRun> out;
        for (std::uint64_t seed = 0; seed < 5; ++seed) {
            const PlantedTask task = gen_planted_task(64, 64, 8, 512, seed);
            RecoveryRun run;

            AdapterLayer exact = null_layer("w", task.weight);
            const Matrix c = matmul(matmul_tn(exact.null_basis, task.left_basis),
                                    matmul(task.coeff, matmul_nt(task.right_basis, exact.frozen_A)));
            exact.lora_B = matmul(exact.null_basis, c);
            run.closed_form_error = max_abs_diff(delta_weight(exact), task.delta_star);

            TrainConfig cfg = recovery_config();
            cfg.seed = seed;
            AdapterLayer layer = null_layer("w", task.weight);
            const TrainHistory h = train(layer, task, cfg);
            run.final_loss = h.back().loss;
            for (const HistoryRecord& r : h) run.max_residual = std::max(run.max_residual, r.null_residual);
            run.rank = effective_rank(layer, kRankTau);

            AdapterLayer ablation = init_ablation("w", task.weight, layer.rank, seed + 1000);
            run.ablation_loss = train(ablation, task, cfg).back().loss;
            out.push_back(run);
        }
        return out;
    }();
    return runs;
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return v[v.size() / 2];
}

Outcome criterion_null_constraint() {
    double worst = 0.0;
    for (const AdapterLayer& l : random_layers(1)) {
        const Matrix dw = delta_weight(l);
        const double r = frobenius_norm(matmul_tn(l.weight, dw)) / (frobenius_norm(l.weight) * frobenius_norm(dw));
        worst = std::max(worst, r);
    }
    return {worst <= kNullTol, "max ||W0^T dW||/(||W0|| ||dW||) = " + fmt("%.3e", worst) + " over 20 layers"};
}

Outcome criterion_norm_decomposition() {
    double worst = 0.0;
    Rng rng(2);
    for (const AdapterLayer& l : random_layers(2)) {
        const Matrix w_merged = merge(l);
        const Matrix dw = delta_weight(l);
        for (int k = 0; k < 100; ++k) {
            Matrix x = rng.gaussian(l.d_in(), 1);
            x = (1.0 / frobenius_norm(x)) * x;
            const double full = std::pow(frobenius_norm(matmul(w_merged, x)), 2);
            const double base = std::pow(frobenius_norm(matmul(l.weight, x)), 2);
            const double upd = std::pow(frobenius_norm(matmul(dw, x)), 2);
            worst = std::max(worst, std::abs(full - base - upd) / full);
        }
    }
    return {worst <= kNormTol, "max relative gap = " + fmt("%.3e", worst) + " over 20 layers x 100 inputs"};
}

Outcome criterion_gradient_oracle() {
    struct Shape {
        std::size_t d_out, d_in, nullity;
    };
    double worst = 0.0;
    for (const Shape s : {Shape{4, 4, 2}, Shape{8, 16, 3}, Shape{16, 8, 3}}) {
        for (std::uint64_t seed = 0; seed < 3; ++seed) {
            const PlantedTask task = gen_planted_task(s.d_out, s.d_in, s.nullity, 10, 30 + seed);
            AdapterLayer l = null_layer("w", task.weight);
            Rng rng(40 + seed);
            randomize(l, rng);
            const GradientSet g = backward(l, task.inputs, mse_loss(forward(l, task.inputs), task.targets).grad);
            const GradientSet fd = fd_gradient(l, task.inputs, task.targets, 1e-6);
            auto compare = [&](std::span<const double> a, std::span<const double> ref) {
                for (std::size_t i = 0; i < a.size(); ++i) {
                    const double diff = std::abs(a[i] - ref[i]);
                    if (std::abs(ref[i]) < kGradAbsTol) {
                        if (diff > kGradAbsTol) worst = std::max(worst, 1.0);
                    } else {
                        worst = std::max(worst, diff / std::abs(ref[i]));
                    }
                }
            };
            compare(g.dB.data(), fd.dB.data());
            compare(g.dA.data(), fd.dA.data());
            compare(g.ds, fd.ds);
        }
    }
    return {worst <= kGradRelTol, "max relative error = " + fmt("%.3e", worst) + " over 9 layer/seed pairs"};
}

Outcome criterion_recovery() {
    const RecoveryRun& run = recovery_runs().front();
    std::vector<double> losses;
    for (const RecoveryRun& r : recovery_runs()) losses.push_back(r.final_loss);
    const bool pass = run.closed_form_error <= kClosedFormTol && run.final_loss < kRecoveryLoss;
    std::ostringstream d;
    d << "closed form error " << fmt("%.3e", run.closed_form_error) << ", final loss " << fmt("%.3e", run.final_loss)
      << " (need < " << fmt("%.0e", kRecoveryLoss) << "; seeds 0-4:";
    for (double l : losses) d << ' ' << fmt("%.2e", l);
    d << ')';
    return {pass, d.str()};
}

Outcome criterion_effective_rank() {
    const RecoveryRun& run = recovery_runs().front();
    std::ostringstream d;
    d << "rank[B S1 | B_f S2] = " << run.rank.stacked_B << " (projected " << run.rank.stacked_B_projected
      << ", rank dW = " << run.rank.delta << ")";
    return {run.rank.stacked_B == 16, d.str()};
}

Outcome criterion_ablation() {
    std::vector<double> null_losses, ablation_losses;
    for (const RecoveryRun& r : recovery_runs()) {
        null_losses.push_back(r.final_loss);
        ablation_losses.push_back(r.ablation_loss);
    }
    const double mn = median(null_losses), ma = median(ablation_losses);
    return {ma >= mn, "median final loss ablation " + fmt("%.3e", ma) + " vs null " + fmt("%.3e", mn)};
}

Outcome criterion_rank_nullity() {
    bool pass = true;
    std::ostringstream d;
    d << "detected";
    for (std::size_t k : {0u, 1u, 4u, 16u}) {
        Rng rng(70 + k);
        const Matrix w = matmul(rng.gaussian(64, 64 - k), rng.gaussian(64 - k, 64));
        const RankReport r = rank_report(w, kRankTau);
        const std::size_t found = r.nullity_right;
        pass = pass && found == k && r.nullity_left == k && r.numerical_rank + r.nullity_right == 64 &&
               r.numerical_rank + r.nullity_left == 64;
        d << " k=" << k << "->" << found;
    }
    return {pass, d.str()};
}

Outcome criterion_parameter_count() {
    const PlantedTask t = gen_planted_task(64, 64, 8, 1, 80);
    const AdapterLayer l = null_layer("w", t.weight);
    bool pass = l.trainable_count() == 1040 && l.trainable_count() == l.rank / 2 * (64 + 64) + l.rank;
    struct Shape {
        std::size_t d_out, d_in, nullity;
    };
    int shapes = 0;
    for (const Shape s : {Shape{64, 64, 8}, Shape{32, 96, 4}, Shape{96, 32, 4}, Shape{128, 128, 1}, Shape{17, 9, 3}}) {
        const PlantedTask p = gen_planted_task(s.d_out, s.d_in, s.nullity, 1, 81 + shapes);
        const AdapterLayer n = null_layer("w", p.weight);
        const AdapterLayer v = init_vanilla_lora("w", p.weight, n.rank, 0);
        pass = pass && n.trainable_count() == n.rank / 2 * (s.d_out + s.d_in) + n.rank &&
               n.trainable_count() < v.trainable_count();
        ++shapes;
    }
    return {pass, "64x64 nullity 8 -> " + std::to_string(l.trainable_count()) + "; fewer than LoRA on " +
                      std::to_string(shapes) + " shapes"};
}

Outcome criterion_persistence() {
    const fs::path dir = fs::temp_directory_path() / "nullora_acceptance_io";
    fs::create_directories(dir);
    Rng rng(90);
    TensorFile f;
    f.entries["a"] = {DType::f64, rng.gaussian(13, 7)};
    f.entries["b.weight"] = {DType::f64, rng.gaussian(64, 64)};
    f.entries["c"] = {DType::f32, Matrix{{0.5, -2.0}}};
    f.metadata = nlohmann::json{{"k", 1}};
    write_tensor_file(dir / "f.nlrt", f);
    const bool roundtrip = read_tensor_file(dir / "f.nlrt") == f;

    std::ifstream in(dir / "f.nlrt", std::ios::binary);
    const std::string bytes{std::istreambuf_iterator<char>(in), {}};
    const bool canonical = serialize_tensor_file(parse_tensor_file(bytes)) == bytes;

    TensorFile ckpt;
    ckpt.entries["l0"] = {DType::f64, gen_planted_task(48, 40, 6, 1, 91).weight};
    ckpt.entries["l1"] = {DType::f32, gen_planted_task(24, 24, 4, 1, 92).weight};
    ckpt = parse_tensor_file(serialize_tensor_file(ckpt));
    std::vector<AdapterLayer> layers;
    for (const auto& [name, t] : ckpt.entries) layers.push_back(null_layer(name, t.values));
    save_adapter(dir / "adapter.nlrt", layers, make_adapter_meta(AdapterMode::null_lora, kRankTau, 0, layers));
    const LoadedAdapter loaded = load_adapter(dir / "adapter.nlrt", ckpt);
    TensorFile merged = ckpt;
    for (const AdapterLayer& l : loaded.layers) merged.entries.at(l.name).values = merge(l);
    const bool merge_exact = serialize_tensor_file(merged) == serialize_tensor_file(ckpt);
    fs::remove_all(dir);

    std::ostringstream d;
    d << "roundtrip " << (roundtrip ? "exact" : "differs") << ", re-serialization "
      << (canonical ? "identical" : "differs") << ", fresh merge " << (merge_exact ? "identical" : "differs");
    return {roundtrip && canonical && merge_exact, d.str()};
}

int shell(const std::string& cmd, const fs::path& log) {
    const int status = std::system((cmd + " >>" + log.string() + " 2>&1").c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Outcome criterion_cli_pipeline() {
    const fs::path dir = fs::temp_directory_path() / "nullora_acceptance_cli";
    fs::remove_all(dir);
    fs::create_directories(dir);
    const std::string bin = NULLORA_CLI_BINARY;
    const std::string ckpt = (dir / "ckpt.nlrt").string();
    const std::string adapter = (dir / "adapter.nlrt").string();
    const fs::path log = dir / "log.txt";

    struct Stage {
        std::string name, cmd;
    };
    const std::vector<Stage> stages{
        {"generate", std::string(NULLORA_PLANTED_BINARY) + " --out " + ckpt +
                         " --shape 64x64 --nullity 8 --layers 2 --full-rank 1 --seed 7"},
        {"analyze", bin + " analyze " + ckpt + " --json " + (dir / "analysis.json").string()},
        {"init", bin + " init " + ckpt + " --out " + adapter + " --mode null"},
        {"train", bin + " train --ckpt " + ckpt + " --adapter " + adapter +
                      " --task planted:64x64:8:512 --steps 500 --lr 1e-3 --log " + (dir / "history.csv").string() +
                      " --layer layers.0.weight"},
        {"verify", bin + " verify --ckpt " + ckpt + " --adapter " + adapter + " --json " +
                       (dir / "verify.json").string()},
        {"merge", bin + " merge --ckpt " + ckpt + " --adapter " + adapter + " --out " + (dir / "merged.nlrt").string()},
    };
    std::ostringstream d;
    bool pass = true;
    for (const Stage& s : stages) {
        const int code = shell(s.cmd, log);
        d << s.name << '=' << code << ' ';
        pass = pass && code == 0;
        if (!pass) break;
    }
    if (pass) {
        std::ifstream in(dir / "verify.json");
        const nlohmann::json report = nlohmann::json::parse(in);
        const bool all = report.at("pass").get<bool>();
        d << "verify pass=" << (all ? "true" : "false");
        pass = all;
    }
    if (pass) fs::remove_all(dir);
    else d << " (log kept in " << log.string() << ")";
    return {pass, d.str()};
}

} // namespace

int main() {
    const std::vector<Criterion> criteria{
        {1, "structural null-space constraint", 10, criterion_null_constraint},
        {2, "orthogonal norm decomposition", 5, criterion_norm_decomposition},
        {3, "gradient oracle", 60, criterion_gradient_oracle},
        {4, "planted-task recovery", 120, criterion_recovery},
        {5, "effective rank of stacked B side", 0, criterion_effective_rank},
        {6, "ablation direction", 0, criterion_ablation},
        {7, "rank-nullity and detection", 0, criterion_rank_nullity},
        {8, "parameter count", 0, criterion_parameter_count},
        {9, "persistence", 0, criterion_persistence},
        {10, "end-to-end CLI", 180, criterion_cli_pipeline},
    };
    int failures = 0;
    for (const Criterion& c : criteria) {
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.body();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (c.budget_s > 0 && secs > c.budget_s) {
            o.pass = false;
            o.detail += "; over time budget " + fmt("%.0f s", c.budget_s);
        }
        if (!o.pass) ++failures;
        std::printf("[%s] %2d %s: %s (%.2f s)\n", o.pass ? "PASS" : "FAIL", c.id, c.name.c_str(), o.detail.c_str(),
                    secs);
        std::fflush(stdout);
    }
    std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
    return failures == 0 ? 0 : 1;
}
