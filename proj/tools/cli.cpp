// Copyright 2026 The nullora Authors
// SPDX-License-Identifier: Apache-2.0

#include "cli.hpp"

#include "nullora/adapter.hpp"
#include "nullora/adapter_io.hpp"
#include "nullora/error.hpp"
#include "nullora/linalg.hpp"
#include "nullora/random.hpp"
#include "nullora/reports.hpp"
#include "nullora/tensor_file.hpp"
#include "nullora/training.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <optional>
#include <ostream>
#include <regex>
#include <string>
#include <vector>

namespace nullora::cli {

namespace fs = std::filesystem;

namespace {

class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

void require_writable_target(const std::string& path, const char* flag) {
    const fs::path parent = fs::absolute(fs::path(path)).parent_path();
    if (!fs::is_directory(parent)) {
        throw UsageError(std::string(flag) + ": directory '" + parent.string() + "' does not exist");
    }
}

void write_json(const std::string& path, const nlohmann::json& j) {
    std::ofstream out(path);
    if (!out) throw FormatError(FormatErrc::io, "cannot open '" + path + "' for writing");
    out << j.dump(2) << '\n';
}

// ---------------------------------------------------------------- analyze

struct AnalyzeOptions {
    std::string ckpt;
    double tau = kDefaultTau;
    std::string json;
};

int run_analyze(const AnalyzeOptions& o, std::ostream& out) {
    if (!o.json.empty()) require_writable_target(o.json, "--json");
    const TensorFile ckpt = read_tensor_file(o.ckpt);
    const auto layers = analyze_checkpoint(ckpt, o.tau);

    out << std::left << std::setw(28) << "layer" << std::setw(12) << "shape" << std::right << std::setw(6) << "rank"
        << std::setw(8) << "null_L" << std::setw(8) << "null_R" << std::setw(13) << "sigma_max" << std::setw(13)
        << "sigma_min" << std::setw(10) << "defic%" << '\n';
    for (const LayerAnalysis& l : layers) {
        out << std::left << std::setw(28) << l.name << std::setw(12)
            << (std::to_string(l.rank.rows) + "x" + std::to_string(l.rank.cols)) << std::right << std::setw(6)
            << l.rank.numerical_rank << std::setw(8) << l.rank.nullity_left << std::setw(8) << l.rank.nullity_right
            << std::setw(13) << std::setprecision(5) << std::scientific << l.rank.sigma_max << std::setw(13)
            << l.rank.sigma_min << std::fixed << std::setprecision(2) << std::setw(10) << l.deficiency_pct() << '\n';
        out.unsetf(std::ios::floatfield);
    }
    out << "layers: " << layers.size() << "  mean deficiency: " << std::fixed << std::setprecision(3)
        << mean_deficiency_pct(layers) << "%  (tau=" << std::defaultfloat << o.tau << ")\n";
    if (!o.json.empty()) write_json(o.json, analysis_json(layers));
    return kOk;
}

// ---------------------------------------------------------------- init

struct InitOptions {
    std::string ckpt;
    std::string out;
    std::string mode = "null";
    double tau = kDefaultTau;
    std::optional<std::size_t> max_rank;
    std::optional<std::size_t> rank;
    std::uint64_t seed = 0;
};

int run_init(const InitOptions& o, std::ostream& out, std::ostream& err) {
    AdapterMode mode;
    try {
        mode = parse_adapter_mode(o.mode);
    } catch (const ArgumentError& e) {
        throw UsageError(e.what());
    }
    if (mode == AdapterMode::null_lora && o.rank) throw UsageError("--rank applies to ablation/lora modes; null mode derives r from the nullity");
    if (mode != AdapterMode::null_lora && !o.rank) throw UsageError("--rank is required for ablation/lora modes");
    if (mode != AdapterMode::null_lora && o.max_rank) throw UsageError("--max-rank applies to null mode only");
    require_writable_target(o.out, "--out");

    const TensorFile ckpt = read_tensor_file(o.ckpt);
    std::vector<AdapterLayer> layers;
    std::vector<SkippedLayer> skipped;
    Rng seeds(o.seed);
    for (const auto& [name, tensor] : ckpt.entries) {
        const std::uint64_t layer_seed = seeds.below(std::numeric_limits<std::uint64_t>::max());
        switch (mode) {
        case AdapterMode::null_lora: {
            NullLoraInit init = init_null_lora(name, tensor.values, o.tau, o.max_rank);
            if (auto* l = std::get_if<AdapterLayer>(&init)) {
                layers.push_back(std::move(*l));
            } else {
                skipped.push_back(std::get<SkippedLayer>(std::move(init)));
            }
            break;
        }
        case AdapterMode::ablation_random:
            layers.push_back(init_ablation(name, tensor.values, *o.rank, layer_seed));
            break;
        case AdapterMode::vanilla_lora:
            layers.push_back(init_vanilla_lora(name, tensor.values, *o.rank, layer_seed));
            break;
        }
    }

    std::size_t total = 0;
    for (const AdapterLayer& l : layers) {
        out << std::left << std::setw(28) << l.name << ' ' << l.d_out() << 'x' << l.d_in() << "  r=" << l.rank
            << "  trainable=" << l.trainable_count() << '\n';
        total += l.trainable_count();
    }
    for (const SkippedLayer& s : skipped) {
        out << std::left << std::setw(28) << s.name << ' ' << s.d_out << 'x' << s.d_in
            << "  skipped (full rank at tau=" << o.tau << ")\n";
    }
    out << "mode " << to_string(mode) << ": " << layers.size() << " adapted, " << skipped.size()
        << " skipped, trainable parameters " << total << '\n';
    if (layers.empty()) err << "warning: no layer has a usable null space; adapter contains only skipped layers\n";

    save_adapter(o.out, layers, make_adapter_meta(mode, o.tau, o.seed, layers, skipped));
    return kOk;
}

// ---------------------------------------------------------------- train

struct TrainOptions {
    std::string ckpt;
    std::string adapter;
    std::string task;
    std::size_t steps = 500;
    double lr = 1e-4;
    std::string optimizer = "adamw";
    double weight_decay = 0.05;
    std::size_t batch = 64;
    std::uint64_t seed = 0;
    std::string log;
    std::size_t log_every = 10;
    std::string layer;
};

struct PlantedSpec {
    std::size_t d_out, d_in, nullity, samples;
};

std::variant<PlantedSpec, std::string> parse_task(const std::string& task) {
    static const std::regex planted(R"(planted:(\d+)x(\d+):(\d+):(\d+))");
    std::smatch m;
    if (std::regex_match(task, m, planted)) {
        PlantedSpec p{std::stoul(m[1]), std::stoul(m[2]), std::stoul(m[3]), std::stoul(m[4])};
        if (p.nullity == 0 || p.samples == 0) throw UsageError("--task: nullity and sample count must be positive");
        return p;
    }
    if (task.rfind("data:", 0) == 0 && task.size() > 5) {
        const std::string path = task.substr(5);
        if (!fs::is_regular_file(path)) throw UsageError("--task: data file '" + path + "' does not exist");
        return path;
    }
    throw UsageError("--task must be planted:<d_out>x<d_in>:<nullity>:<n> or data:<file.nlrt>, got '" + task + "'");
}

int run_train(const TrainOptions& o, std::ostream& out) {
    const auto task_spec = parse_task(o.task);
    TrainConfig cfg;
    cfg.steps = o.steps;
    cfg.learning_rate = o.lr;
    cfg.weight_decay = o.weight_decay;
    cfg.batch_size = o.batch;
    cfg.seed = o.seed;
    cfg.log_every = o.log_every;
    try {
        cfg.optimizer = parse_optimizer(o.optimizer);
        cfg.validate();
    } catch (const ArgumentError& e) {
        throw UsageError(e.what());
    }
    if (!o.log.empty()) require_writable_target(o.log, "--log");

    const TensorFile ckpt = read_tensor_file(o.ckpt);
    LoadedAdapter loaded = load_adapter(o.adapter, ckpt);

    std::optional<TensorFile> data;
    if (auto* path = std::get_if<std::string>(&task_spec)) data = read_tensor_file(*path);

    std::vector<AdapterLayer*> selected;
    for (AdapterLayer& l : loaded.layers) {
        if (!o.layer.empty() && l.name != o.layer) continue;
        if (auto* p = std::get_if<PlantedSpec>(&task_spec)) {
            if (l.d_out() != p->d_out || l.d_in() != p->d_in) continue;
        } else {
            const auto& in = data->entries;
            auto x = in.find("inputs");
            auto t = in.find("targets");
            if (x == in.end() || t == in.end()) {
                throw FormatError(FormatErrc::missing_tensor, "data file needs 'inputs' and 'targets' tensors");
            }
            if (x->second.values.rows() != l.d_in() || t->second.values.rows() != l.d_out()) continue;
        }
        selected.push_back(&l);
    }
    if (selected.empty()) throw FormatError(FormatErrc::layer_mismatch, "no adapted layer matches the task shape");
    if (!o.log.empty() && selected.size() > 1) {
        throw UsageError("--log needs exactly one trained layer; select one with --layer");
    }

    for (AdapterLayer* layer : selected) {
        PlantedTask task;
        if (auto* p = std::get_if<PlantedSpec>(&task_spec)) {
            task = plant_task_on_weight(layer->weight, p->nullity, p->samples, o.seed, loaded.meta.tau);
        } else {
            task.inputs = data->entries.at("inputs").values;
            task.targets = data->entries.at("targets").values;
        }
        const TrainHistory history = train(*layer, task.inputs, task.targets, cfg);
        out << layer->name << ": steps=" << cfg.steps << " initial loss " << std::scientific << std::setprecision(6)
            << history.front().loss << "  final loss " << history.back().loss << "  null residual "
            << history.back().null_residual << "  effective rank " << std::defaultfloat
            << history.back().effective_rank << '\n';
        if (!o.log.empty()) write_history_csv(o.log, history);
    }
    save_adapter(o.adapter, loaded.layers, loaded.meta);
    return kOk;
}

// ---------------------------------------------------------------- verify

struct VerifyOptions {
    std::string ckpt;
    std::string adapter;
    std::string profile = "default";
    std::string json;
};

int run_verify(const VerifyOptions& o, std::ostream& out) {
    TolProfile tol;
    try {
        tol = TolProfile::named(o.profile);
    } catch (const ArgumentError& e) {
        throw UsageError(e.what());
    }
    if (!o.json.empty()) require_writable_target(o.json, "--json");

    const TensorFile ckpt = read_tensor_file(o.ckpt);
    const LoadedAdapter loaded = load_adapter(o.adapter, ckpt, /*check_invariants=*/false);

    std::vector<std::pair<std::string, InvariantReport>> reports;
    for (const AdapterLayer& layer : loaded.layers) {
        InvariantReport report = verify_invariants(layer, tol);
        out << layer.name << " (" << to_string(layer.mode) << ", r=" << layer.rank << ")\n";
        for (const auto& [key, c] : report) {
            out << "  " << std::left << std::setw(28) << key << std::right << std::scientific << std::setprecision(3)
                << std::setw(12) << c.measured << "  <= " << std::setw(10) << c.tolerance << "  "
                << (!c.applicable ? "n/a" : (c.pass ? "PASS" : "FAIL")) << '\n';
        }
        out << std::defaultfloat;
        reports.emplace_back(layer.name, std::move(report));
    }
    for (const LayerMeta& lm : loaded.meta.layers)
        if (lm.skipped) out << lm.name << " skipped (no adapter)\n";

    const nlohmann::json j = invariant_json(reports);
    if (!o.json.empty()) write_json(o.json, j);
    const bool pass = j.at("pass").get<bool>();
    out << "overall: " << (pass ? "PASS" : "FAIL") << " (profile " << o.profile << ")\n";
    return pass ? kOk : kInvariantFailure;
}

// ---------------------------------------------------------------- merge

struct MergeOptions {
    std::string ckpt;
    std::string adapter;
    std::string out;
};

int run_merge(const MergeOptions& o, std::ostream& out) {
    require_writable_target(o.out, "--out");
    const TensorFile ckpt = read_tensor_file(o.ckpt);
    const LoadedAdapter loaded = load_adapter(o.adapter, ckpt);

    TensorFile merged = ckpt;
    for (const AdapterLayer& layer : loaded.layers) {
        Tensor& t = merged.entries.at(layer.name);
        t.values = merge(layer);
        out << layer.name << ": |dW|_F = " << std::scientific << std::setprecision(6)
            << frobenius_norm(t.values - layer.weight) << std::defaultfloat << '\n';
    }
    write_tensor_file(o.out, merged);
    out << "merged " << loaded.layers.size() << " layer(s) into " << o.out << '\n';
    return kOk;
}

void apply_thread_env() {
    const char* env = std::getenv("NULLORA_THREADS");
    if (env == nullptr || *env == '\0') return;
    char* end = nullptr;
    const long n = std::strtol(env, &end, 10);
    if (*end != '\0' || n < 1) throw UsageError(std::string("NULLORA_THREADS must be a positive integer, got '") + env + "'");
    set_num_threads(static_cast<unsigned>(n));
}

} // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"nullora: null-space low-rank adapters for dense weights", "nullora"};
    app.require_subcommand(1);

    AnalyzeOptions ao;
    auto* analyze = app.add_subcommand("analyze", "Numerical rank / null-space report for every weight in a checkpoint");
    analyze->add_option("ckpt", ao.ckpt, "NLRT checkpoint")->required()->check(CLI::ExistingFile);
    analyze->add_option("--tau", ao.tau, "Relative zero threshold for singular values")->check(CLI::PositiveNumber);
    analyze->add_option("--json", ao.json, "Write the JSON report here");

    InitOptions io;
    auto* init = app.add_subcommand("init", "Create an adapter for every eligible layer");
    init->add_option("ckpt", io.ckpt, "NLRT checkpoint")->required()->check(CLI::ExistingFile);
    init->add_option("--out", io.out, "Adapter file to write")->required();
    init->add_option("--mode", io.mode, "null | ablation | lora")->check(CLI::IsMember({"null", "ablation", "lora"}));
    init->add_option("--tau", io.tau, "Relative zero threshold")->check(CLI::PositiveNumber);
    init->add_option("--max-rank", io.max_rank, "Cap on r for null mode");
    init->add_option("--rank", io.rank, "Adapter rank for ablation/lora modes");
    init->add_option("--seed", io.seed, "Seed for random initializations");

    TrainOptions to;
    auto* trn = app.add_subcommand("train", "Train adapter layers on a planted or stored regression task");
    trn->add_option("--ckpt", to.ckpt, "NLRT checkpoint")->required()->check(CLI::ExistingFile);
    trn->add_option("--adapter", to.adapter, "Adapter file (rewritten in place)")->required()->check(CLI::ExistingFile);
    trn->add_option("--task", to.task, "planted:<d_out>x<d_in>:<nullity>:<n> or data:<file.nlrt>")->required();
    trn->add_option("--steps", to.steps, "Optimizer steps");
    trn->add_option("--lr", to.lr, "Learning rate");
    trn->add_option("--optimizer", to.optimizer, "adamw | sgd");
    trn->add_option("--weight-decay", to.weight_decay, "Weight decay");
    trn->add_option("--batch", to.batch, "Minibatch size");
    trn->add_option("--seed", to.seed, "Seed for task generation and minibatch order");
    trn->add_option("--log", to.log, "Write training history CSV here");
    trn->add_option("--log-every", to.log_every, "History interval in steps");
    trn->add_option("--layer", to.layer, "Train only this layer");

    VerifyOptions vo;
    auto* verify = app.add_subcommand("verify", "Check structural invariants of every adapted layer");
    verify->add_option("--ckpt", vo.ckpt, "NLRT checkpoint")->required()->check(CLI::ExistingFile);
    verify->add_option("--adapter", vo.adapter, "Adapter file")->required()->check(CLI::ExistingFile);
    verify->add_option("--tol-profile", vo.profile, "default | strict")->check(CLI::IsMember({"default", "strict"}));
    verify->add_option("--json", vo.json, "Write the JSON report here");

    MergeOptions mo;
    auto* mrg = app.add_subcommand("merge", "Fold adapters into the base weights");
    mrg->add_option("--ckpt", mo.ckpt, "NLRT checkpoint")->required()->check(CLI::ExistingFile);
    mrg->add_option("--adapter", mo.adapter, "Adapter file")->required()->check(CLI::ExistingFile);
    mrg->add_option("--out", mo.out, "Merged checkpoint to write")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        app.exit(e, out, err);
        return kUsage;
    }

    try {
        apply_thread_env();
        if (analyze->parsed()) return run_analyze(ao, out);
        if (init->parsed()) return run_init(io, out, err);
        if (trn->parsed()) return run_train(to, out);
        if (verify->parsed()) return run_verify(vo, out);
        if (mrg->parsed()) return run_merge(mo, out);
    } catch (const UsageError& e) {
        err << "usage error: " << e.what() << '\n';
        return kUsage;
    } catch (const ArgumentError& e) {
        err << "error: " << e.what() << '\n';
        return kUsage;
    } catch (const TrainingDiverged& e) {
        err << "training diverged: " << e.what() << '\n';
        return kDiverged;
    } catch (const InvariantViolation& e) {
        err << "invariant violation: " << e.what() << '\n';
        return kDataError;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kDataError;
    }
    return kUsage;
}

} // namespace nullora::cli
