// Copyright 2026 The nullora Authors
// SPDX-License-Identifier: Apache-2.0

#include "nullora/adapter_io.hpp"

#include "nullora/error.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace nullora {

using nlohmann::json;

nlohmann::json to_json(const AdapterMeta& meta) {
    json layers = json::array();
    for (const LayerMeta& l : meta.layers) {
        json entry = {{"name", l.name}, {"r", l.rank}, {"d_out", l.d_out}, {"d_in", l.d_in}, {"skipped", l.skipped}};
        if (l.lora_alpha) entry["lora_alpha"] = *l.lora_alpha;
        layers.push_back(std::move(entry));
    }
    return {{"format_version", meta.format_version},
            {"mode", to_string(meta.mode)},
            {"tau", meta.tau},
            {"seed", meta.seed},
            {"layers", std::move(layers)}};
}

AdapterMeta adapter_meta_from_json(const nlohmann::json& j) {
    try {
        AdapterMeta meta;
        meta.format_version = j.at("format_version").get<int>();
        if (meta.format_version != kAdapterFormatVersion) {
            throw FormatError(FormatErrc::unsupported_version,
                              "adapter format_version " + std::to_string(meta.format_version));
        }
        meta.mode = parse_adapter_mode(j.at("mode").get<std::string>());
        meta.tau = j.at("tau").get<double>();
        meta.seed = j.at("seed").get<std::uint64_t>();
        for (const json& l : j.at("layers")) {
            LayerMeta lm;
            lm.name = l.at("name").get<std::string>();
            lm.rank = l.at("r").get<std::size_t>();
            lm.d_out = l.at("d_out").get<std::size_t>();
            lm.d_in = l.at("d_in").get<std::size_t>();
            lm.skipped = l.at("skipped").get<bool>();
            if (l.contains("lora_alpha")) lm.lora_alpha = l.at("lora_alpha").get<double>();
            meta.layers.push_back(std::move(lm));
        }
        return meta;
    } catch (const json::exception& e) {
        throw FormatError(FormatErrc::bad_header, std::string("adapter metadata: ") + e.what());
    } catch (const ArgumentError& e) {
        throw FormatError(FormatErrc::bad_header, std::string("adapter metadata: ") + e.what());
    }
}

AdapterMeta make_adapter_meta(AdapterMode mode, double tau, std::uint64_t seed, std::span<const AdapterLayer> layers,
                              std::span<const SkippedLayer> skipped) {
    AdapterMeta meta;
    meta.mode = mode;
    meta.tau = tau;
    meta.seed = seed;
    for (const AdapterLayer& l : layers) {
        LayerMeta lm{l.name, l.rank, l.d_out(), l.d_in(), false, std::nullopt};
        if (l.mode == AdapterMode::vanilla_lora) lm.lora_alpha = l.lora_alpha;
        meta.layers.push_back(std::move(lm));
    }
    for (const SkippedLayer& s : skipped) meta.layers.push_back({s.name, 0, s.d_out, s.d_in, true, std::nullopt});
    std::sort(meta.layers.begin(), meta.layers.end(), [](const LayerMeta& a, const LayerMeta& b) { return a.name < b.name; });
    return meta;
}

TensorFile adapter_to_tensor_file(std::span<const AdapterLayer> layers, const AdapterMeta& meta) {
    std::set<std::string> listed;
    for (const LayerMeta& l : meta.layers)
        if (!l.skipped) listed.insert(l.name);

    TensorFile file;
    for (const AdapterLayer& layer : layers) {
        layer.check_shapes();
        if (!listed.count(layer.name)) {
            throw ArgumentError("save_adapter: layer '" + layer.name + "' is missing from adapter metadata");
        }
        if (layer.mode != meta.mode) {
            throw ArgumentError("save_adapter: layer '" + layer.name + "' mode differs from adapter mode");
        }
        auto put = [&](const char* suffix, const Matrix& m) { file.entries[layer.name + suffix] = Tensor{DType::f64, m}; };
        put(".B", layer.lora_B);
        put(".A", layer.lora_A);
        if (layer.mode == AdapterMode::vanilla_lora) continue;
        put(".s", Matrix(1, layer.scale.size(), layer.scale));
        put(".B_f", layer.frozen_B);
        put(".A_f", layer.frozen_A);
        if (layer.mode == AdapterMode::null_lora) put(".U_hat", layer.null_basis);
    }
    file.metadata = to_json(meta);
    return file;
}

void save_adapter(const std::filesystem::path& path, std::span<const AdapterLayer> layers, const AdapterMeta& meta) {
    write_tensor_file(path, adapter_to_tensor_file(layers, meta));
}

namespace {

const Matrix& fetch(const TensorFile& file, const std::string& key, std::size_t rows, std::size_t cols) {
    auto it = file.entries.find(key);
    if (it == file.entries.end()) throw FormatError(FormatErrc::missing_tensor, "adapter lacks tensor '" + key + "'");
    const Matrix& m = it->second.values;
    if (m.rows() != rows || m.cols() != cols) {
        throw FormatError(FormatErrc::shape_mismatch, "tensor '" + key + "' is " + m.shape_str() + ", expected " +
                                                          std::to_string(rows) + "x" + std::to_string(cols));
    }
    return m;
}

void check_loaded_invariants(const AdapterLayer& layer) {
    auto fail = [&](const std::string& what, double measured, double tol) {
        throw InvariantViolation("layer '" + layer.name + "': " + what + " = " + std::to_string(measured) +
                                 " exceeds " + std::to_string(tol) + " (corrupted adapter or wrong checkpoint?)");
    };
    constexpr double kOrthoTol = 1e-10;
    const double ob = orthonormality_defect_cols(layer.frozen_B);
    if (ob > kOrthoTol) fail("B_f orthonormality defect", ob, kOrthoTol);
    const double oa = orthonormality_defect_rows(layer.frozen_A);
    if (oa > kOrthoTol) fail("A_f orthonormality defect", oa, kOrthoTol);
    if (layer.mode != AdapterMode::null_lora) return;

    const double ou = orthonormality_defect_cols(layer.null_basis);
    if (ou > kOrthoTol) fail("U_hat orthonormality defect", ou, kOrthoTol);
    const double same = max_abs_diff(layer.null_basis, layer.frozen_B);
    if (same > 0.0) fail("|U_hat - B_f|_max", same, 0.0);

    const double smax = svd(layer.weight, layer.name).sigma.front();
    const double tol = std::max(1e-8, layer.tau) * smax;
    const double left = max_abs(matmul_tn(layer.weight, layer.frozen_B));
    if (left > tol) fail("|W0^T B_f|_max", left, tol);
    const double right = max_abs(matmul_nt(layer.weight, layer.frozen_A));
    if (right > tol) fail("|W0 A_f^T|_max", right, tol);
}

} // namespace

LoadedAdapter load_adapter(const TensorFile& adapter, const TensorFile& checkpoint, bool check_invariants) {
    if (!adapter.metadata) throw FormatError(FormatErrc::bad_header, "adapter file has no __meta__ entry");
    LoadedAdapter out;
    out.meta = adapter_meta_from_json(*adapter.metadata);

    for (const LayerMeta& lm : out.meta.layers) {
        auto base = checkpoint.entries.find(lm.name);
        if (base == checkpoint.entries.end()) {
            throw FormatError(FormatErrc::layer_mismatch, "checkpoint has no weight named '" + lm.name + "'");
        }
        const Matrix& weight = base->second.values;
        if (weight.rows() != lm.d_out || weight.cols() != lm.d_in) {
            throw FormatError(FormatErrc::layer_mismatch, "checkpoint weight '" + lm.name + "' is " + weight.shape_str() +
                                                              ", adapter expects " + std::to_string(lm.d_out) + "x" +
                                                              std::to_string(lm.d_in));
        }
        if (lm.skipped) continue;

        AdapterLayer layer;
        layer.name = lm.name;
        layer.weight = weight;
        layer.mode = out.meta.mode;
        layer.rank = lm.rank;
        layer.tau = out.meta.tau;
        const std::size_t h = lm.rank / 2;
        if (layer.mode == AdapterMode::vanilla_lora) {
            layer.lora_B = fetch(adapter, lm.name + ".B", lm.d_out, lm.rank);
            layer.lora_A = fetch(adapter, lm.name + ".A", lm.rank, lm.d_in);
            layer.lora_alpha = lm.lora_alpha.value_or(static_cast<double>(lm.rank));
        } else {
            if (lm.rank == 0 || lm.rank % 2 != 0) {
                throw FormatError(FormatErrc::bad_header, "layer '" + lm.name + "' has invalid rank " + std::to_string(lm.rank));
            }
            layer.lora_B = fetch(adapter, lm.name + ".B", lm.d_out, h);
            layer.lora_A = fetch(adapter, lm.name + ".A", h, lm.d_in);
            const Matrix& s = fetch(adapter, lm.name + ".s", 1, lm.rank);
            layer.scale.assign(s.data().begin(), s.data().end());
            layer.frozen_B = fetch(adapter, lm.name + ".B_f", lm.d_out, h);
            layer.frozen_A = fetch(adapter, lm.name + ".A_f", h, lm.d_in);
            if (layer.mode == AdapterMode::null_lora) layer.null_basis = fetch(adapter, lm.name + ".U_hat", lm.d_out, h);
        }
        if (check_invariants && layer.mode != AdapterMode::vanilla_lora) check_loaded_invariants(layer);
        out.layers.push_back(std::move(layer));
    }
    return out;
}

LoadedAdapter load_adapter(const std::filesystem::path& path, const TensorFile& checkpoint, bool check_invariants) {
    return load_adapter(read_tensor_file(path), checkpoint, check_invariants);
}

} // namespace nullora
