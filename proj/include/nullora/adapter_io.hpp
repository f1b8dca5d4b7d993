// Copyright 2026 The nullora Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "nullora/adapter.hpp"
#include "nullora/tensor_file.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace nullora {

inline constexpr int kAdapterFormatVersion = 1;

struct LayerMeta {
    std::string name;
    std::size_t rank = 0;
    std::size_t d_out = 0;
    std::size_t d_in = 0;
    bool skipped = false;
    std::optional<double> lora_alpha; // vanilla_lora only
};

struct AdapterMeta {
    int format_version = kAdapterFormatVersion;
    AdapterMode mode = AdapterMode::null_lora;
    double tau = kDefaultTau;
    std::uint64_t seed = 0;
    std::vector<LayerMeta> layers;
};

nlohmann::json to_json(const AdapterMeta& meta);
AdapterMeta adapter_meta_from_json(const nlohmann::json& j);

/// Builds metadata listing every adapted and skipped layer.
AdapterMeta make_adapter_meta(AdapterMode mode, double tau, std::uint64_t seed, std::span<const AdapterLayer> layers,
                              std::span<const SkippedLayer> skipped = {});

struct LoadedAdapter {
    AdapterMeta meta;
    std::vector<AdapterLayer> layers; // in metadata order, skipped layers omitted
};

/// Tensor file holding "<layer>.B", ".A", ".s" (1 x r), ".B_f", ".A_f" and
/// ".U_hat" per adapted layer (vanilla layers only carry B and A), with the
/// metadata under "__meta__".
TensorFile adapter_to_tensor_file(std::span<const AdapterLayer> layers, const AdapterMeta& meta);

void save_adapter(const std::filesystem::path& path, std::span<const AdapterLayer> layers, const AdapterMeta& meta);

/// Rebuilds layers against the base weights in `checkpoint`. With
/// `check_invariants`, null_lora layers must have an orthonormal U_hat equal
/// to B_f, and W0^T B_f, W0 A_f^T must vanish to max(1e-8, tau) * sigma_max;
/// a mismatch throws InvariantViolation naming the layer.
LoadedAdapter load_adapter(const TensorFile& adapter, const TensorFile& checkpoint, bool check_invariants = true);
LoadedAdapter load_adapter(const std::filesystem::path& path, const TensorFile& checkpoint,
                           bool check_invariants = true);

} // namespace nullora
