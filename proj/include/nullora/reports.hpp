// Copyright 2026 The nullora Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "nullora/adapter.hpp"
#include "nullora/linalg.hpp"
#include "nullora/tensor_file.hpp"

#include <json.hpp>

#include <string>
#include <utility>
#include <vector>

namespace nullora {

struct LayerAnalysis {
    std::string name;
    RankReport rank;

    /// nullity_right / d_in * 100
    double deficiency_pct() const;
};

/// SVD-based rank analysis of every tensor in a checkpoint, in name order.
std::vector<LayerAnalysis> analyze_checkpoint(const TensorFile& checkpoint, double tau = kDefaultTau);

double mean_deficiency_pct(const std::vector<LayerAnalysis>& layers);

/// {"layers": [{name, d_out, d_in, rank, nullity_left, nullity_right,
///   sigma_max, sigma_min, deficiency_pct, tau}, ...], "mean_deficiency_pct": x}
nlohmann::json analysis_json(const std::vector<LayerAnalysis>& layers);

/// {"layers": {name: {check: {measured, tolerance, pass, applicable}}}, "pass": bool}
nlohmann::json invariant_json(const std::vector<std::pair<std::string, InvariantReport>>& reports);

} // namespace nullora
