// Copyright 2026 The nullora Authors
// SPDX-License-Identifier: Apache-2.0

#include "nullora/reports.hpp"

namespace nullora {

using nlohmann::json;

double LayerAnalysis::deficiency_pct() const {
    return rank.cols == 0 ? 0.0 : 100.0 * static_cast<double>(rank.nullity_right) / static_cast<double>(rank.cols);
}

std::vector<LayerAnalysis> analyze_checkpoint(const TensorFile& checkpoint, double tau) {
    std::vector<LayerAnalysis> out;
    out.reserve(checkpoint.entries.size());
    for (const auto& [name, tensor] : checkpoint.entries) {
        out.push_back({name, rank_report(tensor.values, tau, name)});
    }
    return out;
}

double mean_deficiency_pct(const std::vector<LayerAnalysis>& layers) {
    if (layers.empty()) return 0.0;
    double acc = 0.0;
    for (const LayerAnalysis& l : layers) acc += l.deficiency_pct();
    return acc / static_cast<double>(layers.size());
}

json analysis_json(const std::vector<LayerAnalysis>& layers) {
    json arr = json::array();
    for (const LayerAnalysis& l : layers) {
        arr.push_back({{"name", l.name},
                       {"d_out", l.rank.rows},
                       {"d_in", l.rank.cols},
                       {"rank", l.rank.numerical_rank},
                       {"nullity_left", l.rank.nullity_left},
                       {"nullity_right", l.rank.nullity_right},
                       {"sigma_max", l.rank.sigma_max},
                       {"sigma_min", l.rank.sigma_min},
                       {"deficiency_pct", l.deficiency_pct()},
                       {"tau", l.rank.tau}});
    }
    return {{"layers", std::move(arr)}, {"mean_deficiency_pct", mean_deficiency_pct(layers)}};
}

json invariant_json(const std::vector<std::pair<std::string, InvariantReport>>& reports) {
    json layers = json::object();
    bool all = true;
    for (const auto& [name, report] : reports) {
        json checks = json::object();
        for (const auto& [key, c] : report) {
            checks[key] = {{"measured", c.measured}, {"tolerance", c.tolerance}, {"pass", c.pass}, {"applicable", c.applicable}};
        }
        layers[name] = std::move(checks);
        all = all && overall_pass(report);
    }
    return {{"layers", std::move(layers)}, {"pass", all}};
}

} // namespace nullora
