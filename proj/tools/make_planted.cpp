// Copyright 2026 The nullora Authors
// SPDX-License-Identifier: Apache-2.0

// Writes a synthetic NLRT checkpoint of rank-deficient weights, and
// optionally a regression data file planted on the first layer.

#include "nullora/random.hpp"
#include "nullora/tensor_file.hpp"
#include "nullora/training.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <limits>
#include <regex>

int main(int argc, char** argv) {
    CLI::App app{"Generate planted rank-deficient checkpoints", "nullora-planted"};
    std::string out, shape = "64x64", data;
    std::size_t nullity = 8, layers = 1, full_rank = 0, samples = 256;
    std::uint64_t seed = 0;
    bool f32 = false;
    app.add_option("--out", out, "Checkpoint to write")->required();
    app.add_option("--shape", shape, "<d_out>x<d_in>");
    app.add_option("--nullity", nullity, "Null dimensions per layer");
    app.add_option("--layers", layers, "Rank-deficient layers");
    app.add_option("--full-rank", full_rank, "Additional full-rank layers");
    app.add_option("--seed", seed, "Seed");
    app.add_flag("--f32", f32, "Store weights as f32");
    app.add_option("--data", data, "Also write inputs/targets planted on layer 0");
    app.add_option("--samples", samples, "Samples in the data file");
    CLI11_PARSE(app, argc, argv);

    std::smatch m;
    if (!std::regex_match(shape, m, std::regex(R"((\d+)x(\d+))"))) {
        std::cerr << "--shape must look like 64x32\n";
        return 1;
    }
    const std::size_t d_out = std::stoul(m[1]), d_in = std::stoul(m[2]);

    try {
        nullora::Rng rng(seed);
        nullora::TensorFile ckpt;
        const auto dtype = f32 ? nullora::DType::f32 : nullora::DType::f64;
        nullora::PlantedTask first;
        for (std::size_t i = 0; i < layers + full_rank; ++i) {
            const std::uint64_t s = rng.below(std::numeric_limits<std::uint64_t>::max());
            nullora::Matrix w;
            if (i < layers) {
                nullora::PlantedTask t = nullora::gen_planted_task(d_out, d_in, nullity, samples, s);
                w = t.weight;
                if (i == 0) first = std::move(t);
            } else {
                w = nullora::Rng(s).gaussian(d_out, d_in);
            }
            ckpt.entries["layers." + std::to_string(i) + ".weight"] = nullora::Tensor{dtype, std::move(w)};
        }
        nullora::write_tensor_file(out, ckpt);
        if (!data.empty()) {
            if (layers == 0) {
                std::cerr << "--data needs at least one rank-deficient layer\n";
                return 1;
            }
            nullora::TensorFile d;
            d.entries["inputs"] = nullora::Tensor{nullora::DType::f64, first.inputs};
            d.entries["targets"] = nullora::Tensor{nullora::DType::f64, first.targets};
            nullora::write_tensor_file(data, d);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
