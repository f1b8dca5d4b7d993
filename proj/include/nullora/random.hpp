// Copyright 2026 The nullora Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "nullora/matrix.hpp"

#include <cstdint>
#include <optional>
#include <random>
#include <vector>

namespace nullora {

/// Seeded generator with a portable normal sampler. std::normal_distribution
/// is implementation-defined, so Gaussian draws use Box-Muller on top of the
/// fully specified mt19937_64 stream.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    /// Uniform in [0, 1).
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    double normal();

    /// Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n);

    Matrix gaussian(std::size_t rows, std::size_t cols, double stddev = 1.0);
    /// Fisher-Yates permutation of [0, n).
    std::vector<std::size_t> permutation(std::size_t n);

private:
    std::mt19937_64 engine_;
    std::optional<double> spare_;
};

} // namespace nullora
