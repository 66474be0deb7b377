#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

#include "surveyforge/hashing.hpp"

namespace surveyforge {

// mt19937_64 output is fully specified by the standard, so seeded streams
// reproduce across compilers and platforms.
using Rng = std::mt19937_64;

// Uniform double in [0, 1) built directly from the top 53 bits of the
// generator, avoiding implementation-defined distribution adapters.
inline double canonical_unit(Rng& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Child seed for a named stage (and optional substep) of a run. Stages draw
// from independent streams, so intra-stage call interleaving in one stage
// cannot perturb another.
inline std::uint64_t child_seed(std::uint64_t master, std::string_view stage) {
    char bytes[8];
    for (int i = 0; i < 8; ++i) {
        bytes[i] = static_cast<char>((master >> (8 * i)) & 0xFF);
    }
    return fnv1a64(stage, fnv1a64(std::string_view(bytes, 8)));
}

inline std::uint64_t child_seed(std::uint64_t master, std::string_view stage,
                                std::uint64_t substep) {
    char bytes[8];
    std::uint64_t h = child_seed(master, stage);
    for (int i = 0; i < 8; ++i) {
        bytes[i] = static_cast<char>((substep >> (8 * i)) & 0xFF);
    }
    return fnv1a64(std::string_view(bytes, 8), h);
}

// One weighted draw over a probability vector (inverse-CDF walk). The
// vector must be non-empty with non-negative entries summing to ~1; the
// last index absorbs floating-point slack.
inline size_t weighted_draw(Rng& rng, const std::vector<double>& probabilities) {
    double u = canonical_unit(rng);
    double acc = 0.0;
    for (size_t i = 0; i + 1 < probabilities.size(); ++i) {
        acc += probabilities[i];
        if (u < acc) return i;
    }
    return probabilities.empty() ? 0 : probabilities.size() - 1;
}

}  // namespace surveyforge
