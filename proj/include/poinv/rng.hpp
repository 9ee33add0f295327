#pragma once

#include <cstdint>
#include <random>

namespace poinv {

using Engine = std::mt19937_64;

/// Named randomness sources. Each (seed, stream, index) triple gets its own engine
/// so that e.g. demand draws do not shift when exploration consumes more numbers.
enum class Stream : std::uint32_t {
    init = 1,
    demand = 2,
    noise = 3,
    exploration = 4,
    replay = 5,
    weights = 6,
    // Episode draws used for training are kept apart from evaluation draws.
    train_episode = 7,
    eval_episode = 8,
    oracle = 9,
};

inline Engine substream(std::uint64_t seed, Stream stream, std::uint64_t index = 0) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(index),
                      static_cast<std::uint32_t>(index >> 32)};
    return Engine(seq);
}

/// Seed for a nested substream, so streams can be derived from streams.
inline std::uint64_t derive_seed(std::uint64_t seed, Stream stream, std::uint64_t index = 0) {
    return substream(seed, stream, index)();
}

}  // namespace poinv
