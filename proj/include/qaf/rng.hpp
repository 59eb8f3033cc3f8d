#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace qaf {

using Rng = std::mt19937_64;

/// Independent generator for a (seed, tag...) tuple. Streams derived from
/// distinct tags do not depend on how many draws other streams consumed.
inline Rng make_stream(std::uint64_t seed, std::initializer_list<std::uint64_t> tags = {})
{
    std::vector<std::uint32_t> words;
    words.push_back(static_cast<std::uint32_t>(seed));
    words.push_back(static_cast<std::uint32_t>(seed >> 32));
    for (auto t : tags) {
        words.push_back(static_cast<std::uint32_t>(t));
        words.push_back(static_cast<std::uint32_t>(t >> 32));
    }
    std::seed_seq seq(words.begin(), words.end());
    return Rng(seq);
}

inline double uniform01(Rng& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

inline double normal01(Rng& rng) { return std::normal_distribution<double>(0.0, 1.0)(rng); }

/// Tags used to separate the library's random streams.
enum class Stream : std::uint64_t {
    Init = 1,
    GeneratorMaps,
    Identity,
    Samples,
    Batches,
    Dropout,
    Split,
    Chimeric,
};

inline std::uint64_t tag(Stream s) { return static_cast<std::uint64_t>(s); }

} // namespace qaf
