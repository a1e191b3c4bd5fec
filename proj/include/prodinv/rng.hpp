#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace prodinv {

/// Counter-based SplitMix64 stream. Draw k (k = 0, 1, ...) is
/// mix64(key + (k + 1) * 0x9E3779B97F4A7C15) with key = mix64(seed), so any
/// draw can be reproduced from (seed, k) alone.
class CounterRng {
public:
    static constexpr std::string_view algorithm_id = "splitmix64-counter/v1";
    static constexpr std::uint64_t golden = 0x9E3779B97F4A7C15ULL;

    explicit CounterRng(std::uint64_t seed) : key_(mix64(seed)) {}

    static constexpr std::uint64_t mix64(std::uint64_t z) {
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    std::uint64_t at(std::uint64_t k) const { return mix64(key_ + (k + 1) * golden); }
    std::uint64_t next_u64() { return at(counter_++); }

    /// Uniform on [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Exp(rate) by inverse CDF, -ln(1 - U) / rate.
    double exponential(double rate) { return -std::log1p(-uniform()) / rate; }

    /// Independent child stream for sub-task `stream`.
    CounterRng split(std::uint64_t stream) const { return CounterRng(key_ ^ mix64(stream + golden)); }

    std::uint64_t counter() const noexcept { return counter_; }

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

} // namespace prodinv
