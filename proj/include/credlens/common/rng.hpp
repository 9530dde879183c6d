#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <utility>
#include <vector>

namespace credlens {

/// Deterministic generator used for every seeded decision (splits, sampling,
/// bootstraps, synthetic data).
///
/// The engine is std::mt19937_64, whose output sequence is fixed by the C++
/// standard. The standard distributions are implementation-defined, so the
/// distributions below are implemented locally; together they make streams
/// identical across compilers and platforms. kAlgorithm names the combination
/// and must change whenever any distribution changes.
class Rng {
public:
    static constexpr std::string_view kAlgorithm = "mt19937_64+credlens-dist-v1";

    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }

    /// Uniform integer in [0, bound). bound must be > 0.
    std::uint64_t uniformBelow(std::uint64_t bound);

    /// Uniform double in [0, 1) with 53 random bits.
    double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    /// Standard normal via the Box-Muller transform.
    double normal();

    template <class T>
    void shuffle(std::vector<T>& values) {
        for (std::size_t i = values.size(); i > 1; --i) {
            const auto j = static_cast<std::size_t>(uniformBelow(i));
            std::swap(values[i - 1], values[j]);
        }
    }

private:
    std::mt19937_64 engine_;
    bool hasSpare_ = false;
    double spare_ = 0.0;
};

/// SplitMix64 finalizer over a combined pair; derives child seeds
/// (per tree, per stage, per batch) from a master seed.
std::uint64_t mixSeed(std::uint64_t seed, std::uint64_t salt);

}  // namespace credlens
