#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

namespace dicelab {

/// Deterministic random source.
///
/// std::mt19937_64 is fully specified by the standard, but the standard
/// distributions are not, so all variates are derived here from raw engine
/// output. Identical seeds give identical streams on every platform.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    /// Seeds from several integers (e.g. experiment seed plus a stream id).
    Rng(std::initializer_list<std::uint64_t> keys) {
        std::vector<std::uint32_t> words;
        for (auto k : keys) {
            words.push_back(static_cast<std::uint32_t>(k & 0xffffffffu));
            words.push_back(static_cast<std::uint32_t>(k >> 32));
        }
        std::seed_seq seq(words.begin(), words.end());
        engine_.seed(seq);
    }

    /// Uniform on [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    /// Uniform integer on [0, n).
    std::size_t index(std::size_t n) {
        if (n == 0) throw std::invalid_argument("Rng::index: empty range");
        // rejection sampling keeps the draw unbiased
        const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % n);
        std::uint64_t x;
        do {
            x = engine_();
        } while (x >= limit);
        return static_cast<std::size_t>(x % n);
    }

    /// Exponential(1) variate.
    double exponential() { return -std::log1p(-uniform()); }

    /// Draws an index from unnormalized nonnegative weights.
    template <typename Weights> std::size_t categorical(const Weights& w) {
        double total = 0.0;
        const auto n = static_cast<std::size_t>(w.size());
        for (std::size_t i = 0; i < n; ++i) total += w[i];
        if (!(total > 0.0)) throw std::invalid_argument("Rng::categorical: zero total weight");
        const double u = uniform() * total;
        double acc = 0.0;
        std::size_t last_positive = 0;
        for (std::size_t i = 0; i < n; ++i) {
            if (w[i] <= 0.0) continue;
            acc += w[i];
            last_positive = i;
            if (u < acc) return i;
        }
        return last_positive;
    }

    std::mt19937_64& engine() { return engine_; }

private:
    std::mt19937_64 engine_;
};

} // namespace dicelab
