#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace palign::numcore {

/// Counter-based SplitMix64 generator. A generator is a (key, counter)
/// pair; draw i of key k is splitmix(k + GOLDEN * i), so streams are pure
/// functions of the key. Children are derived from the parent key and a
/// label only, never from the draw position, so split order is irrelevant
/// and every subsystem gets an independent, reproducible stream.
class SplitRng {
public:
    explicit SplitRng(std::uint64_t seed) : key_(seed) {}

    std::uint64_t next_u64();

    /// Uniform in [0, 1) with 53 random bits.
    double uniform();
    double uniform(double lo, double hi);

    /// Standard normal via Box-Muller; pairs are cached, fully deterministic.
    double normal();

    /// Uniform integer in [0, n); rejection sampling, no modulo bias.
    std::uint64_t next_below(std::uint64_t n);

    SplitRng split(std::string_view label) const;
    SplitRng split(std::uint64_t lane) const;

    template <typename T>
    void shuffle(std::vector<T>& items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(next_below(i));
            std::swap(items[i - 1], items[j]);
        }
    }

    std::uint64_t key() const { return key_; }

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

} // namespace palign::numcore
