#include "palign/rng.hpp"

#include <cmath>

#include "palign/errors.hpp"

namespace palign::numcore {

namespace {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001B3ULL;
    }
    return h;
}

} // namespace

std::uint64_t SplitRng::next_u64() {
    ++counter_;
    return mix64(key_ + kGolden * counter_);
}

double SplitRng::uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double SplitRng::uniform(double lo, double hi) {
    return lo + (hi - lo) * uniform();
}

double SplitRng::normal() {
    if (have_spare_) {
        have_spare_ = false;
        return spare_;
    }
    // u1 in (0,1] so log() is finite.
    double u1 = 1.0 - uniform();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
}

std::uint64_t SplitRng::next_below(std::uint64_t n) {
    if (n == 0) throw ConfigInvalid("next_below: n must be positive");
    std::uint64_t bound = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t r = next_u64();
    while (r >= bound) r = next_u64();
    return r % n;
}

SplitRng SplitRng::split(std::string_view label) const {
    return SplitRng(mix64(key_ ^ fnv1a(label)));
}

SplitRng SplitRng::split(std::uint64_t lane) const {
    return SplitRng(mix64(key_ ^ mix64(lane + kGolden)));
}

} // namespace palign::numcore
