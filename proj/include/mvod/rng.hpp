#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace mvod {

// Deterministic random stream. The integer sequence comes from mt19937_64,
// whose outputs the standard pins down exactly; every floating-point draw is
// derived from those integers with fixed arithmetic rather than the unspecified
// std::*_distribution adaptors. Same seed, same sequence, byte for byte.
class RngStream {
public:
    explicit RngStream(std::uint64_t seed);

    std::uint64_t seed() const { return seed_; }
    std::uint64_t next_u64();

    double uniform();                      // [0, 1)
    double uniform(double lo, double hi);  // [lo, hi)
    double normal();                       // standard normal, Marsaglia polar
    std::size_t uniform_index(std::size_t n); // unbiased draw from {0..n-1}

    // Child stream derived from this stream's seed and a tag; independent of
    // how many draws the parent has made.
    RngStream fork(std::string_view tag, std::uint64_t index = 0) const;

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = uniform_index(i);
            std::swap(v[i - 1], v[j]);
        }
    }

    // k distinct indices from {0..n-1} in draw order.
    std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k);

private:
    std::uint64_t seed_;
    std::mt19937_64 gen_;
    double cached_normal_ = 0.0;
    bool has_cached_normal_ = false;
};

std::uint64_t fnv1a64(std::string_view text);

} // namespace mvod
