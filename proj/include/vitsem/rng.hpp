#pragma once

#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

namespace vitsem {

// Deterministic splitmix64 generator. Used for weight init and mask sampling
// so results are reproducible independent of the standard library's
// distribution implementations.
class Rng {
public:
    explicit Rng(uint64_t seed) : state_(seed) {}

    uint64_t next_u64() {
        uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1).
    double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform integer in [0, n), unbiased via rejection.
    uint64_t uniform_index(uint64_t n) {
        const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        uint64_t v = next_u64();
        while (v >= limit) v = next_u64();
        return v % n;
    }

    // Standard normal via Box-Muller.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform01();
        double u2 = uniform01();
        while (u1 <= 0.0) u1 = uniform01();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

private:
    uint64_t state_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

// Fisher-Yates partial shuffle: deterministically samples `k` distinct
// elements into the front of `items`.
template <typename T>
void partial_shuffle(std::vector<T>& items, size_t k, Rng& rng) {
    const size_t n = items.size();
    if (k > n) k = n;
    for (size_t i = 0; i < k; ++i) {
        const size_t j = i + static_cast<size_t>(rng.uniform_index(n - i));
        std::swap(items[i], items[j]);
    }
}

}  // namespace vitsem
