#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace convo {

// splitmix64: used both to expand seeds and to mix stream identifiers, so that
// (seed, index) derived generators are decorrelated.
inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline uint64_t mix_seed(uint64_t seed, uint64_t a, uint64_t b = 0) {
    return splitmix64(splitmix64(seed ^ splitmix64(a)) ^ splitmix64(b + 0x517cc1b727220a95ULL));
}

// Deterministic generator with self-contained sampling helpers. std::mt19937_64
// is pinned by the standard; the distribution helpers are written out because
// std::uniform_real_distribution and friends may differ across toolchains.
class Rng {
  public:
    explicit Rng(uint64_t seed) : engine_(splitmix64(seed)) {}

    uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1).
    double uniform() { return (next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n), n > 0; rejection-free modulo bias is negligible
    // for the n used here but we debias anyway.
    uint64_t uniform_index(uint64_t n) {
        uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        uint64_t v = next_u64();
        while (v >= limit) v = next_u64();
        return v % n;
    }

    int uniform_int(int lo, int hi) {  // inclusive range
        return lo + static_cast<int>(uniform_index(static_cast<uint64_t>(hi - lo + 1)));
    }

    // Box-Muller with a cached spare.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        double u2 = uniform();
        double radius = std::sqrt(-2.0 * std::log(u1));
        double theta = 6.283185307179586476925286766559 * u2;
        spare_ = radius * std::sin(theta);
        has_spare_ = true;
        return radius * std::cos(theta);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    template <typename T>
    void shuffle(std::vector<T>& items) {
        for (size_t i = items.size(); i > 1; --i) {
            size_t j = uniform_index(i);
            std::swap(items[i - 1], items[j]);
        }
    }

    // First k entries of a Fisher-Yates pass: a uniform k-subset, in sampled order.
    std::vector<int> sample_without_replacement(int n, int k) {
        std::vector<int> pool(n);
        for (int i = 0; i < n; ++i) pool[i] = i;
        for (int i = 0; i < k; ++i) {
            int j = i + static_cast<int>(uniform_index(static_cast<uint64_t>(n - i)));
            std::swap(pool[i], pool[j]);
        }
        pool.resize(k);
        return pool;
    }

  private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace convo
