#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace poro::rng {

// std::mt19937_64 raw output is pinned by the standard; the distribution
// adapters in <random> are not. Everything that must reproduce bit-identical
// artifacts across toolchains goes through the helpers below instead.

inline uint64_t splitmix64(uint64_t& state) {
    uint64_t z = (state += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

/// Stable sub-seed for stream `stream` of a base seed (retries, per-sample seeds).
inline uint64_t derive_seed(uint64_t base, uint64_t stream) {
    uint64_t s = base ^ (0x632be59bd9b4e019ull + stream * 0x9e3779b97f4a7c15ull);
    return splitmix64(s);
}

class Engine {
public:
    explicit Engine(uint64_t seed) : gen_(seed) {}

    uint64_t next() { return gen_(); }

    /// Uniform double in [0, 1), 53-bit resolution.
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n), rejection-sampled (n >= 1).
    uint64_t uniform_index(uint64_t n) {
        const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        uint64_t x;
        do {
            x = gen_();
        } while (x >= limit);
        return x % n;
    }

private:
    std::mt19937_64 gen_;
};

/// Fisher-Yates shuffle driven by Engine::uniform_index.
template <typename T>
void shuffle(std::vector<T>& v, Engine& eng) {
    for (size_t i = v.size(); i > 1; --i) {
        size_t j = static_cast<size_t>(eng.uniform_index(i));
        std::swap(v[i - 1], v[j]);
    }
}

} // namespace poro::rng
