#pragma once

#include <cmath>
#include <cstdint>
#include <istream>
#include <ostream>
#include <random>

namespace fedmtl {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Mixes a stream index into a base seed so derived generators are unrelated.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
    return splitmix64(base ^ splitmix64(stream));
}

// mt19937_64 with explicit double derivation. The standard distributions are
// implementation-defined, so uniform/normal are produced by hand to keep
// results identical across toolchains.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    // Uniform in [0, 1).
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Box-Muller, cosine branch only, so the generator state stays a pure
    // function of the number of calls.
    double normal() {
        double u1 = uniform();
        double u2 = uniform();
        u1 = 1.0 - u1; // (0, 1]
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
    }

    // Unbiased integer in [0, n).
    std::size_t index(std::size_t n) {
        const std::uint64_t bound = n;
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
        std::uint64_t x;
        do {
            x = gen_();
        } while (x >= limit);
        return static_cast<std::size_t>(x % bound);
    }

    friend std::ostream& operator<<(std::ostream& os, const Rng& r) { return os << r.gen_; }
    friend std::istream& operator>>(std::istream& is, Rng& r) { return is >> r.gen_; }

private:
    std::mt19937_64 gen_;
};

} // namespace fedmtl
