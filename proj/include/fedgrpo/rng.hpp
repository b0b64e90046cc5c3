#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace fedgrpo {

// Mixes a seed into an independent sub-stream seed. Used everywhere a
// component needs its own RNG derived from the experiment master seed.
constexpr std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Deterministic random source. std::mt19937_64 is pinned by the standard,
// but std::*_distribution is implementation-defined, so every distribution
// here is built from raw engine output with the exact recipes documented
// below. Tests reimplement these recipes as independent oracles.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // Uniform double in [0, 1): top 53 bits of one engine draw.
    double unit() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    // Standard normal via Box-Muller, cosine branch only.
    // Consumes exactly two engine draws per call.
    double normal();

    // Gamma(alpha, 1) via Marsaglia-Tsang; alpha < 1 handled with the
    // boost G(alpha) = G(alpha+1) * U^(1/alpha) using U in (0, 1].
    double gamma(double alpha);

    // Dirichlet(concentration, ..., concentration) of length n:
    // n gamma draws, normalized. All entries strictly positive.
    std::vector<double> dirichlet(double concentration, std::size_t n);

    // Uniform index in [0, n) by modulo reduction of one engine draw.
    std::size_t bounded(std::size_t n) {
        return static_cast<std::size_t>(engine_() % n);
    }

    // Fisher-Yates: for i = n-1 .. 1, swap v[i] with v[bounded(i+1)].
    template <typename T>
    void shuffle(std::vector<T>& v) {
        if (v.size() < 2) return;
        for (std::size_t i = v.size() - 1; i > 0; --i) {
            std::size_t j = bounded(i + 1);
            std::swap(v[i], v[j]);
        }
    }

private:
    std::mt19937_64 engine_;
};

}  // namespace fedgrpo
