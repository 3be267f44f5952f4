#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "common.hpp"

namespace xreid {

// Deterministic RNG. mt19937_64 output is pinned by the standard; the
// distributions below are hand-written so sampled values never depend on the
// standard library implementation. Frozen test values rely on this.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    // [0, 1)
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // [0, n)
    std::size_t bounded(std::size_t n) {
        if (n == 0) fail(Errc::invalid_argument, "Rng::bounded(0)");
        return static_cast<std::size_t>(gen_() % n);
    }

    // Box-Muller, one value per call (second is discarded to keep state simple)
    double normal() {
        double u1 = uniform();
        double u2 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        // Fisher-Yates with our own bounded(); std::shuffle is implementation-defined
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = bounded(i);
            std::swap(v[i - 1], v[j]);
        }
    }

    // Derive an independent child stream; tag keeps streams for different
    // purposes decoupled even when created in a different order.
    Rng fork(const std::string& tag) {
        std::uint64_t s = gen_() ^ fnv1a64(tag);
        return Rng(s);
    }

private:
    std::mt19937_64 gen_;
};

}  // namespace xreid
