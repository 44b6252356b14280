#pragma once

#include <cstdint>
#include <random>

namespace constrdyn {

// Deterministic seed derivation so that per-trajectory / per-worker streams
// are independent of evaluation order and parallelism.
inline uint64_t split_seed(uint64_t seed, uint64_t index) {
    uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Thin sampler over mt19937_64. Distributions are hand-rolled so that a given
// seed produces the same stream on any standard library.
class Rng {
public:
    explicit Rng(uint64_t seed) : engine_(seed) {}

    // uniform in [0, 1)
    double uniform01() { return (engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    // standard normal via Box-Muller (one draw per call, no cached pair)
    double normal() {
        double u1 = 1.0 - uniform01();  // (0, 1]
        double u2 = uniform01();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.141592653589793238462643383279502884 * u2);
    }

    double normal(double mean, double sigma) { return mean + sigma * normal(); }

    // integer in [0, n)
    uint64_t below(uint64_t n) { return engine_() % n; }

    // Fisher-Yates
    template <class T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::mt19937_64 engine_;
};

}  // namespace constrdyn
