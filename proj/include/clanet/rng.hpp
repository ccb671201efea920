#pragma once

#include <cmath>
#include <cstdint>

namespace clanet {

// Counter-based generator built on the splitmix64 mixer. The stream depends
// only on (seed, number of draws made), so identical seeds and identical call
// sequences produce identical outputs on every platform and compiler.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : seed_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = seed_ + 0x9E3779B97F4A7C15ull * ++counter_;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1), 53 bits of mantissa.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n). n must be >= 1.
    std::uint64_t uniform_int(std::uint64_t n) {
        return static_cast<std::uint64_t>(
            (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
    }

    // Standard normal via Box-Muller. Always consumes exactly two draws.
    double normal() {
        double u1 = 1.0 - uniform();  // (0, 1]
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
    }

    double normal(double mu, double sigma) { return mu + sigma * normal(); }

    // Independent child stream. Depends only on the seed and the stream tag,
    // never on how many draws the parent has made.
    Rng fork(std::uint64_t stream) const {
        std::uint64_t z = seed_ ^ (0x9E3779B97F4A7C15ull * (stream + 0x632BE59BD9B4E019ull));
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return Rng(z ^ (z >> 31));
    }

    std::uint64_t seed() const { return seed_; }
    std::uint64_t draws() const { return counter_; }

private:
    std::uint64_t seed_ = 0;
    std::uint64_t counter_ = 0;
};

}  // namespace clanet
