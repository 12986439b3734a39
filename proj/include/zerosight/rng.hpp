#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace zerosight {

// Deterministic RNG with hand-rolled transforms. The std:: distributions are
// implementation-defined sequences; everything seeded here must replay
// bit-identically, so the transforms are spelled out.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {
        // splitmix64 warm-up so nearby seeds decorrelate
        next_u64();
        next_u64();
    }

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1), 53-bit resolution.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n), unbiased via rejection.
    std::uint64_t uniform_index(std::uint64_t n) {
        if (n == 0) return 0;
        std::uint64_t limit = ~0ULL - (~0ULL % n);
        std::uint64_t x;
        do {
            x = next_u64();
        } while (x >= limit);
        return x % n;
    }

    // Standard normal via Box-Muller, pair cached.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1, u2;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double theta = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    // Fisher-Yates in-place shuffle.
    template <class T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(uniform_index(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    // Derive an independent stream, e.g. per epoch or per restart. Does not
    // advance this generator.
    Rng fork(std::uint64_t salt) const {
        return Rng(next_for_fork() ^ (salt * 0xD6E8FEB86659FD93ULL + 0x2545F4914F6CDD1DULL));
    }

private:
    std::uint64_t next_for_fork() const {
        std::uint64_t z = state_ * 0xFF51AFD7ED558CCDULL + 0x633D2AF9D4B06E25ULL;
        z ^= z >> 33;
        return z;
    }

    std::uint64_t state_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace zerosight
