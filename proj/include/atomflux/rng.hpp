#pragma once

// Deterministic seeded RNG with independent streams (PCG32) plus the
// distribution samplers used by the simulation. Implemented by hand so the
// draw sequence for a given (seed, stream) is identical on every platform;
// the std:: distributions are implementation-defined and would not be.

#include <cstdint>
#include <cmath>
#include <stdexcept>

namespace atomflux {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

class SeededRng {
public:
    SeededRng() : SeededRng(0, 0) {}

    SeededRng(std::uint64_t seed, std::uint64_t stream_id)
        : seed_(seed), stream_(stream_id) {
        state_ = 0;
        inc_ = (stream_id << 1u) | 1u;
        next_u32();
        state_ += splitmix64(seed);
        next_u32();
    }

    std::uint64_t seed() const { return seed_; }
    std::uint64_t stream() const { return stream_; }

    // Child stream reproducible from (seed, stream, salt) alone.
    SeededRng sub(std::uint64_t salt) const {
        return SeededRng(seed_, splitmix64(stream_ ^ splitmix64(salt)));
    }

    std::uint32_t next_u32() {
        std::uint64_t old = state_;
        state_ = old * 6364136223846793005ULL + inc_;
        std::uint32_t xorshifted =
            static_cast<std::uint32_t>(((old >> 18u) ^ old) >> 27u);
        std::uint32_t rot = static_cast<std::uint32_t>(old >> 59u);
        return (xorshifted >> rot) | (xorshifted << ((32u - rot) & 31u));
    }

    // [0, 1)
    double uniform() { return next_u32() * 0x1p-32; }

    // (0, 1), safe for logs
    double uniform_pos() { return (next_u32() + 0.5) * 0x1p-32; }

    bool bernoulli(double p) {
        if (p < 0.0 || p > 1.0)
            throw std::invalid_argument("bernoulli: p outside [0, 1]");
        return uniform() < p;
    }

    // Exact Poisson (Knuth product method, chunked so exp() never underflows).
    long long poisson(double mu) {
        if (!(mu >= 0.0))
            throw std::invalid_argument("poisson: mu must be >= 0");
        long long total = 0;
        while (mu > 30.0) {
            total += poisson_knuth(30.0);
            mu -= 30.0;
        }
        return total + poisson_knuth(mu);
    }

    double normal() {
        double u1 = uniform_pos();
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) *
               std::cos(6.283185307179586476925286766559 * u2);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

private:
    long long poisson_knuth(double mu) {
        double limit = std::exp(-mu);
        long long k = 0;
        double prod = uniform_pos();
        while (prod > limit) {
            ++k;
            prod *= uniform_pos();
        }
        return k;
    }

    std::uint64_t state_ = 0;
    std::uint64_t inc_ = 1;
    std::uint64_t seed_ = 0;
    std::uint64_t stream_ = 0;
};

// Module stream ids; every (trial, module) pair gets its own stream so module
// draw order never couples across modules or trials.
enum class RngModule : std::uint64_t {
    core = 1,
    reservoir = 2,
    prep = 3,
    rearrange = 4,
    storage = 5,
    coherence = 6,
    experiment = 7,
};

inline SeededRng rng_for(std::uint64_t seed, std::uint64_t trial, RngModule m) {
    std::uint64_t s =
        splitmix64(trial * 0x9e3779b97f4a7c15ULL ^ static_cast<std::uint64_t>(m));
    return SeededRng(seed, s);
}

} // namespace atomflux
