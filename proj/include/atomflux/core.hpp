#pragma once

// Shared domain types: atom records with Bloch-vector bookkeeping, the
// three-zone site layout, and background loss. All times are integer
// microseconds; physical constants are SI.

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "rng.hpp"
#include "sim_clock.hpp"

namespace atomflux {

namespace constants {
constexpr double k_boltzmann = 1.380649e-23; // J/K
constexpr double rb87_mass = 1.4431606e-25;  // kg
constexpr double gravity = 9.80665;          // m/s^2
constexpr double pi = 3.14159265358979323846;
} // namespace constants

inline double uK_to_J(double microkelvin) {
    return constants::k_boltzmann * microkelvin * 1e-6;
}

enum class Zone : std::uint8_t { reservoir, prep, storage };

enum class InternalState : std::uint8_t {
    q0,          // clock |0>
    q1,          // clock |1>
    mf_leaked,   // outside the clock subspace, still trapped and imageable
    unpolarized, // pumping failed; maximally mixed in the clock subspace
    lost,
};

struct SiteIndex {
    Zone zone = Zone::prep;
    std::int32_t row = 0;
    std::int32_t col = 0;
};

// Bloch components are stored as the full 3-vector; bloch_xy() is the
// transverse magnitude. Invariant: x^2 + y^2 + z^2 <= 1 after every pulse or
// decay composition.
struct AtomRecord {
    InternalState internal = InternalState::q0;
    double bloch_x = 0.0;
    double bloch_y = 0.0;
    double bloch_z = 1.0;
    Micros birth_time = 0;
    SiteIndex site;

    double bloch_xy() const { return std::hypot(bloch_x, bloch_y); }
    double bloch_norm() const {
        return std::sqrt(bloch_x * bloch_x + bloch_y * bloch_y + bloch_z * bloch_z);
    }
    bool present() const { return internal != InternalState::lost; }
    bool in_clock_subspace() const {
        return internal == InternalState::q0 || internal == InternalState::q1;
    }
};

// Fixed geometry of the three zones. Storage interleaves six 45x12 subarrays
// on the (row % 3, col % 2) residue classes of the 36x90 grid.
struct ZoneLayout {
    std::int32_t prep_rows = 12;
    std::int32_t prep_cols = 120;
    double prep_spacing_um = 4.5;

    std::int32_t storage_rows = 36;
    std::int32_t storage_cols = 90;
    double storage_row_spacing_um = 9.0;

    std::int32_t subarrays = 6;

    std::int32_t prep_sites() const { return prep_rows * prep_cols; }
    std::int32_t storage_sites() const { return storage_rows * storage_cols; }
    std::int32_t subarray_sites() const { return storage_sites() / subarrays; }

    std::int32_t subarray_of(std::int32_t row, std::int32_t col) const {
        return (row % 3) * 2 + (col % 2);
    }

    std::vector<SiteIndex> subarray_sites_list(std::int32_t k) const {
        if (k < 0 || k >= subarrays)
            throw std::invalid_argument("subarray index outside [0, 6)");
        std::vector<SiteIndex> out;
        out.reserve(static_cast<std::size_t>(subarray_sites()));
        for (std::int32_t r = 0; r < storage_rows; ++r)
            for (std::int32_t c = 0; c < storage_cols; ++c)
                if (subarray_of(r, c) == k)
                    out.push_back(SiteIndex{Zone::storage, r, c});
        return out;
    }
};

// Marks each present atom lost with probability 1 - exp(-dt/lifetime).
// Returns the number of atoms lost.
inline std::size_t survive_exponential(std::vector<AtomRecord>& atoms, Micros dt,
                                       double lifetime_s, SeededRng& rng) {
    if (dt < 0) throw std::invalid_argument("survive_exponential: dt < 0");
    if (!(lifetime_s > 0.0))
        throw std::invalid_argument("survive_exponential: lifetime must be > 0");
    double p_survive = std::exp(-(static_cast<double>(dt) * 1e-6) / lifetime_s);
    std::size_t lost = 0;
    for (auto& a : atoms) {
        if (!a.present()) continue;
        if (!rng.bernoulli(p_survive)) {
            a.internal = InternalState::lost;
            ++lost;
        }
    }
    return lost;
}

} // namespace atomflux
