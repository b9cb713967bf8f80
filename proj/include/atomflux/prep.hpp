#pragma once

// Qubit preparation in the AOD/SLM tweezer zone: parity projection by
// light-assisted collisions, site-resolved imaging, optical pumping into the
// clock state, release-and-recapture thermometry, and the full cycle
// sequencer. Elapsed cycle time is exactly the sum of the configured stage
// durations (integer microseconds).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "core.hpp"
#include "rearrange.hpp"
#include "reservoir.hpp"
#include "rng.hpp"

namespace atomflux {

struct PrepConfig {
    Micros extract_transport = 2500; // switch on in the lattice, pull out, move over
    Micros parity = 10_ms;
    Micros handover_pushout = 500;   // AOD->SLM handover incl. 30 us pushout
    Micros image = 10_ms;
    Micros pump = 50;

    double double_residual = 0.01;   // P(a multi-occupied site keeps 2 atoms)
    double fidelity_site = 0.9999;   // per-site occupancy discrimination
    double fidelity_avg = 0.9993;    // array average, reported only
    double imaging_survival = 0.995;
    bool lattice_parking = true;     // park the reservoir 1 cm away while imaging
    bool pushout_enabled = true;     // clear the Talbot-plane atoms before imaging
    double parking_penalty = 0.05;   // extra imaging loss when parking is off
    double pushout_penalty = 0.05;   // extra imaging loss when pushout is off
    double eit_temperature_uK = 12.0;
    double pump_tau_us = 5.0;        // 1/e pumping time
    double spam_fidelity = 0.981;    // caps the pumped |0> fraction
    double b_field_G = 4.2;          // reported only

    Micros base_elapsed() const {
        return extract_transport + parity + handover_pushout + image + pump;
    }
};

// SLM trap for release-and-recapture: Gaussian beam, harmonic near the focus.
struct TrapModel {
    double depth_uK = 370.0;
    double waist_nm = 800.0;
    double lambda_nm = 852.0;

    double waist_m() const { return waist_nm * 1e-9; }
    double rayleigh_m() const {
        return constants::pi * waist_m() * waist_m() / (lambda_nm * 1e-9);
    }
    double omega_radial() const {
        return std::sqrt(4.0 * uK_to_J(depth_uK) /
                         (constants::rb87_mass * waist_m() * waist_m()));
    }
    double omega_axial() const {
        return std::sqrt(2.0 * uK_to_J(depth_uK) /
                         (constants::rb87_mass * rayleigh_m() * rayleigh_m()));
    }
    // Potential relative to the trap bottom; depth is the escape energy.
    double potential_J(double x_m, double y_m, double z_m) const {
        double zr = rayleigh_m();
        double expand = 1.0 + (z_m / zr) * (z_m / zr);
        double w2 = waist_m() * waist_m() * expand;
        double u0 = uK_to_J(depth_uK);
        return u0 * (1.0 - std::exp(-2.0 * (x_m * x_m + y_m * y_m) / w2) / expand);
    }
};

struct ParityResult {
    std::vector<std::uint8_t> occupancy; // 0 or 1; doubles collapse to 1
    std::vector<std::uint8_t> doubles;   // flagged residual pairs
    std::int32_t occupied = 0;
    std::int32_t double_count = 0;
};

// Light-assisted collisions eject atoms pairwise: odd counts leave one atom,
// even counts leave zero, except a double_residual fraction of multi-occupied
// sites that keep a pair.
inline ParityResult parity_project(const std::vector<std::int32_t>& counts,
                                   double double_residual, SeededRng& rng) {
    if (double_residual < 0.0 || double_residual > 1.0)
        throw std::invalid_argument("parity_project: double_residual outside [0, 1]");
    ParityResult out;
    out.occupancy.resize(counts.size(), 0);
    out.doubles.resize(counts.size(), 0);
    for (std::size_t i = 0; i < counts.size(); ++i) {
        std::int32_t c = counts[i];
        if (c < 0) throw std::invalid_argument("parity_project: negative count");
        if (c >= 2 && rng.bernoulli(double_residual)) {
            out.occupancy[i] = 1;
            out.doubles[i] = 1;
            ++out.occupied;
            ++out.double_count;
        } else if (c % 2 == 1) {
            out.occupancy[i] = 1;
            ++out.occupied;
        }
    }
    return out;
}

struct ImageResult {
    std::vector<std::uint8_t> detections;     // classifier output per site
    std::vector<std::uint8_t> post_occupancy; // who is still trapped afterwards
    std::int32_t detected = 0;
    std::int32_t imaging_losses = 0;
};

inline double effective_imaging_survival(const PrepConfig& cfg) {
    double s = cfg.imaging_survival;
    if (!cfg.lattice_parking) s *= 1.0 - cfg.parking_penalty;
    if (!cfg.pushout_enabled) s *= 1.0 - cfg.pushout_penalty;
    return s;
}

// Detection reflects the during-exposure state; survival is drawn separately,
// so the handful of atoms lost mid-image can still be classified bright.
inline ImageResult image(const std::vector<std::uint8_t>& occupancy,
                         const PrepConfig& cfg, SeededRng& rng) {
    ImageResult out;
    out.detections.resize(occupancy.size(), 0);
    out.post_occupancy.resize(occupancy.size(), 0);
    const double survival = effective_imaging_survival(cfg);
    for (std::size_t i = 0; i < occupancy.size(); ++i) {
        bool occ = occupancy[i] != 0;
        bool correct = rng.bernoulli(cfg.fidelity_site);
        bool det = occ ? correct : !correct;
        if (det) {
            out.detections[i] = 1;
            ++out.detected;
        }
        if (occ) {
            if (rng.bernoulli(survival)) out.post_occupancy[i] = 1;
            else ++out.imaging_losses;
        }
    }
    return out;
}

// Optical pumping into |0>: exponential approach with time constant
// pump_tau_us, capped by the SPAM fidelity. Failures stay trapped but
// unpolarized.
inline void initialize_qubits(std::vector<AtomRecord>& batch, const PrepConfig& cfg,
                              SeededRng& rng) {
    double p_pumped = 1.0 - std::exp(-static_cast<double>(cfg.pump) / cfg.pump_tau_us);
    double p_q0 = std::min(cfg.spam_fidelity, p_pumped);
    for (auto& a : batch) {
        if (!a.present()) continue;
        if (rng.bernoulli(p_q0)) {
            a.internal = InternalState::q0;
            a.bloch_x = 0.0;
            a.bloch_y = 0.0;
            a.bloch_z = 1.0;
        } else {
            a.internal = InternalState::unpolarized;
            a.bloch_x = a.bloch_y = a.bloch_z = 0.0;
        }
    }
}

// Release-and-recapture Monte Carlo: Boltzmann samples in the harmonic
// approximation, ballistic flight with gravity along the optical axis, then
// recapture iff the total energy in the restored trap is below the depth.
inline std::vector<double> drop_recapture(const TrapModel& trap, double temperature_uK,
                                          const std::vector<double>& release_times_us,
                                          std::int32_t samples, SeededRng& rng) {
    if (samples < 1) throw std::invalid_argument("drop_recapture: samples must be >= 1");
    const double kt = uK_to_J(temperature_uK);
    const double m = constants::rb87_mass;
    const double sv = std::sqrt(kt / m);
    const double sx = sv / trap.omega_radial();
    const double sz = sv / trap.omega_axial();
    const double u0 = uK_to_J(trap.depth_uK);
    std::vector<double> survival(release_times_us.size(), 0.0);
    for (std::int32_t s = 0; s < samples; ++s) {
        double x = rng.normal(0.0, sx), y = rng.normal(0.0, sx), z = rng.normal(0.0, sz);
        double vx = rng.normal(0.0, sv), vy = rng.normal(0.0, sv), vz = rng.normal(0.0, sv);
        for (std::size_t i = 0; i < release_times_us.size(); ++i) {
            double t = release_times_us[i] * 1e-6;
            double zt = z + vz * t - 0.5 * constants::gravity * t * t;
            double vzt = vz - constants::gravity * t;
            double e = 0.5 * m * (vx * vx + vy * vy + vzt * vzt) +
                       trap.potential_J(x + vx * t, y + vy * t, zt);
            if (e < u0) survival[i] += 1.0;
        }
    }
    for (auto& v : survival) v /= samples;
    return survival;
}

// Thermometry inverse: grid search + parabolic refinement of the squared
// curve distance against drop_recapture run at candidate temperatures.
inline double fit_drop_temperature(const TrapModel& trap,
                                   const std::vector<double>& release_times_us,
                                   const std::vector<double>& measured,
                                   double t_min_uK, double t_max_uK, std::int32_t steps,
                                   std::int32_t samples, SeededRng& rng) {
    if (steps < 3) throw std::invalid_argument("fit_drop_temperature: steps must be >= 3");
    std::vector<double> grid(static_cast<std::size_t>(steps));
    std::vector<double> cost(static_cast<std::size_t>(steps));
    for (std::int32_t i = 0; i < steps; ++i) {
        double t = t_min_uK + (t_max_uK - t_min_uK) * i / (steps - 1);
        grid[static_cast<std::size_t>(i)] = t;
        SeededRng local = rng.sub(static_cast<std::uint64_t>(i) + 1);
        auto curve = drop_recapture(trap, t, release_times_us, samples, local);
        double c = 0.0;
        for (std::size_t k = 0; k < measured.size(); ++k) {
            double d = curve[k] - measured[k];
            c += d * d;
        }
        cost[static_cast<std::size_t>(i)] = c;
    }
    std::size_t best = static_cast<std::size_t>(
        std::min_element(cost.begin(), cost.end()) - cost.begin());
    if (best == 0 || best + 1 == cost.size()) return grid[best];
    double c0 = cost[best - 1], c1 = cost[best], c2 = cost[best + 1];
    double denom = c0 - 2.0 * c1 + c2;
    if (denom <= 0.0) return grid[best];
    double h = grid[1] - grid[0];
    return grid[best] + 0.5 * h * (c0 - c2) / denom;
}

struct PrepCycleResult {
    std::vector<AtomRecord> batch;
    Micros elapsed = 0;
    double mu = 0.0;
    std::int64_t atoms_extracted = 0;  // raw, pre-parity
    std::int32_t post_parity = 0;      // occupied sites after collisions
    std::int32_t residual_doubles = 0;
    std::int32_t detected = 0;
    std::int32_t rearrange_defects = 0;
    double temperature_uK = 12.0;
    PlanStatus plan_status = PlanStatus::ok;
};

// One full preparation cycle against the current reservoir. With
// rearrangement, the batch is the set of filled target sites; without, every
// surviving imaged atom is pumped and counted.
inline PrepCycleResult prep_cycle(ReservoirState& res, const TweezerGeometry& twz,
                                  const LoadingModel& model, const PrepConfig& cfg,
                                  const RearrangeConfig& rcfg, const ZoneLayout& layout,
                                  bool with_rearrangement, bool storage_roi,
                                  Micros cycle_start, SeededRng& rng) {
    PrepCycleResult out;
    out.temperature_uK = cfg.eit_temperature_uK;
    out.elapsed = cfg.base_elapsed();

    ExtractionResult ext = sample_extraction(res, twz, model, rng);
    out.mu = ext.mu;
    for (auto c : ext.counts) out.atoms_extracted += c;

    ParityResult parity = parity_project(ext.counts, cfg.double_residual, rng);
    out.post_parity = parity.occupied;
    out.residual_doubles = parity.double_count;

    ImageResult img = image(parity.occupancy, cfg, rng);
    out.detected = img.detected;

    if (with_rearrangement) {
        std::vector<std::vector<std::int32_t>> detections(
            static_cast<std::size_t>(layout.prep_rows));
        // The planner sees the image, not the truth: atoms lost during or
        // after the exposure stay in the plan and surface as move failures,
        // which is what the net move_survival models. Applying the imaging
        // survival again here would double-count that loss.
        for (std::int32_t r = 0; r < layout.prep_rows; ++r)
            for (std::int32_t c = 0; c < layout.prep_cols; ++c) {
                std::size_t idx = static_cast<std::size_t>(r * layout.prep_cols + c);
                if (img.detections[idx])
                    detections[static_cast<std::size_t>(r)].push_back(c);
            }
        std::int32_t per_row = rcfg.target_sites / layout.prep_rows;
        auto targets = target_columns(layout.prep_cols, per_row);
        ArrayPlan plan = plan_array(detections, targets, rcfg, layout, storage_roi);
        out.plan_status = plan.status;
        out.elapsed += plan.total_time;
        ExecuteResult exec = execute_plan(plan, rcfg.move_survival, rng);
        out.rearrange_defects = exec.defects;
        out.batch.reserve(exec.filled.size());
        for (const auto& site : exec.filled) {
            AtomRecord a;
            a.birth_time = cycle_start;
            a.site = site;
            out.batch.push_back(a);
        }
    } else {
        for (std::int32_t r = 0; r < layout.prep_rows; ++r)
            for (std::int32_t c = 0; c < layout.prep_cols; ++c) {
                std::size_t idx = static_cast<std::size_t>(r * layout.prep_cols + c);
                if (!img.post_occupancy[idx]) continue;
                AtomRecord a;
                a.birth_time = cycle_start;
                a.site = SiteIndex{Zone::prep, r, c};
                out.batch.push_back(a);
            }
    }

    initialize_qubits(out.batch, cfg, rng);
    return out;
}

} // namespace atomflux
