#pragma once

// Dual-conveyor delivery pipeline: frequency-detuned moving-lattice velocity,
// kinematic minimum leg times, and the arrival/gap timeline that every
// continuous run is driven by. A new MOT loads directly after each handover,
// so the pipeline sustains one reservoir arrival per replacement period.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <vector>

#include "sim_clock.hpp"

namespace atomflux {

struct ConveyorProfile {
    double lambda_nm = 795.0;
    double a_max = 4000.0; // m/s^2
    double v_max = 10.0;   // m/s
};

struct StageTimings {
    Micros mot_load = 80_ms;
    Micros compression = 7_ms;
    Micros lgm = 11_ms; // gray-molasses cooling before launch
    Micros l1 = 50_ms;
    Micros handover = 1_ms;
    Micros l2 = 21_ms;
    Micros replacement_period = 150_ms;

    Micros chain() const { return mot_load + compression + lgm + l1; }
    Micros first_arrival() const { return chain() + handover + l2; }
};

struct TransferBudget {
    double efficiency = 0.60;     // atom fraction surviving lattice-to-lattice transfer
    double heating_factor = 6.0;  // temperature multiplier across the transfer
};

// Counter-propagating-beam detuning moves the standing wave at lambda*dnu/2.
inline double conveyor_velocity(const ConveyorProfile& p, double delta_nu_hz) {
    return p.lambda_nm * 1e-9 * delta_nu_hz / 2.0;
}

// Minimum time over a leg under symmetric accel/decel caps: trapezoidal
// profile when the distance allows reaching v_max, triangular otherwise.
inline double min_transport_time_s(double distance_m, const ConveyorProfile& p) {
    if (!(distance_m >= 0.0))
        throw std::invalid_argument("min_transport_time: distance must be >= 0");
    if (!(p.a_max > 0.0) || !(p.v_max > 0.0))
        throw std::invalid_argument("min_transport_time: a_max and v_max must be > 0");
    if (distance_m >= p.v_max * p.v_max / p.a_max)
        return distance_m / p.v_max + p.v_max / p.a_max;
    return 2.0 * std::sqrt(distance_m / p.a_max);
}

struct ReservoirSchedule {
    std::int32_t id = 0;     // 1-based
    Micros mot_start = 0;
    Micros handover_start = 0;
    Micros arrival = 0;
    Micros gap_start = 0;    // no-reservoir window [gap_start, arrival); zero-length for id 1
    Micros depart = 0;       // this reservoir is discarded here (next gap start)
};

struct PipelineTimeline {
    std::vector<ReservoirSchedule> reservoirs;
    Micros period = 0;

    bool present_at(Micros t) const {
        for (const auto& r : reservoirs)
            if (t >= r.arrival && t < r.depart) return true;
        return false;
    }
};

// Arrival k happens at first_arrival + (k-1)*period. The period cannot be
// shorter than the back-to-back stage chain (MOT reload starts at the
// previous handover), so short configured periods are clamped up.
inline PipelineTimeline pipeline_timeline(const StageTimings& t, std::int32_t n) {
    if (n < 1) throw std::invalid_argument("pipeline_timeline: need n >= 1");
    if (t.replacement_period < t.l2 + t.handover)
        throw std::invalid_argument(
            "pipeline_timeline: replacement period shorter than handover + final leg");
    PipelineTimeline out;
    // natural period: arrival(k) - arrival(k-1) when mot_start(k) = handover_end(k-1)
    out.period = std::max(t.replacement_period, t.chain() + t.handover);
    out.reservoirs.reserve(static_cast<std::size_t>(n));
    for (std::int32_t k = 1; k <= n; ++k) {
        ReservoirSchedule r;
        r.id = k;
        r.arrival = t.first_arrival() + static_cast<Micros>(k - 1) * out.period;
        r.handover_start = r.arrival - t.l2 - t.handover;
        r.mot_start = (k == 1) ? 0 : r.handover_start - t.chain();
        r.gap_start = (k == 1) ? r.arrival : r.arrival - t.l2;
        out.reservoirs.push_back(r);
    }
    for (std::size_t i = 0; i < out.reservoirs.size(); ++i)
        out.reservoirs[i].depart = (i + 1 < out.reservoirs.size())
                                       ? out.reservoirs[i + 1].gap_start
                                       : std::numeric_limits<Micros>::max();
    return out;
}

inline double delivered_atoms(double lattice1_atoms, const TransferBudget& b) {
    return lattice1_atoms * b.efficiency;
}

inline double delivered_temperature_uK(double lattice1_temperature_uK,
                                       const TransferBudget& b) {
    return lattice1_temperature_uK * b.heating_factor;
}

} // namespace atomflux
