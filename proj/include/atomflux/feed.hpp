#pragma once

// Glue between the delivery pipeline and the consuming zones: materializes a
// fresh reservoir at each scheduled arrival and exposes presence/stall
// queries. Arrivals happen on the precomputed timeline whether or not anyone
// extracts; an arrival discards whatever is left of the previous reservoir.

#include <cstdint>
#include <stdexcept>

#include "reservoir.hpp"
#include "transport.hpp"

namespace atomflux {

struct ReservoirFeed {
    StageTimings timings;
    TransferBudget budget;
    double lattice1_atoms = 4.17e6;
    double lattice1_temperature_uK = 20.0;
    LatticeGeometry lattice;
    TweezerGeometry tweezers;
    LoadingModel loading;
    ZoneLayout layout;

    PipelineTimeline timeline;
    ReservoirState current;
    std::size_t next_arrival_idx = 0;
    std::int32_t arrivals_seen = 0;

    void build(std::int32_t n_reservoirs) {
        timeline = pipeline_timeline(timings, n_reservoirs);
        next_arrival_idx = 0;
        arrivals_seen = 0;
        current = ReservoirState{};
    }

    Micros first_arrival() const {
        if (timeline.reservoirs.empty())
            throw std::logic_error("ReservoirFeed: build() not called");
        return timeline.reservoirs.front().arrival;
    }

    // Earliest time >= t at which extraction is possible.
    Micros ready_time(Micros t) const {
        for (const auto& r : timeline.reservoirs) {
            if (t < r.arrival) return r.arrival;
            if (t < r.depart) return t;
        }
        throw std::runtime_error("ReservoirFeed: timeline exhausted");
    }

    // Process arrivals/departures up to and including time t.
    void advance_to(Micros t) {
        while (next_arrival_idx < timeline.reservoirs.size() &&
               timeline.reservoirs[next_arrival_idx].arrival <= t) {
            const auto& sched = timeline.reservoirs[next_arrival_idx];
            current = make_reservoir(delivered_atoms(lattice1_atoms, budget),
                                     delivered_temperature_uK(lattice1_temperature_uK, budget),
                                     lattice, tweezers, loading, layout, sched.arrival);
            ++next_arrival_idx;
            ++arrivals_seen;
        }
        if (arrivals_seen > 0) {
            const auto& sched = timeline.reservoirs[static_cast<std::size_t>(arrivals_seen - 1)];
            current.present = t < sched.depart;
        }
    }

    bool present_at(Micros t) const { return timeline.present_at(t); }
};

} // namespace atomflux
