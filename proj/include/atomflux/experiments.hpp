#pragma once

// Experiment drivers for the architecture's headline statistics: delivery
// flux, single-reservoir depletion, array assembly plus continuous
// maintenance, and ensemble coherence scans. Every driver consumes a
// SimulationConfig, draws from seeded per-(trial, module) streams, and
// emits deterministic rows through the optional writers.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "coherence.hpp"
#include "config.hpp"
#include "core.hpp"
#include "event_log.hpp"
#include "feed.hpp"
#include "prep.hpp"
#include "rearrange.hpp"
#include "reservoir.hpp"
#include "rng.hpp"
#include "storage.hpp"
#include "transport.hpp"

namespace atomflux {

inline ReservoirFeed make_feed(const SimulationConfig& cfg, std::int32_t n_reservoirs) {
    ReservoirFeed feed;
    feed.timings = cfg.timings;
    feed.budget = cfg.budget;
    feed.lattice1_atoms = cfg.lattice_atoms;
    feed.lattice1_temperature_uK = cfg.lattice_temperature_uK;
    feed.lattice = cfg.lattice;
    feed.tweezers = cfg.tweezer;
    feed.loading = cfg.loading;
    feed.build(n_reservoirs);
    return feed;
}

inline std::int32_t reservoirs_for(const SimulationConfig& cfg, Micros horizon) {
    Micros period = std::max(cfg.timings.replacement_period,
                             cfg.timings.chain() + cfg.timings.handover);
    return static_cast<std::int32_t>(horizon / period) + 3;
}

// ---------------------------------------------------------------- flux ----

enum class FluxMode : std::uint8_t { atoms, qubits, qubits_rearranged };

inline const char* flux_mode_name(FluxMode m) {
    switch (m) {
    case FluxMode::atoms: return "atoms";
    case FluxMode::qubits: return "qubits";
    case FluxMode::qubits_rearranged: return "qubits_rearranged";
    }
    return "?";
}

struct FluxOptions {
    FluxMode mode = FluxMode::atoms;
    Micros duration = 2'000'000; // measured from the first reservoir arrival
    // The flux benchmark rearranges into five dense columns per row (50
    // targets x 12 rows); the storage refill pattern stays at 540.
    std::int32_t rearrange_targets = 600;
};

struct FluxReport {
    FluxMode mode = FluxMode::atoms;
    std::int64_t cycles = 0;
    std::int64_t delivered = 0;
    Micros first_arrival = 0;
    Micros elapsed = 0; // from the first arrival to the end of the last cycle
    Micros active = 0;  // time spent producing (stalls excluded)
    Micros stalled = 0;
    double active_rate_hz = 0.0;
    double total_rate_hz = 0.0;
    double mean_fill = 0.0;
    double last_mu = 0.0;
};

// Repeated preparation cycles against the continuously replaced reservoir.
// atoms: extraction + parity collapse only, with downstream stages pipelined
// (the clock advances by the extraction slot). qubits: the full serialized
// preparation chain. qubits_rearranged: adds the row-parallel sort.
inline FluxReport run_flux(const SimulationConfig& cfg, const FluxOptions& opt,
                           std::int32_t trial, CsvWriter* csv = nullptr,
                           JsonlWriter* events = nullptr) {
    SimulationConfig local = cfg;
    if (opt.mode == FluxMode::qubits_rearranged)
        local.rearrange.target_sites = opt.rearrange_targets;
    Micros horizon = local.timings.first_arrival() + opt.duration;
    ReservoirFeed feed = make_feed(local, reservoirs_for(local, horizon));
    SeededRng rng = rng_for(local.seed, trial, RngModule::prep);

    FluxReport rep;
    rep.mode = opt.mode;
    rep.first_arrival = feed.first_arrival();
    Micros t = rep.first_arrival;
    const Micros end = t + opt.duration;
    std::int64_t fill_den = 0;
    std::int32_t arrivals_logged = 0;

    while (t < end) {
        Micros ready = feed.ready_time(t);
        if (ready >= end) {
            t = end; // stalled through the end of the window
            break;
        }
        Micros stall = ready - t;
        t = ready;
        feed.advance_to(t);
        if (events && feed.arrivals_seen > arrivals_logged) {
            arrivals_logged = feed.arrivals_seen;
            events->line()
                .field("kind", "arrival")
                .field("t_us", feed.current.arrival_time)
                .field("reservoir", arrivals_logged)
                .commit();
        }

        Micros cycle_len = 0;
        std::int64_t produced = 0;
        std::int32_t occupied = 0;
        if (opt.mode == FluxMode::atoms) {
            ExtractionResult ext =
                sample_extraction(feed.current, local.tweezer, local.loading, rng);
            ParityResult parity =
                parity_project(ext.counts, local.prep.double_residual, rng);
            produced = parity.occupied;
            occupied = parity.occupied;
            rep.last_mu = ext.mu;
            cycle_len = local.prep.extract_transport;
            fill_den += local.tweezer.count;
        } else {
            PrepCycleResult pc = prep_cycle(
                feed.current, local.tweezer, local.loading, local.prep,
                local.rearrange, feed.layout,
                opt.mode == FluxMode::qubits_rearranged,
                /*storage_roi=*/false, t, rng);
            produced = static_cast<std::int64_t>(pc.batch.size());
            occupied = pc.post_parity;
            rep.last_mu = pc.mu;
            cycle_len = pc.elapsed;
            fill_den += opt.mode == FluxMode::qubits_rearranged
                            ? local.rearrange.target_sites
                            : local.tweezer.count;
        }
        ++rep.cycles;
        rep.delivered += produced;
        rep.active += cycle_len;
        if (csv)
            csv->row(rep.cycles, t, stall, rep.last_mu, occupied, produced,
                     rep.delivered);
        if (events)
            events->line()
                .field("kind", "cycle")
                .field("t_us", t)
                .field("stall_us", stall)
                .field("produced", produced)
                .field("cum", rep.delivered)
                .commit();
        t += cycle_len;
    }

    rep.elapsed = t - rep.first_arrival;
    rep.stalled = rep.elapsed - rep.active;
    if (rep.active > 0)
        rep.active_rate_hz =
            static_cast<double>(rep.delivered) / (static_cast<double>(rep.active) * 1e-6);
    if (rep.elapsed > 0)
        rep.total_rate_hz =
            static_cast<double>(rep.delivered) / (static_cast<double>(rep.elapsed) * 1e-6);
    if (fill_den > 0)
        rep.mean_fill = static_cast<double>(rep.delivered) / static_cast<double>(fill_den);
    return rep;
}

inline std::vector<std::string> flux_csv_columns() {
    return {"cycle", "start_us", "stall_us", "mu", "occupied", "produced", "cum"};
}

// ----------------------------------------------------------- depletion ----

struct DepletionOptions {
    std::int32_t extractions = 120;
    std::int32_t initial_window = 5; // extractions averaged into the baseline
    std::int32_t early_window = 30;
};

struct DepletionReport {
    std::vector<double> fill;
    std::vector<double> mu;
    double initial_fill = 0.0; // mean of the first initial_window extractions
    double early_mean = 0.0;   // mean of the first early_window extractions
    std::int32_t crossing = -1; // 1-based first of two consecutive sub-half fills
};

// Hold one reservoir (no replacement) and extract repeatedly; the fill decays
// as the local budget and the reservoir itself deplete.
inline DepletionReport run_depletion(const SimulationConfig& cfg,
                                     const DepletionOptions& opt, std::int32_t trial,
                                     CsvWriter* csv = nullptr) {
    if (opt.extractions < opt.early_window || opt.initial_window < 1)
        throw std::invalid_argument("run_depletion: window exceeds the series");
    ReservoirFeed feed = make_feed(cfg, 1);
    SeededRng rng = rng_for(cfg.seed, trial, RngModule::reservoir);
    Micros t = feed.first_arrival();
    feed.advance_to(t);

    DepletionReport rep;
    for (std::int32_t k = 0; k < opt.extractions; ++k) {
        ExtractionResult ext =
            sample_extraction(feed.current, cfg.tweezer, cfg.loading, rng);
        ParityResult parity = parity_project(ext.counts, cfg.prep.double_residual, rng);
        double fill =
            static_cast<double>(parity.occupied) / static_cast<double>(cfg.tweezer.count);
        rep.fill.push_back(fill);
        rep.mu.push_back(ext.mu);
        std::int64_t raw = 0;
        for (auto c : ext.counts) raw += c;
        if (csv) csv->row(k + 1, t, ext.mu, raw, parity.occupied, fill);
        t += cfg.prep.extract_transport;
    }

    auto mean_first = [&](std::int32_t n) {
        double s = 0.0;
        for (std::int32_t i = 0; i < n; ++i) s += rep.fill[static_cast<std::size_t>(i)];
        return s / static_cast<double>(n);
    };
    rep.initial_fill = mean_first(opt.initial_window);
    rep.early_mean = mean_first(opt.early_window);
    double threshold = rep.initial_fill / 2.0;
    for (std::size_t k = 0; k + 1 < rep.fill.size(); ++k) {
        if (rep.fill[k] < threshold && rep.fill[k + 1] < threshold) {
            rep.crossing = static_cast<std::int32_t>(k) + 1;
            break;
        }
    }
    return rep;
}

inline std::vector<std::string> depletion_csv_columns() {
    return {"extraction", "t_us", "mu", "raw_atoms", "occupied", "fill"};
}

// --------------------------------------------------------- maintenance ----

struct MaintenanceOptions {
    Micros duration = 60'000'000; // continuous phase, after assembly
    RunMode mode = RunMode::atoms;
    bool replenish = true;
    // Lock the reservoir replacement to every other reload cycle so a fresh
    // reservoir is always present when extraction starts.
    bool sync_replacement = true;
    std::int32_t warmup_cycles = 12; // excluded from steady-state statistics
};

struct MaintenanceReport {
    AssembleResult assembly;
    std::int64_t cycles = 0; // continuous phase
    std::int64_t stalled_cycles = 0;
    Micros stalled_us = 0;
    std::int64_t min_population_mid = std::numeric_limits<std::int64_t>::max();
    double steady_population_mean = 0.0;
    std::int64_t steady_samples = 0;
    double mean_refill_fill = 0.0;
    double mean_duty = 0.0;
    // Mean readout contrast of subarrays aged (j + 1) reload cycles.
    std::array<double, 6> contrast_by_age{};
    std::array<std::int64_t, 6> contrast_samples{};
    std::vector<double> pop_times_s; // mid-cycle population series
    std::vector<double> pop_values;
    std::int64_t final_population = 0;
};

// Assembly (six reload cycles into an empty array) followed by a continuous
// phase of further reload cycles, with or without replenishment.
inline MaintenanceReport run_maintenance(const SimulationConfig& cfg,
                                         const MaintenanceOptions& opt,
                                         std::int32_t trial, CsvWriter* csv = nullptr,
                                         JsonlWriter* events = nullptr) {
    SimulationConfig local = cfg;
    if (opt.sync_replacement)
        local.timings.replacement_period = 2 * local.storage.cycle_period;
    Micros horizon = local.timings.first_arrival() +
                     8 * local.storage.cycle_period + opt.duration +
                     2 * local.timings.replacement_period;
    ReservoirFeed feed = make_feed(local, reservoirs_for(local, horizon));

    StorageState st(feed.layout);
    ReloadDeps deps;
    deps.feed = &feed;
    deps.prep = &local.prep;
    deps.rearrange = &local.rearrange;
    deps.storage = &local.storage;
    deps.coherence = &local.coherence;
    deps.shielding = &local.shielding;
    deps.env = local.env;
    deps.dd = local.dd;
    deps.mode = opt.mode;
    deps.replenish = true; // assembly always loads

    SeededRng rng_prep = rng_for(local.seed, trial, RngModule::prep);
    SeededRng rng_storage = rng_for(local.seed, trial, RngModule::storage);
    SeededRng rng_coherence = rng_for(local.seed, trial, RngModule::coherence);

    MaintenanceReport rep;
    Micros t = feed.first_arrival();
    rep.assembly = assemble(st, deps, t, rng_prep, rng_storage, rng_coherence);
    t += rep.assembly.elapsed;
    if (events)
        events->line()
            .field("kind", "assembled")
            .field("t_us", t)
            .field("population", rep.assembly.population)
            .commit();

    deps.replenish = opt.replenish;
    const Micros phase_start = t;
    const Micros end = t + opt.duration;
    double steady_sum = 0.0, fill_sum = 0.0, duty_sum = 0.0;
    std::int64_t fill_n = 0, duty_n = 0;
    std::array<double, 6> contrast_sum{};

    while (t < end) {
        CycleSample s = reload_cycle(st, deps, t, rng_prep, rng_storage, rng_coherence);
        ++rep.cycles;
        if (s.stall > 0) {
            ++rep.stalled_cycles;
            rep.stalled_us += s.stall;
        }
        rep.pop_times_s.push_back(static_cast<double>(s.t_mid - phase_start) * 1e-6);
        rep.pop_values.push_back(static_cast<double>(s.population_mid));

        if (rep.cycles > opt.warmup_cycles) {
            steady_sum += static_cast<double>(s.population_mid);
            ++rep.steady_samples;
            rep.min_population_mid = std::min(rep.min_population_mid, s.population_mid);
            if (s.refilled_subarray >= 0) {
                fill_sum += s.refill_fill;
                ++fill_n;
            }
            if (opt.mode == RunMode::xbasis) {
                duty_sum += s.duty;
                ++duty_n;
            }
            if (opt.mode != RunMode::atoms) {
                for (std::size_t k = 0; k < 6; ++k) {
                    if (std::isnan(s.sub_contrast[k])) continue;
                    auto age_cycles = static_cast<std::int64_t>(
                        (s.sub_age_us[k] + local.storage.cycle_period / 2) /
                        local.storage.cycle_period);
                    if (age_cycles < 1 || age_cycles > 6) continue;
                    contrast_sum[static_cast<std::size_t>(age_cycles - 1)] +=
                        s.sub_contrast[k];
                    ++rep.contrast_samples[static_cast<std::size_t>(age_cycles - 1)];
                }
            }
        }
        if (csv)
            csv->row(s.cycle, s.t_mid, s.population_mid, s.mean_contrast,
                     s.mean_polarization, s.refilled_subarray, s.refill_fill,
                     s.inserted, s.stall, s.duty);
        t = s.t_end;
    }

    if (rep.steady_samples > 0)
        rep.steady_population_mean = steady_sum / static_cast<double>(rep.steady_samples);
    if (fill_n > 0) rep.mean_refill_fill = fill_sum / static_cast<double>(fill_n);
    if (duty_n > 0) rep.mean_duty = duty_sum / static_cast<double>(duty_n);
    for (std::size_t j = 0; j < 6; ++j)
        if (rep.contrast_samples[j] > 0)
            rep.contrast_by_age[j] =
                contrast_sum[j] / static_cast<double>(rep.contrast_samples[j]);
    rep.final_population = st.population();
    return rep;
}

inline std::vector<std::string> maintenance_csv_columns() {
    return {"cycle",      "t_mid_us",    "population_mid", "contrast",
            "polarization", "refilled_sub", "refill_fill",  "inserted",
            "stall_us",   "duty"};
}

// Fit the steady-state contrast-by-age profile to A * exp(-age / T).
inline FitResult fit_contrast_by_age(const MaintenanceReport& rep, Micros cycle_period) {
    std::vector<double> times, values;
    for (std::size_t j = 0; j < 6; ++j) {
        if (rep.contrast_samples[j] == 0) continue;
        times.push_back(static_cast<double>(j + 1) *
                        static_cast<double>(cycle_period) * 1e-6);
        values.push_back(rep.contrast_by_age[j]);
    }
    return fit_1e_time(times, values);
}

// ----------------------------------------------------- coherence scans ----

// Named stray-light conditions for coherence scans.
inline EnvFlags condition_flags(const std::string& name) {
    if (name == "reference") return EnvFlags{};
    if (name == "mot") return EnvFlags{.mot_on = true};
    if (name == "imaging") return EnvFlags{.prep_imaging_on = true};
    if (name == "imaging_shielded")
        return EnvFlags{.prep_imaging_on = true, .shielding_on = true};
    if (name == "storage")
        return EnvFlags{.prep_imaging_on = true, .lattice_present = true,
                        .shielding_on = true};
    throw ConfigError("unknown coherence condition: " + name);
}

enum class ScanKind : std::uint8_t { t2, t1 };

struct CoherenceScanOptions {
    ScanKind kind = ScanKind::t2;
    std::string condition = "storage";
    std::int32_t ensemble = 32400;
    std::int32_t points = 8;
    double pulse_fidelity = 1.0;
    bool include_loss = true;
    std::vector<double> times_s; // empty: auto-spaced on the expected decay
};

struct CoherenceScanReport {
    std::vector<double> times_s;
    std::vector<double> values; // contrast (t2) or -contrast (t1, prepared |1>)
    double pmf0 = 0.0;
    ActiveRates rates;
    double expected_tau_s = 0.0;
    FitResult fit;
};

// Ensemble hold-time scan. T2: pi/2 wrapper, free decay, -pi/2 wrapper, so
// the surviving transverse component maps back to the z readout. T1: qubits
// prepared in |1| relax toward the depolarized state; the contrast is
// negative, so the fit runs on its negation.
inline CoherenceScanReport run_coherence_scan(const SimulationConfig& cfg,
                                              const CoherenceScanOptions& opt,
                                              std::int32_t trial,
                                              CsvWriter* csv = nullptr) {
    if (opt.ensemble < 1 || opt.points < 3)
        throw std::invalid_argument("run_coherence_scan: need atoms and >= 3 points");
    EnvFlags flags = condition_flags(opt.condition);
    CoherenceScanReport rep;
    rep.rates = active_rates(cfg.coherence, cfg.shielding, flags);
    double rate = opt.kind == ScanKind::t2 ? rep.rates.t2_rate : rep.rates.t1_rate_q1;
    if (!(rate > 0.0))
        throw std::invalid_argument("run_coherence_scan: condition has no decay");
    rep.expected_tau_s = 1.0 / rate;

    rep.times_s = opt.times_s;
    if (rep.times_s.empty()) {
        for (std::int32_t i = 0; i < opt.points; ++i)
            rep.times_s.push_back(rep.expected_tau_s *
                                  (0.25 + 1.75 * static_cast<double>(i) /
                                              static_cast<double>(opt.points - 1)));
    }

    SeededRng rng = rng_for(cfg.seed, trial, RngModule::experiment);
    std::vector<AtomRecord> base(static_cast<std::size_t>(opt.ensemble));
    if (opt.kind == ScanKind::t1)
        for (auto& a : base) {
            a.internal = InternalState::q1;
            a.bloch_z = -1.0;
        }
    mf_leak(base, cfg.coherence.mf_leak_rate, rng);
    rep.pmf0 = measure(base, rng).pmf;

    for (double t_s : rep.times_s) {
        std::vector<AtomRecord> copy = base;
        auto dt = static_cast<Micros>(std::llround(t_s * 1e6));
        if (opt.kind == ScanKind::t2)
            for (auto& a : copy)
                apply_pulse(a, PulseKind::half_pi, 0.0, opt.pulse_fidelity, rng);
        if (opt.include_loss)
            survive_exponential(copy, dt, cfg.storage.tweezer_lifetime_s, rng);
        for (auto& a : copy) decay(a, dt, rep.rates);
        if (opt.kind == ScanKind::t2)
            for (auto& a : copy)
                apply_pulse(a, PulseKind::minus_half_pi, 0.0, opt.pulse_fidelity, rng);
        ReadoutCounts counts = measure(copy, rng);
        double c = contrast(counts, rep.pmf0);
        double value = opt.kind == ScanKind::t2 ? c : -c;
        rep.values.push_back(value);
        if (csv) csv->row(t_s, counts.pa, counts.p0, counts.p1, value);
    }
    rep.fit = fit_1e_time(rep.times_s, rep.values);
    return rep;
}

inline std::vector<std::string> coherence_csv_columns() {
    return {"t_s", "pa", "p0", "p1", "value"};
}

// -------------------------------------------------------------- sizing ----

// Refill rate needed to hold a register of n_physical atoms losing
// loss_per_layer of them every layer_time_s.
inline double replenishment_requirement(double n_physical, double loss_per_layer,
                                        double layer_time_s) {
    if (!(layer_time_s > 0.0))
        throw std::invalid_argument("replenishment_requirement: layer time <= 0");
    if (loss_per_layer < 0.0 || loss_per_layer > 1.0)
        throw std::invalid_argument("replenishment_requirement: loss outside [0, 1]");
    return n_physical * loss_per_layer / layer_time_s;
}

} // namespace atomflux
