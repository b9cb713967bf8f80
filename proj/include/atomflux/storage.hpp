#pragma once

// Storage-zone scheduler: six interleaved 45x12 subarrays refreshed cyclically
// from the preparation zone. Each reload cycle ejects the oldest subarray and
// refills it from a freshly rearranged batch while the other five decay under
// the tweezer-limited lifetime and, in qubit modes, the coherence model.

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <vector>

#include "coherence.hpp"
#include "core.hpp"
#include "feed.hpp"
#include "prep.hpp"
#include "rng.hpp"

namespace atomflux {

struct StorageConfig {
    Micros cycle_period = 80_ms;
    Micros eject = 5_ms;            // overlapped with the next prep image
    double transfer_survival = 0.989;
    bool sync_transfer = true;      // chop transfer light synchronous to the AOD hop
    double sync_penalty = 0.02;     // extra transfer loss when sync is off
    double tweezer_lifetime_s = 60.0;
};

enum class RunMode : std::uint8_t { atoms, zbasis, xbasis };

struct StorageState {
    ZoneLayout layout;
    std::vector<std::optional<AtomRecord>> slots;
    std::array<Micros, 6> last_refill{};
    std::array<double, 6> pmf0{}; // leak fraction of each subarray at its refill
    std::int64_t cycle_index = 0;

    explicit StorageState(const ZoneLayout& l = ZoneLayout{})
        : layout(l), slots(static_cast<std::size_t>(l.storage_sites())) {}

    std::size_t slot_of(const SiteIndex& s) const {
        return static_cast<std::size_t>(s.row * layout.storage_cols + s.col);
    }

    std::int64_t population() const {
        std::int64_t n = 0;
        for (const auto& s : slots)
            if (s && s->present()) ++n;
        return n;
    }

    std::vector<AtomRecord*> subarray_atoms(std::int32_t k) {
        std::vector<AtomRecord*> out;
        for (std::int32_t r = 0; r < layout.storage_rows; ++r)
            for (std::int32_t c = 0; c < layout.storage_cols; ++c)
                if (layout.subarray_of(r, c) == k) {
                    auto& s = slots[static_cast<std::size_t>(r * layout.storage_cols + c)];
                    if (s && s->present()) out.push_back(&*s);
                }
        return out;
    }
};

// Background loss over dt for every stored atom.
inline std::int64_t storage_survival(StorageState& st, Micros dt, double lifetime_s,
                                     SeededRng& rng) {
    double p = std::exp(-(static_cast<double>(dt) * 1e-6) / lifetime_s);
    std::int64_t lost = 0;
    for (auto& s : st.slots) {
        if (!s || !s->present()) continue;
        if (!rng.bernoulli(p)) {
            s->internal = InternalState::lost;
            ++lost;
        }
    }
    return lost;
}

struct TransferStats {
    std::int32_t ejected = 0;
    std::int32_t inserted = 0;
    std::int32_t transfer_losses = 0;
    std::int32_t leaked = 0;
    double refill_fill = 0.0;
};

// Eject subarray k (accelerated out of the field of view), then land the
// batch on its sites in order. Each atom survives the AOD-to-SLM hop with
// transfer_survival and may leak out of the clock subspace on the way.
inline TransferStats eject_and_refill(StorageState& st, std::int32_t k,
                                      std::vector<AtomRecord> batch,
                                      const StorageConfig& cfg,
                                      const CoherenceConfig& coh, Micros now,
                                      SeededRng& rng) {
    TransferStats stats;
    auto sites = st.layout.subarray_sites_list(k);
    for (const auto& site : sites) {
        auto& slot = st.slots[st.slot_of(site)];
        if (slot && slot->present()) ++stats.ejected;
        slot.reset();
    }
    double p = cfg.transfer_survival * (cfg.sync_transfer ? 1.0 : 1.0 - cfg.sync_penalty);
    std::size_t site_idx = 0;
    for (auto& atom : batch) {
        if (site_idx >= sites.size()) break;
        if (!atom.present()) continue;
        if (!rng.bernoulli(p)) {
            ++stats.transfer_losses;
            ++site_idx; // its destination site stays empty
            continue;
        }
        if (atom.in_clock_subspace() && rng.bernoulli(coh.mf_leak_rate)) {
            atom.internal = InternalState::mf_leaked;
            atom.bloch_x = atom.bloch_y = atom.bloch_z = 0.0;
            ++stats.leaked;
        }
        atom.site = sites[site_idx];
        st.slots[st.slot_of(sites[site_idx])] = atom;
        ++site_idx;
        ++stats.inserted;
    }
    stats.refill_fill =
        static_cast<double>(stats.inserted) / static_cast<double>(sites.size());
    st.last_refill[static_cast<std::size_t>(k)] = now;
    return stats;
}

struct CycleSample {
    std::int64_t cycle = 0;
    Micros t_mid = 0;
    Micros t_end = 0;
    std::int64_t population_mid = 0;  // sampled before this cycle's refill
    double mean_polarization = 0.0;
    double mean_contrast = 0.0;
    std::array<double, 6> sub_p0{};
    std::array<double, 6> sub_p1{};
    std::array<double, 6> sub_pa{};
    std::array<double, 6> sub_contrast{};  // NaN when the readout is degenerate
    std::array<Micros, 6> sub_age_us{};    // since the subarray's last refill
    std::int32_t refilled_subarray = -1;
    double refill_fill = 0.0;
    std::int32_t ejected = 0;
    std::int32_t inserted = 0;
    Micros stall = 0;
    bool batch_not_ready = false;
    double duty = 0.0;
};

// Padded snapshot of subarray k (empty sites marked lost) for the estimator,
// which normalizes to the site count.
inline std::vector<AtomRecord> subarray_snapshot(StorageState& st, std::int32_t k) {
    std::vector<AtomRecord> copy;
    copy.reserve(static_cast<std::size_t>(st.layout.subarray_sites()));
    for (auto* a : st.subarray_atoms(k)) copy.push_back(*a);
    while (copy.size() < static_cast<std::size_t>(st.layout.subarray_sites())) {
        AtomRecord empty;
        empty.internal = InternalState::lost;
        copy.push_back(empty);
    }
    return copy;
}

struct ReloadDeps {
    ReservoirFeed* feed = nullptr;
    const PrepConfig* prep = nullptr;
    const RearrangeConfig* rearrange = nullptr;
    const StorageConfig* storage = nullptr;
    const CoherenceConfig* coherence = nullptr;
    const ShieldingConfig* shielding = nullptr;
    EnvFlags env;
    DDSequence dd;
    RunMode mode = RunMode::atoms;
    bool replenish = true;
};

// One reload cycle starting at t0. Returns the sample taken mid-cycle plus
// the refill outcome; the cycle stretches past cycle_period when the batch
// is late (reservoir stall or a long prep sequence).
inline CycleSample reload_cycle(StorageState& st, const ReloadDeps& deps, Micros t0,
                                SeededRng& rng_prep, SeededRng& rng_storage,
                                SeededRng& rng_coherence) {
    const StorageConfig& scfg = *deps.storage;
    CycleSample sample;
    sample.cycle = st.cycle_index;

    // Preparation of the incoming batch (runs in the prep zone in parallel
    // with storage evolution). Extraction waits for a reservoir.
    PrepCycleResult prep;
    Micros prep_done = t0;
    if (deps.replenish) {
        Micros ready = deps.feed->ready_time(t0);
        sample.stall = ready - t0;
        deps.feed->advance_to(ready);
        prep = prep_cycle(deps.feed->current, deps.feed->tweezers, deps.feed->loading,
                          *deps.prep, *deps.rearrange, deps.feed->layout,
                          /*with_rearrangement=*/true, /*storage_roi=*/true, ready,
                          rng_prep);
        prep_done = ready + prep.elapsed;
    }

    Micros duration = std::max(scfg.cycle_period, prep_done - t0);
    sample.batch_not_ready = duration > scfg.cycle_period;
    Micros half = duration / 2;

    storage_survival(st, half, scfg.tweezer_lifetime_s, rng_storage);
    sample.t_mid = t0 + half;
    sample.population_mid = st.population();
    storage_survival(st, duration - half, scfg.tweezer_lifetime_s, rng_storage);

    ActiveRates rates = active_rates(*deps.coherence, *deps.shielding, deps.env);
    if (deps.mode == RunMode::xbasis) {
        // decoupling block spans the cycle for every stored qubit
        std::vector<AtomRecord*> qubits;
        std::vector<AtomRecord> work;
        for (auto& s : st.slots)
            if (s && s->present()) {
                qubits.push_back(&*s);
                work.push_back(*s);
            }
        DDReport rep = dd_reload_cycle(work, deps.dd, rates, *deps.coherence,
                                       duration, rng_coherence);
        for (std::size_t i = 0; i < qubits.size(); ++i) *qubits[i] = work[i];
        sample.duty = rep.duty;
    } else if (deps.mode == RunMode::zbasis) {
        for (auto& s : st.slots)
            if (s && s->present()) decay(*s, duration, rates);
    }

    // Pre-refill readout: coherence has just been mapped back to population.
    if (deps.mode != RunMode::atoms) {
        double pol = 0.0;
        std::int64_t n = 0;
        double contrast_sum = 0.0;
        std::int32_t contrast_subs = 0;
        for (std::int32_t k = 0; k < st.layout.subarrays; ++k) {
            auto kk = static_cast<std::size_t>(k);
            auto atoms_k = st.subarray_atoms(k);
            ReadoutCounts counts = measure(subarray_snapshot(st, k), rng_coherence);
            sample.sub_p0[kk] = counts.p0;
            sample.sub_p1[kk] = counts.p1;
            sample.sub_pa[kk] = counts.pa;
            sample.sub_age_us[kk] = t0 + duration - st.last_refill[kk];
            sample.sub_contrast[kk] = std::numeric_limits<double>::quiet_NaN();
            double pmf0 = st.pmf0[kk];
            if (counts.pa > pmf0) {
                sample.sub_contrast[kk] = contrast(counts, pmf0);
                contrast_sum += sample.sub_contrast[kk];
                ++contrast_subs;
            }
            for (auto* a : atoms_k) {
                pol += a->bloch_z;
                ++n;
            }
        }
        sample.mean_polarization = n > 0 ? pol / static_cast<double>(n) : 0.0;
        sample.mean_contrast =
            contrast_subs > 0 ? contrast_sum / contrast_subs : 0.0;
    }

    if (deps.replenish) {
        std::int32_t k = static_cast<std::int32_t>(st.cycle_index % st.layout.subarrays);
        TransferStats stats = eject_and_refill(st, k, std::move(prep.batch), scfg,
                                               *deps.coherence, t0 + duration,
                                               rng_storage);
        sample.refilled_subarray = k;
        sample.refill_fill = stats.refill_fill;
        sample.ejected = stats.ejected;
        sample.inserted = stats.inserted;
        st.pmf0[static_cast<std::size_t>(k)] =
            measure(subarray_snapshot(st, k), rng_coherence).pmf;
    }

    sample.t_end = t0 + duration;
    ++st.cycle_index;
    return sample;
}

struct AssembleResult {
    std::int64_t population = 0;
    Micros elapsed = 0;
    std::array<double, 6> subarray_fill{};
    std::int64_t atoms_transferred = 0;
};

// Initial assembly: six consecutive reload cycles into an empty array.
inline AssembleResult assemble(StorageState& st, const ReloadDeps& deps, Micros t0,
                               SeededRng& rng_prep, SeededRng& rng_storage,
                               SeededRng& rng_coherence) {
    AssembleResult out;
    Micros t = t0;
    for (std::int32_t k = 0; k < st.layout.subarrays; ++k) {
        CycleSample s = reload_cycle(st, deps, t, rng_prep, rng_storage, rng_coherence);
        out.subarray_fill[static_cast<std::size_t>(s.refilled_subarray)] = s.refill_fill;
        out.atoms_transferred += s.inserted;
        t = s.t_end;
    }
    out.population = st.population();
    out.elapsed = t - t0;
    return out;
}

} // namespace atomflux
