#pragma once

// Row-parallel rearrangement planning. Tones of the sorting AOD may not cross,
// so a valid row plan is an order-preserving matching of loaded columns onto
// target columns. plan_row minimizes total |displacement| among maximum-
// coverage matchings via DP over the two sorted lists; covering a target beats
// keeping an on-target atom fixed, and zero-cost matches keep on-target atoms
// in place whenever coverage allows.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "core.hpp"
#include "rng.hpp"

namespace atomflux {

struct RearrangeConfig {
    Micros row_duration = 700;        // fixed slot per row in the schedule
    Micros image_latency = 10_ms;     // camera readout + data transfer
    Micros buffer = 1600;
    Micros storage_roi_extra = 15_ms; // extra latency when the storage ROI is read too
    Micros pickup = 50;
    Micros drop = 50;
    double lateral_speed_m_s = 1.0;
    double move_survival = 0.996;     // per covered target, uniform
    std::int32_t target_sites = 540;
};

// Sparse target pattern: per_row every-other-column sites centered in the row.
inline std::vector<std::int32_t> target_columns(std::int32_t prep_cols,
                                                std::int32_t per_row) {
    if (per_row < 1 || 2 * per_row - 1 > prep_cols)
        throw std::invalid_argument("target_columns: pattern does not fit the row");
    std::vector<std::int32_t> cols(static_cast<std::size_t>(per_row));
    std::int32_t c0 = (prep_cols - (2 * per_row - 1)) / 2;
    for (std::int32_t i = 0; i < per_row; ++i) cols[static_cast<std::size_t>(i)] = c0 + 2 * i;
    return cols;
}

struct RowPlan {
    std::int32_t row = 0;
    std::vector<std::pair<std::int32_t, std::int32_t>> moves; // (src col, dst col)
    std::int64_t displacement_cols = 0;
    std::int32_t defects = 0;   // targets left uncovered (insufficient atoms)
    Micros duration = 0;        // longest individual move, three-segment path
};

enum class PlanStatus : std::uint8_t { ok, insufficient_atoms };

// DP over sorted loaded/target columns. Skipping a target costs BIG, so the
// result covers min(|loaded|, |targets|) targets with minimum displacement;
// ties prefer the leftmost feasible sources.
inline RowPlan plan_row(const std::vector<std::int32_t>& loaded,
                        const std::vector<std::int32_t>& targets,
                        const RearrangeConfig& cfg, std::int32_t row = 0,
                        double row_spacing_um = 4.5, double col_spacing_um = 4.5) {
    if (!std::is_sorted(loaded.begin(), loaded.end()) ||
        !std::is_sorted(targets.begin(), targets.end()))
        throw std::invalid_argument("plan_row: inputs must be sorted");
    const std::size_t n = loaded.size(), m = targets.size();
    constexpr std::int64_t BIG = 1'000'000;
    std::vector<std::int64_t> f((n + 1) * (m + 1));
    auto at = [&](std::size_t i, std::size_t j) -> std::int64_t& {
        return f[i * (m + 1) + j];
    };
    for (std::size_t j = 0; j <= m; ++j) at(0, j) = BIG * static_cast<std::int64_t>(j);
    for (std::size_t i = 1; i <= n; ++i) {
        at(i, 0) = 0;
        for (std::size_t j = 1; j <= m; ++j) {
            std::int64_t best = at(i - 1, j); // leave atom i-1 unused
            best = std::min(best, at(i, j - 1) + BIG); // leave target j-1 uncovered
            best = std::min(best, at(i - 1, j - 1) +
                                      std::abs(static_cast<std::int64_t>(loaded[i - 1]) -
                                               targets[j - 1]));
            at(i, j) = best;
        }
    }
    RowPlan plan;
    plan.row = row;
    std::size_t i = n, j = m;
    while (j > 0) {
        if (i > 0 && at(i, j) == at(i - 1, j)) {
            --i; // skipping later atoms first keeps leftmost sources in use
        } else if (at(i, j) == at(i, j - 1) + BIG) {
            --j;
            ++plan.defects;
        } else {
            plan.moves.emplace_back(loaded[i - 1], targets[j - 1]);
            --i;
            --j;
        }
    }
    std::reverse(plan.moves.begin(), plan.moves.end());
    std::int64_t max_disp = 0;
    for (const auto& [src, dst] : plan.moves) {
        std::int64_t d = std::abs(static_cast<std::int64_t>(src) - dst);
        plan.displacement_cols += d;
        max_disp = std::max(max_disp, d);
    }
    if (max_disp > 0) {
        double lateral_m = static_cast<double>(max_disp) * col_spacing_um * 1e-6;
        double vertical_m = row_spacing_um * 1e-6; // half a row gap up, half down
        double travel_us = (lateral_m + vertical_m) / cfg.lateral_speed_m_s * 1e6;
        plan.duration = cfg.pickup + cfg.drop +
                        static_cast<Micros>(std::ceil(travel_us));
    }
    return plan;
}

struct ArrayPlan {
    std::vector<RowPlan> rows;
    PlanStatus status = PlanStatus::ok;
    std::int32_t total_defects = 0;
    std::int64_t total_displacement_cols = 0;
    Micros total_time = 0;
    bool storage_roi = false;
};

// detections: one sorted column list per prep row.
inline ArrayPlan plan_array(const std::vector<std::vector<std::int32_t>>& detections,
                            const std::vector<std::int32_t>& targets_per_row,
                            const RearrangeConfig& cfg, const ZoneLayout& layout,
                            bool storage_roi = false) {
    ArrayPlan plan;
    plan.storage_roi = storage_roi;
    plan.rows.reserve(detections.size());
    for (std::size_t r = 0; r < detections.size(); ++r) {
        RowPlan rp = plan_row(detections[r], targets_per_row, cfg,
                              static_cast<std::int32_t>(r), layout.prep_spacing_um,
                              layout.prep_spacing_um);
        if (rp.duration > cfg.row_duration)
            throw std::runtime_error("plan_array: row plan exceeds its slot");
        plan.total_defects += rp.defects;
        plan.total_displacement_cols += rp.displacement_cols;
        plan.rows.push_back(std::move(rp));
    }
    if (plan.total_defects > 0) plan.status = PlanStatus::insufficient_atoms;
    plan.total_time = cfg.image_latency +
                      static_cast<Micros>(plan.rows.size()) * cfg.row_duration +
                      cfg.buffer + (storage_roi ? cfg.storage_roi_extra : 0);
    return plan;
}

struct ExecuteResult {
    std::vector<SiteIndex> filled;   // target sites holding an atom afterwards
    std::int32_t move_losses = 0;
    std::int32_t defects = 0;        // uncovered targets: planned + lost in flight
};

// Every covered target independently retains its atom with p = move_survival.
inline ExecuteResult execute_plan(const ArrayPlan& plan, double move_survival,
                                  SeededRng& rng) {
    if (move_survival < 0.0 || move_survival > 1.0)
        throw std::invalid_argument("execute_plan: move_survival outside [0, 1]");
    ExecuteResult out;
    out.defects = plan.total_defects;
    for (const auto& rp : plan.rows) {
        for (const auto& [src, dst] : rp.moves) {
            (void)src;
            if (rng.bernoulli(move_survival)) {
                out.filled.push_back(SiteIndex{Zone::prep, rp.row, dst});
            } else {
                ++out.move_losses;
                ++out.defects;
            }
        }
    }
    return out;
}

} // namespace atomflux
