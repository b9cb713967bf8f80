#pragma once

// INI-style configuration covering every tunable in the library. All keys
// have defaults, unknown sections/keys are rejected, and serialization is
// canonical: parse(serialize(cfg)) reproduces cfg exactly (doubles are
// written with shortest-round-trip formatting).

#include <charconv>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "coherence.hpp"
#include "prep.hpp"
#include "rearrange.hpp"
#include "reservoir.hpp"
#include "storage.hpp"
#include "transport.hpp"

namespace atomflux {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct SimulationConfig {
    // [run]
    std::uint64_t seed = 12345;
    std::int32_t trials = 1;
    double duration_s = 10.0;
    std::string mode = "atoms"; // atoms | z | x
    bool replenish = true;

    // [reservoir]
    double lattice_atoms = 4.17e6;
    double lattice_temperature_uK = 20.0;
    LatticeGeometry lattice;
    LoadingModel loading;
    TransferBudget budget;

    // [tweezer]
    TweezerGeometry tweezer;

    // [transport]
    ConveyorProfile conveyor;
    StageTimings timings;

    // [prep]
    PrepConfig prep;

    // [rearrange]
    RearrangeConfig rearrange;

    // [storage]
    StorageConfig storage;

    // [coherence]
    CoherenceConfig coherence;
    ShieldingConfig shielding;
    DDSequence dd;
    EnvFlags env{/*mot_on=*/false, /*prep_imaging_on=*/true,
                 /*lattice_present=*/true, /*shielding_on=*/true,
                 /*raman_drive_on=*/false};

    RunMode run_mode() const {
        if (mode == "atoms") return RunMode::atoms;
        if (mode == "z") return RunMode::zbasis;
        if (mode == "x") return RunMode::xbasis;
        throw ConfigError("run.mode must be atoms, z, or x (got \"" + mode + "\")");
    }
};

namespace detail {

enum class FieldKind : std::uint8_t { f64, i32, i64, u64, boolean, text };

struct FieldBinding {
    const char* section;
    const char* key;
    FieldKind kind;
    void* ptr;
};

// Single registry used by both parse and serialize, so the two can't drift.
inline std::vector<FieldBinding> config_bindings(SimulationConfig& c) {
    using K = FieldKind;
    return {
        {"run", "seed", K::u64, &c.seed},
        {"run", "trials", K::i32, &c.trials},
        {"run", "duration_s", K::f64, &c.duration_s},
        {"run", "mode", K::text, &c.mode},
        {"run", "replenish", K::boolean, &c.replenish},

        {"reservoir", "lattice_atoms", K::f64, &c.lattice_atoms},
        {"reservoir", "lattice_temperature_uk", K::f64, &c.lattice_temperature_uK},
        {"reservoir", "transfer_efficiency", K::f64, &c.budget.efficiency},
        {"reservoir", "transfer_heating_factor", K::f64, &c.budget.heating_factor},
        {"reservoir", "radial_frequency_rad_s", K::f64, &c.lattice.omega_r},
        {"reservoir", "axial_frequency_rad_s", K::f64, &c.lattice.omega_z},
        {"reservoir", "pancake_spacing_nm", K::f64, &c.lattice.spacing_nm},
        {"reservoir", "occupied_sites", K::i32, &c.lattice.occupied_sites},
        {"reservoir", "averaging_pancakes", K::i32, &c.lattice.avg_sites},
        {"reservoir", "waist_um", K::f64, &c.lattice.waist_um},
        {"reservoir", "stochastic_coefficient", K::f64, &c.loading.c_st},
        {"reservoir", "cross_section_m2", K::f64, &c.loading.sigma_m2},
        {"reservoir", "dwell_ms", K::f64, &c.loading.dwell_ms},
        {"reservoir", "kappa", K::f64, &c.loading.kappa},
        {"reservoir", "capture_depth_um", K::f64, &c.loading.capture_depth_um},

        {"tweezer", "volume_m3", K::f64, &c.tweezer.volume_m3},
        {"tweezer", "waist_nm", K::f64, &c.tweezer.waist_nm},
        {"tweezer", "depth_uk", K::f64, &c.tweezer.depth_uK},
        {"tweezer", "count", K::i32, &c.tweezer.count},
        {"tweezer", "spacing_um", K::f64, &c.tweezer.spacing_um},

        {"transport", "lambda_nm", K::f64, &c.conveyor.lambda_nm},
        {"transport", "max_acceleration_m_s2", K::f64, &c.conveyor.a_max},
        {"transport", "max_velocity_m_s", K::f64, &c.conveyor.v_max},
        {"transport", "mot_load_us", K::i64, &c.timings.mot_load},
        {"transport", "compression_us", K::i64, &c.timings.compression},
        {"transport", "cooling_us", K::i64, &c.timings.lgm},
        {"transport", "first_leg_us", K::i64, &c.timings.l1},
        {"transport", "handover_us", K::i64, &c.timings.handover},
        {"transport", "second_leg_us", K::i64, &c.timings.l2},
        {"transport", "replacement_period_us", K::i64, &c.timings.replacement_period},

        {"prep", "extract_transport_us", K::i64, &c.prep.extract_transport},
        {"prep", "parity_us", K::i64, &c.prep.parity},
        {"prep", "handover_pushout_us", K::i64, &c.prep.handover_pushout},
        {"prep", "image_us", K::i64, &c.prep.image},
        {"prep", "pump_us", K::i64, &c.prep.pump},
        {"prep", "double_residual", K::f64, &c.prep.double_residual},
        {"prep", "site_fidelity", K::f64, &c.prep.fidelity_site},
        {"prep", "imaging_survival", K::f64, &c.prep.imaging_survival},
        {"prep", "lattice_parking", K::boolean, &c.prep.lattice_parking},
        {"prep", "pushout_enabled", K::boolean, &c.prep.pushout_enabled},
        {"prep", "parking_penalty", K::f64, &c.prep.parking_penalty},
        {"prep", "pushout_penalty", K::f64, &c.prep.pushout_penalty},
        {"prep", "pump_tau_us", K::f64, &c.prep.pump_tau_us},
        {"prep", "spam_fidelity", K::f64, &c.prep.spam_fidelity},

        {"rearrange", "row_duration_us", K::i64, &c.rearrange.row_duration},
        {"rearrange", "image_latency_us", K::i64, &c.rearrange.image_latency},
        {"rearrange", "buffer_us", K::i64, &c.rearrange.buffer},
        {"rearrange", "storage_roi_extra_us", K::i64, &c.rearrange.storage_roi_extra},
        {"rearrange", "pickup_us", K::i64, &c.rearrange.pickup},
        {"rearrange", "drop_us", K::i64, &c.rearrange.drop},
        {"rearrange", "lateral_speed_m_s", K::f64, &c.rearrange.lateral_speed_m_s},
        {"rearrange", "move_survival", K::f64, &c.rearrange.move_survival},
        {"rearrange", "target_sites", K::i32, &c.rearrange.target_sites},

        {"storage", "cycle_period_us", K::i64, &c.storage.cycle_period},
        {"storage", "eject_us", K::i64, &c.storage.eject},
        {"storage", "transfer_survival", K::f64, &c.storage.transfer_survival},
        {"storage", "sync_transfer", K::boolean, &c.storage.sync_transfer},
        {"storage", "sync_penalty", K::f64, &c.storage.sync_penalty},
        {"storage", "tweezer_lifetime_s", K::f64, &c.storage.tweezer_lifetime_s},

        {"coherence", "t2_reference_s", K::f64, &c.coherence.t2_reference_s},
        {"coherence", "t2_mot_s", K::f64, &c.coherence.t2_mot_s},
        {"coherence", "t2_shielded_prep_s", K::f64, &c.coherence.t2_shielded_prep_s},
        {"coherence", "t1_reference_q1_s", K::f64, &c.coherence.t1_ref_q1_s},
        {"coherence", "t1_mot_q1_s", K::f64, &c.coherence.t1_mot_q1_s},
        {"coherence", "t1_shielded_q1_s", K::f64, &c.coherence.t1_shielded_q1_s},
        {"coherence", "t1_reference_q0_s", K::f64, &c.coherence.t1_ref_q0_s},
        {"coherence", "t1_mot_q0_s", K::f64, &c.coherence.t1_mot_q0_s},
        {"coherence", "t1_shielded_q0_s", K::f64, &c.coherence.t1_shielded_q0_s},
        {"coherence", "shield_shift_ghz", K::f64, &c.shielding.delta_at_ghz},
        {"coherence", "cooling_detuning_mhz", K::f64, &c.shielding.delta_cool_mhz},
        {"coherence", "raman_scatter_t1_ms", K::f64, &c.coherence.raman_scatter_t1_ms},
        {"coherence", "per_pulse_fidelity", K::f64, &c.coherence.per_pulse_fidelity},
        {"coherence", "mf_leak_rate", K::f64, &c.coherence.mf_leak_rate},
        {"coherence", "dd_pi_count", K::i32, &c.dd.n_pi},
        {"coherence", "dd_spacing_us", K::i64, &c.dd.spacing},
        {"coherence", "dd_final_plus", K::boolean, &c.dd.final_plus},
        {"coherence", "env_mot", K::boolean, &c.env.mot_on},
        {"coherence", "env_imaging", K::boolean, &c.env.prep_imaging_on},
        {"coherence", "env_lattice", K::boolean, &c.env.lattice_present},
        {"coherence", "env_shielding", K::boolean, &c.env.shielding_on},
        {"coherence", "env_raman", K::boolean, &c.env.raman_drive_on},
    };
}

inline std::string format_config_value(const FieldBinding& b) {
    char buf[64];
    switch (b.kind) {
    case FieldKind::f64: {
        auto* r = std::to_chars(buf, buf + sizeof buf,
                                *static_cast<double*>(b.ptr)).ptr;
        return std::string(buf, r);
    }
    case FieldKind::i32:
        return std::to_string(*static_cast<std::int32_t*>(b.ptr));
    case FieldKind::i64:
        return std::to_string(*static_cast<std::int64_t*>(b.ptr));
    case FieldKind::u64:
        return std::to_string(*static_cast<std::uint64_t*>(b.ptr));
    case FieldKind::boolean:
        return *static_cast<bool*>(b.ptr) ? "true" : "false";
    case FieldKind::text:
        return *static_cast<std::string*>(b.ptr);
    }
    return {};
}

inline void assign_config_value(const FieldBinding& b, std::string_view value,
                                const std::string& where) {
    auto fail = [&](const char* why) {
        throw ConfigError(where + ": " + why + " (got \"" + std::string(value) + "\")");
    };
    const char* first = value.data();
    const char* last = value.data() + value.size();
    switch (b.kind) {
    case FieldKind::f64: {
        double v{};
        auto res = std::from_chars(first, last, v);
        if (res.ec != std::errc{} || res.ptr != last) fail("expected a number");
        *static_cast<double*>(b.ptr) = v;
        break;
    }
    case FieldKind::i32: {
        std::int32_t v{};
        auto res = std::from_chars(first, last, v);
        if (res.ec != std::errc{} || res.ptr != last) fail("expected an integer");
        *static_cast<std::int32_t*>(b.ptr) = v;
        break;
    }
    case FieldKind::i64: {
        std::int64_t v{};
        auto res = std::from_chars(first, last, v);
        if (res.ec != std::errc{} || res.ptr != last) fail("expected an integer");
        *static_cast<std::int64_t*>(b.ptr) = v;
        break;
    }
    case FieldKind::u64: {
        std::uint64_t v{};
        auto res = std::from_chars(first, last, v);
        if (res.ec != std::errc{} || res.ptr != last)
            fail("expected a non-negative integer");
        *static_cast<std::uint64_t*>(b.ptr) = v;
        break;
    }
    case FieldKind::boolean:
        if (value == "true")
            *static_cast<bool*>(b.ptr) = true;
        else if (value == "false")
            *static_cast<bool*>(b.ptr) = false;
        else
            fail("expected true or false");
        break;
    case FieldKind::text:
        if (value.empty()) fail("expected a value");
        *static_cast<std::string*>(b.ptr) = std::string(value);
        break;
    }
}

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
        s.remove_suffix(1);
    return s;
}

} // namespace detail

// Canonical text form: sections and keys in registry order, one blank line
// between sections, `key = value` rows, trailing newline.
inline std::string serialize_config(const SimulationConfig& cfg) {
    auto& mutable_cfg = const_cast<SimulationConfig&>(cfg);
    auto bindings = detail::config_bindings(mutable_cfg);
    std::string out;
    const char* current = "";
    for (const auto& b : bindings) {
        if (std::string_view(current) != b.section) {
            if (!out.empty()) out += '\n';
            out += '[';
            out += b.section;
            out += "]\n";
            current = b.section;
        }
        out += b.key;
        out += " = ";
        out += detail::format_config_value(b);
        out += '\n';
    }
    return out;
}

// Parse `text` on top of defaults. Lines are `[section]`, `key = value`,
// blank, or full-line comments starting with # or ;. Unknown sections or
// keys and malformed lines raise ConfigError with the line number.
inline SimulationConfig parse_config(std::string_view text) {
    SimulationConfig cfg;
    auto bindings = detail::config_bindings(cfg);
    std::map<std::pair<std::string_view, std::string_view>, const detail::FieldBinding*>
        index;
    for (const auto& b : bindings)
        index[{b.section, b.key}] = &b;

    std::string section;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        std::size_t eol = text.find('\n', pos);
        std::string_view raw = text.substr(
            pos, eol == std::string_view::npos ? text.size() - pos : eol - pos);
        pos = eol == std::string_view::npos ? text.size() + 1 : eol + 1;
        ++line_no;
        std::string_view line = detail::trim(raw);
        std::string where = "line " + std::to_string(line_no);
        if (line.empty() || line.front() == '#' || line.front() == ';') continue;
        if (line.front() == '[') {
            if (line.back() != ']' || line.size() < 3)
                throw ConfigError(where + ": malformed section header");
            std::string_view name = detail::trim(line.substr(1, line.size() - 2));
            bool known = false;
            for (const auto& b : bindings)
                if (name == b.section) { known = true; break; }
            if (!known)
                throw ConfigError(where + ": unknown section [" + std::string(name) + "]");
            section = std::string(name);
            continue;
        }
        std::size_t eq = line.find('=');
        if (eq == std::string_view::npos)
            throw ConfigError(where + ": expected `key = value` or a section header");
        std::string_view key = detail::trim(line.substr(0, eq));
        std::string_view value = detail::trim(line.substr(eq + 1));
        if (section.empty())
            throw ConfigError(where + ": key before any [section]");
        if (key.empty()) throw ConfigError(where + ": empty key");
        auto it = index.find({std::string_view(section), key});
        if (it == index.end())
            throw ConfigError(where + ": unknown key " + section + "." +
                              std::string(key));
        detail::assign_config_value(*it->second, value,
                                    where + " (" + section + "." + std::string(key) + ")");
    }

    cfg.run_mode(); // validates mode
    if (cfg.trials < 1) throw ConfigError("run.trials must be >= 1");
    if (cfg.duration_s <= 0.0) throw ConfigError("run.duration_s must be positive");
    return cfg;
}

inline SimulationConfig load_config_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

} // namespace atomflux
