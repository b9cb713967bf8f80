#pragma once

// Environment-dependent qubit coherence. Decoherence sources contribute
// additive rates (1/T_eff = sum 1/T_source); the per-source deltas are
// back-solved from the configured condition times, so enabling a condition's
// flags reproduces its configured T exactly. AC-Stark shielding divides the
// preparation-imaging term by (delta_AT/delta_cool)^2; the optical-lattice
// term absorbs the shielded-condition residual because shielding cannot help
// against the lattice light itself.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "core.hpp"
#include "rng.hpp"

namespace atomflux {

struct EnvFlags {
    bool mot_on = false;
    bool prep_imaging_on = false;
    bool lattice_present = false;
    bool shielding_on = false;
    bool raman_drive_on = false;
};

struct ShieldingConfig {
    double delta_at_ghz = 10.0;  // AC-Stark shift of the cooling resonance
    double delta_cool_mhz = 60.0; // detuning scale of the stray cooling light

    double suppression() const {
        double ratio = delta_at_ghz * 1e9 / (delta_cool_mhz * 1e6);
        return ratio * ratio;
    }
};

struct CoherenceConfig {
    // Transverse (T2, measured under dynamical decoupling)
    double t2_reference_s = 1.34;
    double t2_mot_s = 1.15;
    double t2_shielded_prep_s = 1.09;
    double t2_unshielded_prep_s = 0.05; // placeholder, calibrated

    // Longitudinal, qubits prepared in |1>
    double t1_ref_q1_s = 12.6;
    double t1_mot_q1_s = 12.6;          // no measurable MOT effect
    double t1_shielded_q1_s = 3.43;
    double t1_unshielded_q1_s = 0.05;   // placeholder, calibrated

    // Longitudinal, |0>: hyperfine relaxation is about twice as slow
    double t1_ref_q0_s = 25.2;
    double t1_mot_q0_s = 25.2;
    double t1_shielded_q0_s = 6.86;
    double t1_unshielded_q0_s = 0.1;    // placeholder, calibrated

    // 0 = derive the lattice term from the shielded-condition residual
    double t2_lattice_override_s = 0.0;
    double t1_lattice_q1_override_s = 0.0;
    double t1_lattice_q0_override_s = 0.0;

    double raman_scatter_t1_ms = 10.0; // depolarization while the Raman drive is on
    double per_pulse_fidelity = 0.99995;
    double fidelity_jitter = 0.0;
    double mf_leak_rate = 0.075;       // per AOD transfer
};

struct ActiveRates {
    double t2_rate = 0.0;    // 1/s on the transverse components
    double t1_rate_q0 = 0.0; // 1/s toward depolarization, bloch_z >= 0
    double t1_rate_q1 = 0.0; // 1/s, bloch_z < 0
};

namespace detail {
inline double rate_delta(double t_condition_s, double t_reference_s,
                         const char* what) {
    if (!(t_condition_s > 0.0) || !(t_reference_s > 0.0))
        throw std::invalid_argument(std::string("active_rates: nonpositive time for ") + what);
    double d = 1.0 / t_condition_s - 1.0 / t_reference_s;
    if (d < 0.0)
        throw std::invalid_argument(std::string("active_rates: ") + what +
                                    " is slower than the reference");
    return d;
}

inline double lattice_rate(double t_shielded_s, double t_ref_s,
                           double imaging_rate_shielded, double override_s,
                           const char* what) {
    if (override_s > 0.0) return 1.0 / override_s;
    double r = 1.0 / t_shielded_s - 1.0 / t_ref_s - imaging_rate_shielded;
    if (r < 0.0)
        throw std::invalid_argument(std::string("active_rates: shielded ") + what +
                                    " is faster than reference + shielded imaging");
    return r;
}
} // namespace detail

inline ActiveRates active_rates(const CoherenceConfig& cfg, const ShieldingConfig& sh,
                                const EnvFlags& flags) {
    const double supp = sh.suppression();
    if (!(supp >= 1.0))
        throw std::invalid_argument("active_rates: shielding suppression below 1");

    auto build = [&](double t_ref, double t_mot, double t_shielded, double t_unshielded,
                     double lattice_override, const char* what) {
        double rate = 1.0 / t_ref;
        double img_unshielded = detail::rate_delta(t_unshielded, t_ref, what);
        double img_shielded = img_unshielded / supp;
        if (flags.mot_on) rate += detail::rate_delta(t_mot, t_ref, what);
        if (flags.prep_imaging_on)
            rate += flags.shielding_on ? img_shielded : img_unshielded;
        if (flags.lattice_present)
            rate += detail::lattice_rate(t_shielded, t_ref, img_shielded,
                                         lattice_override, what);
        return rate;
    };

    ActiveRates out;
    out.t2_rate = build(cfg.t2_reference_s, cfg.t2_mot_s, cfg.t2_shielded_prep_s,
                        cfg.t2_unshielded_prep_s, cfg.t2_lattice_override_s, "t2");
    out.t1_rate_q1 = build(cfg.t1_ref_q1_s, cfg.t1_mot_q1_s, cfg.t1_shielded_q1_s,
                           cfg.t1_unshielded_q1_s, cfg.t1_lattice_q1_override_s, "t1(q1)");
    out.t1_rate_q0 = build(cfg.t1_ref_q0_s, cfg.t1_mot_q0_s, cfg.t1_shielded_q0_s,
                           cfg.t1_unshielded_q0_s, cfg.t1_lattice_q0_override_s, "t1(q0)");
    if (flags.raman_drive_on) {
        double r = 1.0 / (cfg.raman_scatter_t1_ms * 1e-3);
        out.t2_rate += r;
        out.t1_rate_q0 += r;
        out.t1_rate_q1 += r;
    }
    return out;
}

// Free evolution: transverse components shrink with T2, bloch_z relaxes
// toward the depolarized value with the T1 of the occupied hemisphere.
// Composition is exact: decay(dt1) then decay(dt2) equals decay(dt1 + dt2).
inline void decay(AtomRecord& atom, Micros dt, const ActiveRates& rates) {
    if (dt < 0) throw std::invalid_argument("decay: dt < 0");
    if (!atom.in_clock_subspace()) return;
    double dt_s = static_cast<double>(dt) * 1e-6;
    double f2 = std::exp(-dt_s * rates.t2_rate);
    atom.bloch_x *= f2;
    atom.bloch_y *= f2;
    double t1_rate = atom.bloch_z < 0.0 ? rates.t1_rate_q1 : rates.t1_rate_q0;
    atom.bloch_z *= std::exp(-dt_s * t1_rate);
}

enum class PulseKind : std::uint8_t { pi, half_pi, minus_half_pi };

// Ideal rotation about the in-plane axis (cos phase, sin phase, 0), composed
// with a depolarizing error: with probability 1 - fidelity the Bloch vector
// collapses to the origin.
inline void apply_pulse(AtomRecord& atom, PulseKind kind, double phase_rad,
                        double fidelity, SeededRng& rng) {
    if (fidelity < 0.0 || fidelity > 1.0)
        throw std::invalid_argument("apply_pulse: fidelity outside [0, 1]");
    if (!atom.in_clock_subspace()) return;
    if (!rng.bernoulli(fidelity)) {
        atom.bloch_x = atom.bloch_y = atom.bloch_z = 0.0;
        atom.internal = InternalState::q0;
        return;
    }
    double theta = kind == PulseKind::pi ? constants::pi
                   : kind == PulseKind::half_pi ? constants::pi / 2.0
                                                : -constants::pi / 2.0;
    double nx = std::cos(phase_rad), ny = std::sin(phase_rad);
    double c = std::cos(theta), s = std::sin(theta);
    double x = atom.bloch_x, y = atom.bloch_y, z = atom.bloch_z;
    double dot = nx * x + ny * y;
    // n x r with n_z = 0
    double cx = ny * z, cy = -nx * z, cz = nx * y - ny * x;
    atom.bloch_x = x * c + cx * s + nx * dot * (1.0 - c);
    atom.bloch_y = y * c + cy * s + ny * dot * (1.0 - c);
    atom.bloch_z = z * c + cz * s;
    atom.internal = atom.bloch_z < 0.0 ? InternalState::q1 : InternalState::q0;
}

// XY16: the XY8 phase cycle followed by its phase inverse; longer trains
// repeat the 16-pulse block.
inline double xy16_phase(std::int32_t pulse_index) {
    static constexpr double deg[16] = {0, 90, 0, 90, 90, 0, 90, 0,
                                       180, 270, 180, 270, 270, 180, 270, 180};
    return deg[pulse_index % 16] * constants::pi / 180.0;
}

struct DDSequence {
    std::int32_t n_pi = 64;
    Micros spacing = 1100;      // 2*tau between pi pulses
    bool final_plus = false;    // final wrapper sign: -pi/2 returns |0> to |0>

    Micros duration() const { return static_cast<Micros>(n_pi) * spacing; }
};

struct DDReport {
    std::int32_t pulses = 0;
    double duty = 0.0;          // fraction of the cycle spent in superposition
    std::int32_t depolarized = 0;
};

// One storage-cycle decoupling block: X(pi/2), n_pi XY16-phased pi pulses at
// spacing 2*tau (first and last gap tau), X(-/+pi/2), then plain z-basis decay
// for the remainder of the cycle.
inline DDReport dd_reload_cycle(std::vector<AtomRecord>& atoms, const DDSequence& seq,
                                const ActiveRates& rates, const CoherenceConfig& cfg,
                                Micros cycle_period, SeededRng& rng) {
    if (seq.n_pi < 1) throw std::invalid_argument("dd_reload_cycle: need n_pi >= 1");
    if (seq.duration() > cycle_period)
        throw std::invalid_argument("dd_reload_cycle: sequence exceeds the cycle");
    DDReport report;
    report.pulses = seq.n_pi + 2;
    report.duty = static_cast<double>(seq.duration()) / static_cast<double>(cycle_period);
    const Micros tau = seq.spacing / 2;

    auto pulse_fidelity = [&]() {
        if (cfg.fidelity_jitter <= 0.0) return cfg.per_pulse_fidelity;
        return std::clamp(rng.normal(cfg.per_pulse_fidelity, cfg.fidelity_jitter), 0.0, 1.0);
    };

    for (auto& a : atoms) {
        if (!a.present() || !a.in_clock_subspace()) continue;
        double norm_before = a.bloch_norm();
        apply_pulse(a, PulseKind::half_pi, 0.0, pulse_fidelity(), rng);
        for (std::int32_t k = 0; k < seq.n_pi; ++k) {
            decay(a, k == 0 ? tau : seq.spacing, rates);
            apply_pulse(a, PulseKind::pi, xy16_phase(k), pulse_fidelity(), rng);
        }
        decay(a, tau, rates);
        apply_pulse(a, seq.final_plus ? PulseKind::half_pi : PulseKind::minus_half_pi,
                    0.0, pulse_fidelity(), rng);
        decay(a, cycle_period - seq.duration(), rates);
        if (norm_before > 0.5 && a.bloch_norm() < 1e-9) ++report.depolarized;
    }
    return report;
}

// Transport through the sorting AOD leaks clock atoms into stretched Zeeman
// states; leaked atoms stay trapped and bright but leave the clock subspace.
inline std::int32_t mf_leak(std::vector<AtomRecord>& atoms, double rate, SeededRng& rng) {
    if (rate < 0.0 || rate > 1.0)
        throw std::invalid_argument("mf_leak: rate outside [0, 1]");
    std::int32_t leaked = 0;
    for (auto& a : atoms) {
        if (!a.present() || !a.in_clock_subspace()) continue;
        if (rng.bernoulli(rate)) {
            a.internal = InternalState::mf_leaked;
            a.bloch_x = a.bloch_y = a.bloch_z = 0.0;
            ++leaked;
        }
    }
    return leaked;
}

struct ReadoutCounts {
    double pa = 0.0;  // detected in the survival reference (no pushout)
    double p0 = 0.0;  // detected in the |0> readout
    double p1 = 0.0;  // detected with a pi pulse prepended
    double pmf = 0.0; // detected in the pushout/pi/pushout leak probe
    std::int64_t n_sites = 0;
};

// Simulated destructive readout of the four measurement channels, normalized
// to the initial site count. Channels draw independently, like separate
// experimental shots on identically prepared arrays. Unpolarized atoms read
// out 50/50 in either basis and survive the leak probe with p = 1/4.
inline ReadoutCounts measure(const std::vector<AtomRecord>& atoms, SeededRng& rng) {
    ReadoutCounts out;
    out.n_sites = static_cast<std::int64_t>(atoms.size());
    if (out.n_sites == 0) return out;
    std::int64_t a_cnt = 0, p0_cnt = 0, p1_cnt = 0, mf_cnt = 0;
    for (const auto& a : atoms) {
        if (!a.present()) continue;
        ++a_cnt;
        switch (a.internal) {
        case InternalState::mf_leaked:
            ++p0_cnt;
            ++p1_cnt;
            ++mf_cnt;
            break;
        case InternalState::unpolarized:
            if (rng.bernoulli(0.5)) ++p0_cnt;
            if (rng.bernoulli(0.5)) ++p1_cnt;
            if (rng.bernoulli(0.25)) ++mf_cnt;
            break;
        default: {
            double pz = 0.5 * (1.0 + a.bloch_z);
            if (rng.bernoulli(pz)) ++p0_cnt;
            if (rng.bernoulli(1.0 - pz)) ++p1_cnt;
            // pushout, pi, pushout: clock atoms never survive both pushouts
            break;
        }
        }
    }
    double n = static_cast<double>(out.n_sites);
    out.pa = a_cnt / n;
    out.p0 = p0_cnt / n;
    out.p1 = p1_cnt / n;
    out.pmf = mf_cnt / n;
    return out;
}

// Contrast and readout probability, normalized by survival and the t = 0
// leakage fraction so that trap loss and mF leakage cancel out.
inline double contrast(const ReadoutCounts& c, double pmf_t0) {
    if (c.pa <= pmf_t0)
        throw std::domain_error("contrast: degenerate readout (pa <= pmf)");
    return (c.p0 - c.p1) / (c.pa - pmf_t0);
}

inline double readout_probability(const ReadoutCounts& c, double pmf_t0) {
    if (c.pa <= pmf_t0)
        throw std::domain_error("readout_probability: degenerate readout (pa <= pmf)");
    return (c.p0 - pmf_t0) / (c.pa - pmf_t0);
}

struct FitResult {
    double amplitude = 0.0;
    double tau_s = 0.0; // +infinity when the series shows no decay
    bool converged = false;
    std::int32_t iterations = 0;
};

// Least-squares fit of A * exp(-t/T): log-linear seed, then Gauss-Newton on
// (A, 1/T). A non-decaying series converges to the documented tau = +infinity
// sentinel; failure to converge is reported, never thrown.
inline FitResult fit_1e_time(const std::vector<double>& times_s,
                             const std::vector<double>& values) {
    if (times_s.size() != values.size() || times_s.size() < 3)
        throw std::invalid_argument("fit_1e_time: need >= 3 paired points");
    for (std::size_t i = 1; i < times_s.size(); ++i)
        if (times_s[i] <= times_s[i - 1])
            throw std::invalid_argument("fit_1e_time: times must strictly increase");

    // seed from the log-linear regression over positive values
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    std::size_t pos = 0;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (values[i] <= 0.0) continue;
        double ly = std::log(values[i]);
        sx += times_s[i];
        sy += ly;
        sxx += times_s[i] * times_s[i];
        sxy += times_s[i] * ly;
        ++pos;
    }
    FitResult out;
    if (pos < 2) return out; // nothing fittable
    double denom = pos * sxx - sx * sx;
    double slope = denom != 0.0 ? (pos * sxy - sx * sy) / denom : 0.0;
    double lambda = std::max(0.0, -slope);
    double amp = std::exp((sy + lambda * sx) / pos);

    for (std::int32_t it = 0; it < 200; ++it) {
        double jtj00 = 0, jtj01 = 0, jtj11 = 0, jtr0 = 0, jtr1 = 0;
        for (std::size_t i = 0; i < values.size(); ++i) {
            double e = std::exp(-lambda * times_s[i]);
            double r = amp * e - values[i];
            double j0 = e;                      // d r / d amp
            double j1 = -amp * times_s[i] * e;  // d r / d lambda
            jtj00 += j0 * j0;
            jtj01 += j0 * j1;
            jtj11 += j1 * j1;
            jtr0 += j0 * r;
            jtr1 += j1 * r;
        }
        double det = jtj00 * jtj11 - jtj01 * jtj01;
        double da, dl;
        if (std::abs(det) < 1e-300) {
            // lambda ~ 0 flattens the Jacobian; amplitude-only step
            da = jtj00 > 0.0 ? jtr0 / jtj00 : 0.0;
            dl = 0.0;
        } else {
            da = (jtj11 * jtr0 - jtj01 * jtr1) / det;
            dl = (jtj00 * jtr1 - jtj01 * jtr0) / det;
        }
        amp -= da;
        lambda -= dl;
        out.iterations = it + 1;
        if (!std::isfinite(amp) || !std::isfinite(lambda) || lambda < -1e6) {
            out.converged = false;
            return out;
        }
        if (lambda < 0.0) lambda = 0.0;
        double scale = std::abs(lambda) + 1e-12;
        if (std::abs(da) < 1e-12 * (std::abs(amp) + 1e-12) &&
            std::abs(dl) < 1e-12 * scale) {
            out.converged = true;
            break;
        }
    }
    out.amplitude = amp;
    out.tau_s = lambda < 1e-15 ? std::numeric_limits<double>::infinity() : 1.0 / lambda;
    return out;
}

} // namespace atomflux
