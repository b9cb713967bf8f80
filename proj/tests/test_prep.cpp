#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "atomflux/prep.hpp"

using namespace atomflux;

namespace {

ReservoirState delivered_reservoir() {
    return make_reservoir(4.17e6 * 0.60, 20.0 * 6.0, LatticeGeometry{},
                          TweezerGeometry{}, LoadingModel{}, ZoneLayout{}, 0);
}

} // namespace

TEST_CASE("pairwise ejection keeps odd counts, clears even counts", "[prep]") {
    SeededRng rng(1, 1);
    std::vector<std::int32_t> counts{0, 1, 2, 3, 4, 5, 6, 7};

    ParityResult none = parity_project(counts, 0.0, rng);
    CHECK(none.occupancy == std::vector<std::uint8_t>{0, 1, 0, 1, 0, 1, 0, 1});
    CHECK(none.doubles == std::vector<std::uint8_t>{0, 0, 0, 0, 0, 0, 0, 0});
    CHECK(none.occupied == 4);
    CHECK(none.double_count == 0);

    ParityResult all = parity_project(counts, 1.0, rng);
    CHECK(all.occupancy == std::vector<std::uint8_t>{0, 1, 1, 1, 1, 1, 1, 1});
    CHECK(all.doubles == std::vector<std::uint8_t>{0, 0, 1, 1, 1, 1, 1, 1});
    CHECK(all.occupied == 7);
    CHECK(all.double_count == 6);

    CHECK_THROWS_AS(parity_project({-1}, 0.0, rng), std::invalid_argument);
    CHECK_THROWS_AS(parity_project({1}, -0.1, rng), std::invalid_argument);
    CHECK_THROWS_AS(parity_project({1}, 1.1, rng), std::invalid_argument);
}

TEST_CASE("residual pairs survive at the configured rate", "[prep]") {
    SeededRng rng(2, 2);
    const int n = 200000;
    std::vector<std::int32_t> counts(n, 2);
    ParityResult r = parity_project(counts, 0.01, rng);
    CHECK(r.occupied == r.double_count); // count 2 only occupies via the residual
    double rate = r.double_count / static_cast<double>(n);
    double se = std::sqrt(0.01 * 0.99 / n);
    CHECK(std::abs(rate - 0.01) < 5.0 * se);
}

TEST_CASE("parity of poisson loading fills half the sites", "[prep]") {
    SeededRng rng(3, 3);
    const double mu = 5.28;
    const int n = 200000;
    std::vector<std::int32_t> counts(n);
    for (auto& c : counts) c = static_cast<std::int32_t>(rng.poisson(mu));

    // without residual pairs: P(odd) = (1 - e^{-2 mu}) / 2
    ParityResult strict = parity_project(counts, 0.0, rng);
    double p_odd = 0.5 * (1.0 - std::exp(-2.0 * mu));
    double fill = strict.occupied / static_cast<double>(n);
    CHECK(std::abs(fill - p_odd) < 4.5 * std::sqrt(p_odd * (1.0 - p_odd) / n));

    // with the default residual the fill edges just above one half
    ParityResult res = parity_project(counts, 0.01, rng);
    double p_even_pair = 0.5 * (1.0 + std::exp(-2.0 * mu)) - std::exp(-mu);
    double expect = p_odd + 0.01 * p_even_pair;
    double fill2 = res.occupied / static_cast<double>(n);
    CHECK(std::abs(fill2 - expect) < 4.5 * std::sqrt(expect * (1.0 - expect) / n));
    CHECK(expect == Catch::Approx(0.505).margin(0.001));
}

TEST_CASE("imaging survival compounds the optional protections", "[prep]") {
    PrepConfig cfg;
    CHECK(effective_imaging_survival(cfg) == 0.995);
    cfg.lattice_parking = false;
    CHECK(effective_imaging_survival(cfg) == Catch::Approx(0.995 * 0.95).epsilon(1e-12));
    cfg.pushout_enabled = false;
    CHECK(effective_imaging_survival(cfg) ==
          Catch::Approx(0.995 * 0.95 * 0.95).epsilon(1e-12));
    cfg.lattice_parking = true;
    CHECK(effective_imaging_survival(cfg) == Catch::Approx(0.995 * 0.95).epsilon(1e-12));
}

TEST_CASE("imaging detects with per-site fidelity and loses a survival fraction",
          "[prep]") {
    PrepConfig cfg;
    SeededRng rng(4, 4);
    const int n = 100000;

    std::vector<std::uint8_t> occupied(n, 1);
    ImageResult bright = image(occupied, cfg, rng);
    CHECK(bright.detected >= static_cast<std::int32_t>(n * cfg.fidelity_site) - 45);
    CHECK(bright.detected <= n);
    std::int32_t post = 0;
    for (auto v : bright.post_occupancy) post += v;
    CHECK(bright.imaging_losses == n - post);
    double survival = effective_imaging_survival(cfg);
    double se = std::sqrt(survival * (1.0 - survival) / n);
    CHECK(std::abs(post / static_cast<double>(n) - survival) < 5.0 * se);

    std::vector<std::uint8_t> empty(n, 0);
    ImageResult dark = image(empty, cfg, rng);
    // false positives at 1 - fidelity_site = 1e-4: expect ~10, allow 5 sigma
    CHECK(dark.detected <= 28);
    for (auto v : dark.post_occupancy) REQUIRE(v == 0);
    CHECK(dark.imaging_losses == 0);
}

TEST_CASE("pumping reaches the spam ceiling and failures stay unpolarized", "[prep]") {
    PrepConfig cfg; // pump 50 us, tau 5 us: exponential factor is negligible
    SeededRng rng(5, 5);
    const int n = 100000;
    std::vector<AtomRecord> batch(n);
    batch[0].internal = InternalState::lost; // must stay lost
    initialize_qubits(batch, cfg, rng);

    CHECK(batch[0].internal == InternalState::lost);
    int q0 = 0, unpol = 0;
    for (const auto& a : batch) {
        if (a.internal == InternalState::q0) {
            ++q0;
            REQUIRE(a.bloch_z == 1.0);
            REQUIRE(a.bloch_x == 0.0);
            REQUIRE(a.bloch_y == 0.0);
        } else if (a.internal == InternalState::unpolarized) {
            ++unpol;
            REQUIRE(a.bloch_norm() == 0.0);
        }
    }
    CHECK(q0 + unpol == n - 1);
    double frac = q0 / static_cast<double>(n - 1);
    double se = std::sqrt(0.981 * 0.019 / (n - 1));
    CHECK(std::abs(frac - cfg.spam_fidelity) < 5.0 * se);

    // a short pump is limited by the exponential, not the spam ceiling
    PrepConfig quick = cfg;
    quick.pump = 1;
    double p_expect = 1.0 - std::exp(-1.0 / quick.pump_tau_us);
    std::vector<AtomRecord> batch2(n);
    initialize_qubits(batch2, quick, rng);
    int q0b = 0;
    for (const auto& a : batch2)
        if (a.internal == InternalState::q0) ++q0b;
    double se2 = std::sqrt(p_expect * (1.0 - p_expect) / n);
    CHECK(std::abs(q0b / static_cast<double>(n) - p_expect) < 5.0 * se2);
}

TEST_CASE("trap model reproduces gaussian-beam relations", "[prep]") {
    TrapModel trap;
    double w = trap.waist_m();
    CHECK(w == 800.0 * 1e-9); // same product the model computes
    CHECK(trap.rayleigh_m() ==
          Catch::Approx(constants::pi * w * w / 852e-9).epsilon(1e-12));

    double u0 = uK_to_J(trap.depth_uK);
    CHECK(trap.omega_radial() ==
          Catch::Approx(std::sqrt(4.0 * u0 / (constants::rb87_mass * w * w)))
              .epsilon(1e-12));
    CHECK(trap.omega_axial() ==
          Catch::Approx(std::sqrt(2.0 * u0 / (constants::rb87_mass * trap.rayleigh_m() *
                                              trap.rayleigh_m())))
              .epsilon(1e-12));

    CHECK(trap.potential_J(0, 0, 0) == 0.0);
    CHECK(trap.potential_J(50 * w, 0, 0) == Catch::Approx(u0).epsilon(1e-9));
    double zr = trap.rayleigh_m();
    CHECK(trap.potential_J(0, 0, zr) == Catch::Approx(u0 * 0.5).epsilon(1e-12));
    // harmonic expansion near the bottom matches the quoted frequencies
    double dx = w * 1e-3;
    double k_eff = 2.0 * trap.potential_J(dx, 0, 0) / (dx * dx);
    double k_expect = constants::rb87_mass * trap.omega_radial() * trap.omega_radial();
    CHECK(k_eff == Catch::Approx(k_expect).epsilon(1e-3));
}

TEST_CASE("release and recapture decays from one toward zero", "[prep]") {
    TrapModel trap;
    SeededRng rng(6, 6);
    std::vector<double> times{0.0, 5.0, 10.0, 20.0, 40.0, 1000.0};
    auto curve = drop_recapture(trap, 12.0, times, 4000, rng);
    REQUIRE(curve.size() == times.size());
    CHECK(curve[0] > 0.999); // a 12 uK sample is deeply bound in a 370 uK trap
    CHECK(curve[5] < 0.02);  // after 1 ms the cloud has flown past the waist
    for (std::size_t i = 1; i < curve.size(); ++i) CHECK(curve[i] <= curve[i - 1] + 0.02);

    // hotter samples escape faster
    SeededRng rng2(6, 6);
    auto hot = drop_recapture(trap, 60.0, times, 4000, rng2);
    CHECK(hot[3] < curve[3]);

    // deterministic in the rng
    SeededRng a(9, 9), b(9, 9);
    CHECK(drop_recapture(trap, 12.0, times, 500, a) ==
          drop_recapture(trap, 12.0, times, 500, b));

    CHECK_THROWS_AS(drop_recapture(trap, 12.0, times, 0, rng), std::invalid_argument);
}

TEST_CASE("drop thermometry recovers the sample temperature", "[prep]") {
    TrapModel trap;
    std::vector<double> times{5.0, 10.0, 15.0, 20.0, 30.0, 50.0, 80.0};
    SeededRng truth_rng(77, 1);
    auto measured = drop_recapture(trap, 12.0, times, 6000, truth_rng);

    SeededRng fit_rng(78, 2);
    double fitted =
        fit_drop_temperature(trap, times, measured, 4.0, 24.0, 11, 3000, fit_rng);
    CHECK(fitted == Catch::Approx(12.0).epsilon(0.15));

    CHECK_THROWS_AS(
        fit_drop_temperature(trap, times, measured, 4.0, 24.0, 2, 100, fit_rng),
        std::invalid_argument);
}

TEST_CASE("a full prep cycle times out exactly and yields pumped atoms", "[prep]") {
    TweezerGeometry twz;
    LoadingModel model;
    PrepConfig cfg;
    RearrangeConfig rcfg;
    ZoneLayout layout;

    SECTION("without rearrangement") {
        ReservoirState res = delivered_reservoir();
        SeededRng rng(10, 1);
        PrepCycleResult out = prep_cycle(res, twz, model, cfg, rcfg, layout, false,
                                         false, 42, rng);
        CHECK(out.elapsed == 23050);
        CHECK(out.mu == Catch::Approx(5.28).margin(0.1));
        CHECK(out.atoms_extracted > 5000);
        CHECK(out.post_parity > 600);
        CHECK(out.detected > 600);
        CHECK(out.plan_status == PlanStatus::ok);
        CHECK(out.rearrange_defects == 0);
        REQUIRE_FALSE(out.batch.empty());
        // roughly half the 1440 sites, minus imaging losses
        CHECK(out.batch.size() > 600);
        CHECK(out.batch.size() < 840);
        for (const auto& a : out.batch) {
            REQUIRE(a.present());
            REQUIRE(a.birth_time == 42);
            REQUIRE(a.site.zone == Zone::prep);
            REQUIRE(a.site.row >= 0);
            REQUIRE(a.site.row < layout.prep_rows);
            REQUIRE(a.site.col >= 0);
            REQUIRE(a.site.col < layout.prep_cols);
            REQUIRE((a.internal == InternalState::q0 ||
                     a.internal == InternalState::unpolarized));
        }
    }

    SECTION("with rearrangement") {
        ReservoirState res = delivered_reservoir();
        SeededRng rng(10, 1);
        PrepCycleResult out =
            prep_cycle(res, twz, model, cfg, rcfg, layout, true, false, 0, rng);
        CHECK(out.elapsed == 43050);
        REQUIRE_FALSE(out.batch.empty());
        CHECK(out.batch.size() <= static_cast<std::size_t>(rcfg.target_sites));
        // filled sites sit on the every-other-column target pattern
        auto targets = target_columns(layout.prep_cols, rcfg.target_sites / layout.prep_rows);
        for (const auto& a : out.batch) {
            REQUIRE(std::find(targets.begin(), targets.end(), a.site.col) != targets.end());
        }
    }

    SECTION("with rearrangement and the storage region of interest") {
        ReservoirState res = delivered_reservoir();
        SeededRng rng(10, 1);
        PrepCycleResult out =
            prep_cycle(res, twz, model, cfg, rcfg, layout, true, true, 0, rng);
        CHECK(out.elapsed == 58050);
    }

    SECTION("deterministic for a fixed rng") {
        auto run = [&] {
            ReservoirState res = delivered_reservoir();
            SeededRng rng(11, 4);
            PrepCycleResult out =
                prep_cycle(res, twz, model, cfg, rcfg, layout, true, false, 0, rng);
            std::vector<std::int64_t> sig{out.elapsed, out.atoms_extracted,
                                          static_cast<std::int64_t>(out.batch.size()),
                                          out.post_parity, out.detected};
            for (const auto& a : out.batch)
                sig.push_back(a.site.row * 1000 + a.site.col);
            return sig;
        };
        CHECK(run() == run());
    }
}
