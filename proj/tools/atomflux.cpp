// Command-line driver for the atomflux simulation library.
//
// Subcommands map one-to-one onto the experiment drivers; every run is fully
// determined by (config, seed, trial), and all emitted bytes — stdout and
// files — are reproducible across reruns.

#include <CLI11.hpp>
#include <json.hpp>

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "atomflux/experiments.hpp"

namespace fs = std::filesystem;
using namespace atomflux;

namespace {

std::string fmt(double v) {
    char buf[64];
    auto* end = std::to_chars(buf, buf + sizeof buf, v).ptr;
    return std::string(buf, end);
}

struct CommonArgs {
    std::string config_path;
    std::string out_dir = "out";
    std::int64_t seed = -1;   // -1: keep the config's seed
    std::int32_t trials = -1; // -1: keep the config's trial count
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_path, "config file (INI)");
    cmd->add_option("--out", args.out_dir, "output directory")
        ->capture_default_str();
    cmd->add_option("--seed", args.seed, "override the config seed");
    cmd->add_option("--trials", args.trials, "override the config trial count");
}

SimulationConfig resolve_config(const CommonArgs& args) {
    SimulationConfig cfg = args.config_path.empty()
                               ? SimulationConfig{}
                               : load_config_file(args.config_path);
    if (args.seed >= 0) cfg.seed = static_cast<std::uint64_t>(args.seed);
    if (args.trials >= 1) cfg.trials = args.trials;
    return cfg;
}

std::string trial_path(const std::string& dir, const std::string& stem,
                       std::int32_t trial, const char* ext) {
    fs::create_directories(dir);
    return (fs::path(dir) / (stem + "_trial" + std::to_string(trial) + ext)).string();
}

int run_flux_cmd(const CommonArgs& args, const std::string& mode_name,
                 double duration_s, double min_rate_hz, bool events_on) {
    SimulationConfig cfg = resolve_config(args);
    FluxOptions opt;
    if (mode_name == "atoms") opt.mode = FluxMode::atoms;
    else if (mode_name == "qubits") opt.mode = FluxMode::qubits;
    else if (mode_name == "qubits_rearranged") opt.mode = FluxMode::qubits_rearranged;
    else throw ConfigError("flux: unknown mode " + mode_name);
    if (duration_s > 0.0) opt.duration = static_cast<Micros>(duration_s * 1e6);

    bool below = false;
    for (std::int32_t trial = 0; trial < cfg.trials; ++trial) {
        std::string stem = std::string("flux_") + flux_mode_name(opt.mode);
        CsvWriter csv(trial_path(args.out_dir, stem, trial, ".csv"), "flux-v1",
                      flux_csv_columns());
        std::unique_ptr<JsonlWriter> events;
        if (events_on)
            events = std::make_unique<JsonlWriter>(
                trial_path(args.out_dir, stem, trial, ".jsonl"));
        FluxReport rep = run_flux(cfg, opt, trial, &csv, events.get());
        std::cout << "flux mode=" << flux_mode_name(rep.mode) << " trial=" << trial
                  << " cycles=" << rep.cycles << " delivered=" << rep.delivered
                  << " active_rate_hz=" << fmt(rep.active_rate_hz)
                  << " total_rate_hz=" << fmt(rep.total_rate_hz)
                  << " mean_fill=" << fmt(rep.mean_fill)
                  << " stalled_us=" << rep.stalled << "\n";
        if (min_rate_hz > 0.0 && rep.active_rate_hz < min_rate_hz) below = true;
    }
    return below ? 3 : 0;
}

int run_deplete_cmd(const CommonArgs& args, std::int32_t extractions,
                    std::int32_t crossing_min, std::int32_t crossing_max) {
    SimulationConfig cfg = resolve_config(args);
    DepletionOptions opt;
    opt.extractions = extractions;
    bool outside = false;
    for (std::int32_t trial = 0; trial < cfg.trials; ++trial) {
        CsvWriter csv(trial_path(args.out_dir, "deplete", trial, ".csv"),
                      "deplete-v1", depletion_csv_columns());
        DepletionReport rep = run_depletion(cfg, opt, trial, &csv);
        std::cout << "deplete trial=" << trial
                  << " initial_fill=" << fmt(rep.initial_fill)
                  << " early_mean=" << fmt(rep.early_mean)
                  << " crossing=" << rep.crossing << "\n";
        if (crossing_min >= 0 && (rep.crossing < crossing_min)) outside = true;
        if (crossing_max >= 0 && (rep.crossing < 0 || rep.crossing > crossing_max))
            outside = true;
    }
    return outside ? 3 : 0;
}

int run_maintain_cmd(const CommonArgs& args, const std::string& mode_name,
                     double duration_s, bool replenish, std::int64_t min_population,
                     bool events_on) {
    SimulationConfig cfg = resolve_config(args);
    MaintenanceOptions opt;
    if (mode_name == "atoms") opt.mode = RunMode::atoms;
    else if (mode_name == "z") opt.mode = RunMode::zbasis;
    else if (mode_name == "x") opt.mode = RunMode::xbasis;
    else throw ConfigError("maintain: unknown mode " + mode_name);
    if (duration_s > 0.0) opt.duration = static_cast<Micros>(duration_s * 1e6);
    opt.replenish = replenish;

    bool below = false;
    for (std::int32_t trial = 0; trial < cfg.trials; ++trial) {
        CsvWriter csv(trial_path(args.out_dir, "maintain", trial, ".csv"),
                      "maintain-v1", maintenance_csv_columns());
        std::unique_ptr<JsonlWriter> events;
        if (events_on)
            events = std::make_unique<JsonlWriter>(
                trial_path(args.out_dir, "maintain", trial, ".jsonl"));
        MaintenanceReport rep = run_maintenance(cfg, opt, trial, &csv, events.get());
        std::cout << "maintain mode=" << mode_name << " trial=" << trial
                  << " assembled=" << rep.assembly.population
                  << " assembly_us=" << rep.assembly.elapsed
                  << " cycles=" << rep.cycles
                  << " steady_mean=" << fmt(rep.steady_population_mean)
                  << " min_mid=" << rep.min_population_mid
                  << " refill_fill=" << fmt(rep.mean_refill_fill)
                  << " duty=" << fmt(rep.mean_duty)
                  << " stalled_cycles=" << rep.stalled_cycles
                  << " final=" << rep.final_population << "\n";
        if (min_population > 0 && rep.min_population_mid < min_population)
            below = true;
    }
    return below ? 3 : 0;
}

int run_coherence_cmd(const CommonArgs& args, const std::string& kind_name,
                      const std::string& condition, std::int32_t ensemble,
                      std::int32_t points, double fidelity, double max_tau_error) {
    SimulationConfig cfg = resolve_config(args);
    CoherenceScanOptions opt;
    if (kind_name == "t2") opt.kind = ScanKind::t2;
    else if (kind_name == "t1") opt.kind = ScanKind::t1;
    else throw ConfigError("coherence: unknown kind " + kind_name);
    opt.condition = condition;
    if (ensemble > 0) opt.ensemble = ensemble;
    if (points > 0) opt.points = points;
    opt.pulse_fidelity = fidelity;

    bool outside = false;
    for (std::int32_t trial = 0; trial < cfg.trials; ++trial) {
        CsvWriter csv(trial_path(args.out_dir, "coherence_" + kind_name + "_" + condition,
                                 trial, ".csv"),
                      "coherence-v1", coherence_csv_columns());
        CoherenceScanReport rep = run_coherence_scan(cfg, opt, trial, &csv);
        double rel = rep.fit.tau_s / rep.expected_tau_s - 1.0;
        std::cout << "coherence kind=" << kind_name << " condition=" << condition
                  << " trial=" << trial << " expected_s=" << fmt(rep.expected_tau_s)
                  << " fitted_s=" << fmt(rep.fit.tau_s)
                  << " rel_error=" << fmt(rel)
                  << " pmf0=" << fmt(rep.pmf0)
                  << " converged=" << (rep.fit.converged ? "true" : "false") << "\n";
        if (max_tau_error > 0.0 &&
            (!rep.fit.converged || std::abs(rel) > max_tau_error))
            outside = true;
    }
    return outside ? 3 : 0;
}

int run_rearrange_bench(const CommonArgs& args, const std::string& in_path,
                        std::int32_t targets_per_row) {
    SimulationConfig cfg = resolve_config(args);
    std::ifstream in(in_path);
    if (!in) throw ConfigError("rearrange-bench: cannot open " + in_path);

    std::vector<std::vector<std::int32_t>> detections;
    std::size_t cols = 0;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::vector<std::int32_t> row_cols;
        std::size_t col = 0;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            if (cell == "1") row_cols.push_back(static_cast<std::int32_t>(col));
            else if (cell != "0")
                throw ConfigError("rearrange-bench: cells must be 0 or 1");
            ++col;
        }
        cols = std::max(cols, col);
        detections.push_back(std::move(row_cols));
    }
    if (detections.empty())
        throw ConfigError("rearrange-bench: no occupancy rows in " + in_path);

    auto targets = target_columns(static_cast<std::int32_t>(cols), targets_per_row);
    ZoneLayout layout;
    ArrayPlan plan = plan_array(detections, targets, cfg.rearrange, layout, false);

    nlohmann::ordered_json j;
    j["rows"] = nlohmann::ordered_json::array();
    for (const auto& rp : plan.rows) {
        nlohmann::ordered_json jr;
        jr["row"] = rp.row;
        jr["moves"] = nlohmann::ordered_json::array();
        for (const auto& mv : rp.moves)
            jr["moves"].push_back({mv.first, mv.second});
        jr["displacement_cols"] = rp.displacement_cols;
        jr["defects"] = rp.defects;
        jr["duration_us"] = rp.duration;
        j["rows"].push_back(std::move(jr));
    }
    j["targets_per_row"] = targets_per_row;
    j["total_defects"] = plan.total_defects;
    j["total_displacement_cols"] = plan.total_displacement_cols;
    j["total_time_us"] = plan.total_time;
    j["status"] = plan.status == PlanStatus::ok ? "ok" : "insufficient_atoms";

    fs::create_directories(args.out_dir);
    std::string out_path = (fs::path(args.out_dir) / "rearrange_plan.json").string();
    std::ofstream out(out_path, std::ios::binary);
    out << j.dump(2) << "\n";
    std::cout << "rearrange-bench rows=" << plan.rows.size()
              << " defects=" << plan.total_defects
              << " displacement_cols=" << plan.total_displacement_cols
              << " total_time_us=" << plan.total_time << " -> " << out_path << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"atomflux: continuously reloaded tweezer-array simulator"};
    app.require_subcommand(1);

    CommonArgs common;

    auto* flux = app.add_subcommand("flux", "delivery-rate benchmark");
    std::string flux_mode = "atoms";
    double flux_duration = 0.0, flux_min_rate = 0.0;
    bool flux_events = false;
    add_common(flux, common);
    flux->add_option("--mode", flux_mode, "atoms | qubits | qubits_rearranged")
        ->capture_default_str();
    flux->add_option("--duration", flux_duration, "seconds of beam time");
    flux->add_option("--min-rate", flux_min_rate,
                     "exit 3 if the active rate falls below this (Hz)");
    flux->add_flag("--events", flux_events, "also write a JSONL event log");

    auto* deplete = app.add_subcommand("deplete", "single-reservoir depletion series");
    std::int32_t dep_extractions = 120, dep_cross_min = -1, dep_cross_max = -1;
    add_common(deplete, common);
    deplete->add_option("--extractions", dep_extractions)->capture_default_str();
    deplete->add_option("--crossing-min", dep_cross_min,
                        "exit 3 if the half crossing lands earlier");
    deplete->add_option("--crossing-max", dep_cross_max,
                        "exit 3 if the half crossing lands later (or never)");

    auto* maintain = app.add_subcommand("maintain", "assembly + continuous reloading");
    std::string maintain_mode = "atoms";
    double maintain_duration = 0.0;
    bool maintain_no_replenish = false, maintain_events = false;
    std::int64_t maintain_min_pop = 0;
    add_common(maintain, common);
    maintain->add_option("--mode", maintain_mode, "atoms | z | x")->capture_default_str();
    maintain->add_option("--duration", maintain_duration, "seconds after assembly");
    maintain->add_flag("--no-replenish", maintain_no_replenish,
                       "stop refilling after assembly (decay measurement)");
    maintain->add_option("--min-population", maintain_min_pop,
                         "exit 3 if any mid-cycle population falls below this");
    maintain->add_flag("--events", maintain_events, "also write a JSONL event log");

    auto* coherence = app.add_subcommand("coherence", "ensemble hold-time scan");
    std::string coh_kind = "t2", coh_condition = "storage";
    std::int32_t coh_ensemble = 0, coh_points = 0;
    double coh_fidelity = 1.0, coh_max_err = 0.0;
    add_common(coherence, common);
    coherence->add_option("--kind", coh_kind, "t2 | t1")->capture_default_str();
    coherence
        ->add_option("--condition", coh_condition,
                     "reference | mot | imaging | imaging_shielded | storage")
        ->capture_default_str();
    coherence->add_option("--ensemble", coh_ensemble, "atoms in the scan");
    coherence->add_option("--points", coh_points, "hold times in the scan");
    coherence->add_option("--fidelity", coh_fidelity, "wrapper pulse fidelity")
        ->capture_default_str();
    coherence->add_option("--max-tau-error", coh_max_err,
                          "exit 3 if |fit/expected - 1| exceeds this");

    auto* bench = app.add_subcommand("rearrange-bench",
                                     "plan a sort for a 0/1 occupancy CSV");
    std::string bench_in;
    std::int32_t bench_targets = 45;
    add_common(bench, common);
    bench->add_option("--in", bench_in, "occupancy CSV (rows of 0/1 cells)")
        ->required();
    bench->add_option("--targets-per-row", bench_targets)->capture_default_str();

    auto* capacity = app.add_subcommand("capacity", "replenishment requirement");
    double cap_atoms = 10000.0, cap_loss = 0.0015, cap_layer = 0.001;
    capacity->add_option("--atoms", cap_atoms)->capture_default_str();
    capacity->add_option("--loss-per-layer", cap_loss)->capture_default_str();
    capacity->add_option("--layer-time", cap_layer, "seconds")->capture_default_str();

    auto* config_cmd = app.add_subcommand("config", "print the canonical config");
    add_common(config_cmd, common);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (flux->parsed())
            return run_flux_cmd(common, flux_mode, flux_duration, flux_min_rate,
                                flux_events);
        if (deplete->parsed())
            return run_deplete_cmd(common, dep_extractions, dep_cross_min,
                                   dep_cross_max);
        if (maintain->parsed())
            return run_maintain_cmd(common, maintain_mode, maintain_duration,
                                    !maintain_no_replenish, maintain_min_pop,
                                    maintain_events);
        if (coherence->parsed())
            return run_coherence_cmd(common, coh_kind, coh_condition, coh_ensemble,
                                     coh_points, coh_fidelity, coh_max_err);
        if (bench->parsed()) return run_rearrange_bench(common, bench_in, bench_targets);
        if (capacity->parsed()) {
            std::cout << "capacity required_hz="
                      << fmt(replenishment_requirement(cap_atoms, cap_loss, cap_layer))
                      << "\n";
            return 0;
        }
        if (config_cmd->parsed()) {
            std::cout << serialize_config(resolve_config(common));
            return 0;
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
