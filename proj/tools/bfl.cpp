// Command-line front end: run one experiment, sweep a grid of them, or run the
// brute-force aggregator oracles.

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "bfl/config.hpp"
#include "bfl/experiment.hpp"
#include "bfl/oracle.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;

std::filesystem::path default_out_dir()
{
    if (const char* env = std::getenv("BFL_OUT_DIR"); env != nullptr && *env != '\0') {
        return env;
    }
    return ".";
}

void ensure_dir(const std::filesystem::path& dir)
{
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) {
        throw std::runtime_error("cannot create output directory " + dir.string() + ": " + ec.message());
    }
}

void write_run(const bfl::ExperimentConfig& cfg, const std::filesystem::path& dir, const std::string& stem)
{
    const bfl::RunReport report = bfl::run_experiment(cfg);
    const auto csv = dir / (stem + ".csv");
    const auto json = dir / (stem + ".json");
    bfl::emit_report(report, csv, json);
    std::printf("%s: final_acc=%.4f mean_tpr=%.4f mean_tnr=%.4f -> %s\n", stem.c_str(), report.final_acc,
                report.mean_tpr, report.mean_tnr, csv.string().c_str());
}

struct SweepGrid {
    std::vector<double> epsilon;
    std::vector<std::string> attack;
    std::vector<std::string> aggregator;
    std::vector<std::string> defense;  // "none" or a filter name
};

SweepGrid load_grid(const std::filesystem::path& path, const bfl::ExperimentConfig& base)
{
    std::ifstream in(path);
    if (!in) {
        throw bfl::ConfigError("", "cannot read grid file " + path.string());
    }
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw bfl::ConfigError("", "grid file " + path.string() + " is not valid JSON: " + e.what());
    }
    if (!j.is_object()) {
        throw bfl::ConfigError("<grid>", "expected an object");
    }
    SweepGrid grid;
    for (auto it = j.begin(); it != j.end(); ++it) {
        const std::string& key = it.key();
        if (!it->is_array() || it->empty()) {
            throw bfl::ConfigError("grid." + key, "expected a non-empty array");
        }
        try {
            if (key == "epsilon") {
                grid.epsilon = it->get<std::vector<double>>();
            } else if (key == "attack") {
                grid.attack = it->get<std::vector<std::string>>();
            } else if (key == "aggregator") {
                grid.aggregator = it->get<std::vector<std::string>>();
            } else if (key == "defense") {
                grid.defense = it->get<std::vector<std::string>>();
            } else {
                throw bfl::ConfigError("grid." + key, "unknown axis");
            }
        } catch (const nlohmann::json::exception& e) {
            throw bfl::ConfigError("grid." + key, e.what());
        }
    }
    if (grid.epsilon.empty()) {
        grid.epsilon = {base.attack.epsilon};
    }
    if (grid.attack.empty()) {
        grid.attack = {bfl::to_string(base.attack.kind)};
    }
    if (grid.aggregator.empty()) {
        grid.aggregator = {bfl::to_string(base.aggregator.kind)};
    }
    if (grid.defense.empty()) {
        grid.defense = {base.defense ? bfl::to_string(base.defense->filter) : "none"};
    }
    return grid;
}

std::string cell_name(double eps, const std::string& attack, const std::string& agg, const std::string& defense)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "eps%g", eps);
    return std::string(buf) + "_" + attack + "_" + agg + "_" + defense;
}

int run_sweep(const bfl::ExperimentConfig& base, const std::filesystem::path& grid_path,
              const std::filesystem::path& dir)
{
    const SweepGrid grid = load_grid(grid_path, base);
    // Build and validate every cell before running any of them.
    std::vector<std::pair<std::string, bfl::ExperimentConfig>> cells;
    for (double eps : grid.epsilon) {
        for (const auto& attack : grid.attack) {
            for (const auto& agg : grid.aggregator) {
                for (const auto& defense : grid.defense) {
                    bfl::ExperimentConfig cfg = base;
                    cfg.attack.epsilon = eps;
                    const auto kind = bfl::parse_attack_kind(attack);
                    if (!kind) {
                        throw bfl::ConfigError("grid.attack", "unknown value \"" + attack + "\"");
                    }
                    cfg.attack.kind = *kind;
                    const auto agg_kind = bfl::parse_aggregator_kind(agg);
                    if (!agg_kind) {
                        throw bfl::ConfigError("grid.aggregator", "unknown value \"" + agg + "\"");
                    }
                    cfg.aggregator.kind = *agg_kind;
                    if (defense == "none") {
                        cfg.defense.reset();
                    } else {
                        const auto filter = bfl::parse_filter_kind(defense);
                        if (!filter) {
                            throw bfl::ConfigError("grid.defense", "unknown value \"" + defense + "\"");
                        }
                        bfl::DefenseConfig d = base.defense.value_or(bfl::DefenseConfig{});
                        d.filter = *filter;
                        if (*filter != bfl::FilterKind::fixed) {
                            d.tau.reset();
                        }
                        cfg.defense = d;
                    }
                    bfl::validate(cfg);
                    cells.emplace_back(cell_name(eps, attack, agg, defense), std::move(cfg));
                }
            }
        }
    }
    ensure_dir(dir);
    for (const auto& [name, cfg] : cells) {
        write_run(cfg, dir, name);
    }
    return kExitOk;
}

int run_oracle(const std::string& name, std::size_t instances, std::uint64_t seed)
{
    std::vector<bfl::AggregatorKind> kinds;
    if (name == "all") {
        kinds = {bfl::AggregatorKind::fedavg,     bfl::AggregatorKind::median,     bfl::AggregatorKind::trim_avg,
                 bfl::AggregatorKind::geo_median, bfl::AggregatorKind::multi_krum, bfl::AggregatorKind::nnm_krum};
    } else if (auto kind = bfl::parse_aggregator_kind(name)) {
        kinds = {*kind};
    } else {
        std::fprintf(stderr, "error: unknown aggregator \"%s\"\n", name.c_str());
        return kExitConfig;
    }
    bool ok = true;
    for (auto kind : kinds) {
        const auto result = bfl::oracle::run_suite(kind, instances, seed);
        std::printf("[%s] %s: %zu/%zu instances match the brute-force oracle\n", result.passed() ? "PASS" : "FAIL",
                    bfl::to_string(kind).c_str(), result.instances - result.mismatches, result.instances);
        for (const auto& f : result.failures) {
            std::printf("    %s\n", f.c_str());
        }
        ok = ok && result.passed();
    }
    return ok ? kExitOk : kExitFailure;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Byzantine-robust federated learning simulator"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir;
    std::uint64_t seed = 0;

    auto* run = app.add_subcommand("run", "Run one experiment and write its CSV and JSON report");
    run->add_option("--config", config_path, "Experiment config (JSON)")->required();
    run->add_option("--out-dir", out_dir, "Output directory (default: $BFL_OUT_DIR or .)");
    auto* seed_opt = run->add_option("--seed", seed, "Override the config seed");

    std::string grid_path;
    auto* sweep = app.add_subcommand("sweep", "Run the cartesian grid of epsilon x attack x aggregator x defense");
    sweep->add_option("--config", config_path, "Base experiment config (JSON)")->required();
    sweep->add_option("--grid", grid_path, "Grid file (JSON arrays per axis)")->required();
    sweep->add_option("--out-dir", out_dir, "Output directory (default: $BFL_OUT_DIR or .)");

    std::string oracle_name;
    std::size_t instances = 100;
    std::uint64_t oracle_seed = 7;
    auto* oracle = app.add_subcommand("oracle", "Check an aggregator against its brute-force oracle");
    oracle->add_option("aggregator", oracle_name, "Aggregator name, or \"all\"")->required();
    oracle->add_option("--instances", instances, "Random instances per rule");
    oracle->add_option("--seed", oracle_seed, "Instance generator seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitConfig;
    }

    const std::filesystem::path dir = out_dir.empty() ? default_out_dir() : std::filesystem::path(out_dir);
    try {
        if (*oracle) {
            return run_oracle(oracle_name, instances, oracle_seed);
        }
        bfl::ExperimentConfig cfg = bfl::load_config(config_path);
        if (*run) {
            if (*seed_opt) {
                cfg.seed = seed;
            }
            ensure_dir(dir);
            write_run(cfg, dir, std::filesystem::path(config_path).stem().string());
            return kExitOk;
        }
        return run_sweep(cfg, grid_path, dir);
    } catch (const bfl::ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kExitConfig;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitFailure;
    }
}
