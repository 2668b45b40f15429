#include "saop/experiment.hpp"

#include "CLI11.hpp"

#include <iostream>

namespace ex = saop::experiment;

int main(int argc, char** argv) {
    CLI::App app{"Sampling-based policy search with contraction tubes"};
    app.set_version_flag("--version", std::string(saop::kVersion));
    app.require_subcommand(1);

    std::string config_path;
    int runs = 0;
    int jobs = 1;
    bool same_seed = false;
    std::string weights_path;

    auto* run = app.add_subcommand("run", "Run one search and write its artifacts");
    run->add_option("-c,--config", config_path, "JSON configuration")->required();

    auto* multirun = app.add_subcommand("multirun", "Repeat the search with consecutive seeds");
    multirun->add_option("-c,--config", config_path, "JSON configuration")->required();
    multirun->add_option("--runs", runs, "Number of runs (overrides the config)")->check(CLI::PositiveNumber);
    multirun->add_option("--jobs", jobs, "Runs executed in parallel")->check(CLI::PositiveNumber);
    multirun->add_flag("--same-seed", same_seed, "Reuse the configured seed for every run (determinism audit)");

    auto* verify = app.add_subcommand("verify", "Check a weight vector against the contraction tube");
    verify->add_option("-c,--config", config_path, "JSON configuration")->required();
    verify->add_option("-w,--weights", weights_path, "Weights file: JSON array or {\"weights\": [...]}")->required();

    CLI11_PARSE(app, argc, argv);

    ex::ExperimentConfig cfg;
    try {
        cfg = ex::load_config(config_path, multirun->parsed() && runs > 0 ? std::optional<int>(runs) : std::nullopt);
    } catch (const ex::ConfigError& e) {
        std::cerr << ex::error_json("invalid_config", e.what(), e.key()).dump() << '\n';
        return ex::kInvalidConfig;
    }

    try {
        if (run->parsed()) return ex::cmd_run(cfg);
        if (multirun->parsed()) return ex::cmd_multirun(cfg, jobs, same_seed);
        return ex::cmd_verify(cfg, weights_path);
    } catch (const ex::ConfigError& e) {
        std::cerr << ex::error_json("invalid_config", e.what(), e.key()).dump() << '\n';
        return ex::kInvalidConfig;
    } catch (const std::exception& e) {
        std::cerr << ex::error_json("runtime_error", e.what()).dump() << '\n';
        return ex::kFailed;
    }
}
