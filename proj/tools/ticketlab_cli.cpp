// Copyright 2026 The ticketlab Authors
// Licensed under the Apache License, Version 2.0
//
// ticketlab run <config.json>   run the strategy x seed grid, write CSVs
// ticketlab aggregate <dir>     recompute accuracy.csv from raw/*.csv
// ticketlab check               gradient and oracle self-tests
//
// TICKETLAB_WORKERS overrides the config's worker count.

#include <cstdio>
#include <exception>
#include <iostream>
#include <string>

#include "CLI11.hpp"

#include "ticketlab/harness.hpp"
#include "ticketlab/selfcheck.hpp"

namespace {

int run(const std::string& config_path) {
    const auto cfg = ticketlab::load_config(config_path);
    std::cerr << "running " << cfg.strategies.size() << " strategies x " << cfg.seeds.size() << " seeds -> "
              << cfg.output_dir.string() << '\n';
    const auto result = ticketlab::run_experiment(cfg);
    for (const auto& warning : result.warnings) std::cerr << "warning: " << warning << '\n';
    int failed = 0;
    for (const auto& cell : result.cells) {
        if (cell.error) {
            ++failed;
            std::cerr << "cell " << cell.strategy << " seed " << cell.seed << " failed: " << *cell.error << '\n';
        }
    }
    std::cout << ticketlab::emit_accuracy_curve(result.records());
    return failed == 0 ? 0 : 1;
}

int check() {
    bool ok = true;
    for (const auto& r : ticketlab::run_self_checks()) {
        std::printf("%s  %-45s value=%.3e tol=%.1e\n", r.passed ? "PASS" : "FAIL", r.name.c_str(), r.value,
                    r.tolerance);
        ok = ok && r.passed;
    }
    return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"ticketlab: compare training- and initialization-based pruning criteria"};
    app.require_subcommand(1);

    std::string config_path;
    auto* run_cmd = app.add_subcommand("run", "Run an experiment described by a JSON config");
    run_cmd->add_option("config", config_path, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);

    std::string dir;
    auto* aggregate_cmd = app.add_subcommand("aggregate", "Recompute accuracy.csv from raw per-cell CSVs");
    aggregate_cmd->add_option("dir", dir, "Experiment output directory")->required()->check(CLI::ExistingDirectory);

    auto* check_cmd = app.add_subcommand("check", "Run finite-difference and oracle self-tests");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run_cmd->parsed()) return run(config_path);
        if (aggregate_cmd->parsed()) {
            std::cout << ticketlab::aggregate_directory(dir);
            return 0;
        }
        if (check_cmd->parsed()) return check();
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
