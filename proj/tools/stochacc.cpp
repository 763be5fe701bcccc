#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "stochacc/experiment.hpp"

using namespace stochacc;

namespace {

struct CommonFlags {
    std::string config_path;
    std::vector<std::string> overrides;
    std::int64_t seed = -1;
    int workers = 0;
    std::string out_dir;
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
    cmd->add_option("config", flags.config_path, "JSON experiment config")->required();
    cmd->add_option("--override", flags.overrides, "dot-path override, e.g. ensemble.v0=[1,2]");
    cmd->add_option("--seed", flags.seed, "master seed (overrides config)");
    cmd->add_option("--workers", flags.workers, "worker threads (overrides config)");
    cmd->add_option("--out-dir", flags.out_dir, "output directory (overrides config)");
}

ExperimentConfig load_with_flags(const CommonFlags& flags) {
    std::ifstream in(flags.config_path);
    if (!in) throw ConfigError("$", "cannot open config file '" + flags.config_path + "'");
    Json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw ConfigError("$", std::string("invalid JSON: ") + e.what());
    }
    for (const auto& o : flags.overrides) apply_override(j, o);
    if (flags.seed >= 0) j["seed"] = flags.seed;
    if (flags.workers > 0) j["workers"] = flags.workers;
    if (!flags.out_dir.empty()) j["out_dir"] = flags.out_dir;
    return parse_config(j);
}

int run_and_write(const CommonFlags& flags, const char* expected_engine) {
    ExperimentConfig cfg = load_with_flags(flags);
    if (expected_engine && cfg.raw["engine"] != expected_engine)
        throw ConfigError("$.engine", std::string("this subcommand expects engine '") +
                                          expected_engine + "'");
    const auto t0 = std::chrono::steady_clock::now();
    RunRecord rec = run_experiment(cfg);
    rec.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const std::string summary = write_record_files(rec);
    std::cout << "wrote " << summary << "\n";
    if (!rec.extra.is_null()) std::cout << rec.extra.dump(2) << "\n";
    if (!rec.cases.empty()) {
        auto rows = build_report({record_to_json(rec, {})});
        if (!rows.empty()) std::cout << render_report(rows);
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"stochastic acceleration laboratory"};
    app.require_subcommand(1);

    CommonFlags run_flags, oracle_flags, coeffs_flags, changevar_flags;
    auto* run_cmd = app.add_subcommand("run", "run a lattice or walk ensemble experiment");
    add_common(run_cmd, run_flags);

    auto* oracle_cmd = app.add_subcommand("oracle", "single-scattering moments vs quadratures");
    add_common(oracle_cmd, oracle_flags);

    auto* coeffs_cmd = app.add_subcommand("coeffs", "coefficient quadrature table");
    add_common(coeffs_cmd, coeffs_flags);

    auto* changevar_cmd =
        app.add_subcommand("changevar", "line-parametrization identity check");
    add_common(changevar_cmd, changevar_flags);

    std::vector<std::string> report_files;
    auto* report_cmd = app.add_subcommand("report", "compare fitted exponents to predictions");
    report_cmd->add_option("summaries", report_files, "summary JSON files")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (run_cmd->parsed()) return run_and_write(run_flags, nullptr);
        if (oracle_cmd->parsed()) return run_and_write(oracle_flags, "oracle");
        if (coeffs_cmd->parsed()) return run_and_write(coeffs_flags, "coeffs");
        if (changevar_cmd->parsed()) return run_and_write(changevar_flags, "changevar");
        if (report_cmd->parsed()) {
            std::vector<Json> summaries;
            for (const auto& f : report_files) {
                std::ifstream in(f);
                if (!in) {
                    std::cerr << "error: cannot open " << f << "\n";
                    return 3;
                }
                Json j;
                in >> j;
                summaries.push_back(std::move(j));
            }
            std::cout << render_report(build_report(summaries));
            return 0;
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
