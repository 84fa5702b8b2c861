#include <CLI11.hpp>

#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "saklqr/config.hpp"
#include "saklqr/experiments.hpp"
#include "saklqr/model_io.hpp"

namespace {

struct CommonArgs {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out_dir;
    std::string model_path;
    std::string controller = "saklqr";
};

saklqr::ExperimentConfig resolve_config(const CommonArgs& args) {
    saklqr::ExperimentConfig cfg;
    if (!args.config_path.empty()) {
        cfg = saklqr::load_config(args.config_path);
    }
    if (args.seed) {
        cfg.seed = *args.seed;
    }
    if (!args.out_dir.empty()) {
        cfg.out_dir = args.out_dir;
    }
    return cfg;
}

saklqr::FittedStack resolve_stack(const CommonArgs& args,
                                  const saklqr::ExperimentConfig& cfg) {
    if (!args.model_path.empty()) {
        return saklqr::load_stack(args.model_path);
    }
    return saklqr::fit_pipeline(cfg);
}

void add_common(CLI::App* cmd, CommonArgs& args, bool with_controller) {
    cmd->add_option("--config", args.config_path, "Experiment configuration file (JSON)");
    cmd->add_option("--seed", args.seed, "Override the configuration seed");
    cmd->add_option("--out", args.out_dir, "Output directory");
    cmd->add_option("--model", args.model_path, "Reuse a fitted model file");
    if (with_controller) {
        cmd->add_option("--controller", args.controller, "Controller: saklqr|pid|smc")
            ->check(CLI::IsMember({"saklqr", "pid", "smc"}));
    }
}

int fail(const std::string& category, const std::string& message) {
    std::cerr << "{\"error\":{\"category\":\"" << category << "\",\"message\":\"" << message
              << "\"}}\n";
    return category == "config" ? 2 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"State-adaptive Koopman LQR force-control benchmark"};
    app.require_subcommand(1);

    CommonArgs args;
    auto* cmd_fit = app.add_subcommand("fit", "Collect data and train the region models");
    add_common(cmd_fit, args, false);
    auto* cmd_track = app.add_subcommand("track", "Run one force-tracking experiment");
    add_common(cmd_track, args, true);
    auto* cmd_compare =
        app.add_subcommand("compare", "Controller comparison over all trajectory cases");
    add_common(cmd_compare, args, false);
    auto* cmd_observables =
        app.add_subcommand("observables", "Rank lifting dictionaries on held-out data");
    add_common(cmd_observables, args, false);
    auto* cmd_ablation = app.add_subcommand("centroid-ablation",
                                            "Zigzag sweep with and without the regulator");
    add_common(cmd_ablation, args, false);

    CLI11_PARSE(app, argc, argv);

    try {
        const saklqr::ExperimentConfig cfg = resolve_config(args);
        std::filesystem::create_directories(cfg.out_dir);

        if (cmd_fit->parsed()) {
            const auto stack = saklqr::fit_pipeline(cfg);
            const std::string path = cfg.out_dir + "/model.json";
            saklqr::save_stack(stack, path, &cfg);
            std::cout << "model written to " << path << " (" << stack.regions.size()
                      << " regions, M=" << stack.dict.dimension() << ")\n";
            for (int r = 0; r < stack.regions.size(); ++r) {
                std::cout << "  region " << r
                          << ": output R2=" << stack.regions.models[r].output_r2
                          << (stack.regions.fallback[r] ? " (global fallback)" : "") << "\n";
            }
        } else if (cmd_track->parsed()) {
            const auto stack = resolve_stack(args, cfg);
            const auto kind = saklqr::controller_kind_from_string(args.controller);
            const std::string csv = cfg.out_dir + "/track_" + args.controller + ".csv";
            const auto result = saklqr::run_tracking_experiment(cfg, stack, kind, csv);
            if (result.aborted) {
                return fail("runtime", "plant diverged; partial log retained at " + csv);
            }
            std::cout << "controller=" << args.controller
                      << " rmse=" << result.metrics.rmse << " mae=" << result.metrics.mae
                      << " max_ae=" << result.metrics.max_ae << "\nlog: " << csv << "\n";
        } else if (cmd_compare->parsed()) {
            const auto stack = resolve_stack(args, cfg);
            const auto report = saklqr::run_comparison(cfg, stack, cfg.out_dir);
            std::printf("%-8s %-9s %-6s %10s %10s %10s\n", "ctrl", "wave", "omega", "rmse",
                        "mae", "max_ae");
            for (const auto& row : report.rows) {
                std::printf("%-8s %-9s %-6.2f %10.5f %10.5f %10.5f\n",
                            row.controller.c_str(), row.wave.c_str(), row.omega,
                            row.metrics.rmse, row.metrics.mae, row.metrics.max_ae);
            }
            std::cout << "summary: " << cfg.out_dir << "/comparison_summary.csv\n";
        } else if (cmd_observables->parsed()) {
            const auto report = saklqr::run_observable_comparison(cfg, cfg.out_dir);
            std::printf("%-10s %-7s %10s %10s %10s %10s\n", "method", "status", "avg_rmse",
                        "avg_r2", "avg_mae", "output_r2");
            for (const auto& row : report.rows) {
                if (row.failed) {
                    std::printf("%-10s %-7s (%s)\n", row.method.c_str(), "failed",
                                row.error.c_str());
                } else {
                    std::printf("%-10s %-7s %10.5f %10.5f %10.5f %10.5f\n",
                                row.method.c_str(), "ok", row.avg_rmse, row.avg_r2,
                                row.avg_mae, row.output_r2);
                }
            }
            std::cout << "table: " << cfg.out_dir << "/observables.csv\n";
        } else if (cmd_ablation->parsed()) {
            const auto stack = resolve_stack(args, cfg);
            const auto report = saklqr::run_centroid_ablation(cfg, stack, cfg.out_dir);
            auto print_row = [](const char* name, const saklqr::AblationRow& row) {
                std::printf("%-20s centroid_err=%.3f cm coverage=%.1f%% force_err=%.2f%% "
                            "time=%.1f s\n",
                            name, row.mean_centroid_error_cm, row.coverage_pct,
                            row.mean_force_error_pct, row.completion_time_s);
            };
            print_row("standard", report.standard);
            print_row("centroid-regulated", report.regulated);
            std::cout << "summary: " << cfg.out_dir << "/ablation_summary.csv\n";
        }
    } catch (const std::exception& e) {
        const std::string msg = e.what();
        return fail(msg.rfind("config", 0) == 0 ? "config" : "runtime", msg);
    }
    return 0;
}
