// SPDX-License-Identifier: Apache-2.0
//
// Continual-learning runner CLI:
//   promptfusion run --config cfg.json [--stop-after N]
//   promptfusion resume --checkpoint runs/out/ckpt_task_0003
//   promptfusion report --results runs/out/results.jsonl
//   promptfusion plot --results runs/out/results.jsonl [--out dir]

#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "pfusion/pfusion.hpp"

namespace {

int cmd_run(const std::string& config_path, int stop_after) {
    std::ifstream in(config_path);
    if (!in) {
        std::cerr << "cannot open config " << config_path << "\n";
        return 1;
    }
    nlohmann::json j = nlohmann::json::parse(in);

    // a top-level {"runs":[{...},...]} sweeps several configs sequentially
    std::vector<nlohmann::json> configs;
    if (j.contains("runs"))
        for (const auto& r : j.at("runs")) configs.push_back(r);
    else
        configs.push_back(j);

    for (const auto& cj : configs) {
        pfusion::RunConfig cfg = pfusion::config_from_json(cj);
        std::cout << "run: variant=" << cfg.fusion.variant << " rehearsal=" << cfg.rehearsal.mode
                  << " gate=" << (cfg.gate.enabled ? "on" : "off") << " -> " << cfg.output_dir
                  << "\n";
        auto summary = pfusion::run(cfg, stop_after);
        printf("  final A_T = %.4f over %d task(s)\n", summary.final_avg_acc,
               summary.metrics.n_tasks());
        if (summary.activation_rate >= 0)
            printf("  booster activation rate = %.4f\n", summary.activation_rate);
        auto records = pfusion::read_results(summary.results_path);
        auto plots = pfusion::write_plots(records, summary.output_dir);
        for (const auto& p : plots) std::cout << "  wrote " << p << "\n";
    }
    return 0;
}

int cmd_resume(const std::string& checkpoint_dir) {
    auto summary = pfusion::resume(checkpoint_dir);
    printf("resumed: final A_T = %.4f over %d task(s)\n", summary.final_avg_acc,
           summary.metrics.n_tasks());
    auto records = pfusion::read_results(summary.results_path);
    pfusion::write_plots(records, summary.output_dir);
    return 0;
}

int cmd_report(const std::string& results_path) {
    auto records = pfusion::read_results(results_path);
    std::cout << pfusion::format_report(records);
    return 0;
}

int cmd_plot(const std::string& results_path, std::string out_dir) {
    if (out_dir.empty())
        out_dir = std::filesystem::path(results_path).parent_path().string();
    if (out_dir.empty()) out_dir = ".";
    auto records = pfusion::read_results(results_path);
    for (const auto& p : pfusion::write_plots(records, out_dir)) std::cout << "wrote " << p << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"PromptFusion continual-learning runner"};
    app.require_subcommand(1);

    std::string config_path, checkpoint_dir, results_path, out_dir;
    int stop_after = -1;

    auto* run_cmd = app.add_subcommand("run", "train a continual stream from a config file");
    run_cmd->add_option("--config", config_path, "JSON run config")->required();
    run_cmd->add_option("--stop-after", stop_after, "stop after task N (checkpoint remains resumable)");

    auto* resume_cmd = app.add_subcommand("resume", "continue a run from a task checkpoint");
    resume_cmd->add_option("--checkpoint", checkpoint_dir, "checkpoint directory")->required();

    auto* report_cmd = app.add_subcommand("report", "print summary tables from a results file");
    report_cmd->add_option("--results", results_path, "results.jsonl path")->required();

    auto* plot_cmd = app.add_subcommand("plot", "emit SVG plots from a results file");
    plot_cmd->add_option("--results", results_path, "results.jsonl path")->required();
    plot_cmd->add_option("--out", out_dir, "output directory (defaults next to results)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run_cmd->parsed()) return cmd_run(config_path, stop_after);
        if (resume_cmd->parsed()) return cmd_resume(checkpoint_dir);
        if (report_cmd->parsed()) return cmd_report(results_path);
        if (plot_cmd->parsed()) return cmd_plot(results_path, out_dir);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
