// Command-line front end: run one experiment config, expand a hyperparameter
// grid, or aggregate finished runs into a comparison report.

#include <cstdio>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fedmtl/errors.hpp"
#include "fedmtl/runner.hpp"

namespace {

void print_final(const fedmtl::MetricsLog& log) {
    const fedmtl::RoundRecord& last = log.final_round();
    std::printf("final round %zu: overall accuracy %.2f%%, loss %.4f\n", last.round,
                100.0 * last.overall_accuracy, last.overall_loss);
    for (std::size_t t = 0; t < log.task_names.size(); ++t)
        std::printf("  %-20s %.2f%%\n", log.task_names[t].c_str(),
                    100.0 * last.task_accuracy[t]);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Layered multi-task federated learning simulator"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir;
    std::uint64_t seed = 0;
    bool seed_set = false;
    std::size_t threads = 1;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("-c,--config", config_path, "experiment config file")->required();
        cmd->add_option("-o,--out", out_dir, "output directory (overrides the config)");
        cmd->add_option("--seed", seed, "seed override")->each([&](const std::string&) {
            seed_set = true;
        });
        cmd->add_option("-j,--threads", threads, "parallel client updates");
    };

    CLI::App* run_cmd = app.add_subcommand("run", "run one experiment");
    add_common(run_cmd);

    CLI::App* grid_cmd = app.add_subcommand("grid", "expand and run the hyperparameter grid");
    add_common(grid_cmd);

    CLI::App* report_cmd =
        app.add_subcommand("report", "aggregate finished runs into a comparison table");
    std::vector<std::string> report_runs;
    std::string report_out;
    report_cmd->add_option("-r,--run", report_runs, "label=dir of a finished run")->required();
    report_cmd->add_option("-o,--out", report_out, "report output directory")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (run_cmd->parsed() || grid_cmd->parsed()) {
            fedmtl::ExperimentConfig cfg = fedmtl::parse_config(config_path);
            if (seed_set) cfg.seed = seed;
            if (!out_dir.empty()) cfg.output_dir = out_dir;
            if (cfg.output_dir.empty())
                throw fedmtl::ConfigError("no output directory: set [experiment] output or --out");

            if (run_cmd->parsed()) {
                const fedmtl::MetricsLog log = fedmtl::run_to_dir(cfg, cfg.output_dir, threads);
                print_final(log);
                std::printf("metrics written to %s\n", cfg.output_dir.c_str());
            } else {
                const fedmtl::GridResult grid = fedmtl::grid_to_dir(cfg, cfg.output_dir, threads);
                std::printf("%zu grid points, best index %zu\n", grid.points.size(), grid.best);
                const fedmtl::GridPoint& best = grid.points[grid.best];
                std::printf("best: lr %g, epochs %zu, batch %zu, K %zu -> %.2f%%\n",
                            best.learning_rate, best.local_epochs, best.batch_size,
                            best.clients_per_round, 100.0 * best.final_accuracy);
                print_final(grid.logs[grid.best]);
                std::printf("grid table written to %s/grid.csv\n", cfg.output_dir.c_str());
            }
        } else if (report_cmd->parsed()) {
            std::vector<std::pair<std::string, fedmtl::MetricsLog>> runs;
            for (const std::string& spec : report_runs) {
                const auto eq = spec.find('=');
                if (eq == std::string::npos)
                    throw fedmtl::ConfigError("--run expects label=dir, got '" + spec + "'");
                runs.emplace_back(spec.substr(0, eq), fedmtl::read_metrics(spec.substr(eq + 1)));
            }
            fedmtl::write_report(runs, report_out);
            std::printf("report written to %s\n", report_out.c_str());
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
