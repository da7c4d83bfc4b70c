// Command-line driver for the experiment pipeline:
//   evalcli <simulate|gen-data|train|evaluate|report> [--config F | --experiment E]
//           [--seed N] [--out DIR] [--seeds K]
//
// Exit codes: 0 ok, 2 usage, 3 config/schema, 4 missing input, 5 pipeline
// error, 1 unexpected failure.
#include <cstdint>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "tanklab/errors.hpp"
#include "tanklab/pipeline.hpp"
#include "tanklab/runconfig.hpp"

namespace {

struct CliOptions {
    std::string config_path;
    std::string experiment;
    std::string out_dir;
    std::uint64_t seed = 0;
    bool seed_set = false;
    std::size_t eval_seeds = 0;
    bool eval_seeds_set = false;
};

tanklab::cli::RunConfig resolve_config(const CliOptions& opt) {
    using tanklab::cli::RunConfig;
    RunConfig cfg;
    if (!opt.config_path.empty()) {
        cfg = RunConfig::load_file(opt.config_path);
        if (!opt.experiment.empty() &&
            tanklab::cli::experiment_from_name(opt.experiment) != cfg.experiment)
            throw tanklab::ConfigError("--experiment '" + opt.experiment +
                                       "' contradicts the config file (" +
                                       tanklab::cli::experiment_name(cfg.experiment) + ")");
    } else if (!opt.experiment.empty()) {
        cfg = RunConfig::defaults(tanklab::cli::experiment_from_name(opt.experiment));
    } else {
        throw tanklab::ConfigError("pass --config FILE or --experiment NAME");
    }
    if (opt.seed_set) cfg.seed = opt.seed;
    if (opt.eval_seeds_set) cfg.eval_seeds = opt.eval_seeds;
    if (!opt.out_dir.empty()) cfg.output_dir = opt.out_dir;
    return cfg;
}

void add_shared_flags(CLI::App* cmd, CliOptions& opt) {
    cmd->add_option("--config", opt.config_path, "run configuration JSON file");
    cmd->add_option("--experiment", opt.experiment,
                    "experiment name (sindy, bvae, agents, aesindy, somvae); "
                    "uses built-in defaults when no --config is given");
    cmd->add_option("--seed", opt.seed, "override the run seed")
        ->each([&opt](const std::string&) { opt.seed_set = true; });
    cmd->add_option("--out", opt.out_dir,
                    "output root directory (the TANKLAB_OUT environment "
                    "variable takes precedence)");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"three-tank representation-learning pipeline"};
    app.require_subcommand(1);

    CliOptions opt;
    CLI::App* simulate = app.add_subcommand("simulate", "integrate the plant and dump a CSV");
    CLI::App* gen = app.add_subcommand("gen-data", "generate the experiment dataset");
    CLI::App* train = app.add_subcommand("train", "train on the generated dataset");
    CLI::App* evaluate = app.add_subcommand("evaluate", "compute metrics for trained runs");
    CLI::App* report = app.add_subcommand("report", "write report.json and plot data");
    for (CLI::App* cmd : {simulate, gen, train, evaluate, report})
        add_shared_flags(cmd, opt);
    evaluate
        ->add_option("--seeds", opt.eval_seeds,
                     "aggregate this many consecutive seeds (median across runs)")
        ->each([&opt](const std::string&) { opt.eval_seeds_set = true; })
        ->check(CLI::Range(std::size_t{1}, std::size_t{100}));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return e.get_exit_code() == 0 ? 0 : 2;
    }

    try {
        const tanklab::cli::RunConfig cfg = resolve_config(opt);
        const tanklab::cli::RunPaths paths = tanklab::cli::run_paths(cfg);
        if (simulate->parsed()) {
            tanklab::cli::run_simulate(cfg);
            std::cout << "wrote " << paths.trajectory << '\n';
        } else if (gen->parsed()) {
            tanklab::cli::run_gen_data(cfg);
            std::cout << "wrote " << paths.dataset << '\n';
        } else if (train->parsed()) {
            tanklab::cli::run_train(cfg);
            std::cout << "wrote " << paths.checkpoint << '\n';
        } else if (evaluate->parsed()) {
            tanklab::cli::run_evaluate(cfg);
            std::cout << "wrote " << paths.metrics << '\n';
        } else {
            tanklab::cli::run_report(cfg);
            std::cout << "wrote " << paths.report << '\n';
        }
        return 0;
    } catch (const tanklab::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 3;
    } catch (const tanklab::SchemaError& e) {
        std::cerr << "schema error: " << e.what() << '\n';
        return 3;
    } catch (const tanklab::MissingInputError& e) {
        std::cerr << "missing input: " << e.what() << '\n';
        return 4;
    } catch (const tanklab::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 5;
    } catch (const std::exception& e) {
        std::cerr << "unexpected error: " << e.what() << '\n';
        return 1;
    }
}
