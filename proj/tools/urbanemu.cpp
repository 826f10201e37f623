#include <iostream>
#include <string>

#include "CLI11.hpp"

#include "urbanemu/errors.hpp"
#include "urbanemu/pipeline.hpp"

namespace pl = urbanemu::pipeline;

int main(int argc, char** argv) {
    CLI::App app{"Urban surface emulator toolkit: synthetic ensemble, training, coupled rollout and evaluation"};
    app.require_subcommand(1);

    std::string config_path;
    std::uint64_t seed = 0;
    std::string workdir;
    bool force = false;
    app.add_option("--config", config_path, "JSON config file")->required()->check(CLI::ExistingFile);
    auto* seed_opt = app.add_option("--seed", seed, "Override the top-level seed");
    auto* workdir_opt = app.add_option("--workdir", workdir, "Override the work directory");
    app.add_flag("--force", force, "Overwrite existing artifacts");
    app.fallthrough();

    const std::pair<const char*, const char*> verbs[] = {
        {"synth-forcing", "Write deterministic synthetic forcing with an observation mask"},
        {"ensemble", "Run the perturbed slab ensemble and write its mean"},
        {"train", "Augment, train over repeated seeds and save the median-score model"},
        {"rollout", "Run the saved model under the mock host"},
        {"evaluate", "Score a prediction against the ensemble mean"},
        {"compare", "Rank ensemble stages (and the emulator) against the ensemble mean"},
        {"bench", "Time emulator and slab rollouts over the same period"},
        {"run-all", "Run every command in order"},
    };
    for (const auto& [name, help] : verbs) {
        app.add_subcommand(name, help);
    }

    CLI11_PARSE(app, argc, argv);

    pl::PipelineConfig config;
    try {
        config = pl::load_config(config_path);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return pl::kExitError;
    }
    pl::CommandOptions options;
    options.force = force;
    if (*seed_opt) options.seed = seed;
    if (*workdir_opt) options.workdir = workdir;
    return pl::run_command(app.get_subcommands().front()->get_name(), config, options, std::clog);
}
