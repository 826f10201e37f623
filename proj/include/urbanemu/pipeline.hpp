#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"

#include "urbanemu/coupling.hpp"
#include "urbanemu/mlp.hpp"
#include "urbanemu/slab.hpp"
#include "urbanemu/synth.hpp"

/**
 * @file pipeline.hpp
 * @brief End-to-end driver behind the command-line tool.
 *
 * Every command reads its prerequisites from the work directory, writes its
 * artifacts atomically and logs one JSON object per line. Component seeds
 * are derived from the top-level seed by fixed offsets (forcing +0,
 * ensemble +1, augmentation +2, training +3, comparison stage i +10+i).
 */

namespace urbanemu::pipeline {

struct CompareStage {
    std::string label;
    slab::ParamSpread spread;
};

struct PipelineConfig {
    std::uint64_t seed = 0;
    physics::SiteMeta site;
    std::filesystem::path workdir = "work";
    /// External forcing CSV; when empty, synth-forcing writes one into the work directory.
    std::filesystem::path forcing_path;
    synth::SynthOptions synth;

    slab::EnsembleSpec ensemble;
    slab::ExclusionCriteria exclusion;
    long slab_dt_s = 300;
    double initial_wetness = 0.6;  // initial W / W_cap

    std::vector<long> rates = dataset::kDefaultRates;
    physics::Mu0Convention mu0_convention = physics::Mu0Convention::signed_value;
    double emissivity = physics::kDefaultEmissivity;

    mlp::MlpConfig mlp;
    std::size_t n_seeds = 100;
    std::size_t threads = 1;

    coupling::HostRunConfig host;

    std::string eval_pred = "rollout";  // rollout | mem | slab
    std::string eval_rows = "test";     // test | train | all

    std::vector<CompareStage> compare_stages;
    bool compare_include_rollout = true;

    std::size_t bench_repeats = 10;
    std::size_t bench_warmup = 1;
    double bench_days = 30.0;

    /// Throws ConfigError.
    void validate() const;
    /// Re-derives component seeds from `seed`.
    void apply_seed(std::uint64_t seed);
};

/// Parses a JSON config; relative paths resolve against `base_dir`. Unknown keys are errors.
PipelineConfig config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
PipelineConfig load_config(const std::filesystem::path& path);

struct CommandOptions {
    bool force = false;
    std::optional<std::uint64_t> seed;
    std::optional<std::filesystem::path> workdir;
};

/// Files each command owns, relative to the work directory.
struct Layout {
    std::filesystem::path root;

    [[nodiscard]] std::filesystem::path forcing() const { return root / "forcing.csv"; }
    [[nodiscard]] std::filesystem::path member(std::size_t i) const;
    [[nodiscard]] std::filesystem::path mem() const { return root / "mem.csv"; }
    [[nodiscard]] std::filesystem::path ensemble_summary() const { return root / "ensemble.json"; }
    [[nodiscard]] std::filesystem::path model() const { return root / "model.uemu"; }
    [[nodiscard]] std::filesystem::path manifest() const { return root / "model.json"; }
    [[nodiscard]] std::filesystem::path seeds() const { return root / "seeds.csv"; }
    [[nodiscard]] std::filesystem::path rollout() const { return root / "rollout.csv"; }
    [[nodiscard]] std::filesystem::path eval_csv() const { return root / "eval.csv"; }
    [[nodiscard]] std::filesystem::path eval_txt() const { return root / "eval.txt"; }
    [[nodiscard]] std::filesystem::path compare_csv() const { return root / "compare.csv"; }
    [[nodiscard]] std::filesystem::path compare_txt() const { return root / "compare.txt"; }
    [[nodiscard]] std::filesystem::path bench_csv() const { return root / "bench.csv"; }
    [[nodiscard]] std::filesystem::path bench_txt() const { return root / "bench.txt"; }
};

/// Exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitError = 1;
inline constexpr int kExitExists = 2;

inline const std::vector<std::string> kCommands{"synth-forcing", "ensemble", "train",  "rollout",
                                                "evaluate",      "compare",  "bench", "run-all"};

/**
 * Runs one command. Errors are logged and mapped to exit codes; refusing to
 * overwrite existing artifacts without `force` returns kExitExists.
 */
int run_command(const std::string& name, PipelineConfig config, const CommandOptions& options, std::ostream& log);

// Individual commands; they throw instead of returning exit codes.
void cmd_synth_forcing(const PipelineConfig& config, bool force, std::ostream& log);
void cmd_ensemble(const PipelineConfig& config, bool force, std::ostream& log);
void cmd_train(const PipelineConfig& config, bool force, std::ostream& log);
void cmd_rollout(const PipelineConfig& config, bool force, std::ostream& log);
void cmd_evaluate(const PipelineConfig& config, bool force, std::ostream& log);
void cmd_compare(const PipelineConfig& config, bool force, std::ostream& log);
void cmd_bench(const PipelineConfig& config, bool force, std::ostream& log);

/// Raised when an artifact exists and overwriting was not requested.
class ArtifactExistsError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Raised when a prerequisite artifact is missing; names the producing command.
class MissingPrerequisiteError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Seed-distribution CSV: seed, ok, mean nMAE, epochs, best validation loss, selected flag, error.
std::string seeds_csv(const mlp::RepeatedResult& result);

/// Adds the feature conventions a host needs (zenith-cosine convention, emissivity) to model metadata.
void stamp_conventions(mlp::MlpModel& model, physics::Mu0Convention mu0, double emissivity);

}  // namespace urbanemu::pipeline
