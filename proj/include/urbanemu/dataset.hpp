#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "urbanemu/physics.hpp"
#include "urbanemu/schema.hpp"

namespace urbanemu::dataset {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Timestep lengths (s) of the interpolated training copies.
inline const std::vector<long> kDefaultRates{1, 2, 5, 10, 20, 60, 120, 300, 600};

struct Column {
    std::string name;
    std::string unit;
    std::vector<double> values;
};

/**
 * Regular, period-ending table: row i is stamped `start + i * interval_s`
 * and represents the period ending at that instant.
 */
struct TimeSeriesTable {
    Instant start{};
    long interval_s = 1800;
    std::vector<Column> columns;
    std::vector<bool> obs_mask;  // empty when no observation column was present

    [[nodiscard]] std::size_t rows() const { return columns.empty() ? 0 : columns.front().values.size(); }
    [[nodiscard]] Instant time(std::size_t i) const {
        return start + Seconds{static_cast<long>(i) * interval_s};
    }
    [[nodiscard]] bool has(const std::string& name) const;
    /// Throws DataError when absent.
    [[nodiscard]] const std::vector<double>& col(const std::string& name) const;
    std::vector<double>& col(const std::string& name);
    void validate() const;
};

// ---------------------------------------------------------------------------
// CSV files
// ---------------------------------------------------------------------------

/// Forcing CSV column names, in file order (after `t`).
inline const std::vector<std::string> kForcingCsvColumns{"T_K",      "q_kgkg", "p_Pa", "S_dn_Wm2", "L_dn_Wm2",
                                                         "u_ms",     "v_ms",   "RR_kgm2s"};
inline const std::vector<std::string> kFluxCsvColumns{"S_up_Wm2", "L_up_Wm2", "Q_H_Wm2", "Q_E_Wm2", "T_s_K",
                                                      "spinup"};

/**
 * Reads a gap-free forcing CSV (`t` in ISO-8601 UTC, the columns of
 * kForcingCsvColumns, optional `obs` 0/1). `T_degC` is accepted in place of
 * `T_K`. Every row is checked against ForcingRecord bounds. Throws LoadError
 * naming the file line of the first problem.
 */
TimeSeriesTable load_forcing(const std::filesystem::path& path);

void write_forcing_csv(const physics::ForcingSeries& series, const std::filesystem::path& path);
std::string forcing_csv(const physics::ForcingSeries& series);

physics::ForcingSeries to_forcing_series(const TimeSeriesTable& table);
TimeSeriesTable to_table(const physics::ForcingSeries& series);

std::string flux_csv(const physics::FluxSeries& series);
void write_flux_csv(const physics::FluxSeries& series, const std::filesystem::path& path);
physics::FluxSeries read_flux_csv(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Protocol operations
// ---------------------------------------------------------------------------

struct Split {
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
};

/// Test rows are those with an observation available. Throws DataError if either side is empty.
Split split_train_test(const TimeSeriesTable& table);

/// Linear interpolation between period-ending stamps to a finer step `dt_s`.
TimeSeriesTable resample_linear(const TimeSeriesTable& table, long dt_s);
physics::ForcingSeries resample_linear(const physics::ForcingSeries& series, long dt_s);

/// (S_up, T_s, Q_H, Q_E) targets with T_s inverted from the ensemble-mean L_up.
TimeSeriesTable derive_targets(const physics::FluxSeries& mem, double eps = physics::kDefaultEmissivity);

struct TrainingMatrix {
    RowMatrix X;  // rows x emulator_schema().inputs
    RowMatrix Y;  // rows x emulator_schema().outputs
    std::vector<double> row_rate;
    FeatureSchema schema;

    [[nodiscard]] std::size_t rows() const { return static_cast<std::size_t>(X.rows()); }
};

struct AugmentOptions {
    physics::SiteMeta site;
    physics::Mu0Convention mu0_convention = physics::Mu0Convention::signed_value;
};

/**
 * Builds the emulator training matrix from the training rows (obs mask
 * false) of `inputs` and `targets`: the N native rows followed by, for each
 * rate, exactly N rows drawn without replacement from the interpolated
 * copy. A row pairs forcing at instant t and T_s at t - dt with the
 * targets at t; the first table row uses its own T_s as predecessor.
 */
TrainingMatrix augment_multirate(const TimeSeriesTable& inputs, const TimeSeriesTable& targets,
                                 std::span<const long> rates, std::uint64_t seed, const AugmentOptions& options);

/// Packs one emulator input row in schema order.
void pack_inputs(const physics::ForcingRecord& forcing, double mu0, double dt_s, double T_s_prev,
                 std::span<double> out);

/// Z-score statistics (population convention: divisor N).
struct NormStats {
    std::vector<std::string> names;
    std::vector<double> mean;
    std::vector<double> std;

    [[nodiscard]] std::size_t size() const { return mean.size(); }
    bool operator==(const NormStats&) const = default;
};

/// Throws DataError on fewer than 2 rows or a zero-variance column.
NormStats fit_norm(const RowMatrix& m, const std::vector<std::string>& names);
RowMatrix apply_norm(const RowMatrix& m, const NormStats& stats);
RowMatrix invert_norm(const RowMatrix& m, const NormStats& stats);

}  // namespace urbanemu::dataset
