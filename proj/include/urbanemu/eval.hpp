#pragma once

#include <array>
#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "urbanemu/physics.hpp"

/**
 * @file eval.hpp
 * @brief Error metrics, masked evaluation against a reference series,
 *        configuration intercomparison and a wall-clock timing harness.
 */

namespace urbanemu::eval {

enum class Flux : std::size_t { S_up = 0, L_up = 1, Q_H = 2, Q_E = 3 };
inline constexpr std::array<Flux, 4> kFluxes{Flux::S_up, Flux::L_up, Flux::Q_H, Flux::Q_E};

const char* to_string(Flux f);
double flux_value(const physics::FluxRecord& r, Flux f);

/// Mean bias, mean(pred - truth). Throws DataError on length mismatch or empty input.
double metric_mb(std::span<const double> pred, std::span<const double> truth);
/// Mean absolute error.
double metric_mae(std::span<const double> pred, std::span<const double> truth);
/// Standard deviation of the error, sqrt(mean(((p - mean p) - (t - mean t))^2)).
double metric_sde(std::span<const double> pred, std::span<const double> truth);
/// 100 * MAE / |mean(truth)|, percent. Throws UndefinedValueError when mean(truth) is 0.
double metric_nmae(std::span<const double> pred, std::span<const double> truth);

struct FluxMetrics {
    std::size_t n = 0;
    double mean_truth = 0.0;
    double mb = 0.0;    // W m-2
    double mae = 0.0;   // W m-2
    double sde = 0.0;   // W m-2
    double nmae = 0.0;  // %

    /// Bias and SDE as a percentage of |mean truth|.
    [[nodiscard]] double mb_pct() const;
    [[nodiscard]] double sde_pct() const;
};

struct MaskPolicy {
    /// Rows to include; empty means every row.
    std::vector<bool> rows;
    /// Upwelling shortwave is evaluated only where truth exceeds this.
    double s_up_threshold = physics::kDaytimeThreshold;
    /// Drop rows flagged as spin-up in the prediction.
    bool exclude_spinup = true;
    std::string description = "all rows";
};

struct EvalReport {
    std::string truth_label = "MEM";
    std::string mask_description;
    std::array<std::optional<FluxMetrics>, 4> flux;
    std::array<std::string, 4> error;  // why a flux has no metrics

    [[nodiscard]] bool has(Flux f) const { return flux[static_cast<std::size_t>(f)].has_value(); }
    /// Throws UndefinedValueError carrying the recorded reason when absent.
    [[nodiscard]] const FluxMetrics& at(Flux f) const;
};

/**
 * Scores `pred` against `truth` (aligned, same timestamps). A flux whose
 * masked sample is empty, or whose truth mean is zero, gets an error entry
 * naming it instead of metrics. Throws DataError on misalignment.
 */
EvalReport evaluate(const physics::FluxSeries& pred, const physics::FluxSeries& truth, const MaskPolicy& mask = {},
                    const std::string& truth_label = "MEM");

/// Mean of the four flux nMAEs. Throws UndefinedValueError naming a missing flux.
double mean_nmae(const EvalReport& report);

/// Quantile with linear interpolation between order statistics (Hyndman-Fan type 7).
double quantile(std::vector<double> values, double p);

struct BoxSummary {
    double median = 0.0;
    double q1 = 0.0;
    double q3 = 0.0;
    double whisker_lo = 0.0;  // most extreme datum within 1.5 IQR below q1
    double whisker_hi = 0.0;  // most extreme datum within 1.5 IQR above q3

    [[nodiscard]] double iqr() const { return q3 - q1; }
};

BoxSummary box_summary(std::span<const double> values);

struct ConfigSummary {
    std::string label;
    EvalReport report;
    std::array<BoxSummary, 4> bias;
    std::array<BoxSummary, 4> abs_error;
    double mean_nmae = 0.0;  // +inf when some flux could not be scored
};

struct Comparison {
    std::vector<ConfigSummary> configs;  // input order
    std::vector<std::size_t> ranking;    // indices into configs, best first
};

/// Ranks by mean nMAE ascending, ties by label. Throws DataError on fewer than 2 configs or misalignment.
Comparison compare_configs(const std::vector<std::pair<std::string, physics::FluxSeries>>& configs,
                           const physics::FluxSeries& truth, const MaskPolicy& mask = {});

struct Runnable {
    std::string label;
    std::function<void()> fn;
};

struct BenchEntry {
    std::string label;
    std::size_t repeats = 0;
    double mean_s = 0.0;
    double std_s = 0.0;  // sample standard deviation
    bool ok = true;
    std::string error;
    std::vector<double> samples_s;

    /// "0.50 ± 0.0053 s" style.
    [[nodiscard]] std::string formatted() const;
};

struct BenchReport {
    std::vector<BenchEntry> entries;
    std::string environment;
};

/// Two significant figures, keeping trailing zeros ("0.50", "0.0053", "12").
std::string format_sig2(double x);

/**
 * Times each runnable `repeats` times on the calling thread after `warmup`
 * discarded calls. A runnable that throws is recorded as failed and not
 * timed further. Throws ConfigError when repeats < 2.
 */
BenchReport bench(const std::vector<Runnable>& runnables, std::size_t repeats, std::size_t warmup = 1);

// ---------------------------------------------------------------------------
// Report writers
// ---------------------------------------------------------------------------

std::string eval_csv(const EvalReport& report);
/// One row per labelled report, fluxes x metrics, lowest nMAE per flux marked with '*'.
std::string eval_table(const std::vector<std::pair<std::string, EvalReport>>& rows);
std::string comparison_csv(const Comparison& comparison);
std::string comparison_table(const Comparison& comparison);
std::string bench_csv(const BenchReport& report);
std::string bench_table(const BenchReport& report);

}  // namespace urbanemu::eval
