#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "urbanemu/mlp.hpp"
#include "urbanemu/physics.hpp"

/**
 * @file coupling.hpp
 * @brief Stateful emulator inference behind a flat-tensor host interface.
 *
 * A session is initialized once (buffers sized to the schema), after which
 * every step packs forcing, the step length and the carried surface
 * temperature into the input tensor, runs the network and replaces the
 * carried temperature with the prediction. Steps never allocate.
 */

namespace urbanemu::coupling {

enum class Precision { f64, f32 };
enum class Aggregation { window_mean, window_last };

const char* to_string(Precision p);
const char* to_string(Aggregation a);
Precision precision_from_string(const std::string& s);
Aggregation aggregation_from_string(const std::string& s);

/// Bounds on the carried surface temperature, K.
inline constexpr double kMinSurfaceTemperature = 150.0;
inline constexpr double kMaxSurfaceTemperature = 400.0;

class InferenceSession {
public:
    /// Throws SchemaError if the model is not an emulator model with normalization; StepError if T_s0 is out of bounds.
    static InferenceSession init(std::shared_ptr<const mlp::MlpModel> model, double T_s0,
                                 Precision precision = Precision::f64);

    /// One inference step ending at `forcing.t`. Throws StepError.
    physics::FluxRecord step(const physics::ForcingRecord& forcing, double mu0, double dt_s);

    [[nodiscard]] double surface_temperature() const { return T_s_; }
    /// Overrides the carried state (used to replay a trajectory).
    void set_surface_temperature(double T_s);
    [[nodiscard]] std::size_t steps() const { return steps_; }
    [[nodiscard]] std::size_t dt_warnings() const { return dt_warnings_; }
    [[nodiscard]] Precision precision() const { return precision_; }

    [[nodiscard]] std::span<const double> input_tensor() const { return input_; }
    [[nodiscard]] std::span<const double> output_tensor() const { return output_; }

    /// Addresses of every buffer the step touches; constant after init.
    [[nodiscard]] std::vector<const void*> buffer_addresses() const;

private:
    InferenceSession() = default;
    template <class T>
    void run_network(std::vector<T>& a, std::vector<T>& b, const std::vector<std::vector<T>>& weights,
                     const std::vector<std::vector<T>>& biases);

    std::shared_ptr<const mlp::MlpModel> model_;
    Precision precision_ = Precision::f64;
    double emissivity_ = physics::kDefaultEmissivity;
    double T_s_ = 0.0;
    std::size_t steps_ = 0;
    std::size_t dt_warnings_ = 0;

    std::vector<double> input_;   // physical units, schema order
    std::vector<double> output_;  // physical units, schema order
    std::vector<double> act64_a_, act64_b_;
    std::vector<float> act32_a_, act32_b_;
    std::vector<std::vector<float>> weights32_, biases32_;
};

struct HostRunConfig {
    long dt_s = 300;
    long window_s = 1800;
    long spinup_s = 86400;
    std::optional<double> init_T_s;  // default: first air temperature
    Aggregation aggregation = Aggregation::window_mean;
    Precision precision = Precision::f64;

    void validate() const;
};

struct HostRunStats {
    std::size_t steps = 0;
    double min_T_s = 0.0;
    double max_T_s = 0.0;
    std::size_t dt_warnings = 0;
};

/**
 * Drives a session through `series` at `cfg.dt_s` (forcing linearly
 * interpolated), computing the zenith cosine at every step, and reports
 * period-ending window aggregates. Windows ending before the spin-up has
 * elapsed are flagged. The first series stamp forms a one-step window.
 */
physics::FluxSeries host_run(const mlp::MlpModel& model, const physics::ForcingSeries& series,
                             const physics::SiteMeta& site, const HostRunConfig& cfg, HostRunStats* stats = nullptr);
physics::FluxSeries host_run(std::shared_ptr<const mlp::MlpModel> model, const physics::ForcingSeries& series,
                             const physics::SiteMeta& site, const HostRunConfig& cfg, HostRunStats* stats = nullptr);

/// Zenith-cosine convention recorded in the model (signed when absent).
physics::Mu0Convention model_mu0_convention(const mlp::MlpModel& model);

/// Language-neutral description of the tensor contract of `model`.
nlohmann::ordered_json abi_describe(const mlp::MlpModel& model);
void write_manifest(const mlp::MlpModel& model, const std::filesystem::path& path);

}  // namespace urbanemu::coupling
