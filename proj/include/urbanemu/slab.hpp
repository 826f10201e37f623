#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "urbanemu/physics.hpp"

/**
 * @file slab.hpp
 * @brief Single-slab urban surface scheme used as the physical baseline and,
 *        with perturbed parameters, as the synthetic multi-model ensemble.
 *
 * The slab temperature follows
 *
 *   C dT_s/dt = Q* - Q_H - Q_E - C (T_s - T_deep) / tau
 *
 * advanced semi-implicitly: upwelling longwave and the saturation deficit
 * are linearized about the current T_s, Q_H and the restoring term are
 * implicit. Reported fluxes are evaluated on the linearized forms, so the
 * step closes the energy balance to round-off.
 */

namespace urbanemu::slab {

struct SlabParams {
    double albedo = 0.15;
    double emissivity = 0.97;
    double C_areal = 1.2e4;     // J m-2 K-1
    double g_a0 = 0.004;        // m s-1
    double g_a1 = 0.003;        // dimensionless, multiplies wind speed
    double f_veg = 0.38;        // pervious fraction
    double W_cap = 150.0;       // kg m-2
    double T_deep = 290.0;      // K
    double tau_restore = 1200;  // s

    /// Throws ConfigError naming the first invalid field.
    void validate() const;
};

struct SlabState {
    double T_s = 290.0;  // K
    double W = 0.0;      // kg m-2
};

/// Per-step terms that are not part of a FluxRecord.
struct SlabDiagnostics {
    double net_allwave = 0.0;    // Q*, W m-2
    double storage = 0.0;        // C dT_s/dt, W m-2
    double restore = 0.0;        // C (T_s - T_deep) / tau, W m-2
    double evaporation = 0.0;    // kg m-2 s-1
    double clipping_loss = 0.0;  // water removed by clipping W to [0, W_cap], kg m-2

    /// Q* - Q_H - Q_E - storage - restore.
    [[nodiscard]] double energy_residual(double Q_H, double Q_E) const {
        return net_allwave - Q_H - Q_E - storage - restore;
    }
};

struct StepResult {
    SlabState state;
    physics::FluxRecord flux;  // T_s left empty: L_up includes reflected longwave
    SlabDiagnostics diag;
};

/// Advances one step of `dt` seconds ending at `forcing.t`. Throws IntegrationError.
StepResult slab_step(const SlabState& state, const physics::ForcingRecord& forcing, const SlabParams& params,
                     double dt, const physics::PhysConstants& constants = {});

struct RunOptions {
    long dt_s = 300;
    /// Called after every internal step (used by closure tests); may be empty.
    std::function<void(const physics::ForcingRecord&, const StepResult&)> on_step;
};

/**
 * Interpolates `series` to `dt_s`, steps through it and reports the last
 * step of each native period. The first native stamp gets a single step.
 */
physics::FluxSeries slab_run(const physics::ForcingSeries& series, const SlabParams& params, const SlabState& init,
                             const RunOptions& options, const physics::PhysConstants& constants = {});

/// Relative (fractional) spread per parameter for ensemble generation.
struct ParamSpread {
    double albedo = 0.0;
    double emissivity = 0.0;
    double C_areal = 0.0;
    double g_a0 = 0.0;
    double g_a1 = 0.0;
    double f_veg = 0.0;
    double W_cap = 0.0;
    double T_deep = 0.0;
    double tau_restore = 0.0;
};

struct EnsembleSpec {
    SlabParams base;
    std::size_t n_members = 22;
    ParamSpread spread;
    std::uint64_t seed = 0;
    std::vector<std::size_t> exclusion;

    void validate() const;
};

/**
 * Members as mean-preserving log-normal perturbations of the base,
 * `p = base * exp(s z - s^2 / 2)`, clipped to the field bounds.
 * Deterministic given the seed.
 */
std::vector<SlabParams> generate_members(const EnsembleSpec& spec);

/// Automatic outlier criteria applied before averaging.
struct ExclusionCriteria {
    bool enabled = true;
    double max_abs_flux = 1500.0;  // W m-2
};

struct EnsembleMean {
    physics::FluxSeries mean;
    std::vector<std::size_t> retained;
    std::vector<std::size_t> excluded_explicit;
    std::vector<std::pair<std::size_t, std::string>> excluded_auto;  // member, reason
};

/// Per-timestamp mean of retained members. Throws DataError when fewer than 2 remain.
EnsembleMean ensemble_mean(const std::vector<physics::FluxSeries>& members, const std::vector<std::size_t>& exclusion,
                           const ExclusionCriteria& criteria = {});

}  // namespace urbanemu::slab
