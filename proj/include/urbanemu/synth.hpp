#pragma once

#include <cstdint>

#include "urbanemu/physics.hpp"

namespace urbanemu::synth {

/**
 * Shape parameters of the synthetic mid-latitude climate. Defaults give a
 * temperate southern-hemisphere suburb (warmest late January).
 */
struct Climate {
    double T_mean = 286.0;         // K
    double T_seasonal_amp = 5.0;   // K
    double T_diurnal_amp = 5.0;    // K, clear-sky half range
    double warmest_day = 25.0;     // day of year
    double T_anomaly_sd = 2.0;     // K
    double T_anomaly_tau_h = 72.0;
    double rh_mean = 72.0;         // %
    double rh_diurnal_amp = 14.0;  // %
    double p_mean = 101300.0;      // Pa
    double p_sd = 700.0;           // Pa
    double wind_mean_u = 1.2;      // m s-1
    double wind_mean_v = 0.6;      // m s-1
    double wind_sd = 1.6;          // m s-1
    double wind_tau_h = 8.0;
    double cloud_tau_h = 10.0;
    double cloud_bias = -0.5;      // latent-cloud offset; lower is clearer
    double rain_onset = 0.05;      // per 30 min, scaled by cloud
    double rain_end = 0.2;         // per 30 min
    double rain_mean = 3e-4;       // kg m-2 s-1 while raining
};

struct SynthOptions {
    Instant start{};
    Instant end{};
    long interval_s = 1800;
    std::uint64_t seed = 0;
    /// Fraction of records flagged as observed (the test split).
    double obs_fraction = 0.39;
    /// Mean length of an observed block, in records.
    double obs_block = 96.0;
    Climate climate;

    void validate() const;
};

/**
 * Deterministic synthetic forcing from `start` to `end` inclusive.
 * Shortwave is a clear-sky estimate from the zenith cosine attenuated by a
 * stochastic cloud cover (zero at night); temperature combines seasonal and
 * diurnal cycles with a red-noise anomaly; downwelling longwave follows the
 * Brutsaert clear-sky emissivity with a cloud enhancement; rain is a
 * two-state Markov process. Every record satisfies ForcingRecord::validate.
 */
physics::ForcingSeries synth_forcing(const physics::SiteMeta& site, const SynthOptions& options);

}  // namespace urbanemu::synth
