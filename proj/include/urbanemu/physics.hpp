#pragma once

#include <optional>
#include <string>
#include <vector>

#include "urbanemu/time.hpp"

/**
 * @file physics.hpp
 * @brief Physical constants, record types and closed-form surface energy
 *        balance conversions shared by every other module.
 *
 * All temperatures are kelvin, all flux densities W m-2 and all rates SI.
 */

namespace urbanemu::physics {

inline constexpr double kStefanBoltzmann = 5.670374419e-8;  // W m-2 K-4 (CODATA 2018)
inline constexpr double kDefaultEmissivity = 0.97;
inline constexpr double kLatentHeat = 2.464e6;  // J kg-1, at 15 degC
/// Daytime threshold on downwelling/upwelling shortwave, W m-2.
inline constexpr double kDaytimeThreshold = 2.0;

struct PhysConstants {
    double sigma = kStefanBoltzmann;
    double epsilon = kDefaultEmissivity;
    double l_v = kLatentHeat;
    double cp_air = 1005.0;  // J kg-1 K-1
    double rho_air = 1.2;    // kg m-3

    void validate() const;
};

struct SiteMeta {
    double latitude = 0.0;    // degrees north
    double longitude = 0.0;   // degrees east
    double utc_offset = 0.0;  // hours

    void validate() const;
};

struct ForcingRecord {
    Instant t{};
    double T = 0.0;     // air temperature, K
    double q = 0.0;     // specific humidity, kg kg-1
    double p = 0.0;     // surface pressure, Pa
    double S_dn = 0.0;  // W m-2
    double L_dn = 0.0;  // W m-2
    double u = 0.0;     // m s-1
    double v = 0.0;     // m s-1
    double RR = 0.0;    // rainfall rate, kg m-2 s-1

    /// Throws DomainError naming the first field outside its physical bounds.
    void validate() const;
};

struct FluxRecord {
    Instant t{};
    double S_up = 0.0;
    double L_up = 0.0;
    double Q_H = 0.0;
    double Q_E = 0.0;
    std::optional<double> T_s;  // K; only set when consistent with L_up

    void validate(double eps = kDefaultEmissivity) const;
};

/// Regular, period-ending forcing series. `obs` is empty or one flag per record.
struct ForcingSeries {
    std::vector<ForcingRecord> records;
    long interval_s = 1800;
    std::vector<bool> obs;

    [[nodiscard]] std::size_t size() const { return records.size(); }
};

/// Regular flux series. `spinup` is empty or one flag per record.
struct FluxSeries {
    std::vector<FluxRecord> records;
    long interval_s = 1800;
    std::vector<bool> spinup;

    [[nodiscard]] std::size_t size() const { return records.size(); }
};

double longwave_from_ts(double T_s, double eps = kDefaultEmissivity);
double ts_from_longwave(double L_up, double eps = kDefaultEmissivity);

/// Evaporation (negative for dewfall), kg m-2 s-1.
double evaporation_from_latent(double Q_E, double l_v = kLatentHeat);

double net_allwave(double S_dn, double S_up, double L_dn, double L_up);

/// dQ_S/dt = Q* - Q_H - Q_E.
double storage_rate_from_balance(const FluxRecord& flux, double S_dn, double L_dn);

struct AlbedoValue {
    double value = 0.0;
    bool out_of_range = false;  // raw ratio fell outside [0, 1]
};

/// S_up / S_dn. Throws UndefinedValueError when S_dn <= kDaytimeThreshold.
AlbedoValue albedo(double S_up, double S_dn);

struct Wind {
    double speed = 0.0;
    std::optional<double> direction_deg;  // meteorological "from" direction; empty when calm

    [[nodiscard]] bool calm() const { return !direction_deg.has_value(); }
};

Wind wind_speed_dir(double u, double v);

/// Saturation vapour pressure over water (Magnus, 17.625 / 243.04 degC), Pa.
double saturation_vapour_pressure(double T);
/// d e_s / dT, Pa K-1.
double saturation_vapour_pressure_slope(double T);
/// Vapour pressure from specific humidity, Pa.
double vapour_pressure(double q, double p);
double saturation_specific_humidity(double T, double p);
/// d q_sat / dT at constant pressure, K-1.
double saturation_specific_humidity_slope(double T, double p);

struct RelativeHumidity {
    double percent = 0.0;       // clamped to [0, 105]
    bool oversaturated = false;  // raw value above 100 %
};

RelativeHumidity relative_humidity(double T, double q, double p);

/// Convention for the zenith-cosine feature below the horizon.
enum class Mu0Convention { signed_value, clamped };

/**
 * Cosine of the solar zenith angle from the NOAA low-precision solar
 * position (fractional-year series for declination and equation of time).
 * Negative below the horizon unless `clamped` is requested.
 */
double solar_mu0(const SiteMeta& site, Instant t, Mu0Convention convention = Mu0Convention::signed_value);
/// Same, at a fractional number of seconds since the epoch.
double solar_mu0(const SiteMeta& site, double epoch_s, Mu0Convention convention = Mu0Convention::signed_value);

const char* to_string(Mu0Convention c);
Mu0Convention mu0_convention_from_string(const std::string& name);

}  // namespace urbanemu::physics
