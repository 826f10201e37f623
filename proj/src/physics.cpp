#include "urbanemu/physics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <string>

#include "urbanemu/errors.hpp"

namespace urbanemu::physics {

namespace {

void require_finite(double x, const char* what) {
    if (!std::isfinite(x)) {
        throw DomainError(std::string(what) + " is not finite");
    }
}

void require_range(double x, double lo, double hi, const char* what, const char* unit) {
    if (!std::isfinite(x) || x < lo || x > hi) {
        std::ostringstream msg;
        msg << what << " = " << x << " outside ForcingRecord bounds [" << lo << ", " << hi << "] " << unit;
        throw DomainError(msg.str());
    }
}

void require_emissivity(double eps) {
    if (!(eps > 0.0 && eps <= 1.0)) {
        throw DomainError("emissivity must lie in (0, 1], got " + std::to_string(eps));
    }
}

constexpr double kDeg = std::numbers::pi / 180.0;

}  // namespace

void PhysConstants::validate() const {
    if (!(sigma > 0.0 && l_v > 0.0 && cp_air > 0.0 && rho_air > 0.0)) {
        throw DomainError("physical constants must be strictly positive");
    }
    require_emissivity(epsilon);
}

void SiteMeta::validate() const {
    if (!(std::abs(latitude) <= 90.0)) {
        throw DomainError("latitude outside [-90, 90]");
    }
    if (!(std::abs(longitude) <= 180.0)) {
        throw DomainError("longitude outside [-180, 180]");
    }
    require_finite(utc_offset, "utc_offset");
}

void ForcingRecord::validate() const {
    require_range(T, 150.0, 360.0, "T", "K");
    require_range(q, 0.0, 1.0, "q", "kg kg-1");
    require_range(p, 3e4, 1.2e5, "p", "Pa");
    require_range(S_dn, 0.0, 1500.0, "S_dn", "W m-2");
    require_range(L_dn, 50.0, 700.0, "L_dn", "W m-2");
    require_finite(u, "u");
    require_finite(v, "v");
    require_range(RR, 0.0, 1.0, "RR", "kg m-2 s-1");
}

void FluxRecord::validate(double eps) const {
    require_finite(S_up, "S_up");
    require_finite(L_up, "L_up");
    require_finite(Q_H, "Q_H");
    require_finite(Q_E, "Q_E");
    if (S_up < 0.0) {
        throw DomainError("S_up must be non-negative");
    }
    if (L_up <= 0.0) {
        throw DomainError("L_up must be positive");
    }
    if (T_s) {
        const double expected = longwave_from_ts(*T_s, eps);
        if (std::abs(expected - L_up) > 1e-6 * L_up) {
            throw DomainError("T_s inconsistent with L_up under the emissivity round trip");
        }
    }
}

double longwave_from_ts(double T_s, double eps) {
    if (!std::isfinite(T_s) || T_s <= 0.0) {
        throw DomainError("surface temperature must be finite and positive, got " + std::to_string(T_s));
    }
    require_emissivity(eps);
    const double t2 = T_s * T_s;
    return eps * kStefanBoltzmann * t2 * t2;
}

double ts_from_longwave(double L_up, double eps) {
    if (!std::isfinite(L_up) || L_up <= 0.0) {
        throw DomainError("upwelling longwave must be finite and positive, got " + std::to_string(L_up));
    }
    require_emissivity(eps);
    return std::sqrt(std::sqrt(L_up / (eps * kStefanBoltzmann)));
}

double evaporation_from_latent(double Q_E, double l_v) {
    require_finite(Q_E, "Q_E");
    return Q_E / l_v;
}

double net_allwave(double S_dn, double S_up, double L_dn, double L_up) {
    return (S_dn - S_up) + (L_dn - L_up);
}

double storage_rate_from_balance(const FluxRecord& flux, double S_dn, double L_dn) {
    return net_allwave(S_dn, flux.S_up, L_dn, flux.L_up) - flux.Q_H - flux.Q_E;
}

AlbedoValue albedo(double S_up, double S_dn) {
    if (!(S_dn > kDaytimeThreshold)) {
        throw UndefinedValueError("albedo undefined for S_dn <= 2 W m-2 (night)");
    }
    const double raw = S_up / S_dn;
    AlbedoValue out;
    out.out_of_range = raw < 0.0 || raw > 1.0;
    out.value = std::clamp(raw, 0.0, 1.0);
    return out;
}

Wind wind_speed_dir(double u, double v) {
    Wind w;
    w.speed = std::hypot(u, v);
    if (w.speed > 0.0) {
        double dir = std::fmod(270.0 - std::atan2(v, u) / kDeg, 360.0);
        if (dir < 0.0) {
            dir += 360.0;
        }
        w.direction_deg = dir;
    }
    return w;
}

double saturation_vapour_pressure(double T) {
    const double tc = T - 273.15;
    return 610.94 * std::exp(17.625 * tc / (tc + 243.04));
}

double saturation_vapour_pressure_slope(double T) {
    const double tc = T - 273.15;
    const double denom = tc + 243.04;
    return saturation_vapour_pressure(T) * 17.625 * 243.04 / (denom * denom);
}

double vapour_pressure(double q, double p) {
    return q * p / (0.622 + 0.378 * q);
}

double saturation_specific_humidity(double T, double p) {
    const double es = saturation_vapour_pressure(T);
    return 0.622 * es / (p - 0.378 * es);
}

double saturation_specific_humidity_slope(double T, double p) {
    const double es = saturation_vapour_pressure(T);
    const double denom = p - 0.378 * es;
    return 0.622 * p / (denom * denom) * saturation_vapour_pressure_slope(T);
}

RelativeHumidity relative_humidity(double T, double q, double p) {
    if (!std::isfinite(T) || T < 150.0 || T > 360.0) {
        throw DomainError("air temperature outside [150, 360] K");
    }
    if (!(q >= 0.0) || !(p >= 3e4 && p <= 1.2e5)) {
        throw DomainError("humidity or pressure outside record bounds");
    }
    const double raw = 100.0 * vapour_pressure(q, p) / saturation_vapour_pressure(T);
    RelativeHumidity rh;
    rh.oversaturated = raw > 100.0;
    rh.percent = std::clamp(raw, 0.0, 105.0);
    return rh;
}

double solar_mu0(const SiteMeta& site, double epoch_s, Mu0Convention convention) {
    using namespace std::chrono;
    const double whole_day = std::floor(epoch_s / 86400.0);
    const sys_days day{days{static_cast<long>(whole_day)}};
    const year_month_day ymd{day};
    const double day_of_year = static_cast<double>((day - sys_days{ymd.year() / January / 1}).count()) + 1.0;
    const double days_in_year = ymd.year().is_leap() ? 366.0 : 365.0;
    const double hour = (epoch_s - whole_day * 86400.0) / 3600.0;

    const double g = 2.0 * std::numbers::pi / days_in_year * (day_of_year - 1.0 + (hour - 12.0) / 24.0);
    const double eqtime = 229.18 * (0.000075 + 0.001868 * std::cos(g) - 0.032077 * std::sin(g) -
                                    0.014615 * std::cos(2 * g) - 0.040849 * std::sin(2 * g));
    const double decl = 0.006918 - 0.399912 * std::cos(g) + 0.070257 * std::sin(g) - 0.006758 * std::cos(2 * g) +
                        0.000907 * std::sin(2 * g) - 0.002697 * std::cos(3 * g) + 0.00148 * std::sin(3 * g);

    const double true_solar_minutes = hour * 60.0 + eqtime + 4.0 * site.longitude;
    const double hour_angle = (true_solar_minutes / 4.0 - 180.0) * kDeg;
    const double lat = site.latitude * kDeg;
    double mu0 = std::sin(lat) * std::sin(decl) + std::cos(lat) * std::cos(decl) * std::cos(hour_angle);
    mu0 = std::clamp(mu0, -1.0, 1.0);
    if (convention == Mu0Convention::clamped) {
        mu0 = std::max(mu0, 0.0);
    }
    return mu0;
}

double solar_mu0(const SiteMeta& site, Instant t, Mu0Convention convention) {
    return solar_mu0(site, epoch_seconds(t), convention);
}

const char* to_string(Mu0Convention c) {
    return c == Mu0Convention::clamped ? "clamped" : "signed";
}

Mu0Convention mu0_convention_from_string(const std::string& name) {
    if (name == "signed") {
        return Mu0Convention::signed_value;
    }
    if (name == "clamped") {
        return Mu0Convention::clamped;
    }
    throw ConfigError("unknown mu0 convention '" + name + "' (expected signed or clamped)");
}

}  // namespace urbanemu::physics
