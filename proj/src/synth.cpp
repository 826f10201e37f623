#include "urbanemu/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "urbanemu/errors.hpp"

namespace urbanemu::synth {

void SynthOptions::validate() const {
    if (interval_s < 1) {
        throw ConfigError("synthetic forcing interval must be positive");
    }
    if (end < start) {
        throw ConfigError("synthetic forcing ends before it starts");
    }
    if ((end - start).count() % interval_s != 0) {
        throw ConfigError("synthetic forcing span is not a whole number of intervals");
    }
    if (!(obs_fraction > 0.0 && obs_fraction < 1.0)) {
        throw ConfigError("observed fraction must lie in (0, 1)");
    }
    if (!(obs_block >= 1.0)) {
        throw ConfigError("observed block length must be at least one record");
    }
}

namespace {

/// First-order autoregressive process with unit stationary variance.
class RedNoise {
public:
    RedNoise(double tau_s, double dt_s, std::mt19937_64& rng)
        : phi_(std::exp(-dt_s / tau_s)), rng_(rng) {
        x_ = normal_(rng_);
    }
    double next() {
        x_ = phi_ * x_ + std::sqrt(1.0 - phi_ * phi_) * normal_(rng_);
        return x_;
    }

private:
    double phi_;
    std::mt19937_64& rng_;
    std::normal_distribution<double> normal_{0.0, 1.0};
    double x_ = 0.0;
};

double day_of_year(Instant t) {
    using namespace std::chrono;
    const auto day = floor<days>(t);
    const year_month_day ymd{day};
    const sys_days jan1{ymd.year() / January / 1};
    return static_cast<double>((day - jan1).count()) +
           static_cast<double>((t - day).count()) / 86400.0;
}

}  // namespace

physics::ForcingSeries synth_forcing(const physics::SiteMeta& site, const SynthOptions& o) {
    o.validate();
    site.validate();
    const Climate& c = o.climate;
    const auto dt = static_cast<double>(o.interval_s);
    const double half_hours = dt / 1800.0;
    const auto n = static_cast<std::size_t>((o.end - o.start).count() / o.interval_s + 1);
    constexpr double two_pi = 2.0 * std::numbers::pi;

    std::mt19937_64 rng(o.seed);
    RedNoise cloud_noise(c.cloud_tau_h * 3600.0, dt, rng);
    RedNoise t_noise(c.T_anomaly_tau_h * 3600.0, dt, rng);
    RedNoise p_noise(72.0 * 3600.0, dt, rng);
    RedNoise u_noise(c.wind_tau_h * 3600.0, dt, rng);
    RedNoise v_noise(c.wind_tau_h * 3600.0, dt, rng);
    RedNoise rh_noise(12.0 * 3600.0, dt, rng);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::exponential_distribution<double> rain_amount(1.0 / c.rain_mean);

    const double p_leave_obs = 1.0 / o.obs_block;
    const double p_leave_gap = 1.0 / (o.obs_block * (1.0 - o.obs_fraction) / o.obs_fraction);
    bool observed = unif(rng) < o.obs_fraction;
    bool raining = false;

    physics::ForcingSeries series;
    series.interval_s = o.interval_s;
    series.records.reserve(n);
    series.obs.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        physics::ForcingRecord r;
        r.t = o.start + Seconds{static_cast<long>(i) * o.interval_s};

        const double cloud = 1.0 / (1.0 + std::exp(-(1.6 * cloud_noise.next() + c.cloud_bias + (raining ? 2.0 : 0.0))));
        if (raining) {
            raining = unif(rng) >= 1.0 - std::pow(1.0 - c.rain_end, half_hours);
        } else {
            raining = unif(rng) < 1.0 - std::pow(1.0 - c.rain_onset * cloud * cloud, half_hours);
        }
        r.RR = raining ? std::min(rain_amount(rng), 0.02) : 0.0;

        const double mu0 = physics::solar_mu0(site, r.t, physics::Mu0Convention::clamped);
        if (mu0 > 0.0) {
            const double clear = 1361.0 * mu0 * std::pow(0.7, std::pow(mu0, -0.678));
            r.S_dn = clear * (1.0 - 0.75 * std::pow(cloud, 3.4));
        }

        const double doy = day_of_year(r.t);
        const double local_hour = std::fmod(std::fmod(epoch_seconds(r.t) / 3600.0 + site.utc_offset, 24.0) + 24.0, 24.0);
        const double diurnal = std::cos(two_pi * (local_hour - 15.0) / 24.0);
        r.T = c.T_mean + c.T_seasonal_amp * std::cos(two_pi * (doy - c.warmest_day) / 365.25) +
              c.T_diurnal_amp * (1.0 - 0.5 * cloud) * diurnal + c.T_anomaly_sd * t_noise.next();
        r.p = c.p_mean + c.p_sd * p_noise.next();

        double rh = c.rh_mean - c.rh_diurnal_amp * diurnal + 8.0 * rh_noise.next() + 15.0 * cloud;
        if (raining) rh = std::max(rh, 92.0);
        rh = std::clamp(rh, 20.0, 99.0);
        const double e = rh / 100.0 * physics::saturation_vapour_pressure(r.T);
        r.q = 0.622 * e / (r.p - 0.378 * e);

        const double clear_emissivity = 1.24 * std::pow(e / 100.0 / r.T, 1.0 / 7.0);
        const double emissivity = std::min(clear_emissivity * (1.0 + 0.22 * cloud * cloud), 1.0);
        r.L_dn = emissivity * physics::kStefanBoltzmann * std::pow(r.T, 4);

        const double gust = 1.0 + 0.35 * std::max(diurnal, 0.0);
        r.u = (c.wind_mean_u + c.wind_sd * u_noise.next()) * gust;
        r.v = (c.wind_mean_v + c.wind_sd * v_noise.next()) * gust;

        r.validate();
        series.records.push_back(r);
        series.obs.push_back(observed);
        observed = observed ? unif(rng) >= p_leave_obs : unif(rng) < p_leave_gap;
    }
    return series;
}

}  // namespace urbanemu::synth
