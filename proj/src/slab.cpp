#include "urbanemu/slab.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "urbanemu/errors.hpp"

namespace urbanemu::slab {

using physics::FluxRecord;
using physics::FluxSeries;
using physics::ForcingRecord;
using physics::ForcingSeries;

void SlabParams::validate() const {
    auto fail = [](const char* what) { throw ConfigError(std::string("invalid slab parameter: ") + what); };
    if (!(albedo >= 0.0 && albedo <= 1.0)) fail("albedo outside [0, 1]");
    if (!(emissivity > 0.0 && emissivity <= 1.0)) fail("emissivity outside (0, 1]");
    if (!(C_areal > 0.0 && std::isfinite(C_areal))) fail("C_areal must be positive");
    if (!(g_a0 >= 0.0 && std::isfinite(g_a0))) fail("g_a0 must be non-negative");
    if (!(g_a1 >= 0.0 && std::isfinite(g_a1))) fail("g_a1 must be non-negative");
    if (!(g_a0 > 0.0 || g_a1 > 0.0)) fail("aerodynamic conductance is identically zero");
    if (!(f_veg >= 0.0 && f_veg <= 1.0)) fail("f_veg outside [0, 1]");
    if (!(W_cap > 0.0 && std::isfinite(W_cap))) fail("W_cap must be positive");
    if (!(T_deep >= 150.0 && T_deep <= 400.0)) fail("T_deep outside [150, 400] K");
    if (!(tau_restore > 0.0 && std::isfinite(tau_restore))) fail("tau_restore must be positive");
}

StepResult slab_step(const SlabState& state, const ForcingRecord& f, const SlabParams& params, double dt,
                     const physics::PhysConstants& k) {
    const double T0 = state.T_s;
    const double eps = params.emissivity;
    const double C = params.C_areal;

    const double g = params.g_a0 + params.g_a1 * std::hypot(f.u, f.v);
    const double h = k.rho_air * k.cp_air * g;
    const double beta = params.f_veg * (state.W / params.W_cap) * k.rho_air * k.l_v * g;
    const double deficit0 = physics::saturation_specific_humidity(T0, f.p) - f.q;
    const double deficit_slope = physics::saturation_specific_humidity_slope(T0, f.p);

    const double t3 = T0 * T0 * T0;
    const double emitted0 = eps * k.sigma * t3 * T0;
    const double emitted_slope = 4.0 * eps * k.sigma * t3;
    const double S_up = params.albedo * f.S_dn;
    const double reflected_lw = (1.0 - eps) * f.L_dn;

    bool evaporating = beta > 0.0 && deficit0 > 0.0;
    double QE0 = evaporating ? beta * deficit0 : 0.0;
    double k_e = evaporating ? beta * deficit_slope : 0.0;

    const double net0 = (f.S_dn - S_up) + (f.L_dn - (emitted0 + reflected_lw));
    const double restore_coeff = C / params.tau_restore;
    const double tendency0 = net0 - h * (T0 - f.T) - restore_coeff * (T0 - params.T_deep);

    double dT = (tendency0 - QE0) / (C / dt + emitted_slope + h + k_e + restore_coeff);
    if (evaporating && deficit0 + deficit_slope * dT < 0.0) {
        // Linearized deficit would turn negative: no evaporation this step.
        evaporating = false;
        QE0 = 0.0;
        k_e = 0.0;
        dT = tendency0 / (C / dt + emitted_slope + h + restore_coeff);
    }
    const double T1 = T0 + dT;
    if (!std::isfinite(T1) || T1 < 150.0 || T1 > 400.0) {
        std::ostringstream msg;
        msg << "slab integration failed in step ending " << format_iso8601(f.t) << " (dt = " << dt
            << " s): T_s = " << T1 << " K";
        throw IntegrationError(msg.str());
    }

    StepResult r;
    r.flux.t = f.t;
    r.flux.S_up = S_up;
    r.flux.L_up = emitted0 + emitted_slope * dT + reflected_lw;
    r.flux.Q_H = h * (T1 - f.T);
    r.flux.Q_E = evaporating ? beta * (deficit0 + deficit_slope * dT) : 0.0;

    r.diag.net_allwave = physics::net_allwave(f.S_dn, r.flux.S_up, f.L_dn, r.flux.L_up);
    r.diag.storage = C * dT / dt;
    r.diag.restore = restore_coeff * (T1 - params.T_deep);
    r.diag.evaporation = physics::evaporation_from_latent(r.flux.Q_E, k.l_v);

    const double W_unclipped = state.W + (f.RR - r.diag.evaporation) * dt;
    const double W1 = std::clamp(W_unclipped, 0.0, params.W_cap);
    r.diag.clipping_loss = W_unclipped - W1;

    r.state.T_s = T1;
    r.state.W = W1;
    return r;
}

FluxSeries slab_run(const ForcingSeries& series, const SlabParams& params, const SlabState& init,
                    const RunOptions& options, const physics::PhysConstants& constants) {
    params.validate();
    const long dt = options.dt_s;
    if (dt < 1 || dt > 1800 || series.interval_s % dt != 0) {
        throw ConfigError("slab timestep " + std::to_string(dt) + " s must lie in [1, 1800] and divide " +
                          std::to_string(series.interval_s) + " s");
    }
    const long per = series.interval_s / dt;
    const auto dt_d = static_cast<double>(dt);

    FluxSeries out;
    out.interval_s = series.interval_s;
    out.records.reserve(series.size());

    SlabState state = init;
    auto advance = [&](const ForcingRecord& f) {
        StepResult r = slab_step(state, f, params, dt_d, constants);
        if (options.on_step) {
            options.on_step(f, r);
        }
        state = r.state;
        return r.flux;
    };

    for (std::size_t k = 0; k < series.size(); ++k) {
        const ForcingRecord& b = series.records[k];
        if (k == 0) {
            out.records.push_back(advance(b));
            continue;
        }
        const ForcingRecord& a = series.records[k - 1];
        FluxRecord last;
        for (long j = 1; j <= per; ++j) {
            ForcingRecord f = b;
            if (j < per) {
                const double w = static_cast<double>(j) / static_cast<double>(per);
                f.t = a.t + Seconds{j * dt};
                f.T = a.T + (b.T - a.T) * w;
                f.q = a.q + (b.q - a.q) * w;
                f.p = a.p + (b.p - a.p) * w;
                f.S_dn = a.S_dn + (b.S_dn - a.S_dn) * w;
                f.L_dn = a.L_dn + (b.L_dn - a.L_dn) * w;
                f.u = a.u + (b.u - a.u) * w;
                f.v = a.v + (b.v - a.v) * w;
                f.RR = a.RR + (b.RR - a.RR) * w;
            }
            last = advance(f);
        }
        out.records.push_back(last);
    }
    return out;
}

void EnsembleSpec::validate() const {
    base.validate();
    if (n_members < 2) {
        throw ConfigError("ensemble needs at least 2 members");
    }
    for (double s : {spread.albedo, spread.emissivity, spread.C_areal, spread.g_a0, spread.g_a1, spread.f_veg,
                     spread.W_cap, spread.T_deep, spread.tau_restore}) {
        if (!(s >= 0.0) || !std::isfinite(s)) {
            throw ConfigError("ensemble spreads must be finite and non-negative");
        }
    }
    for (auto i : exclusion) {
        if (i >= n_members) {
            throw ConfigError("excluded member index " + std::to_string(i) + " out of range");
        }
    }
}

std::vector<SlabParams> generate_members(const EnsembleSpec& spec) {
    spec.validate();
    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    auto perturb = [&](double base, double s) {
        const double z = normal(rng);
        return s == 0.0 ? base : base * std::exp(s * z - 0.5 * s * s);
    };

    std::vector<SlabParams> members;
    members.reserve(spec.n_members);
    for (std::size_t m = 0; m < spec.n_members; ++m) {
        const SlabParams& b = spec.base;
        const ParamSpread& s = spec.spread;
        SlabParams p;
        p.albedo = std::min(perturb(b.albedo, s.albedo), 1.0);
        p.emissivity = std::min(perturb(b.emissivity, s.emissivity), 1.0);
        p.C_areal = perturb(b.C_areal, s.C_areal);
        p.g_a0 = perturb(b.g_a0, s.g_a0);
        p.g_a1 = perturb(b.g_a1, s.g_a1);
        p.f_veg = std::min(perturb(b.f_veg, s.f_veg), 1.0);
        p.W_cap = perturb(b.W_cap, s.W_cap);
        p.T_deep = perturb(b.T_deep, s.T_deep);
        p.tau_restore = perturb(b.tau_restore, s.tau_restore);
        try {
            p.validate();
        } catch (const ConfigError& e) {
            throw ConfigError("ensemble member " + std::to_string(m) + " degenerate: " + e.what());
        }
        members.push_back(p);
    }
    return members;
}

EnsembleMean ensemble_mean(const std::vector<FluxSeries>& members, const std::vector<std::size_t>& exclusion,
                           const ExclusionCriteria& criteria) {
    if (members.empty()) {
        throw DataError("ensemble has no members");
    }
    const std::size_t n = members.front().size();
    for (std::size_t m = 1; m < members.size(); ++m) {
        if (members[m].size() != n) {
            throw DataError("member " + std::to_string(m) + " length differs from member 0");
        }
        for (std::size_t i = 0; i < n; ++i) {
            if (members[m].records[i].t != members.front().records[i].t) {
                throw DataError("member " + std::to_string(m) + " timestamps differ from member 0");
            }
        }
    }

    EnsembleMean result;
    for (auto i : exclusion) {
        if (i >= members.size()) {
            throw ConfigError("excluded member index " + std::to_string(i) + " out of range");
        }
    }
    for (std::size_t m = 0; m < members.size(); ++m) {
        if (std::find(exclusion.begin(), exclusion.end(), m) != exclusion.end()) {
            result.excluded_explicit.push_back(m);
            continue;
        }
        if (criteria.enabled) {
            std::string reason;
            bool any_qe = false;
            for (const auto& r : members[m].records) {
                for (double x : {r.S_up, r.L_up, r.Q_H, r.Q_E}) {
                    if (!std::isfinite(x)) {
                        reason = "non-finite flux";
                    } else if (std::abs(x) > criteria.max_abs_flux && reason.empty()) {
                        reason = "flux magnitude above " + std::to_string(criteria.max_abs_flux) + " W m-2";
                    }
                }
                any_qe = any_qe || r.Q_E != 0.0;
            }
            if (reason.empty() && !any_qe) {
                reason = "Q_E identically zero";
            }
            if (!reason.empty()) {
                result.excluded_auto.emplace_back(m, reason);
                continue;
            }
        }
        result.retained.push_back(m);
    }
    if (result.retained.size() < 2) {
        throw DataError("fewer than 2 ensemble members retained after exclusion");
    }

    const auto count = static_cast<double>(result.retained.size());
    result.mean.interval_s = members.front().interval_s;
    result.mean.spinup = members.front().spinup;
    result.mean.records.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        FluxRecord acc;
        acc.t = members.front().records[i].t;
        for (auto m : result.retained) {
            const auto& r = members[m].records[i];
            acc.S_up += r.S_up;
            acc.L_up += r.L_up;
            acc.Q_H += r.Q_H;
            acc.Q_E += r.Q_E;
        }
        acc.S_up /= count;
        acc.L_up /= count;
        acc.Q_H /= count;
        acc.Q_E /= count;
        result.mean.records[i] = acc;
    }
    return result;
}

}  // namespace urbanemu::slab
