#include "urbanemu/coupling.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <sstream>

#include "urbanemu/io.hpp"
#include "urbanemu/schema.hpp"

namespace urbanemu::coupling {

using physics::FluxRecord;
using physics::FluxSeries;
using physics::ForcingRecord;

const char* to_string(Precision p) {
    return p == Precision::f32 ? "float32" : "float64";
}

const char* to_string(Aggregation a) {
    return a == Aggregation::window_last ? "last" : "mean";
}

Precision precision_from_string(const std::string& s) {
    if (s == "float64" || s == "f64") return Precision::f64;
    if (s == "float32" || s == "f32") return Precision::f32;
    throw ConfigError("unknown precision '" + s + "' (expected float64 or float32)");
}

Aggregation aggregation_from_string(const std::string& s) {
    if (s == "mean") return Aggregation::window_mean;
    if (s == "last") return Aggregation::window_last;
    throw ConfigError("unknown aggregation '" + s + "' (expected mean or last)");
}

physics::Mu0Convention model_mu0_convention(const mlp::MlpModel& model) {
    const auto it = model.metadata.find("mu0_convention");
    return it == model.metadata.end() ? physics::Mu0Convention::signed_value
                                      : physics::mu0_convention_from_string(it->second);
}

InferenceSession InferenceSession::init(std::shared_ptr<const mlp::MlpModel> model, double T_s0,
                                        Precision precision) {
    if (!model) {
        throw SchemaError("session needs a model");
    }
    model->validate();
    const FeatureSchema& expected = emulator_schema();
    if (model->schema.inputs != expected.inputs || model->schema.outputs != expected.outputs) {
        throw SchemaError("model feature order is not the emulator schema");
    }
    if (!model->has_normalization()) {
        throw SchemaError("model carries no normalization statistics");
    }
    if (!std::isfinite(T_s0) || T_s0 < kMinSurfaceTemperature || T_s0 > kMaxSurfaceTemperature) {
        throw StepError("initial surface temperature " + std::to_string(T_s0) + " K outside [150, 400] K");
    }

    InferenceSession s;
    s.model_ = std::move(model);
    s.precision_ = precision;
    s.T_s_ = T_s0;
    if (const auto it = s.model_->metadata.find("emissivity"); it != s.model_->metadata.end()) {
        s.emissivity_ = std::stod(it->second);
    }
    std::size_t widest = in::count;
    for (const auto& l : s.model_->layers) {
        widest = std::max(widest, static_cast<std::size_t>(l.weights.rows()));
    }
    s.input_.assign(in::count, 0.0);
    s.output_.assign(out::count, 0.0);
    if (precision == Precision::f64) {
        s.act64_a_.assign(widest, 0.0);
        s.act64_b_.assign(widest, 0.0);
    } else {
        s.act32_a_.assign(widest, 0.0f);
        s.act32_b_.assign(widest, 0.0f);
        for (const auto& l : s.model_->layers) {
            s.weights32_.emplace_back(l.weights.data(), l.weights.data() + l.weights.size());
            s.biases32_.emplace_back(l.bias.data(), l.bias.data() + l.bias.size());
        }
    }
    return s;
}

void InferenceSession::set_surface_temperature(double T_s) {
    if (!std::isfinite(T_s) || T_s < kMinSurfaceTemperature || T_s > kMaxSurfaceTemperature) {
        throw StepError("surface temperature " + std::to_string(T_s) + " K outside [150, 400] K");
    }
    T_s_ = T_s;
}

std::vector<const void*> InferenceSession::buffer_addresses() const {
    std::vector<const void*> out{input_.data(), output_.data(), act64_a_.data(), act64_b_.data(),
                                 act32_a_.data(), act32_b_.data()};
    for (const auto& w : weights32_) out.push_back(w.data());
    for (const auto& b : biases32_) out.push_back(b.data());
    return out;
}

template <class T>
void InferenceSession::run_network(std::vector<T>& a, std::vector<T>& b,
                                   const std::vector<std::vector<T>>& weights,
                                   const std::vector<std::vector<T>>& biases) {
    const auto& layers = model_->layers;
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const auto n_in = static_cast<std::size_t>(layers[l].weights.cols());
        const auto n_out = static_cast<std::size_t>(layers[l].weights.rows());
        const T* w;
        const T* bias;
        if constexpr (std::is_same_v<T, double>) {
            w = layers[l].weights.data();
            bias = layers[l].bias.data();
        } else {
            w = weights[l].data();
            bias = biases[l].data();
        }
        mlp::dense_forward(w, bias, n_in, n_out, a.data(), b.data());
        if (l + 1 < layers.size()) {
            mlp::activate(model_->activation, b.data(), n_out);
        }
        a.swap(b);
    }
}

FluxRecord InferenceSession::step(const ForcingRecord& forcing, double mu0, double dt_s) {
    if (dt_s < 1.0 || dt_s > 1800.0) {
        if (dt_warnings_++ == 0) {
            std::clog << "warning: timestep " << dt_s << " s outside the trained range [1, 1800] s\n";
        }
    }
    dataset::pack_inputs(forcing, mu0, dt_s, T_s_, input_);
    const auto& in_norm = model_->input_norm;
    const auto& out_norm = model_->output_norm;

    if (precision_ == Precision::f64) {
        for (std::size_t i = 0; i < in::count; ++i) {
            act64_a_[i] = (input_[i] - in_norm.mean[i]) / in_norm.std[i];
        }
        static const std::vector<std::vector<double>> kUnused;
        run_network(act64_a_, act64_b_, kUnused, kUnused);
        for (std::size_t j = 0; j < out::count; ++j) {
            output_[j] = act64_a_[j] * out_norm.std[j] + out_norm.mean[j];
        }
    } else {
        for (std::size_t i = 0; i < in::count; ++i) {
            act32_a_[i] = static_cast<float>((input_[i] - in_norm.mean[i]) / in_norm.std[i]);
        }
        run_network(act32_a_, act32_b_, weights32_, biases32_);
        for (std::size_t j = 0; j < out::count; ++j) {
            output_[j] = static_cast<double>(act32_a_[j]) * out_norm.std[j] + out_norm.mean[j];
        }
    }

    const double T_s = output_[out::T_s];
    const bool finite = std::all_of(output_.begin(), output_.end(), [](double x) { return std::isfinite(x); });
    if (!finite || T_s < kMinSurfaceTemperature || T_s > kMaxSurfaceTemperature) {
        std::ostringstream msg;
        msg << "emulator step " << steps_ << " ending " << format_iso8601(forcing.t) << " failed: outputs [";
        for (std::size_t j = 0; j < out::count; ++j) msg << (j ? ", " : "") << output_[j];
        msg << "] from inputs [";
        for (std::size_t i = 0; i < in::count; ++i) msg << (i ? ", " : "") << input_[i];
        msg << "]";
        throw StepError(msg.str());
    }

    FluxRecord flux;
    flux.t = forcing.t;
    flux.S_up = std::max(output_[out::S_up], 0.0);
    flux.L_up = physics::longwave_from_ts(T_s, emissivity_);
    flux.Q_H = output_[out::Q_H];
    flux.Q_E = output_[out::Q_E];
    flux.T_s = T_s;
    T_s_ = T_s;
    ++steps_;
    return flux;
}

void HostRunConfig::validate() const {
    if (dt_s < 1) {
        throw ConfigError("host timestep must be at least 1 s");
    }
    if (window_s < dt_s || window_s % dt_s != 0) {
        throw ConfigError("averaging window " + std::to_string(window_s) + " s is not a multiple of dt " +
                          std::to_string(dt_s) + " s");
    }
    if (spinup_s < 0) {
        throw ConfigError("spin-up duration must be non-negative");
    }
}

FluxSeries host_run(std::shared_ptr<const mlp::MlpModel> model, const physics::ForcingSeries& series,
                    const physics::SiteMeta& site, const HostRunConfig& cfg, HostRunStats* stats) {
    cfg.validate();
    site.validate();
    if (series.size() == 0) {
        throw ConfigError("empty forcing series");
    }
    if (series.interval_s % cfg.dt_s != 0) {
        throw ConfigError("host timestep " + std::to_string(cfg.dt_s) + " s does not divide the forcing interval " +
                          std::to_string(series.interval_s) + " s");
    }
    const long span = static_cast<long>(series.size() - 1) * series.interval_s;
    if (span % cfg.window_s != 0) {
        throw ConfigError("forcing span is not a whole number of averaging windows");
    }
    const auto mu0_convention = model_mu0_convention(*model);
    const double T_s0 = cfg.init_T_s.value_or(series.records.front().T);
    InferenceSession session = InferenceSession::init(std::move(model), T_s0, cfg.precision);

    const long per_interval = series.interval_s / cfg.dt_s;
    const long per_window = cfg.window_s / cfg.dt_s;
    const auto dt = static_cast<double>(cfg.dt_s);
    const Instant t0 = series.records.front().t;

    FluxSeries out;
    out.interval_s = cfg.window_s;
    out.records.reserve(static_cast<std::size_t>(span / cfg.window_s + 1));

    HostRunStats local;
    local.min_T_s = T_s0;
    local.max_T_s = T_s0;
    FluxRecord acc;
    long in_window = 0;

    auto flush = [&](Instant end) {
        FluxRecord r = acc;
        r.t = end;
        if (cfg.aggregation == Aggregation::window_mean) {
            const auto n = static_cast<double>(in_window);
            r.S_up /= n;
            r.L_up /= n;
            r.Q_H /= n;
            r.Q_E /= n;
            r.T_s.reset();
        }
        out.records.push_back(r);
        out.spinup.push_back((end - t0).count() < cfg.spinup_s);
        acc = FluxRecord{};
        in_window = 0;
    };

    auto advance = [&](const ForcingRecord& f) {
        FluxRecord y;
        try {
            y = session.step(f, physics::solar_mu0(site, f.t, mu0_convention), dt);
        } catch (const StepError& e) {
            throw StepError("host run at " + format_iso8601(f.t) + ": " + e.what());
        }
        local.min_T_s = std::min(local.min_T_s, *y.T_s);
        local.max_T_s = std::max(local.max_T_s, *y.T_s);
        if (cfg.aggregation == Aggregation::window_mean) {
            acc.S_up += y.S_up;
            acc.L_up += y.L_up;
            acc.Q_H += y.Q_H;
            acc.Q_E += y.Q_E;
        } else {
            acc = y;
        }
        ++in_window;
    };

    advance(series.records.front());
    flush(t0);
    long step_index = 0;
    for (std::size_t k = 1; k < series.size(); ++k) {
        const ForcingRecord& a = series.records[k - 1];
        const ForcingRecord& b = series.records[k];
        for (long j = 1; j <= per_interval; ++j) {
            ForcingRecord f = b;
            if (j < per_interval) {
                const double w = static_cast<double>(j) / static_cast<double>(per_interval);
                f.t = a.t + Seconds{j * cfg.dt_s};
                f.T = a.T + (b.T - a.T) * w;
                f.q = a.q + (b.q - a.q) * w;
                f.p = a.p + (b.p - a.p) * w;
                f.S_dn = a.S_dn + (b.S_dn - a.S_dn) * w;
                f.L_dn = a.L_dn + (b.L_dn - a.L_dn) * w;
                f.u = a.u + (b.u - a.u) * w;
                f.v = a.v + (b.v - a.v) * w;
                f.RR = a.RR + (b.RR - a.RR) * w;
            }
            advance(f);
            if (++step_index % per_window == 0) {
                flush(f.t);
            }
        }
    }
    local.steps = session.steps();
    local.dt_warnings = session.dt_warnings();
    if (stats) {
        *stats = local;
    }
    return out;
}

FluxSeries host_run(const mlp::MlpModel& model, const physics::ForcingSeries& series, const physics::SiteMeta& site,
                    const HostRunConfig& cfg, HostRunStats* stats) {
    return host_run(std::make_shared<const mlp::MlpModel>(model), series, site, cfg, stats);
}

nlohmann::ordered_json abi_describe(const mlp::MlpModel& model) {
    model.validate();
    using nlohmann::ordered_json;
    ordered_json j;
    j["format"] = "urbanemu-mlp";
    j["format_version"] = mlp::kModelFormatVersion;
    j["tensor_dtype"] = "float64";
    j["activation"] = mlp::to_string(model.activation);
    j["input_transform"] = "x_n = (x - mean) / std";
    j["output_transform"] = "y = y_n * std + mean";
    j["mu0_convention"] = physics::to_string(model_mu0_convention(model));

    auto features = [](const std::vector<std::string>& names, const std::vector<std::string>& units,
                       const dataset::NormStats& norm) {
        ordered_json arr = ordered_json::array();
        for (std::size_t i = 0; i < names.size(); ++i) {
            ordered_json f;
            f["index"] = i;
            f["name"] = names[i];
            f["unit"] = units[i];
            if (norm.size() == names.size()) {
                f["mean"] = norm.mean[i];
                f["std"] = norm.std[i];
            }
            arr.push_back(f);
        }
        return arr;
    };
    j["inputs"] = features(model.schema.inputs, model.schema.input_units, model.input_norm);
    j["outputs"] = features(model.schema.outputs, model.schema.output_units, model.output_norm);
    ordered_json layers = ordered_json::array();
    for (const auto& l : model.layers) {
        layers.push_back({{"inputs", l.weights.cols()}, {"outputs", l.weights.rows()}});
    }
    j["layers"] = layers;
    j["state"] = {{"input", "T_s_prev"}, {"output", "T_s"}};
    j["metadata"] = model.metadata;
    return j;
}

void write_manifest(const mlp::MlpModel& model, const std::filesystem::path& path) {
    io::write_file_atomic(path, abi_describe(model).dump(2) + "\n");
}

}  // namespace urbanemu::coupling
