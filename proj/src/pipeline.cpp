#include "urbanemu/pipeline.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "urbanemu/dataset.hpp"
#include "urbanemu/eval.hpp"
#include "urbanemu/io.hpp"

namespace urbanemu::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------

namespace {

/// Reads keys from one JSON object and rejects any it did not consume.
class Section {
public:
    Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) {
            throw ConfigError(where() + " must be an object");
        }
    }

    template <class T>
    void get(const char* key, T& out) {
        seen_.insert(key);
        if (!j_.contains(key) || j_.at(key).is_null()) return;
        try {
            out = j_.at(key).get<T>();
        } catch (const json::exception& e) {
            throw ConfigError(where(key) + ": " + e.what());
        }
    }

    [[nodiscard]] bool has(const char* key) {
        seen_.insert(key);
        return j_.contains(key) && !j_.at(key).is_null();
    }

    Section sub(const char* key) {
        seen_.insert(key);
        return Section(j_.at(key), where(key));
    }

    const json& raw(const char* key) {
        seen_.insert(key);
        return j_.at(key);
    }

    void finish() const {
        for (const auto& [key, value] : j_.items()) {
            if (!seen_.count(key)) {
                throw ConfigError("unknown config key " + where(key.c_str()));
            }
        }
    }

    [[nodiscard]] std::string where(const char* key = nullptr) const {
        std::string w = path_.empty() ? std::string() : path_;
        if (key) w += (w.empty() ? "" : ".") + std::string(key);
        return "'" + (w.empty() ? std::string("<root>") : w) + "'";
    }

private:
    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

void read_spread(Section s, slab::ParamSpread& p) {
    s.get("albedo", p.albedo);
    s.get("emissivity", p.emissivity);
    s.get("C_areal", p.C_areal);
    s.get("g_a0", p.g_a0);
    s.get("g_a1", p.g_a1);
    s.get("f_veg", p.f_veg);
    s.get("W_cap", p.W_cap);
    s.get("T_deep", p.T_deep);
    s.get("tau_restore", p.tau_restore);
    s.finish();
}

void read_params(Section s, slab::SlabParams& p) {
    s.get("albedo", p.albedo);
    s.get("emissivity", p.emissivity);
    s.get("C_areal", p.C_areal);
    s.get("g_a0", p.g_a0);
    s.get("g_a1", p.g_a1);
    s.get("f_veg", p.f_veg);
    s.get("W_cap", p.W_cap);
    s.get("T_deep", p.T_deep);
    s.get("tau_restore", p.tau_restore);
    s.finish();
}

void read_climate(Section s, synth::Climate& c) {
    s.get("T_mean", c.T_mean);
    s.get("T_seasonal_amp", c.T_seasonal_amp);
    s.get("T_diurnal_amp", c.T_diurnal_amp);
    s.get("warmest_day", c.warmest_day);
    s.get("T_anomaly_sd", c.T_anomaly_sd);
    s.get("T_anomaly_tau_h", c.T_anomaly_tau_h);
    s.get("rh_mean", c.rh_mean);
    s.get("rh_diurnal_amp", c.rh_diurnal_amp);
    s.get("p_mean", c.p_mean);
    s.get("p_sd", c.p_sd);
    s.get("wind_mean_u", c.wind_mean_u);
    s.get("wind_mean_v", c.wind_mean_v);
    s.get("wind_sd", c.wind_sd);
    s.get("wind_tau_h", c.wind_tau_h);
    s.get("cloud_tau_h", c.cloud_tau_h);
    s.get("cloud_bias", c.cloud_bias);
    s.get("rain_onset", c.rain_onset);
    s.get("rain_end", c.rain_end);
    s.get("rain_mean", c.rain_mean);
    s.finish();
}

Instant read_instant(Section& s, const char* key, Instant fallback) {
    std::string text;
    s.get(key, text);
    if (text.empty()) return fallback;
    try {
        return parse_iso8601(text);
    } catch (const std::exception& e) {
        throw ConfigError(s.where(key) + ": " + e.what());
    }
}

fs::path resolve(const fs::path& base, const std::string& p) {
    if (p.empty()) return {};
    const fs::path path(p);
    return (path.is_absolute() || base.empty() ? path : base / path).lexically_normal();
}

}  // namespace

void PipelineConfig::apply_seed(std::uint64_t s) {
    seed = s;
    synth.seed = s;
    ensemble.seed = s + 1;
    mlp.seed = s + 3;
}

void PipelineConfig::validate() const {
    site.validate();
    synth.validate();
    ensemble.validate();
    if (slab_dt_s < 1 || slab_dt_s > 1800 || synth.interval_s % slab_dt_s != 0) {
        throw ConfigError("slab.dt_s must lie in [1, 1800] and divide the forcing interval");
    }
    if (!(initial_wetness >= 0.0 && initial_wetness <= 1.0)) {
        throw ConfigError("slab.initial_wetness must lie in [0, 1]");
    }
    if (rates.empty()) {
        throw ConfigError("dataset.rates must not be empty");
    }
    for (long r : rates) {
        if (r < 1 || synth.interval_s % r != 0 || r >= synth.interval_s) {
            throw ConfigError("dataset rate " + std::to_string(r) + " s must be positive, below and divide " +
                              std::to_string(synth.interval_s) + " s");
        }
    }
    if (!(emissivity > 0.0 && emissivity <= 1.0)) {
        throw ConfigError("dataset.emissivity outside (0, 1]");
    }
    mlp.validate();
    if (n_seeds < 1) {
        throw ConfigError("mlp.n_seeds must be at least 1");
    }
    host.validate();
    if (eval_pred != "rollout" && eval_pred != "mem" && eval_pred != "slab") {
        throw ConfigError("evaluate.pred must be rollout, mem or slab");
    }
    if (eval_rows != "test" && eval_rows != "train" && eval_rows != "all") {
        throw ConfigError("evaluate.rows must be test, train or all");
    }
    if (bench_repeats < 2) {
        throw ConfigError("bench.repeats must be at least 2");
    }
    if (!(bench_days > 0.0)) {
        throw ConfigError("bench.days must be positive");
    }
    if (!forcing_path.empty() && !fs::exists(forcing_path)) {
        throw ConfigError("forcing path " + forcing_path.string() + " does not exist");
    }
}

PipelineConfig config_from_json(const json& j, const fs::path& base_dir) {
    PipelineConfig c;
    Section root(j, "");
    std::uint64_t seed = 0;
    root.get("seed", seed);
    c.apply_seed(seed);

    if (root.has("site")) {
        Section s = root.sub("site");
        s.get("latitude", c.site.latitude);
        s.get("longitude", c.site.longitude);
        s.get("utc_offset", c.site.utc_offset);
        s.finish();
    }
    std::string workdir;
    root.get("workdir", workdir);
    if (!workdir.empty()) c.workdir = resolve(base_dir, workdir);

    if (root.has("forcing")) {
        Section s = root.sub("forcing");
        c.synth.start = read_instant(s, "start", c.synth.start);
        c.synth.end = read_instant(s, "end", c.synth.end);
        s.get("interval_s", c.synth.interval_s);
        s.get("obs_fraction", c.synth.obs_fraction);
        s.get("obs_block", c.synth.obs_block);
        std::string path;
        s.get("path", path);
        c.forcing_path = resolve(base_dir, path);
        if (s.has("climate")) read_climate(s.sub("climate"), c.synth.climate);
        s.finish();
    }
    if (root.has("slab")) {
        Section s = root.sub("slab");
        s.get("dt_s", c.slab_dt_s);
        s.get("initial_wetness", c.initial_wetness);
        if (s.has("base")) read_params(s.sub("base"), c.ensemble.base);
        s.get("members", c.ensemble.n_members);
        if (s.has("spread")) read_spread(s.sub("spread"), c.ensemble.spread);
        s.get("exclude", c.ensemble.exclusion);
        s.get("auto_exclude", c.exclusion.enabled);
        s.get("max_abs_flux", c.exclusion.max_abs_flux);
        s.finish();
    }
    if (root.has("dataset")) {
        Section s = root.sub("dataset");
        s.get("rates", c.rates);
        std::string conv;
        s.get("mu0_convention", conv);
        if (!conv.empty()) c.mu0_convention = physics::mu0_convention_from_string(conv);
        s.get("emissivity", c.emissivity);
        s.finish();
    }
    if (root.has("mlp")) {
        Section s = root.sub("mlp");
        s.get("hidden_layers", c.mlp.hidden_layers);
        s.get("neurons", c.mlp.neurons_per_layer);
        std::string act;
        s.get("activation", act);
        if (!act.empty()) c.mlp.activation = mlp::activation_from_string(act);
        s.get("l2", c.mlp.l2);
        s.get("learning_rate", c.mlp.learning_rate);
        s.get("batch_size", c.mlp.batch_size);
        s.get("max_epochs", c.mlp.max_epochs);
        s.get("patience", c.mlp.patience);
        s.get("val_fraction", c.mlp.val_fraction);
        s.get("lr_decay", c.mlp.lr_decay);
        s.get("lr_patience", c.mlp.lr_patience);
        s.get("min_learning_rate", c.mlp.min_learning_rate);
        s.get("n_seeds", c.n_seeds);
        s.get("threads", c.threads);
        s.finish();
    }
    if (root.has("host")) {
        Section s = root.sub("host");
        s.get("dt_s", c.host.dt_s);
        s.get("window_s", c.host.window_s);
        s.get("spinup_s", c.host.spinup_s);
        double t0 = 0.0;
        if (s.has("init_T_s")) {
            s.get("init_T_s", t0);
            c.host.init_T_s = t0;
        }
        std::string agg, prec;
        s.get("aggregation", agg);
        s.get("precision", prec);
        if (!agg.empty()) c.host.aggregation = coupling::aggregation_from_string(agg);
        if (!prec.empty()) c.host.precision = coupling::precision_from_string(prec);
        s.finish();
    }
    if (root.has("evaluate")) {
        Section s = root.sub("evaluate");
        s.get("pred", c.eval_pred);
        s.get("rows", c.eval_rows);
        s.finish();
    }
    if (root.has("compare")) {
        Section s = root.sub("compare");
        s.get("include_rollout", c.compare_include_rollout);
        if (s.has("stages")) {
            const json& stages = s.raw("stages");
            if (!stages.is_array()) throw ConfigError("'compare.stages' must be an array");
            for (std::size_t i = 0; i < stages.size(); ++i) {
                Section st(stages[i], "compare.stages[" + std::to_string(i) + "]");
                CompareStage stage;
                st.get("label", stage.label);
                if (stage.label.empty()) stage.label = "stage" + std::to_string(i);
                if (st.has("spread")) read_spread(st.sub("spread"), stage.spread);
                st.finish();
                c.compare_stages.push_back(stage);
            }
        }
        s.finish();
    }
    if (root.has("bench")) {
        Section s = root.sub("bench");
        s.get("repeats", c.bench_repeats);
        s.get("warmup", c.bench_warmup);
        s.get("days", c.bench_days);
        s.finish();
    }
    root.finish();
    return c;
}

PipelineConfig load_config(const fs::path& path) {
    json j;
    try {
        j = json::parse(io::read_file(path), nullptr, true, true);
    } catch (const json::exception& e) {
        throw ConfigError("cannot parse config " + path.string() + ": " + e.what());
    } catch (const LoadError& e) {
        throw ConfigError(e.what());
    }
    return config_from_json(j, path.parent_path());
}

fs::path Layout::member(std::size_t i) const {
    char name[32];
    std::snprintf(name, sizeof name, "member_%02zu.csv", i);
    return root / "members" / name;
}

// ---------------------------------------------------------------------------
// Helpers
// ---------------------------------------------------------------------------

namespace {

std::string now_iso() {
    return format_iso8601(std::chrono::floor<Seconds>(std::chrono::system_clock::now()));
}

void log_line(std::ostream& log, const std::string& cmd, const std::string& event, ordered_json fields = {}) {
    ordered_json line;
    line["ts"] = now_iso();
    line["cmd"] = cmd;
    line["event"] = event;
    if (fields.is_object()) {
        for (auto& [k, v] : fields.items()) line[k] = v;
    }
    log << line.dump() << '\n' << std::flush;
}

void refuse_existing(const std::vector<fs::path>& artifacts, bool force) {
    if (force) return;
    for (const auto& a : artifacts) {
        if (fs::exists(a)) {
            throw ArtifactExistsError("artifact " + a.string() + " exists; rerun with --force to overwrite");
        }
    }
}

void require(const fs::path& p, const std::string& producer) {
    if (!fs::exists(p)) {
        throw MissingPrerequisiteError("missing " + p.string() + "; run '" + producer + "' first");
    }
}

fs::path forcing_file(const PipelineConfig& c) {
    return c.forcing_path.empty() ? Layout{c.workdir}.forcing() : c.forcing_path;
}

dataset::TimeSeriesTable load_forcing_table(const PipelineConfig& c) {
    const fs::path p = forcing_file(c);
    require(p, "synth-forcing");
    return dataset::load_forcing(p);
}

physics::FluxSeries run_ensemble_mean(const PipelineConfig& c, const physics::ForcingSeries& forcing,
                                      const slab::EnsembleSpec& spec, std::vector<physics::FluxSeries>* members_out,
                                      slab::EnsembleMean* summary) {
    const auto params = slab::generate_members(spec);
    std::vector<physics::FluxSeries> members;
    members.reserve(params.size());
    slab::RunOptions ro;
    ro.dt_s = c.slab_dt_s;
    for (std::size_t m = 0; m < params.size(); ++m) {
        const slab::SlabState init{forcing.records.front().T, c.initial_wetness * params[m].W_cap};
        try {
            members.push_back(slab::slab_run(forcing, params[m], init, ro));
        } catch (const IntegrationError& e) {
            // A failing member is kept as a non-finite series so that automatic exclusion reports it.
            physics::FluxSeries bad;
            bad.interval_s = forcing.interval_s;
            for (const auto& f : forcing.records) {
                physics::FluxRecord r;
                r.t = f.t;
                r.S_up = std::numeric_limits<double>::quiet_NaN();
                bad.records.push_back(r);
            }
            members.push_back(std::move(bad));
        }
    }
    slab::EnsembleMean em = slab::ensemble_mean(members, spec.exclusion, c.exclusion);
    physics::FluxSeries mean = em.mean;
    if (members_out) *members_out = std::move(members);
    if (summary) *summary = std::move(em);
    return mean;
}

std::vector<bool> rows_mask(const PipelineConfig& c, const dataset::TimeSeriesTable& forcing) {
    if (c.eval_rows == "all") return {};
    if (forcing.obs_mask.empty()) {
        throw DataError("forcing has no obs column; evaluate.rows must be 'all'");
    }
    std::vector<bool> m = forcing.obs_mask;
    if (c.eval_rows == "train") m.flip();
    return m;
}

physics::FluxSeries slab_baseline(const PipelineConfig& c, const physics::ForcingSeries& forcing) {
    slab::RunOptions ro;
    ro.dt_s = c.slab_dt_s;
    return slab::slab_run(forcing, c.ensemble.base,
                          {forcing.records.front().T, c.initial_wetness * c.ensemble.base.W_cap}, ro);
}

physics::FluxSeries load_rollout(const PipelineConfig& c) {
    const Layout l{c.workdir};
    require(l.rollout(), "rollout");
    return dataset::read_flux_csv(l.rollout());
}

}  // namespace

void stamp_conventions(mlp::MlpModel& model, physics::Mu0Convention mu0, double emissivity) {
    model.metadata["mu0_convention"] = physics::to_string(mu0);
    model.metadata["emissivity"] = io::format_double(emissivity);
}

std::string seeds_csv(const mlp::RepeatedResult& r) {
    std::ostringstream os;
    os << "seed,ok,mean_nMAE_pct,epochs_run,best_epoch,best_val_loss,selected,error\n";
    for (std::size_t i = 0; i < r.outcomes.size(); ++i) {
        const auto& o = r.outcomes[i];
        std::string err = o.error;
        for (char& ch : err) {
            if (ch == ',' || ch == '\n') ch = ';';
        }
        os << o.seed << ',' << (o.ok ? 1 : 0) << ',' << (o.ok ? io::format_double(o.score) : "") << ','
           << o.report.epochs_run << ',' << o.report.best_epoch << ','
           << (o.ok ? io::format_double(o.report.best_val_loss) : "") << ',' << (i == r.selected_index ? 1 : 0)
           << ',' << err << '\n';
    }
    return os.str();
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

void cmd_synth_forcing(const PipelineConfig& c, bool force, std::ostream& log) {
    const Layout l{c.workdir};
    if (!c.forcing_path.empty()) {
        throw ConfigError("forcing.path is set; synth-forcing would not be used");
    }
    refuse_existing({l.forcing()}, force);
    const auto series = synth::synth_forcing(c.site, c.synth);
    fs::create_directories(l.root);
    dataset::write_forcing_csv(series, l.forcing());
    const auto check = dataset::load_forcing(l.forcing());
    std::size_t observed = 0;
    for (bool b : check.obs_mask) observed += b ? 1 : 0;
    log_line(log, "synth-forcing", "done",
             {{"artifact", l.forcing().string()},
              {"rows", check.rows()},
              {"observed", observed},
              {"start", format_iso8601(check.start)},
              {"interval_s", check.interval_s}});
}

void cmd_ensemble(const PipelineConfig& c, bool force, std::ostream& log) {
    const Layout l{c.workdir};
    std::vector<fs::path> artifacts{l.mem(), l.ensemble_summary()};
    for (std::size_t i = 0; i < c.ensemble.n_members; ++i) artifacts.push_back(l.member(i));
    refuse_existing(artifacts, force);

    const auto forcing = dataset::to_forcing_series(load_forcing_table(c));
    std::vector<physics::FluxSeries> members;
    slab::EnsembleMean summary;
    const auto mean = run_ensemble_mean(c, forcing, c.ensemble, &members, &summary);

    fs::create_directories(l.root / "members");
    for (std::size_t i = 0; i < members.size(); ++i) {
        dataset::write_flux_csv(members[i], l.member(i));
    }
    dataset::write_flux_csv(mean, l.mem());
    const auto params = slab::generate_members(c.ensemble);
    ordered_json s;
    s["members"] = members.size();
    s["retained"] = summary.retained;
    s["excluded_explicit"] = summary.excluded_explicit;
    ordered_json autos = ordered_json::array();
    for (const auto& [m, why] : summary.excluded_auto) autos.push_back({{"member", m}, {"reason", why}});
    s["excluded_auto"] = autos;
    ordered_json ps = ordered_json::array();
    for (const auto& p : params) {
        ps.push_back({{"albedo", p.albedo},
                      {"emissivity", p.emissivity},
                      {"C_areal", p.C_areal},
                      {"g_a0", p.g_a0},
                      {"g_a1", p.g_a1},
                      {"f_veg", p.f_veg},
                      {"W_cap", p.W_cap},
                      {"T_deep", p.T_deep},
                      {"tau_restore", p.tau_restore}});
    }
    s["parameters"] = ps;
    io::write_file_atomic(l.ensemble_summary(), s.dump(2) + "\n");

    const auto check = dataset::read_flux_csv(l.mem());
    if (check.size() != forcing.size()) {
        throw DataError("ensemble mean has " + std::to_string(check.size()) + " rows for " +
                        std::to_string(forcing.size()) + " forcing rows");
    }
    log_line(log, "ensemble", "done",
             {{"artifact", l.mem().string()},
              {"rows", check.size()},
              {"retained", summary.retained.size()},
              {"excluded", summary.excluded_explicit.size() + summary.excluded_auto.size()}});
}

void cmd_train(const PipelineConfig& c, bool force, std::ostream& log) {
    const Layout l{c.workdir};
    refuse_existing({l.model(), l.manifest(), l.seeds()}, force);
    const auto table = load_forcing_table(c);
    require(l.mem(), "ensemble");
    const auto mem = dataset::read_flux_csv(l.mem());
    const auto targets = dataset::derive_targets(mem, c.emissivity);
    const auto forcing = dataset::to_forcing_series(table);

    dataset::AugmentOptions ao;
    ao.site = c.site;
    ao.mu0_convention = c.mu0_convention;
    const auto matrix = dataset::augment_multirate(table, targets, c.rates, c.seed + 2, ao);
    log_line(log, "train", "augmented", {{"rows", matrix.rows()}, {"rates", c.rates.size()}});

    // Selection score: mean nMAE of a full-period rollout against the ensemble mean.
    eval::MaskPolicy all;
    all.description = "whole period";
    const mlp::Scorer scorer = [&](const mlp::MlpModel& trained) {
        mlp::MlpModel m = trained;
        stamp_conventions(m, c.mu0_convention, c.emissivity);
        const auto out = coupling::host_run(m, forcing, c.site, c.host);
        return eval::mean_nmae(eval::evaluate(out, mem, all));
    };
    auto result = mlp::train_repeated(matrix, c.mlp, c.n_seeds, scorer, c.threads);
    stamp_conventions(result.selected, c.mu0_convention, c.emissivity);
    result.selected.metadata["augment.seed"] = std::to_string(c.seed + 2);

    fs::create_directories(l.root);
    mlp::save_model(result.selected, l.model());
    coupling::write_manifest(result.selected, l.manifest());
    io::write_file_atomic(l.seeds(), seeds_csv(result));
    mlp::load_model(l.model(), emulator_schema());

    std::size_t failed = 0;
    for (const auto& o : result.outcomes) failed += o.ok ? 0 : 1;
    log_line(log, "train", "done",
             {{"artifact", l.model().string()},
              {"seeds", result.outcomes.size()},
              {"failed", failed},
              {"selected_seed", result.outcomes[result.selected_index].seed},
              {"selected_mean_nmae", result.outcomes[result.selected_index].score}});
}

void cmd_rollout(const PipelineConfig& c, bool force, std::ostream& log) {
    const Layout l{c.workdir};
    refuse_existing({l.rollout()}, force);
    const auto forcing = dataset::to_forcing_series(load_forcing_table(c));
    require(l.model(), "train");
    const auto model = std::make_shared<const mlp::MlpModel>(mlp::load_model(l.model(), emulator_schema()));
    coupling::HostRunStats stats;
    const auto out = coupling::host_run(model, forcing, c.site, c.host, &stats);
    dataset::write_flux_csv(out, l.rollout());
    dataset::read_flux_csv(l.rollout());
    log_line(log, "rollout", "done",
             {{"artifact", l.rollout().string()},
              {"windows", out.size()},
              {"steps", stats.steps},
              {"min_T_s", stats.min_T_s},
              {"max_T_s", stats.max_T_s},
              {"dt_warnings", stats.dt_warnings}});
}

void cmd_evaluate(const PipelineConfig& c, bool force, std::ostream& log) {
    const Layout l{c.workdir};
    refuse_existing({l.eval_csv(), l.eval_txt()}, force);
    const auto table = load_forcing_table(c);
    require(l.mem(), "ensemble");
    const auto mem = dataset::read_flux_csv(l.mem());
    physics::FluxSeries pred;
    std::string label;
    if (c.eval_pred == "rollout") {
        pred = load_rollout(c);
        label = "emulator";
    } else if (c.eval_pred == "mem") {
        pred = mem;
        label = "MEM";
    } else {
        pred = slab_baseline(c, dataset::to_forcing_series(table));
        label = "slab";
    }
    eval::MaskPolicy mask;
    mask.rows = rows_mask(c, table);
    mask.description = c.eval_rows + " rows";
    const auto report = eval::evaluate(pred, mem, mask, "MEM");
    io::write_file_atomic(l.eval_csv(), eval::eval_csv(report));
    io::write_file_atomic(l.eval_txt(), eval::eval_table({{label, report}}));

    ordered_json fields{{"artifact", l.eval_csv().string()}, {"pred", label}, {"rows", c.eval_rows}};
    for (eval::Flux f : eval::kFluxes) {
        if (report.has(f)) fields[std::string("nMAE_") + eval::to_string(f)] = report.at(f).nmae;
    }
    log_line(log, "evaluate", "done", fields);
}

void cmd_compare(const PipelineConfig& c, bool force, std::ostream& log) {
    const Layout l{c.workdir};
    refuse_existing({l.compare_csv(), l.compare_txt()}, force);
    const auto table = load_forcing_table(c);
    const auto forcing = dataset::to_forcing_series(table);
    require(l.mem(), "ensemble");
    const auto mem = dataset::read_flux_csv(l.mem());

    std::vector<std::pair<std::string, physics::FluxSeries>> configs;
    for (std::size_t i = 0; i < c.compare_stages.size(); ++i) {
        slab::EnsembleSpec spec = c.ensemble;
        spec.spread = c.compare_stages[i].spread;
        spec.seed = c.seed + 10 + i;
        spec.exclusion.clear();
        configs.emplace_back(c.compare_stages[i].label, run_ensemble_mean(c, forcing, spec, nullptr, nullptr));
    }
    if (c.compare_include_rollout) {
        configs.emplace_back("emulator", load_rollout(c));
    }
    eval::MaskPolicy mask;
    mask.rows = rows_mask(c, table);
    mask.description = c.eval_rows + " rows";
    const auto comparison = eval::compare_configs(configs, mem, mask);
    io::write_file_atomic(l.compare_csv(), eval::comparison_csv(comparison));
    io::write_file_atomic(l.compare_txt(), eval::comparison_table(comparison));
    ordered_json ranking = ordered_json::array();
    for (auto i : comparison.ranking) ranking.push_back(comparison.configs[i].label);
    log_line(log, "compare", "done", {{"artifact", l.compare_csv().string()}, {"ranking", ranking}});
}

void cmd_bench(const PipelineConfig& c, bool force, std::ostream& log) {
    const Layout l{c.workdir};
    refuse_existing({l.bench_csv(), l.bench_txt()}, force);
    auto forcing = dataset::to_forcing_series(load_forcing_table(c));
    const auto keep = std::min(forcing.size(),
                               static_cast<std::size_t>(c.bench_days * 86400.0 / static_cast<double>(forcing.interval_s)) + 1);
    forcing.records.resize(keep);
    forcing.obs.clear();
    const long span = static_cast<long>(keep - 1) * forcing.interval_s;
    coupling::HostRunConfig host = c.host;
    host.window_s = forcing.interval_s;
    if (span % host.window_s != 0) {
        throw ConfigError("bench period is not a whole number of forcing intervals");
    }
    require(l.model(), "train");
    const auto model = std::make_shared<const mlp::MlpModel>(mlp::load_model(l.model(), emulator_schema()));

    std::vector<eval::Runnable> runnables;
    runnables.push_back({"emulator rollout", [&] { coupling::host_run(model, forcing, c.site, host); }});
    runnables.push_back({"slab rollout", [&] {
                             slab::RunOptions ro;
                             ro.dt_s = host.dt_s;
                             slab::slab_run(forcing, c.ensemble.base,
                                            {forcing.records.front().T, c.initial_wetness * c.ensemble.base.W_cap}, ro);
                         }});
    auto report = eval::bench(runnables, c.bench_repeats, c.bench_warmup);
    report.environment += "; period " + std::to_string(keep - 1) + " intervals at dt " + std::to_string(host.dt_s) + " s";
    io::write_file_atomic(l.bench_csv(), eval::bench_csv(report));
    io::write_file_atomic(l.bench_txt(), eval::bench_table(report));
    ordered_json fields{{"artifact", l.bench_csv().string()}};
    for (const auto& e : report.entries) fields[e.label] = e.formatted();
    if (report.entries.size() == 2 && report.entries[0].ok && report.entries[1].ok && report.entries[0].mean_s > 0) {
        fields["slab_over_emulator"] = report.entries[1].mean_s / report.entries[0].mean_s;
    }
    log_line(log, "bench", "done", fields);
    for (const auto& e : report.entries) {
        if (!e.ok) throw std::runtime_error("benchmark of " + e.label + " failed: " + e.error);
    }
}

int run_command(const std::string& name, PipelineConfig config, const CommandOptions& options, std::ostream& log) {
    try {
        if (options.seed) config.apply_seed(*options.seed);
        if (options.workdir) config.workdir = *options.workdir;
        config.validate();
        const bool f = options.force;
        if (name == "synth-forcing") {
            cmd_synth_forcing(config, f, log);
        } else if (name == "ensemble") {
            cmd_ensemble(config, f, log);
        } else if (name == "train") {
            cmd_train(config, f, log);
        } else if (name == "rollout") {
            cmd_rollout(config, f, log);
        } else if (name == "evaluate") {
            cmd_evaluate(config, f, log);
        } else if (name == "compare") {
            cmd_compare(config, f, log);
        } else if (name == "bench") {
            cmd_bench(config, f, log);
        } else if (name == "run-all") {
            if (config.forcing_path.empty()) cmd_synth_forcing(config, f, log);
            cmd_ensemble(config, f, log);
            cmd_train(config, f, log);
            cmd_rollout(config, f, log);
            cmd_evaluate(config, f, log);
            cmd_compare(config, f, log);
            cmd_bench(config, f, log);
        } else {
            throw ConfigError("unknown command '" + name + "'");
        }
        return kExitOk;
    } catch (const ArtifactExistsError& e) {
        log_line(log, name, "refused", {{"error", e.what()}});
        return kExitExists;
    } catch (const std::exception& e) {
        log_line(log, name, "error", {{"error", e.what()}});
        return kExitError;
    }
}

}  // namespace urbanemu::pipeline
