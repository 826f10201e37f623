#include "urbanemu/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <iomanip>
#include <limits>
#include <numeric>
#include <sstream>
#include <thread>

#include "urbanemu/errors.hpp"
#include "urbanemu/io.hpp"

namespace urbanemu::eval {

using physics::FluxRecord;
using physics::FluxSeries;

const char* to_string(Flux f) {
    switch (f) {
        case Flux::S_up: return "S_up";
        case Flux::L_up: return "L_up";
        case Flux::Q_H: return "Q_H";
        case Flux::Q_E: return "Q_E";
    }
    return "?";
}

double flux_value(const FluxRecord& r, Flux f) {
    switch (f) {
        case Flux::S_up: return r.S_up;
        case Flux::L_up: return r.L_up;
        case Flux::Q_H: return r.Q_H;
        case Flux::Q_E: return r.Q_E;
    }
    return 0.0;
}

namespace {

void check_pair(std::span<const double> pred, std::span<const double> truth) {
    if (pred.size() != truth.size()) {
        throw DataError("metric inputs differ in length (" + std::to_string(pred.size()) + " vs " +
                        std::to_string(truth.size()) + ")");
    }
    if (pred.empty()) {
        throw DataError("metric of an empty sample");
    }
}

double mean_of(std::span<const double> x) {
    return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

}  // namespace

double metric_mb(std::span<const double> pred, std::span<const double> truth) {
    check_pair(pred, truth);
    double sum = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) sum += pred[i] - truth[i];
    return sum / static_cast<double>(pred.size());
}

double metric_mae(std::span<const double> pred, std::span<const double> truth) {
    check_pair(pred, truth);
    double sum = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) sum += std::abs(pred[i] - truth[i]);
    return sum / static_cast<double>(pred.size());
}

double metric_sde(std::span<const double> pred, std::span<const double> truth) {
    check_pair(pred, truth);
    const double offset = mean_of(pred) - mean_of(truth);
    double sum = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = (pred[i] - truth[i]) - offset;
        sum += d * d;
    }
    return std::sqrt(sum / static_cast<double>(pred.size()));
}

double metric_nmae(std::span<const double> pred, std::span<const double> truth) {
    const double mae = metric_mae(pred, truth);
    const double mean_truth = mean_of(truth);
    if (mean_truth == 0.0) {
        throw UndefinedValueError("nMAE undefined: mean of the reference is zero");
    }
    return 100.0 * mae / std::abs(mean_truth);
}

double FluxMetrics::mb_pct() const {
    return 100.0 * mb / std::abs(mean_truth);
}

double FluxMetrics::sde_pct() const {
    return 100.0 * sde / std::abs(mean_truth);
}

const FluxMetrics& EvalReport::at(Flux f) const {
    const auto i = static_cast<std::size_t>(f);
    if (!flux[i]) {
        throw UndefinedValueError(std::string(to_string(f)) + ": " +
                                  (error[i].empty() ? "no metrics" : error[i]));
    }
    return *flux[i];
}

namespace {

void check_aligned(const FluxSeries& pred, const FluxSeries& truth) {
    if (pred.size() != truth.size()) {
        throw DataError("series are misaligned: " + std::to_string(pred.size()) + " vs " +
                        std::to_string(truth.size()) + " rows");
    }
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (pred.records[i].t != truth.records[i].t) {
            throw DataError("series are misaligned at row " + std::to_string(i) + ": " +
                            format_iso8601(pred.records[i].t) + " vs " + format_iso8601(truth.records[i].t));
        }
    }
}

bool row_included(const FluxSeries& pred, const MaskPolicy& mask, std::size_t i) {
    if (!mask.rows.empty() && !mask.rows[i]) return false;
    if (mask.exclude_spinup && !pred.spinup.empty() && pred.spinup[i]) return false;
    return true;
}

struct Sample {
    std::vector<double> pred;
    std::vector<double> truth;
};

Sample masked_sample(const FluxSeries& pred, const FluxSeries& truth, const MaskPolicy& mask, Flux f) {
    Sample s;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (!row_included(pred, mask, i)) continue;
        const double t = flux_value(truth.records[i], f);
        if (f == Flux::S_up && !(t > mask.s_up_threshold)) continue;
        s.pred.push_back(flux_value(pred.records[i], f));
        s.truth.push_back(t);
    }
    return s;
}

}  // namespace

EvalReport evaluate(const FluxSeries& pred, const FluxSeries& truth, const MaskPolicy& mask,
                    const std::string& truth_label) {
    check_aligned(pred, truth);
    if (!mask.rows.empty() && mask.rows.size() != pred.size()) {
        throw DataError("row mask has " + std::to_string(mask.rows.size()) + " entries for " +
                        std::to_string(pred.size()) + " rows");
    }
    EvalReport report;
    report.truth_label = truth_label;
    report.mask_description = mask.description;
    for (Flux f : kFluxes) {
        const auto k = static_cast<std::size_t>(f);
        const Sample s = masked_sample(pred, truth, mask, f);
        if (s.pred.empty()) {
            report.error[k] = std::string("empty sample for ") + to_string(f) + " after masking";
            continue;
        }
        FluxMetrics m;
        m.n = s.pred.size();
        m.mean_truth = mean_of(s.truth);
        m.mb = metric_mb(s.pred, s.truth);
        m.mae = metric_mae(s.pred, s.truth);
        m.sde = metric_sde(s.pred, s.truth);
        try {
            m.nmae = metric_nmae(s.pred, s.truth);
        } catch (const UndefinedValueError& e) {
            report.error[k] = std::string(to_string(f)) + ": " + e.what();
            continue;
        }
        report.flux[k] = m;
    }
    return report;
}

double mean_nmae(const EvalReport& report) {
    double sum = 0.0;
    for (Flux f : kFluxes) sum += report.at(f).nmae;
    return 0.25 * sum;
}

double quantile(std::vector<double> values, double p) {
    if (values.empty()) {
        throw DataError("quantile of an empty sample");
    }
    if (!(p >= 0.0 && p <= 1.0)) {
        throw DomainError("quantile probability outside [0, 1]");
    }
    std::sort(values.begin(), values.end());
    const double h = p * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

BoxSummary box_summary(std::span<const double> values) {
    std::vector<double> v(values.begin(), values.end());
    BoxSummary b;
    b.median = quantile(v, 0.5);
    b.q1 = quantile(v, 0.25);
    b.q3 = quantile(v, 0.75);
    const double lo_fence = b.q1 - 1.5 * b.iqr();
    const double hi_fence = b.q3 + 1.5 * b.iqr();
    b.whisker_lo = b.q1;
    b.whisker_hi = b.q3;
    for (double x : v) {
        if (x >= lo_fence) b.whisker_lo = std::min(b.whisker_lo, x);
        if (x <= hi_fence) b.whisker_hi = std::max(b.whisker_hi, x);
    }
    return b;
}

Comparison compare_configs(const std::vector<std::pair<std::string, FluxSeries>>& configs, const FluxSeries& truth,
                           const MaskPolicy& mask) {
    if (configs.size() < 2) {
        throw DataError("comparison needs at least 2 configurations");
    }
    Comparison out;
    for (const auto& [label, pred] : configs) {
        check_aligned(pred, truth);
        ConfigSummary c;
        c.label = label;
        c.report = evaluate(pred, truth, mask);
        for (Flux f : kFluxes) {
            const auto k = static_cast<std::size_t>(f);
            const Sample s = masked_sample(pred, truth, mask, f);
            if (s.pred.empty()) continue;
            std::vector<double> bias(s.pred.size()), abs_err(s.pred.size());
            for (std::size_t i = 0; i < s.pred.size(); ++i) {
                bias[i] = s.pred[i] - s.truth[i];
                abs_err[i] = std::abs(bias[i]);
            }
            c.bias[k] = box_summary(bias);
            c.abs_error[k] = box_summary(abs_err);
        }
        try {
            c.mean_nmae = mean_nmae(c.report);
        } catch (const UndefinedValueError&) {
            c.mean_nmae = std::numeric_limits<double>::infinity();
        }
        out.configs.push_back(std::move(c));
    }
    out.ranking.resize(out.configs.size());
    std::iota(out.ranking.begin(), out.ranking.end(), std::size_t{0});
    std::sort(out.ranking.begin(), out.ranking.end(), [&](std::size_t a, std::size_t b) {
        const auto& ca = out.configs[a];
        const auto& cb = out.configs[b];
        if (ca.mean_nmae != cb.mean_nmae) return ca.mean_nmae < cb.mean_nmae;
        if (ca.label != cb.label) return ca.label < cb.label;
        return a < b;
    });
    return out;
}

std::string format_sig2(double x) {
    if (!std::isfinite(x)) return x != x ? "nan" : (x > 0 ? "inf" : "-inf");
    char buf[64];
    std::snprintf(buf, sizeof buf, "%#.2g", x);
    std::string s = buf;
    if (s.find('e') == std::string::npos && !s.empty() && s.back() == '.') s.pop_back();
    return s;
}

std::string BenchEntry::formatted() const {
    if (!ok) return "failed: " + error;
    return format_sig2(mean_s) + " ± " + format_sig2(std_s) + " s";
}

BenchReport bench(const std::vector<Runnable>& runnables, std::size_t repeats, std::size_t warmup) {
    if (repeats < 2) {
        throw ConfigError("bench needs at least 2 repeats to report a standard deviation");
    }
    using clock = std::chrono::steady_clock;
    BenchReport report;
    report.environment = "single-threaded on the calling thread; steady_clock; " + std::to_string(warmup) +
                         " warm-up run(s) discarded; hardware threads available: " +
                         std::to_string(std::thread::hardware_concurrency());
    for (const auto& r : runnables) {
        BenchEntry e;
        e.label = r.label;
        try {
            for (std::size_t i = 0; i < warmup; ++i) r.fn();
            for (std::size_t i = 0; i < repeats; ++i) {
                const auto t0 = clock::now();
                r.fn();
                const auto t1 = clock::now();
                e.samples_s.push_back(std::chrono::duration<double>(t1 - t0).count());
            }
        } catch (const std::exception& ex) {
            e.ok = false;
            e.error = ex.what();
        }
        e.repeats = e.samples_s.size();
        if (e.ok) {
            const double n = static_cast<double>(e.repeats);
            e.mean_s = std::accumulate(e.samples_s.begin(), e.samples_s.end(), 0.0) / n;
            double ss = 0.0;
            for (double s : e.samples_s) ss += (s - e.mean_s) * (s - e.mean_s);
            e.std_s = std::sqrt(ss / (n - 1.0));
        }
        report.entries.push_back(std::move(e));
    }
    return report;
}

// ---------------------------------------------------------------------------
// Writers
// ---------------------------------------------------------------------------

namespace {

std::string fmt(double x) {
    return io::format_double(x);
}

std::string fixed(double x, int digits) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(digits) << x;
    return os.str();
}

}  // namespace

std::string eval_csv(const EvalReport& report) {
    std::ostringstream os;
    os << "flux,truth,mask,N,mean_truth_Wm2,MB_Wm2,MAE_Wm2,SDE_Wm2,nMAE_pct,MB_pct,SDE_pct,error\n";
    for (Flux f : kFluxes) {
        const auto k = static_cast<std::size_t>(f);
        os << to_string(f) << ',' << report.truth_label << ',' << report.mask_description << ',';
        if (const auto& m = report.flux[k]) {
            os << m->n << ',' << fmt(m->mean_truth) << ',' << fmt(m->mb) << ',' << fmt(m->mae) << ',' << fmt(m->sde)
               << ',' << fmt(m->nmae) << ',' << fmt(m->mb_pct()) << ',' << fmt(m->sde_pct()) << ",\n";
        } else {
            os << "0,,,,,,,," << report.error[k] << '\n';
        }
    }
    return os.str();
}

std::string eval_table(const std::vector<std::pair<std::string, EvalReport>>& rows) {
    std::array<double, 4> best;
    best.fill(std::numeric_limits<double>::infinity());
    for (const auto& [label, r] : rows) {
        for (Flux f : kFluxes) {
            if (r.has(f)) best[static_cast<std::size_t>(f)] = std::min(best[static_cast<std::size_t>(f)], r.at(f).nmae);
        }
    }
    std::ostringstream os;
    os << std::left << std::setw(14) << "model" << std::setw(6) << "flux" << std::right << std::setw(8) << "N"
       << std::setw(10) << "MB" << std::setw(10) << "MAE" << std::setw(10) << "SDE" << std::setw(10) << "nMAE%"
       << '\n';
    for (const auto& [label, r] : rows) {
        for (Flux f : kFluxes) {
            const auto k = static_cast<std::size_t>(f);
            os << std::left << std::setw(14) << label << std::setw(6) << to_string(f) << std::right;
            if (const auto& m = r.flux[k]) {
                os << std::setw(8) << m->n << std::setw(10) << fixed(m->mb, 1) << std::setw(10) << fixed(m->mae, 1)
                   << std::setw(10) << fixed(m->sde, 1) << std::setw(10) << fixed(m->nmae, 1)
                   << (rows.size() > 1 && m->nmae == best[k] ? " *" : "") << '\n';
            } else {
                os << "  " << r.error[k] << '\n';
            }
        }
    }
    os << "Units W m-2 except nMAE (%). Truth: " << (rows.empty() ? "" : rows.front().second.truth_label)
       << ". S_up scored where truth > 2 W m-2.";
    if (rows.size() > 1) os << " '*' marks the lowest nMAE per flux.";
    os << '\n';
    return os.str();
}

std::string comparison_csv(const Comparison& c) {
    std::ostringstream os;
    os << "rank,label,mean_nMAE_pct,flux,N,MB_Wm2,MAE_Wm2,SDE_Wm2,nMAE_pct,"
          "bias_median,bias_q1,bias_q3,bias_whisker_lo,bias_whisker_hi,"
          "abserr_median,abserr_q1,abserr_q3,abserr_whisker_lo,abserr_whisker_hi\n";
    for (std::size_t r = 0; r < c.ranking.size(); ++r) {
        const auto& cfg = c.configs[c.ranking[r]];
        for (Flux f : kFluxes) {
            const auto k = static_cast<std::size_t>(f);
            os << r + 1 << ',' << cfg.label << ',' << fmt(cfg.mean_nmae) << ',' << to_string(f) << ',';
            if (const auto& m = cfg.report.flux[k]) {
                os << m->n << ',' << fmt(m->mb) << ',' << fmt(m->mae) << ',' << fmt(m->sde) << ',' << fmt(m->nmae);
            } else {
                os << "0,,,,";
            }
            for (const BoxSummary* b : {&cfg.bias[k], &cfg.abs_error[k]}) {
                os << ',' << fmt(b->median) << ',' << fmt(b->q1) << ',' << fmt(b->q3) << ',' << fmt(b->whisker_lo)
                   << ',' << fmt(b->whisker_hi);
            }
            os << '\n';
        }
    }
    return os.str();
}

std::string comparison_table(const Comparison& c) {
    std::ostringstream os;
    os << std::left << std::setw(6) << "rank" << std::setw(16) << "config" << std::right << std::setw(10) << "mean"
       << std::setw(10) << "S_up" << std::setw(10) << "L_up" << std::setw(10) << "Q_H" << std::setw(10) << "Q_E"
       << '\n';
    for (std::size_t r = 0; r < c.ranking.size(); ++r) {
        const auto& cfg = c.configs[c.ranking[r]];
        os << std::left << std::setw(6) << r + 1 << std::setw(16) << cfg.label << std::right << std::setw(10)
           << fixed(cfg.mean_nmae, 2);
        for (Flux f : kFluxes) {
            os << std::setw(10) << (cfg.report.has(f) ? fixed(cfg.report.at(f).nmae, 2) : std::string("n/a"));
        }
        os << '\n';
    }
    os << "nMAE (%) per flux; ranked by mean nMAE, ties by label.\n";
    return os.str();
}

std::string bench_csv(const BenchReport& report) {
    std::ostringstream os;
    os << "label,repeats,mean_s,std_s,ok,error\n";
    for (const auto& e : report.entries) {
        os << e.label << ',' << e.repeats << ',' << fmt(e.mean_s) << ',' << fmt(e.std_s) << ',' << (e.ok ? 1 : 0)
           << ',' << e.error << '\n';
    }
    return os.str();
}

std::string bench_table(const BenchReport& report) {
    std::ostringstream os;
    for (const auto& e : report.entries) {
        os << std::left << std::setw(24) << e.label << e.formatted() << " (n = " << e.repeats << ")\n";
    }
    os << report.environment << '\n';
    return os.str();
}

}  // namespace urbanemu::eval
