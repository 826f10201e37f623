#include "urbanemu/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <sstream>
#include <unordered_set>

#include "urbanemu/errors.hpp"
#include "urbanemu/io.hpp"

namespace urbanemu::dataset {

using physics::FluxRecord;
using physics::FluxSeries;
using physics::ForcingRecord;
using physics::ForcingSeries;

namespace {

struct ForcingField {
    const char* name;
    const char* unit;
    double ForcingRecord::*member;
};

constexpr ForcingField kForcingFields[] = {
    {"T", "K", &ForcingRecord::T},           {"q", "kg kg-1", &ForcingRecord::q},
    {"p", "Pa", &ForcingRecord::p},          {"S_dn", "W m-2", &ForcingRecord::S_dn},
    {"L_dn", "W m-2", &ForcingRecord::L_dn}, {"u", "m s-1", &ForcingRecord::u},
    {"v", "m s-1", &ForcingRecord::v},       {"RR", "kg m-2 s-1", &ForcingRecord::RR},
};

struct CsvFile {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    std::vector<std::size_t> line_numbers;
};

CsvFile read_csv(const std::filesystem::path& path) {
    const std::string text = io::read_file(path);
    CsvFile csv;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r" || line.front() == '#') {
            continue;
        }
        auto fields = io::split_csv_line(line);
        if (csv.header.empty()) {
            for (auto f : fields) {
                csv.header.emplace_back(f);
            }
            continue;
        }
        if (fields.size() != csv.header.size()) {
            std::ostringstream msg;
            msg << path.string() << " line " << line_no << ": expected " << csv.header.size() << " fields, got "
                << fields.size();
            throw LoadError(msg.str());
        }
        std::vector<std::string> row;
        row.reserve(fields.size());
        for (auto f : fields) {
            row.emplace_back(f);
        }
        csv.rows.push_back(std::move(row));
        csv.line_numbers.push_back(line_no);
    }
    if (csv.header.empty()) {
        throw LoadError(path.string() + ": empty file");
    }
    return csv;
}

long column_index(const CsvFile& csv, const std::string& name) {
    const auto it = std::find(csv.header.begin(), csv.header.end(), name);
    return it == csv.header.end() ? -1 : static_cast<long>(it - csv.header.begin());
}

/// Parses the `t` column and checks strict regularity; returns (start, interval).
std::pair<Instant, long> parse_time_axis(const CsvFile& csv, const std::filesystem::path& path) {
    const long t_col = column_index(csv, "t");
    if (t_col < 0) {
        throw LoadError(path.string() + ": missing column 't'");
    }
    if (csv.rows.size() < 2) {
        throw LoadError(path.string() + ": need at least 2 rows to infer the interval");
    }
    std::vector<Instant> times;
    times.reserve(csv.rows.size());
    for (std::size_t i = 0; i < csv.rows.size(); ++i) {
        try {
            times.push_back(parse_iso8601(csv.rows[i][static_cast<std::size_t>(t_col)]));
        } catch (const LoadError& e) {
            throw LoadError(path.string() + " line " + std::to_string(csv.line_numbers[i]) + ": " + e.what());
        }
    }
    const long interval = (times[1] - times[0]).count();
    for (std::size_t i = 1; i < times.size(); ++i) {
        const long step = (times[i] - times[i - 1]).count();
        if (step <= 0) {
            throw LoadError(path.string() + " line " + std::to_string(csv.line_numbers[i]) +
                            ": timestamp not after the previous row (out of order)");
        }
        if (step != interval) {
            throw LoadError(path.string() + " line " + std::to_string(csv.line_numbers[i]) +
                            ": irregular timestamp (gap or jitter); input must be gap-free");
        }
    }
    return {times.front(), interval};
}

std::vector<bool> parse_mask(const CsvFile& csv, long col, const std::filesystem::path& path) {
    std::vector<bool> mask;
    if (col < 0) {
        return mask;
    }
    mask.reserve(csv.rows.size());
    for (std::size_t i = 0; i < csv.rows.size(); ++i) {
        const auto& f = csv.rows[i][static_cast<std::size_t>(col)];
        if (f != "0" && f != "1") {
            throw LoadError(path.string() + " line " + std::to_string(csv.line_numbers[i]) + ": column '" +
                            csv.header[static_cast<std::size_t>(col)] + "' must be 0 or 1");
        }
        mask.push_back(f == "1");
    }
    return mask;
}

std::string forcing_header() {
    std::string h = "t";
    for (const auto& c : kForcingCsvColumns) {
        h += "," + c;
    }
    return h;
}

/// Value of `values` at `offset_s` seconds after the first stamp (linear in between).
double interpolate_at(const std::vector<double>& values, long interval_s, long offset_s) {
    const long k = offset_s / interval_s;
    const long rem = offset_s % interval_s;
    if (rem == 0) {
        return values[static_cast<std::size_t>(k)];
    }
    const double a = values[static_cast<std::size_t>(k)];
    const double b = values[static_cast<std::size_t>(k + 1)];
    return a + (b - a) * (static_cast<double>(rem) / static_cast<double>(interval_s));
}

void check_rate(long rate, long interval) {
    if (rate <= 0 || rate > interval || interval % rate != 0) {
        throw DataError("timestep " + std::to_string(rate) + " s does not divide the native interval of " +
                        std::to_string(interval) + " s");
    }
}

/// Floyd's algorithm: `count` distinct values from [0, population), ascending.
std::vector<std::size_t> sample_without_replacement(std::size_t population, std::size_t count, std::mt19937_64& rng) {
    std::unordered_set<std::size_t> chosen;
    chosen.reserve(count * 2);
    for (std::size_t j = population - count; j < population; ++j) {
        std::uniform_int_distribution<std::size_t> dist(0, j);
        const std::size_t t = dist(rng);
        if (!chosen.insert(t).second) {
            chosen.insert(j);
        }
    }
    std::vector<std::size_t> out(chosen.begin(), chosen.end());
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace

bool TimeSeriesTable::has(const std::string& name) const {
    return std::any_of(columns.begin(), columns.end(), [&](const Column& c) { return c.name == name; });
}

const std::vector<double>& TimeSeriesTable::col(const std::string& name) const {
    for (const auto& c : columns) {
        if (c.name == name) {
            return c.values;
        }
    }
    throw DataError("table has no column '" + name + "'");
}

std::vector<double>& TimeSeriesTable::col(const std::string& name) {
    return const_cast<std::vector<double>&>(std::as_const(*this).col(name));
}

void TimeSeriesTable::validate() const {
    if (interval_s <= 0) {
        throw DataError("table interval must be positive");
    }
    for (const auto& c : columns) {
        if (c.values.size() != rows()) {
            throw DataError("column '" + c.name + "' length differs from the table");
        }
    }
    if (!obs_mask.empty() && obs_mask.size() != rows()) {
        throw DataError("observation mask length differs from the table");
    }
}

TimeSeriesTable load_forcing(const std::filesystem::path& path) {
    const CsvFile csv = read_csv(path);
    const auto [start, interval] = parse_time_axis(csv, path);

    TimeSeriesTable table;
    table.start = start;
    table.interval_s = interval;

    const std::size_t n = csv.rows.size();
    for (std::size_t f = 0; f < std::size(kForcingFields); ++f) {
        const auto& csv_name = kForcingCsvColumns[f];
        long col = column_index(csv, csv_name);
        bool celsius = false;
        if (col < 0 && csv_name == "T_K") {
            col = column_index(csv, "T_degC");
            celsius = col >= 0;
        }
        if (col < 0) {
            throw LoadError(path.string() + ": missing column '" + csv_name + "'");
        }
        Column c{kForcingFields[f].name, kForcingFields[f].unit, {}};
        c.values.reserve(n);
        for (std::size_t i = 0; i < n; ++i) {
            double x = io::parse_double(csv.rows[i][static_cast<std::size_t>(col)], csv.line_numbers[i], csv_name);
            if (celsius) {
                x += 273.15;
            }
            c.values.push_back(x);
        }
        table.columns.push_back(std::move(c));
    }
    table.obs_mask = parse_mask(csv, column_index(csv, "obs"), path);

    const ForcingSeries series = to_forcing_series(table);
    for (std::size_t i = 0; i < n; ++i) {
        try {
            series.records[i].validate();
        } catch (const DomainError& e) {
            throw LoadError(path.string() + " line " + std::to_string(csv.line_numbers[i]) + ": " + e.what());
        }
    }
    return table;
}

ForcingSeries to_forcing_series(const TimeSeriesTable& table) {
    table.validate();
    ForcingSeries series;
    series.interval_s = table.interval_s;
    series.obs = table.obs_mask;
    series.records.resize(table.rows());
    for (std::size_t i = 0; i < table.rows(); ++i) {
        series.records[i].t = table.time(i);
    }
    for (const auto& field : kForcingFields) {
        const auto& values = table.col(field.name);
        for (std::size_t i = 0; i < values.size(); ++i) {
            series.records[i].*field.member = values[i];
        }
    }
    return series;
}

TimeSeriesTable to_table(const ForcingSeries& series) {
    TimeSeriesTable table;
    table.interval_s = series.interval_s;
    if (!series.records.empty()) {
        table.start = series.records.front().t;
    }
    for (const auto& field : kForcingFields) {
        Column c{field.name, field.unit, {}};
        c.values.reserve(series.size());
        for (const auto& r : series.records) {
            c.values.push_back(r.*field.member);
        }
        table.columns.push_back(std::move(c));
    }
    table.obs_mask = series.obs;
    return table;
}

std::string forcing_csv(const ForcingSeries& series) {
    std::string out = forcing_header();
    const bool with_obs = !series.obs.empty();
    if (with_obs) {
        out += ",obs";
    }
    out += '\n';
    for (std::size_t i = 0; i < series.size(); ++i) {
        const auto& r = series.records[i];
        out += format_iso8601(r.t);
        for (const auto& field : kForcingFields) {
            out += ',';
            out += io::format_double(r.*field.member);
        }
        if (with_obs) {
            out += series.obs[i] ? ",1" : ",0";
        }
        out += '\n';
    }
    return out;
}

void write_forcing_csv(const ForcingSeries& series, const std::filesystem::path& path) {
    io::write_file_atomic(path, forcing_csv(series));
}

std::string flux_csv(const FluxSeries& series) {
    std::string out = "t";
    for (const auto& c : kFluxCsvColumns) {
        out += "," + c;
    }
    out += '\n';
    for (std::size_t i = 0; i < series.size(); ++i) {
        const auto& r = series.records[i];
        out += format_iso8601(r.t);
        for (double x : {r.S_up, r.L_up, r.Q_H, r.Q_E}) {
            out += ',';
            out += io::format_double(x);
        }
        out += ',';
        if (r.T_s) {
            out += io::format_double(*r.T_s);
        }
        out += (!series.spinup.empty() && series.spinup[i]) ? ",1\n" : ",0\n";
    }
    return out;
}

void write_flux_csv(const FluxSeries& series, const std::filesystem::path& path) {
    io::write_file_atomic(path, flux_csv(series));
}

FluxSeries read_flux_csv(const std::filesystem::path& path) {
    const CsvFile csv = read_csv(path);
    const auto [start, interval] = parse_time_axis(csv, path);
    std::vector<long> cols;
    for (const auto& name : kFluxCsvColumns) {
        cols.push_back(column_index(csv, name));
    }
    for (std::size_t c = 0; c < 4; ++c) {
        if (cols[c] < 0) {
            throw LoadError(path.string() + ": missing column '" + kFluxCsvColumns[c] + "'");
        }
    }
    FluxSeries series;
    series.interval_s = interval;
    series.spinup = parse_mask(csv, cols[5], path);
    series.records.resize(csv.rows.size());
    for (std::size_t i = 0; i < csv.rows.size(); ++i) {
        auto& r = series.records[i];
        const auto& row = csv.rows[i];
        const auto line = csv.line_numbers[i];
        r.t = start + Seconds{static_cast<long>(i) * interval};
        r.S_up = io::parse_double(row[static_cast<std::size_t>(cols[0])], line, kFluxCsvColumns[0]);
        r.L_up = io::parse_double(row[static_cast<std::size_t>(cols[1])], line, kFluxCsvColumns[1]);
        r.Q_H = io::parse_double(row[static_cast<std::size_t>(cols[2])], line, kFluxCsvColumns[2]);
        r.Q_E = io::parse_double(row[static_cast<std::size_t>(cols[3])], line, kFluxCsvColumns[3]);
        if (cols[4] >= 0) {
            const double ts = io::parse_double(row[static_cast<std::size_t>(cols[4])], line, kFluxCsvColumns[4]);
            if (!std::isnan(ts)) {
                r.T_s = ts;
            }
        }
    }
    return series;
}

Split split_train_test(const TimeSeriesTable& table) {
    if (table.obs_mask.size() != table.rows()) {
        throw DataError("table has no observation mask to split on");
    }
    Split split;
    for (std::size_t i = 0; i < table.rows(); ++i) {
        (table.obs_mask[i] ? split.test : split.train).push_back(i);
    }
    if (split.test.empty()) {
        throw DataError("no test rows: observation mask is all false");
    }
    if (split.train.empty()) {
        throw DataError("no training rows: observation mask is all true");
    }
    return split;
}

TimeSeriesTable resample_linear(const TimeSeriesTable& table, long dt_s) {
    table.validate();
    check_rate(dt_s, table.interval_s);
    if (dt_s == table.interval_s) {
        return table;
    }
    const long per = table.interval_s / dt_s;
    const std::size_t n_in = table.rows();
    const std::size_t n_out = n_in == 0 ? 0 : (n_in - 1) * static_cast<std::size_t>(per) + 1;

    TimeSeriesTable out;
    out.start = table.start;
    out.interval_s = dt_s;
    for (const auto& c : table.columns) {
        Column r{c.name, c.unit, {}};
        r.values.resize(n_out);
        for (std::size_t i = 0; i < n_out; ++i) {
            r.values[i] = interpolate_at(c.values, table.interval_s, static_cast<long>(i) * dt_s);
        }
        out.columns.push_back(std::move(r));
    }
    if (!table.obs_mask.empty()) {
        out.obs_mask.resize(n_out);
        for (std::size_t i = 0; i < n_out; ++i) {
            // A fine stamp inside (t_{k-1}, t_k] belongs to native period k.
            const std::size_t k = (i + static_cast<std::size_t>(per) - 1) / static_cast<std::size_t>(per);
            out.obs_mask[i] = table.obs_mask[k];
        }
    }
    return out;
}

ForcingSeries resample_linear(const ForcingSeries& series, long dt_s) {
    return to_forcing_series(resample_linear(to_table(series), dt_s));
}

TimeSeriesTable derive_targets(const FluxSeries& mem, double eps) {
    TimeSeriesTable table;
    table.interval_s = mem.interval_s;
    if (!mem.records.empty()) {
        table.start = mem.records.front().t;
    }
    Column s_up{"S_up", "W m-2", {}}, t_s{"T_s", "K", {}}, q_h{"Q_H", "W m-2", {}}, q_e{"Q_E", "W m-2", {}};
    for (const auto& r : mem.records) {
        if (!(r.L_up > 0.0)) {
            throw DataError("non-positive ensemble-mean L_up at " + format_iso8601(r.t));
        }
        s_up.values.push_back(r.S_up);
        t_s.values.push_back(physics::ts_from_longwave(r.L_up, eps));
        q_h.values.push_back(r.Q_H);
        q_e.values.push_back(r.Q_E);
    }
    table.columns = {std::move(s_up), std::move(t_s), std::move(q_h), std::move(q_e)};
    return table;
}

void pack_inputs(const ForcingRecord& f, double mu0, double dt_s, double T_s_prev, std::span<double> out) {
    if (out.size() != in::count) {
        throw SchemaError("input buffer width " + std::to_string(out.size()) + " != " + std::to_string(in::count));
    }
    out[in::T] = f.T;
    out[in::q] = f.q;
    out[in::p] = f.p;
    out[in::S_dn] = f.S_dn;
    out[in::L_dn] = f.L_dn;
    out[in::u] = f.u;
    out[in::v] = f.v;
    out[in::RR] = f.RR;
    out[in::mu0] = mu0;
    out[in::dt] = dt_s;
    out[in::T_s_prev] = T_s_prev;
}

TrainingMatrix augment_multirate(const TimeSeriesTable& inputs, const TimeSeriesTable& targets,
                                 std::span<const long> rates, std::uint64_t seed, const AugmentOptions& options) {
    inputs.validate();
    targets.validate();
    if (inputs.rows() != targets.rows() || inputs.start != targets.start || inputs.interval_s != targets.interval_s) {
        throw DataError("inputs and targets are not aligned");
    }
    const long interval = inputs.interval_s;
    for (long r : rates) {
        check_rate(r, interval);
    }
    const Split split = split_train_test(inputs);
    const std::size_t n = split.train.size();

    const std::vector<double>* forcing_cols[8];
    for (std::size_t f = 0; f < 8; ++f) {
        forcing_cols[f] = &inputs.col(kForcingFields[f].name);
    }
    const std::vector<double>* target_cols[out::count] = {&targets.col("S_up"), &targets.col("T_s"),
                                                          &targets.col("Q_H"), &targets.col("Q_E")};
    const auto& ts = targets.col("T_s");

    TrainingMatrix m;
    m.schema = emulator_schema();
    const std::size_t total = n * (rates.size() + 1);
    m.X.resize(static_cast<Eigen::Index>(total), static_cast<Eigen::Index>(in::count));
    m.Y.resize(static_cast<Eigen::Index>(total), static_cast<Eigen::Index>(out::count));
    m.row_rate.resize(total);

    std::size_t row = 0;
    auto emit = [&](long offset_s, long rate) {
        ForcingRecord f;
        for (std::size_t c = 0; c < 8; ++c) {
            f.*kForcingFields[c].member = interpolate_at(*forcing_cols[c], interval, offset_s);
        }
        const double prev = offset_s >= rate ? interpolate_at(ts, interval, offset_s - rate) : ts.front();
        const double epoch = epoch_seconds(inputs.start) + static_cast<double>(offset_s);
        const double mu0 = physics::solar_mu0(options.site, epoch, options.mu0_convention);
        double* x = m.X.row(static_cast<Eigen::Index>(row)).data();
        pack_inputs(f, mu0, static_cast<double>(rate), prev, std::span<double>(x, in::count));
        for (std::size_t c = 0; c < out::count; ++c) {
            m.Y(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(c)) =
                interpolate_at(*target_cols[c], interval, offset_s);
        }
        m.row_rate[row] = static_cast<double>(rate);
        ++row;
    };

    for (std::size_t k : split.train) {
        emit(static_cast<long>(k) * interval, interval);
    }

    // Interpolated copies draw from the periods (t_{k-1}, t_k] of training rows k >= 1.
    std::vector<std::size_t> periods;
    for (std::size_t k : split.train) {
        if (k >= 1) {
            periods.push_back(k);
        }
    }
    std::mt19937_64 rng(seed);
    for (long rate : rates) {
        const auto per = static_cast<std::size_t>(interval / rate);
        const std::size_t population = periods.size() * per;
        if (n > population) {
            throw DataError("rate " + std::to_string(rate) + " s offers " + std::to_string(population) +
                            " interpolated rows but " + std::to_string(n) + " are required");
        }
        for (std::size_t c : sample_without_replacement(population, n, rng)) {
            const std::size_t k = periods[c / per];
            const long j = static_cast<long>(c % per);
            emit(static_cast<long>(k) * interval - j * rate, rate);
        }
    }
    if (!m.X.allFinite() || !m.Y.allFinite()) {
        throw DataError("training matrix contains non-finite entries");
    }
    return m;
}

NormStats fit_norm(const RowMatrix& m, const std::vector<std::string>& names) {
    if (m.rows() < 2) {
        throw DataError("normalization needs at least 2 rows");
    }
    if (names.size() != static_cast<std::size_t>(m.cols())) {
        throw DataError("normalization names do not match matrix width");
    }
    NormStats s;
    s.names = names;
    const double n = static_cast<double>(m.rows());
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
        double sum = 0.0;
        for (Eigen::Index r = 0; r < m.rows(); ++r) {
            sum += m(r, c);
        }
        const double mean = sum / n;
        double ss = 0.0;
        for (Eigen::Index r = 0; r < m.rows(); ++r) {
            const double d = m(r, c) - mean;
            ss += d * d;
        }
        const double sd = std::sqrt(ss / n);
        if (!(sd > 0.0) || !std::isfinite(sd)) {
            throw DataError("feature '" + names[static_cast<std::size_t>(c)] + "' is constant; cannot normalize");
        }
        s.mean.push_back(mean);
        s.std.push_back(sd);
    }
    return s;
}

RowMatrix apply_norm(const RowMatrix& m, const NormStats& stats) {
    if (static_cast<std::size_t>(m.cols()) != stats.size()) {
        throw SchemaError("normalization width mismatch");
    }
    RowMatrix out(m.rows(), m.cols());
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            const auto k = static_cast<std::size_t>(c);
            out(r, c) = (m(r, c) - stats.mean[k]) / stats.std[k];
        }
    }
    return out;
}

RowMatrix invert_norm(const RowMatrix& m, const NormStats& stats) {
    if (static_cast<std::size_t>(m.cols()) != stats.size()) {
        throw SchemaError("normalization width mismatch");
    }
    RowMatrix out(m.rows(), m.cols());
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            const auto k = static_cast<std::size_t>(c);
            out(r, c) = m(r, c) * stats.std[k] + stats.mean[k];
        }
    }
    return out;
}

}  // namespace urbanemu::dataset
