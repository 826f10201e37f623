#include <chrono>
#include <cmath>
#include <random>
#include <thread>

#include "doctest.h"
#include "support.hpp"
#include "urbanemu/errors.hpp"
#include "urbanemu/eval.hpp"
#include "urbanemu/slab.hpp"

using namespace urbanemu;
using namespace urbanemu::eval;
using physics::FluxSeries;

namespace {

FluxSeries series_from(const std::vector<double>& s_up, double base = 0.0) {
    FluxSeries s;
    for (std::size_t i = 0; i < s_up.size(); ++i) {
        physics::FluxRecord r;
        r.t = parse_iso8601("2004-01-01T00:00:00Z") + Seconds{1800 * static_cast<long>(i)};
        r.S_up = s_up[i];
        r.L_up = 380.0 + base + static_cast<double>(i % 7);
        r.Q_H = 30.0 + base + static_cast<double>(i % 5);
        r.Q_E = 20.0 + base + static_cast<double>(i % 3);
        s.records.push_back(r);
    }
    return s;
}

FluxSeries shifted(FluxSeries s, double c) {
    for (auto& r : s.records) {
        r.S_up += c;
        r.L_up += c;
        r.Q_H += c;
        r.Q_E += c;
    }
    return s;
}

}  // namespace

TEST_SUITE("eval") {

TEST_CASE("metric oracles") {
    const std::vector<double> p{2, 2}, t{1, 3};
    CHECK(metric_mb(p, t) == 0.0);
    CHECK(metric_mae(p, t) == 1.0);
    CHECK(metric_sde(p, t) == 1.0);
    CHECK(metric_nmae(p, t) == 50.0);

    CHECK(metric_mb(t, t) == 0.0);
    CHECK(metric_mae(t, t) == 0.0);
    CHECK(metric_sde(t, t) == 0.0);
    CHECK(metric_nmae(t, t) == 0.0);

    const std::vector<double> zero_mean{-1, 1};
    CHECK_THROWS_AS(metric_nmae(p, zero_mean), UndefinedValueError);
    CHECK_THROWS_AS(metric_mb(p, std::vector<double>{1}), DataError);
    CHECK_THROWS_AS(metric_mae(std::vector<double>{}, std::vector<double>{}), DataError);
}

TEST_CASE("metrics against brute force and the error identity") {
    std::mt19937_64 rng(17);
    std::uniform_int_distribution<int> len(1, 1000);
    std::normal_distribution<double> n(50.0, 80.0);
    for (int trial = 0; trial < 200; ++trial) {
        const int k = len(rng);
        std::vector<double> p(static_cast<std::size_t>(k)), t(static_cast<std::size_t>(k));
        for (int i = 0; i < k; ++i) p[static_cast<std::size_t>(i)] = n(rng), t[static_cast<std::size_t>(i)] = n(rng);
        long double sb = 0, sa = 0, st = 0, sp = 0, sq = 0;
        for (int i = 0; i < k; ++i) {
            const long double e = static_cast<long double>(p[static_cast<std::size_t>(i)]) - t[static_cast<std::size_t>(i)];
            sb += e;
            sa += std::fabs(e);
            sq += e * e;
            sp += p[static_cast<std::size_t>(i)];
            st += t[static_cast<std::size_t>(i)];
        }
        const long double mb = sb / k, mae = sa / k, mt = st / k, mp = sp / k;
        long double sd = 0;
        for (int i = 0; i < k; ++i) {
            const long double d = (p[static_cast<std::size_t>(i)] - mp) - (t[static_cast<std::size_t>(i)] - mt);
            sd += d * d;
        }
        CHECK(std::abs(metric_mb(p, t) - static_cast<double>(mb)) <= 1e-12 * (1 + std::abs(static_cast<double>(mb))));
        CHECK(std::abs(metric_mae(p, t) - static_cast<double>(mae)) <= 1e-12 * static_cast<double>(mae));
        const double sde = metric_sde(p, t);
        CHECK(std::abs(sde - std::sqrt(static_cast<double>(sd / k))) <= 1e-12 * (1 + sde));
        const double mse = static_cast<double>(sq / k);
        CHECK(std::abs(sde * sde + metric_mb(p, t) * metric_mb(p, t) - mse) <= 1e-9 * mse);
        CHECK(metric_mae(p, t) >= std::abs(metric_mb(p, t)));
    }
}

TEST_CASE("bias is translation equivariant") {
    const auto truth = series_from({0, 0, 10, 50, 80, 3, 0});
    const auto pred = shifted(truth, 1.5);
    const auto base = evaluate(pred, truth);
    for (double c : {-3.0, 0.0, 2.25, 11.0}) {
        const auto r = evaluate(shifted(pred, c), truth);
        for (Flux f : {Flux::L_up, Flux::Q_H, Flux::Q_E}) {
            CHECK(r.at(f).mb == doctest::Approx(base.at(f).mb + c).epsilon(1e-12));
            CHECK(r.at(f).mae >= std::abs(r.at(f).mb) - 1e-12);
        }
    }
}

TEST_CASE("evaluation masks") {
    const auto truth = series_from({0, 1, 5, 100, 2, 40});
    auto pred = shifted(truth, 1.0);
    pred.spinup = {true, false, false, false, false, false};
    const auto r = evaluate(pred, truth);
    CHECK(r.at(Flux::S_up).n == 3);  // rows with truth S_up > 2
    CHECK(r.at(Flux::Q_H).n == 5);   // spin-up row dropped
    CHECK(r.at(Flux::Q_H).nmae == doctest::Approx(100.0 / r.at(Flux::Q_H).mean_truth));
    CHECK(r.at(Flux::Q_H).mb_pct() == doctest::Approx(100.0 / r.at(Flux::Q_H).mean_truth));

    MaskPolicy rows;
    rows.rows = {false, false, false, true, true, true};
    CHECK(evaluate(pred, truth, rows).at(Flux::L_up).n == 3);

    const auto night = series_from({0, 1, 2, 0});
    const auto rn = evaluate(night, night);
    CHECK_FALSE(rn.has(Flux::S_up));
    CHECK(rn.error[0].find("S_up") != std::string::npos);
    CHECK_THROWS_AS((void)rn.at(Flux::S_up), UndefinedValueError);
    CHECK(rn.has(Flux::Q_E));
    CHECK_THROWS_AS(mean_nmae(rn), UndefinedValueError);

    auto late = truth;
    late.records[2].t += Seconds{60};
    CHECK_THROWS_AS(evaluate(pred, late), DataError);
}

TEST_CASE("daytime count over a test fraction") {
    std::vector<double> s_up(8866, 0.0);
    for (std::size_t i = 0; i < 4272; ++i) s_up[(i * 8866) / 4272] = 25.0;
    const auto truth = series_from(s_up);
    const auto r = evaluate(shifted(truth, 0.5), truth);
    CHECK(r.at(Flux::S_up).n == 4272);
    CHECK(r.at(Flux::L_up).n == 8866);
}

TEST_CASE("identical series give an all-zero report") {
    const auto s = series_from({0, 10, 50, 90});
    const auto r = evaluate(s, s);
    for (Flux f : kFluxes) {
        CHECK(r.at(f).mb == 0.0);
        CHECK(r.at(f).mae == 0.0);
        CHECK(r.at(f).sde == 0.0);
        CHECK(r.at(f).nmae == 0.0);
    }
    CHECK(mean_nmae(r) == 0.0);
}

TEST_CASE("mean nMAE") {
    const auto truth = series_from({10, 10});
    EvalReport r;
    const double v[4] = {7.0, 1.6, 34.2, 32.7};
    for (std::size_t i = 0; i < 4; ++i) {
        FluxMetrics m;
        m.n = 1;
        m.nmae = v[i];
        r.flux[i] = m;
    }
    CHECK(mean_nmae(r) == doctest::Approx(18.875).epsilon(1e-14));
    std::swap(r.flux[0], r.flux[3]);
    CHECK(mean_nmae(r) == doctest::Approx(18.875).epsilon(1e-14));
    for (auto& f : r.flux) f->nmae = 4.5;
    CHECK(mean_nmae(r) == 4.5);
}

TEST_CASE("quantiles and box summaries") {
    CHECK(quantile({1, 2, 3, 4}, 0.5) == 2.5);
    CHECK(quantile({1, 2, 3, 4}, 0.25) == 1.75);
    CHECK(quantile({7}, 0.9) == 7.0);
    const std::vector<double> v{1, 2, 3, 4, 5, 6, 7, 8, 100};
    const auto b = box_summary(v);
    CHECK(b.median == 5.0);
    CHECK(b.whisker_hi == 8.0);
    CHECK(b.whisker_lo == 1.0);
    CHECK(b.whisker_lo <= b.q1);
    CHECK(b.whisker_hi >= b.q3);
}

TEST_CASE("configuration comparison") {
    const auto truth = series_from({0, 20, 60, 90, 40, 0});
    auto ranked = compare_configs({{"A", shifted(truth, 10.0)}, {"B", truth}}, truth);
    CHECK(ranked.configs[ranked.ranking.front()].label == "B");
    for (std::size_t f = 0; f < 4; ++f) {
        CHECK(ranked.configs[1].bias[f].median == 0.0);
        CHECK(ranked.configs[1].abs_error[f].median == 0.0);
        CHECK(ranked.configs[0].bias[f].median == doctest::Approx(10.0));
    }

    auto dup = compare_configs({{"z", shifted(truth, 1.0)}, {"a", shifted(truth, 1.0)}}, truth);
    CHECK(dup.configs[0].mean_nmae == dup.configs[1].mean_nmae);
    CHECK(dup.configs[dup.ranking.front()].label == "a");

    const std::vector<std::pair<std::string, FluxSeries>> list{
        {"c", shifted(truth, 3.0)}, {"a", shifted(truth, -1.0)}, {"b", shifted(truth, 7.0)}, {"d", shifted(truth, 2.0)}};
    auto reversed = list;
    std::reverse(reversed.begin(), reversed.end());
    auto labels = [](const Comparison& c) {
        std::vector<std::string> out;
        for (auto i : c.ranking) out.push_back(c.configs[i].label);
        return out;
    };
    CHECK(labels(compare_configs(list, truth)) == labels(compare_configs(reversed, truth)));
    CHECK(labels(compare_configs(list, truth)) == std::vector<std::string>{"a", "d", "c", "b"});

    CHECK_THROWS_AS(compare_configs({{"only", truth}}, truth), DataError);
    const std::string table = comparison_table(ranked);
    CHECK(table.find("B") != std::string::npos);
}

TEST_CASE("ranking follows perturbation size") {
    const auto forcing = testsupport::forcing_days(15);
    slab::EnsembleSpec base;
    base.seed = 1;
    base.spread = {0.05, 0.0, 0.05, 0.05, 0.05, 0.05, 0.05, 0.0, 0.05};
    auto run = [&](const slab::SlabParams& p) {
        return slab::slab_run(forcing, p, {forcing.records.front().T, 0.6 * p.W_cap}, slab::RunOptions{});
    };
    const auto truth = run(slab::SlabParams{});
    std::vector<std::pair<std::string, FluxSeries>> configs;
    const double scale[4] = {1.5, 0.2, 0.8, 0.05};
    for (int i = 0; i < 4; ++i) {
        slab::SlabParams p;
        p.albedo *= 1.0 + scale[i];
        p.C_areal *= 1.0 + scale[i];
        p.g_a0 *= 1.0 + scale[i];
        p.g_a1 *= 1.0 + scale[i];
        p.f_veg *= 1.0 - 0.5 * scale[i] / 1.5;
        configs.emplace_back("perturbed " + std::to_string(scale[i]), run(p));
    }
    const auto c = compare_configs(configs, truth);
    CHECK(c.ranking == std::vector<std::size_t>{3, 1, 2, 0});
}

TEST_CASE("report writers") {
    const auto truth = series_from({0, 20, 60, 90});
    const auto a = evaluate(shifted(truth, 1.0), truth);
    const auto b = evaluate(shifted(truth, 4.0), truth);
    const std::string csv = eval_csv(a);
    CHECK(csv.find("nMAE") != std::string::npos);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 5);
    const std::string table = eval_table({{"good", a}, {"bad", b}});
    CHECK(table.find('*') != std::string::npos);
    CHECK(table.find("good") < table.find('*'));
}

TEST_CASE("two significant figures") {
    CHECK(format_sig2(0.5) == "0.50");
    CHECK(format_sig2(0.0053) == "0.0053");
    CHECK(format_sig2(12.0) == "12");
    CHECK(format_sig2(0.00531) == "0.0053");
    BenchEntry e;
    e.mean_s = 0.5;
    e.std_s = 0.0053;
    CHECK(e.formatted() == "0.50 ± 0.0053 s");
}

TEST_CASE("benchmark harness") {
    int calls = 0;
    const auto r = bench({{"noop", [&] { ++calls; }},
                          {"sleep", [] { std::this_thread::sleep_for(std::chrono::milliseconds(10)); }},
                          {"broken", [] { throw std::runtime_error("nope"); }}},
                         5, 2);
    CHECK(calls == 7);
    REQUIRE(r.entries.size() == 3);
    CHECK(r.entries[0].mean_s >= 0.0);
    CHECK(std::isfinite(r.entries[0].std_s));
    CHECK(r.entries[0].samples_s.size() == 5);
    CHECK(r.entries[1].mean_s >= 0.010);
    CHECK(r.entries[1].mean_s <= 0.020);
    CHECK_FALSE(r.entries[2].ok);
    CHECK(r.entries[2].error == "nope");
    CHECK(bench_csv(r).find("sleep") != std::string::npos);
    CHECK(bench_table(r).find("±") != std::string::npos);
    CHECK_THROWS_AS(bench({{"x", [] {}}}, 1), ConfigError);
}

}
