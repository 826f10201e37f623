#include <cmath>
#include <random>

#include "doctest.h"
#include "support.hpp"
#include "urbanemu/errors.hpp"
#include "urbanemu/physics.hpp"

using namespace urbanemu;
using namespace urbanemu::physics;

TEST_SUITE("physics") {

TEST_CASE("longwave and skin temperature conversions") {
    CHECK(longwave_from_ts(300.0, 0.97) == doctest::Approx(445.52).epsilon(1e-5));
    CHECK(ts_from_longwave(longwave_from_ts(300.0, 0.97), 0.97) == doctest::Approx(300.0).epsilon(1e-12));
    CHECK(ts_from_longwave(445.52, 0.97) == doctest::Approx(300.0).epsilon(1e-5));
    CHECK(ts_from_longwave(390.0, 0.97) == doctest::Approx(290.2).epsilon(2e-4));
    CHECK_THROWS_AS(longwave_from_ts(0.0), DomainError);
    CHECK_THROWS_AS(longwave_from_ts(std::nan("")), DomainError);
    CHECK_THROWS_AS(ts_from_longwave(0.0), DomainError);
    CHECK_THROWS_AS(ts_from_longwave(-5.0), DomainError);
}

TEST_CASE("round trip and monotonicity over the skin temperature range") {
    double prev = 0.0;
    for (double T = 180.0; T <= 360.0; T += 0.37) {
        const double L = longwave_from_ts(T);
        CHECK(std::abs(ts_from_longwave(L) - T) / T < 1e-9);
        CHECK(L > prev);
        prev = L;
    }
}

TEST_CASE("evaporation, net radiation and storage") {
    CHECK(evaporation_from_latent(246.4) == doctest::Approx(1.0e-4).epsilon(1e-12));
    CHECK(evaporation_from_latent(0.0) == 0.0);
    CHECK(evaporation_from_latent(-2.464) == doctest::Approx(-1.0e-6).epsilon(1e-12));

    CHECK(net_allwave(800, 120, 350, 445.5) == doctest::Approx(584.5));
    CHECK(net_allwave(0, 0, 0, 0) == 0.0);
    CHECK(net_allwave(0, 0, 320, 320) == 0.0);

    FluxRecord f;
    f.S_up = 120;
    f.L_up = 445.5;
    f.Q_H = 200;
    f.Q_E = 100;
    CHECK(storage_rate_from_balance(f, 800, 350) == doctest::Approx(284.5));
    f = {};
    f.L_up = 300;
    f.Q_H = -50;
    CHECK(storage_rate_from_balance(f, 0, 300) == doctest::Approx(50.0));
}

TEST_CASE("storage rate is linear in each flux") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-500, 500);
    for (int trial = 0; trial < 200; ++trial) {
        FluxRecord a, b, sum;
        a.S_up = u(rng), a.L_up = u(rng), a.Q_H = u(rng), a.Q_E = u(rng);
        b.S_up = u(rng), b.L_up = u(rng), b.Q_H = u(rng), b.Q_E = u(rng);
        sum.S_up = a.S_up + b.S_up, sum.L_up = a.L_up + b.L_up;
        sum.Q_H = a.Q_H + b.Q_H, sum.Q_E = a.Q_E + b.Q_E;
        const double s1 = u(rng), l1 = u(rng), s2 = u(rng), l2 = u(rng);
        CHECK(storage_rate_from_balance(sum, s1 + s2, l1 + l2) ==
              doctest::Approx(storage_rate_from_balance(a, s1, l1) + storage_rate_from_balance(b, s2, l2)));
    }
}

TEST_CASE("albedo") {
    CHECK(albedo(120, 800).value == doctest::Approx(0.15));
    CHECK_FALSE(albedo(120, 800).out_of_range);
    CHECK(albedo(0, 800).value == 0.0);
    CHECK_THROWS_AS(albedo(120, 0), UndefinedValueError);
    CHECK_THROWS_AS(albedo(1, 2.0), UndefinedValueError);
    const auto weird = albedo(900, 800);
    CHECK(weird.out_of_range);
    CHECK(weird.value == 1.0);
}

TEST_CASE("wind speed and meteorological direction") {
    const Wind w = wind_speed_dir(3, 4);
    CHECK(w.speed == doctest::Approx(5.0));
    REQUIRE(w.direction_deg);
    CHECK(*w.direction_deg == doctest::Approx(216.87).epsilon(1e-4));

    const Wind n = wind_speed_dir(0, -1);
    REQUIRE(n.direction_deg);
    CHECK(std::fmod(*n.direction_deg, 360.0) == doctest::Approx(0.0));

    CHECK(wind_speed_dir(0, 0).calm());
    CHECK(wind_speed_dir(0, 0).speed == 0.0);
}

TEST_CASE("wind rotation shifts direction and keeps speed") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(-10, 10), ang(0, 360);
    for (int trial = 0; trial < 500; ++trial) {
        const double x = u(rng), y = u(rng), theta = ang(rng);
        const double r = theta * M_PI / 180.0;
        const Wind a = wind_speed_dir(x, y);
        const Wind b = wind_speed_dir(x * std::cos(r) - y * std::sin(r), x * std::sin(r) + y * std::cos(r));
        CHECK(b.speed == doctest::Approx(a.speed).epsilon(1e-12));
        double diff = std::fmod(*b.direction_deg - (*a.direction_deg - theta) + 720.0, 360.0);
        if (diff > 180.0) diff -= 360.0;
        CHECK(std::abs(diff) < 1e-9);
    }
}

TEST_CASE("relative humidity") {
    CHECK(relative_humidity(293.15, 0.0, 101325).percent == 0.0);

    const double p = 101325.0;
    const double es = saturation_vapour_pressure(293.15);
    const double q_sat = 0.622 * es / (p - 0.378 * es);
    CHECK(relative_humidity(293.15, q_sat, p).percent == doctest::Approx(100.0).epsilon(1e-9));
    CHECK(es == doctest::Approx(2339.0).epsilon(0.005));

    CHECK(relative_humidity(293.15, 0.0073, 101325).percent == doctest::Approx(50.0).epsilon(0.03));

    const auto over = relative_humidity(293.15, 0.03, p);
    CHECK(over.oversaturated);
    CHECK(over.percent == 105.0);
    CHECK_THROWS_AS(relative_humidity(400.0, 0.01, p), DomainError);

    double prev = -1.0;
    for (double q = 0.0; q < 0.014; q += 0.0005) {
        const double rh = relative_humidity(293.15, q, p).percent;
        CHECK(rh > prev);
        prev = rh;
    }
}

TEST_CASE("saturation humidity slope matches a finite difference") {
    for (double T : {260.0, 285.0, 300.0, 320.0}) {
        const double h = 1e-4;
        const double fd = (saturation_specific_humidity(T + h, 1e5) - saturation_specific_humidity(T - h, 1e5)) / (2 * h);
        CHECK(saturation_specific_humidity_slope(T, 1e5) == doctest::Approx(fd).epsilon(1e-6));
    }
}

TEST_CASE("solar zenith cosine") {
    const SiteMeta equator{0.0, 0.0, 0.0};
    // Equation of time is about -7.5 min near the March equinox.
    CHECK(solar_mu0(equator, parse_iso8601("2004-03-20T12:07:30Z")) == doctest::Approx(1.0).epsilon(0.02));
    CHECK(solar_mu0(equator, parse_iso8601("2004-03-20T00:07:30Z")) < 0.0);

    // Local solar noon at Preston on 21 December: 12:00 - longitude/15 h, less about 2 min.
    const double mu0 = solar_mu0(testsupport::kPreston, parse_iso8601("2003-12-21T02:18:00Z"));
    CHECK(mu0 == doctest::Approx(0.969).epsilon(0.02));
    CHECK(solar_mu0(testsupport::kPreston, parse_iso8601("2003-12-21T14:18:00Z")) < 0.0);

    CHECK(solar_mu0(testsupport::kPreston, parse_iso8601("2003-12-21T14:18:00Z"), Mu0Convention::clamped) == 0.0);
}

TEST_CASE("solar zenith cosine repeats after a day") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> when(epoch_seconds(parse_iso8601("1960-01-01T00:00:00Z")),
                                                epoch_seconds(parse_iso8601("2090-01-01T00:00:00Z")));
    std::uniform_real_distribution<double> lat(-90, 90), lon(-180, 180);
    for (int trial = 0; trial < 500; ++trial) {
        const SiteMeta s{lat(rng), lon(rng), 0.0};
        const double t = when(rng);
        const double a = solar_mu0(s, t);
        CHECK(a >= -1.0);
        CHECK(a <= 1.0);
        CHECK(std::abs(a - solar_mu0(s, t + 86400.0)) <= 0.02);
    }
}

TEST_CASE("record validation") {
    ForcingRecord f = testsupport::sample_forcing();
    CHECK_NOTHROW(f.validate());
    f.T = 400.0;
    CHECK_THROWS_AS(f.validate(), DomainError);
    f = testsupport::sample_forcing();
    f.L_dn = 20.0;
    CHECK_THROWS_AS(f.validate(), DomainError);
    f = testsupport::sample_forcing();
    f.RR = -1e-5;
    CHECK_THROWS_AS(f.validate(), DomainError);

    FluxRecord r;
    r.S_up = 10;
    r.L_up = longwave_from_ts(290.0);
    r.T_s = 290.0;
    CHECK_NOTHROW(r.validate());
    r.T_s = 291.0;
    CHECK_THROWS_AS(r.validate(), DomainError);
    r.T_s.reset();
    r.S_up = -1.0;
    CHECK_THROWS_AS(r.validate(), DomainError);
}

TEST_CASE("timestamps") {
    const Instant t = parse_iso8601("2004-02-29T23:30:00Z");
    CHECK(format_iso8601(t) == "2004-02-29T23:30:00Z");
    CHECK(parse_iso8601("2004-02-29T23:30:00") == t);
    CHECK_THROWS_AS(parse_iso8601("2004-02-30T00:00:00Z"), LoadError);
    CHECK_THROWS_AS(parse_iso8601("yesterday"), LoadError);
}

}
