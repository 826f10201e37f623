#pragma once

#include <cstdint>
#include <string>

#include "urbanemu/physics.hpp"
#include "urbanemu/synth.hpp"
#include "urbanemu/time.hpp"

namespace testsupport {

inline const urbanemu::physics::SiteMeta kPreston{-37.7306, 145.0145, 10.0};

/// Synthetic forcing of `days` days starting at `start`.
inline urbanemu::physics::ForcingSeries forcing_days(double days, std::uint64_t seed = 1,
                                                     const std::string& start = "2004-01-01T00:00:00Z",
                                                     double obs_block = 12.0) {
    urbanemu::synth::SynthOptions o;
    o.start = urbanemu::parse_iso8601(start);
    o.end = o.start + urbanemu::Seconds{static_cast<long>(days * 86400.0)};
    o.seed = seed;
    o.obs_block = obs_block;
    return urbanemu::synth::synth_forcing(kPreston, o);
}

/// A physically ordinary midday forcing record.
inline urbanemu::physics::ForcingRecord sample_forcing() {
    urbanemu::physics::ForcingRecord f;
    f.t = urbanemu::parse_iso8601("2004-01-15T02:00:00Z");
    f.T = 295.0;
    f.q = 0.008;
    f.p = 101000.0;
    f.S_dn = 800.0;
    f.L_dn = 350.0;
    f.u = 2.0;
    f.v = -1.0;
    f.RR = 0.0;
    return f;
}

}  // namespace testsupport
