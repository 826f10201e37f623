#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <sstream>

#include "doctest.h"
#include "urbanemu/dataset.hpp"
#include "urbanemu/errors.hpp"
#include "urbanemu/io.hpp"
#include "urbanemu/pipeline.hpp"

using namespace urbanemu;
using namespace urbanemu::pipeline;
namespace fs = std::filesystem;

namespace {

const fs::path kConfigs = URBANEMU_CONFIG_DIR;

fs::path fresh_dir(const std::string& name) {
    const fs::path d = fs::temp_directory_path() / "urbanemu_pipeline_tests" / name;
    fs::remove_all(d);
    fs::create_directories(d.parent_path());
    return d;
}

int cli(const std::string& args, const fs::path& log) {
    const std::string cmd = std::string(URBANEMU_CLI) + " " + args + " 2> " + log.string();
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string smoke_args(const fs::path& workdir) {
    return "--config " + (kConfigs / "smoke.json").string() + " --workdir " + workdir.string();
}

PipelineConfig smoke_config(const fs::path& workdir) {
    PipelineConfig c = load_config(kConfigs / "smoke.json");
    c.workdir = workdir;
    return c;
}

}  // namespace

TEST_SUITE("pipeline") {

TEST_CASE("smoke pipeline end to end") {
    const fs::path work = fresh_dir("smoke");
    const fs::path log = work.string() + ".log";
    REQUIRE(cli(smoke_args(work) + " run-all", log) == 0);
    const Layout l{work};
    for (const auto& p : {l.forcing(), l.mem(), l.ensemble_summary(), l.model(), l.manifest(), l.seeds(),
                          l.rollout(), l.eval_csv(), l.eval_txt(), l.compare_csv(), l.compare_txt(), l.bench_csv(),
                          l.bench_txt(), l.member(0)}) {
        CHECK_MESSAGE(fs::exists(p), p.string());
    }

    // Structured log: one JSON object per line.
    std::istringstream lines(io::read_file(log));
    std::string line;
    int done = 0;
    while (std::getline(lines, line)) {
        if (line.empty() || line.front() != '{') continue;
        const auto j = nlohmann::json::parse(line);
        CHECK(j.contains("cmd"));
        done += j["event"] == "done" ? 1 : 0;
    }
    CHECK(done == 7);

    // Seed distribution: header plus one line per seed, exactly one selected.
    const std::string seeds = io::read_file(l.seeds());
    CHECK(std::count(seeds.begin(), seeds.end(), '\n') == 4);

    SUBCASE("rerun without force refuses") {
        CHECK(cli(smoke_args(work) + " train", log) == 2);
        CHECK(io::read_file(log).find("--force") != std::string::npos);
        CHECK(cli(smoke_args(work) + " --force evaluate", log) == 0);
    }
    SUBCASE("ensemble mean evaluated against itself is all zero") {
        PipelineConfig c = smoke_config(work);
        c.eval_pred = "mem";
        c.eval_rows = "all";
        std::ostringstream sink;
        cmd_evaluate(c, true, sink);
        const std::string csv = io::read_file(l.eval_csv());
        std::istringstream rows(csv);
        std::getline(rows, line);
        int n = 0;
        while (std::getline(rows, line)) {
            std::istringstream cells(line);
            std::string cell;
            std::vector<std::string> v;
            while (std::getline(cells, cell, ',')) v.push_back(cell);
            REQUIRE(v.size() >= 9);
            for (std::size_t k = 5; k < 9; ++k) CHECK(std::stod(v[k]) == 0.0);
            ++n;
        }
        CHECK(n == 4);
    }
    SUBCASE("same seed gives byte-identical artifacts") {
        const fs::path twin = fresh_dir("smoke-twin");
        REQUIRE(cli(smoke_args(twin) + " run-all", log) == 0);
        const Layout t{twin};
        for (auto get : {&Layout::forcing, &Layout::mem, &Layout::ensemble_summary, &Layout::model, &Layout::manifest,
                         &Layout::seeds, &Layout::rollout, &Layout::eval_csv, &Layout::compare_csv}) {
            CHECK_MESSAGE(io::read_file((l.*get)()) == io::read_file((t.*get)()), (l.*get)().string());
        }
        const fs::path other = fresh_dir("smoke-other");
        REQUIRE(cli(smoke_args(other) + " --seed 99 synth-forcing", log) == 0);
        CHECK(io::read_file(Layout{other}.forcing()) != io::read_file(l.forcing()));
    }
}

TEST_CASE("missing prerequisites name the producing command") {
    const fs::path work = fresh_dir("empty");
    const fs::path log = work.string() + ".log";
    CHECK(cli(smoke_args(work) + " train", log) == 1);
    CHECK(io::read_file(log).find("synth-forcing") != std::string::npos);
    REQUIRE(cli(smoke_args(work) + " synth-forcing", log) == 0);
    CHECK(cli(smoke_args(work) + " train", log) == 1);
    CHECK(io::read_file(log).find("'ensemble'") != std::string::npos);
    CHECK(cli(smoke_args(work) + " rollout", log) == 1);
    CHECK(io::read_file(log).find("'train'") != std::string::npos);
}

TEST_CASE("synthetic forcing") {
    const fs::path work = fresh_dir("full-span");
    PipelineConfig c = load_config(kConfigs / "full_span.json");
    c.workdir = work;
    std::ostringstream sink;
    cmd_synth_forcing(c, false, sink);
    const auto table = dataset::load_forcing(Layout{work}.forcing());
    CHECK(table.rows() == 22704);
    CHECK(format_iso8601(table.time(22703)) == "2004-11-27T13:30:00Z");

    const auto series = dataset::to_forcing_series(table);
    std::size_t observed = 0;
    for (std::size_t i = 0; i < series.size(); ++i) {
        const auto& f = series.records[i];
        if (physics::solar_mu0(c.site, f.t) <= 0.0) CHECK(f.S_dn == 0.0);
        observed += table.obs_mask[i] ? 1 : 0;
    }
    CHECK(static_cast<double>(observed) / 22704.0 == doctest::Approx(0.39).epsilon(0.1));

    PipelineConfig again = c;
    again.workdir = fresh_dir("full-span-2");
    cmd_synth_forcing(again, false, sink);
    CHECK(io::read_file(Layout{work}.forcing()) == io::read_file(Layout{again.workdir}.forcing()));
}

TEST_CASE("configuration parsing") {
    const auto base = nlohmann::json::parse(io::read_file(kConfigs / "smoke.json"));
    CHECK_NOTHROW(config_from_json(base, kConfigs).validate());

    auto typo = base;
    typo["mlp"]["neuron"] = 16;
    CHECK_THROWS_AS(config_from_json(typo, kConfigs), ConfigError);

    auto bad_rate = base;
    bad_rate["dataset"] = {{"rates", {7}}};
    CHECK_THROWS_AS(config_from_json(bad_rate, kConfigs).validate(), ConfigError);

    const auto c = config_from_json(base, kConfigs);
    CHECK(c.workdir == (kConfigs / "../build/smoke-work").lexically_normal());
    CHECK(c.rates == dataset::kDefaultRates);
    CHECK(c.ensemble.seed == c.seed + 1);
    CHECK(c.mlp.seed == c.seed + 3);

    PipelineConfig reseeded = c;
    reseeded.apply_seed(40);
    CHECK(reseeded.synth.seed == 40);
    CHECK(reseeded.ensemble.seed == 41);

    for (const char* name : {"desk.json", "full_span.json"}) {
        CHECK_NOTHROW(load_config(kConfigs / name).validate());
    }
}

}
