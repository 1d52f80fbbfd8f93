#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <unistd.h>

#include "doctest.h"

#include "ddlab/errors.hpp"
#include "ddlab/harness.hpp"

using namespace ddlab;
namespace fs = std::filesystem;

namespace {

fs::path scratch() {
    static const fs::path dir = [] {
        fs::path d = fs::temp_directory_path() / ("ddlab_harness_" + std::to_string(::getpid()));
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

std::string write_file(const std::string& name, const std::string& body) {
    const fs::path p = scratch() / name;
    std::ofstream(p) << body;
    return p.string();
}

const char* kMarket = R"(
[market]
; per year
mu = 0.06
r = 0
; per sqrt(year)
sigma = 0.2
)";

std::string verify_main_ini(int n_paths, int seed) {
    std::ostringstream os;
    os << "[experiment]\nkind = verify-main\n" << kMarket
       << "[drawdown]\nkind = linear\nalpha = 0.5\n"
       << "[utility]\nkind = power\ngamma = 0.5\n"
       << "[sim]\nn_paths = " << n_paths << "\ndt = 0.01\nhorizons = 1, 2\nseed = " << seed << "\nworkers = 1\n"
       << "[output]\ndir = " << (scratch() / "vm").string() << "\n";
    return os.str();
}

nlohmann::json read_json(const std::string& path) {
    std::ifstream in(path);
    return nlohmann::json::parse(in);
}

int expect_config_error(const std::string& ini, const std::string& path) {
    const auto file = write_file("bad.ini", ini);
    try {
        load_config(file);
    } catch (const ConfigError& e) {
        CHECK(e.path() == path);
        return 1;
    }
    FAIL("no ConfigError for " << path);
    return 0;
}

}  // namespace

TEST_CASE("experiment kind names round trip") {
    for (auto k : all_experiment_kinds()) CHECK(experiment_kind_from_string(to_string(k)) == k);
    CHECK(all_experiment_kinds().size() == 12);
    CHECK_THROWS_AS(experiment_kind_from_string("verify_main"), ConfigError);
}

TEST_CASE("missing sigma is reported with its field path and exit code 2") {
    const std::string ini = "[experiment]\nkind = estimate-cer\n[market]\nmu = 0.06\nr = 0\n"
                            "[utility]\nkind = power\ngamma = 0.5\n[sim]\nhorizons = 1\n";
    expect_config_error(ini, "market.sigma");
    std::ostringstream out, err;
    CHECK(run_config_file(write_file("nosigma.ini", ini), {}, out, err) == exit_config_error);
    CHECK(err.str().find("market.sigma") != std::string::npos);
}

TEST_CASE("config diagnostics name the offending field") {
    expect_config_error("[experiment]\nkind = nope\n", "experiment.kind");
    expect_config_error(verify_main_ini(10, 1) + "\n[extra]\nfoo = 1\n", "extra.foo");
    expect_config_error("[experiment]\nkind = tabulate-kw\nx_min = 1\n[drawdown]\nkind = linear\nalpha = 1.5\n",
                        "drawdown");
    expect_config_error("[experiment]\nkind = tabulate-kw\n[drawdown]\nkind = linear\nalpha = 0.5x\n",
                        "drawdown.alpha");
    expect_config_error("[experiment]\nkind = tabulate-kw\nalso = nowhere\n[drawdown]\nkind = linear\nalpha = 0.5\n",
                        "experiment.also");
    // a field that exists but is not used by this kind
    expect_config_error("[experiment]\nkind = tabulate-kw\nrel_tol = 0.1\n[drawdown]\nkind = linear\nalpha = 0.5\n",
                        "experiment.rel_tol");
    std::string ini = verify_main_ini(10, 1);
    ini.replace(ini.find("dt = 0.01"), 9, "dt = 0.3");
    expect_config_error(ini, "sim");
}

TEST_CASE("malformed INI is a config error with a line number") {
    const auto file = write_file("syntax.ini", "[experiment\nkind = verify-main\n");
    std::ostringstream out, err;
    CHECK(run_config_file(file, {}, out, err) == exit_config_error);
    CHECK(err.str().find("syntax.ini:1") != std::string::npos);
}

TEST_CASE("dotted overrides replace and add fields") {
    const auto file = write_file("vm.ini", verify_main_ini(10, 1));
    auto cfg = load_config(file, {"sim.seed=77", "drawdown.alpha=0.25", "experiment.rel_tol=0.2"});
    CHECK(cfg.sim.seed == 77);
    CHECK(cfg.drawdown->parameter() == 0.25);
    CHECK(cfg.params.rel_tol == 0.2);
    CHECK(cfg.resolved.get<std::string>("sim.seed") == "77");
    CHECK_THROWS_AS(load_config(file, {"sim.seed"}), ConfigError);
    CHECK_THROWS_AS(load_config(file, {"seed=3"}), ConfigError);
    CHECK_THROWS_AS(load_config(file, {"sim.seed=-1"}), ConfigError);
}

TEST_CASE("market pieces are resolved by section name") {
    const std::string ini = "[experiment]\nkind = estimate-cer\n"
                            "[market]\npieces = early, late\n"
                            "[early]\nmu = 0.05\nr = 0.01\nsigma = 0.2\n"
                            "[late]\nt_start = 5\nmu = 0.08, 0.07\nr = 0.02\nsigma = 0.2, 0; 0.05, 0.25\n"
                            "[utility]\nkind = power\ngamma = -1\n[sim]\nhorizons = 10\n";
    // dimension mismatch between pieces is a market-level error
    expect_config_error(ini, "market");
    std::string ok = ini;
    ok.replace(ok.find("mu = 0.08, 0.07"), 15, "mu = 0.08");
    ok.replace(ok.find("sigma = 0.2, 0; 0.05, 0.25"), 26, "sigma = 0.25");
    auto cfg = load_config(write_file("pieces.ini", ok));
    REQUIRE(cfg.market);
    CHECK(cfg.market->pieces().size() == 2);
    CHECK(cfg.market->r_star() == 0.02);
    CHECK(cfg.market->theta_sq_star() == doctest::Approx(0.0576));
    std::string missing = ok;
    missing.replace(missing.find("pieces = early, late"), 20, "pieces = early, later");
    expect_config_error(missing, "market.pieces");
}

TEST_CASE("tabulate-kw for linear alpha 0.5 gives K(v) = v^2") {
    const std::string ini = "[experiment]\nkind = tabulate-kw\nx_min = 1\nx_max = 100\npoints = 301\n"
                            "[drawdown]\nkind = linear\nalpha = 0.5\n"
                            "[output]\nformat = csv\nname = kw\ndir = " + (scratch() / "kw").string() + "\n";
    const auto cfg = load_config(write_file("kw.ini", ini));
    const auto res = run_experiment(cfg);
    CHECK(res.pass());
    const auto files = write_artifacts(cfg, res);
    std::ifstream in(scratch() / "kw" / "kw_drawdown.csv");
    REQUIRE(in);
    std::string line;
    std::size_t rows = 0;
    bool header = false;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        if (!header) {
            CHECK(line == "v,K,K_closed,rel_err");
            header = true;
            continue;
        }
        double v = 0, k = 0;
        char comma = 0;
        std::istringstream is(line);
        is >> v >> comma >> k;
        CHECK(std::abs(k - v * v) <= 1e-8 * v * v);
        ++rows;
    }
    CHECK(rows == 301);
    CHECK(!fs::exists(scratch() / "kw" / "kw.json"));
    CHECK(fs::exists(scratch() / "kw" / "kw.verdict"));
}

TEST_CASE("verify-main summary carries the closed form, seed and resolved config") {
    const auto file = write_file("vm.ini", verify_main_ini(200, 11));
    std::ostringstream out, err;
    const int code = run_config_file(file, {"output.name=vm"}, out, err);
    CHECK((code == exit_ok || code == exit_check_failed));
    const auto j = read_json((scratch() / "vm" / "vm.json").string());
    // 0.5 * 0.5 * 0.09 / (2 * (1 - 0.25))
    CHECK(std::abs(j["closed_form"]["closed_form"].get<double>() - 0.015) <= 1e-15);
    CHECK(j["seed"] == 11);
    CHECK(j["config"]["sim"]["seed"] == "11");
    CHECK(j["config"]["output"]["name"] == "vm");
    CHECK(j["estimates"].contains("constrained"));
    CHECK(j["estimates"]["constrained"]["per_horizon"].size() == 2);
    CHECK(j["pass"].get<bool>() == (code == exit_ok));
}

TEST_CASE("factor model config reproduces the hand instance and exercises rejection") {
    const std::string ini = "[experiment]\nkind = fleming-sheu\ngamma = -1\nexpected_value = 0.00875\n"
                            "expected_E = 0.75\nreject = bad\n"
                            "[factor]\nr = 0.02\nmu1 = 0.08\nmu2 = 0\nsigma = 0.2\nrho = 0.2\nb = -1\n"
                            "[bad]\nr = 0.02\nmu1 = 0.08\nmu2 = 0.01\nsigma = 0.2\nrho = 0.2\nb = 1\n"
                            "[output]\ndir = " + (scratch() / "fs").string() + "\n";
    const auto res = run_experiment(load_config(write_file("fs.ini", ini)));
    CHECK(res.pass());
    CHECK(res.report.checks.size() == 3);

    // positive gamma with a large mu2 makes the radicand negative: numerical error
    std::ostringstream out, err;
    const int code = run_config_file(write_file("fs2.ini", ini),
                                     {"experiment.gamma=0.5", "factor.mu2=1", "factor.b=0"}, out, err);
    CHECK(code == exit_numerical_error);
}

TEST_CASE("deflator check reports a finite, tight bound") {
    const std::string ini = std::string("[experiment]\nkind = deflator-check\np = 0.5\nT = 1\n") + kMarket +
                            "[sim]\nn_paths = 20000\nseed = 3\n";
    const auto res = run_experiment(load_config(write_file("defl.ini", ini)));
    CHECK(res.pass());
}

TEST_CASE("compare_reports") {
    const std::string ini = std::string("[experiment]\nkind = estimate-cer\n") + kMarket +
                            "[utility]\nkind = power\ngamma = 0.5\n"
                            "[sim]\nn_paths = 20000\nhorizons = 2, 4\nseed = 1\nworkers = 1\n"
                            "[output]\nformat = json\ndir = " + (scratch() / "cmp").string() + "\n";
    const auto file = write_file("cmp.ini", ini);
    auto run = [&](std::vector<std::string> o) {
        const auto cfg = load_config(file, o);
        return to_json(cfg, run_experiment(cfg));
    };
    const auto a = run({});

    SUBCASE("identical seeds give an empty diff") {
        const auto b = run({});
        auto d = compare_reports(a, b);
        CHECK(d.entries.empty());
        CHECK(d.pass());
    }
    SUBCASE("different seeds stay within the combined stderr") {
        const auto b = run({"sim.seed=3"});
        auto d = compare_reports(a, b);
        CHECK(d.pass());
        bool seed_entry = false, slope_entry = false;
        for (const auto& e : d.entries) {
            if (e.field == "sim.seed") seed_entry = e.level == "config";
            if (e.field == "estimates.estimate.slope") {
                slope_entry = true;
                CHECK(std::abs(e.a - e.b) <= e.tolerance);
            }
        }
        CHECK(seed_entry);
        CHECK(slope_entry);
    }
    SUBCASE("a changed parameter shows up as a config-level diff") {
        const auto b = run({"utility.gamma=-1"});
        auto d = compare_reports(a, b);
        bool cf = false;
        for (const auto& e : d.entries) {
            if (e.field == "closed_form.closed_form") {
                cf = true;
                CHECK(e.level == "config");
            }
        }
        CHECK(cf);
    }
    SUBCASE("kind mismatch is an error") {
        auto b = a;
        b["kind"] = "verify-log";
        CHECK_THROWS_AS(compare_reports(a, b), ConfigError);
    }
}
