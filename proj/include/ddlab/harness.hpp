#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <boost/property_tree/ptree.hpp>
#include "json.hpp"

#include "ddlab/drawdown.hpp"
#include "ddlab/markets.hpp"
#include "ddlab/montecarlo.hpp"
#include "ddlab/utilities.hpp"

namespace ddlab {

enum class ExperimentKind {
    transform,
    tabulate_kw,
    estimate_cer,
    verify_main,
    verify_dollars,
    verify_log,
    verify_convergence,
    fleming_sheu,
    deflator_check,
    sde_convergence,
    lemma_suite,
    reproducibility,
};

std::string to_string(ExperimentKind k);
/// Accepts the dashed names used on the command line (verify-main, ...).
ExperimentKind experiment_kind_from_string(const std::string& s);
const std::vector<ExperimentKind>& all_experiment_kinds();

enum class OutputFormat { csv, json, both };

/// Knobs of the [experiment] section. Only the ones relevant to the kind
/// are read; the rest keep their defaults.
struct ExperimentParams {
    // estimate-cer, transform, sde-convergence
    std::optional<double> policy_p;
    Objective objective = Objective::cer;
    std::optional<double> expected;

    // verify-*, estimate-cer, deflator-check
    double rel_tol = 0.10;
    double stderr_multiple = 2.0;
    double policy_scale = 1.0;
    bool dollars = false;

    // verify-dollars: side of the (gamma, alpha) grid for the offset identity
    int identity_grid = 0;
    double identity_tol = 1e-12;

    // verify-convergence
    ConvergenceOptions convergence;

    // transform
    double round_trip_tol = 1e-9;
    double domination_tol = 1e-12;

    // tabulate-kw: K on a log grid of [x_min, x_max] in units of v0
    double x_min = 1.0;
    double x_max = 1000.0;
    int points = 1001;
    bool force_quadrature = true;
    double tabulate_tol = 1e-8;
    /// Further [drawdown]-shaped sections to tabulate alongside the main one.
    std::vector<std::string> also;

    // fleming-sheu
    double gamma = -1.0;
    std::optional<double> alpha;
    KVariant variant = KVariant::corrected;
    double fs_tol = 1e-12;
    std::map<std::string, double> fs_expected;
    /// Sections holding factor models that must be rejected.
    std::vector<std::string> reject;

    // deflator-check
    double p = 0.5;
    double horizon = 1.0;

    // sde-convergence
    std::vector<double> dt_list{1e-2, 1e-3, 1e-4};
    double min_order = 0.4;

    // lemma-suite
    double x0 = 1.0;
    double lemma_x_max = 1e6;
    double eps = 0.1;
    double lemma_tol = 1e-12;

    // reproducibility
    std::vector<unsigned> workers_list{1, 2, 4};
};

struct OutputSpec {
    std::string dir = "out";
    std::string name;
    OutputFormat format = OutputFormat::both;
};

/// Fully parsed experiment. `resolved` is the input tree after overrides,
/// kept for embedding in artifacts.
struct ExperimentConfig {
    ExperimentKind kind = ExperimentKind::verify_main;
    std::optional<CompleteMarketSpec> market;
    std::optional<DrawdownSpec> drawdown;
    std::vector<std::pair<std::string, DrawdownSpec>> extra_drawdowns;
    double v0 = 1.0;
    std::optional<UtilitySpec> utility;
    std::optional<double> utility_exponent;
    SimConfig sim;
    std::optional<FactorModelSpec> factor;
    std::vector<std::pair<std::string, FactorModelSpec>> reject_factors;
    ExperimentParams params;
    OutputSpec output;
    boost::property_tree::ptree resolved;
};

/// Reads an INI file. Parse errors become ConfigError with path "file:line".
boost::property_tree::ptree load_config_tree(const std::string& path);

/// Applies "section.key=value" overrides; malformed ones throw ConfigError.
void apply_overrides(boost::property_tree::ptree& tree, const std::vector<std::string>& overrides);

/// Builds the typed config. Missing or malformed fields and fields the kind
/// does not use throw ConfigError carrying the dotted field path.
ExperimentConfig parse_config(const boost::property_tree::ptree& tree);

ExperimentConfig load_config(const std::string& path, const std::vector<std::string>& overrides = {});

/// A plot-ready table: header plus rows of numbers.
struct Table {
    std::string name;
    std::vector<std::string> columns;
    std::vector<std::vector<double>> rows;
};

struct RunResult {
    ExperimentKind kind = ExperimentKind::verify_main;
    VerificationReport report;
    std::vector<Table> tables;
    /// Scalars specific to the kind (order estimates, max errors, ...).
    std::vector<std::pair<std::string, double>> metrics;
    double runtime_seconds = 0.0;

    bool pass() const;
};

RunResult run_experiment(const ExperimentConfig& cfg);

/// Summary document: kind, seed, resolved config, closed forms, estimates,
/// checks, metrics, verdict.
nlohmann::json to_json(const ExperimentConfig& cfg, const RunResult& result);

/// Writes <dir>/<name>.json and/or one <name>_<table>.csv per table, plus
/// <name>.verdict. Returns the paths written.
std::vector<std::string> write_artifacts(const ExperimentConfig& cfg, const RunResult& result);

enum ExitCode : int { exit_ok = 0, exit_check_failed = 1, exit_config_error = 2, exit_numerical_error = 3 };

/// Loads, runs and writes artifacts; maps exceptions to exit codes and
/// prints diagnostics and the check lines to the given streams.
int run_config_file(const std::string& path, const std::vector<std::string>& overrides,
                    std::ostream& out, std::ostream& err);

struct DiffEntry {
    std::string field;
    /// config, closed_form, estimate, check or metric.
    std::string level;
    double a = 0.0;
    double b = 0.0;
    double tolerance = 0.0;
    bool pass = true;
    std::string note;
};

struct ReportDiff {
    std::vector<DiffEntry> entries;
    bool pass() const;
};

/// Differences between two summary documents of the same kind. Identical
/// documents give no entries. Estimate slopes pass when within
/// `stderr_multiple` combined standard errors.
ReportDiff compare_reports(const nlohmann::json& a, const nlohmann::json& b,
                           double stderr_multiple = 2.0);

}  // namespace ddlab
