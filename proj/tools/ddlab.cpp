#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "ddlab/errors.hpp"
#include "ddlab/harness.hpp"

namespace {

struct RunFlags {
    std::string config;
    std::vector<std::string> sets;
    std::optional<std::uint64_t> seed;
    std::optional<unsigned> workers;
    std::optional<std::string> out_dir;
    std::optional<std::string> format;
};

void add_run_flags(CLI::App* cmd, RunFlags& f) {
    cmd->add_option("config", f.config, "INI experiment file")->required()->check(CLI::ExistingFile);
    cmd->add_option("--set", f.sets, "override a field, e.g. sim.seed=7 (repeatable)");
    cmd->add_option("--seed", f.seed, "same as --set sim.seed=N");
    cmd->add_option("--workers", f.workers, "worker threads (0 = machine parallelism)")->envname("DDLAB_WORKERS");
    cmd->add_option("--out-dir", f.out_dir, "artifact directory");
    cmd->add_option("--format", f.format, "artifacts to write")->check(CLI::IsMember({"csv", "json", "both"}));
}

std::vector<std::string> overrides(const RunFlags& f, const std::optional<std::string>& kind) {
    std::vector<std::string> o = f.sets;
    if (kind) o.push_back("experiment.kind=" + *kind);
    if (f.seed) o.push_back("sim.seed=" + std::to_string(*f.seed));
    if (f.workers) o.push_back("sim.workers=" + std::to_string(*f.workers));
    if (f.out_dir) o.push_back("output.dir=" + *f.out_dir);
    if (f.format) o.push_back("output.format=" + *f.format);
    return o;
}

nlohmann::json read_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ddlab::ConfigError(path, "cannot open report");
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ddlab::ConfigError(path, e.what());
    }
}

int compare(const std::string& a, const std::string& b, double multiple) {
    try {
        const ddlab::ReportDiff d = ddlab::compare_reports(read_json(a), read_json(b), multiple);
        if (d.entries.empty()) {
            std::cout << "no differences\n";
            return ddlab::exit_ok;
        }
        for (const auto& e : d.entries) {
            std::cout << (e.pass ? "[ok]   " : "[DIFF] ") << e.level << " " << e.field;
            if (e.level != "config") std::cout << ": " << e.a << " vs " << e.b;
            if (e.tolerance > 0.0) std::cout << " (tol " << e.tolerance << ")";
            if (!e.note.empty()) std::cout << "  " << e.note;
            std::cout << '\n';
        }
        return d.pass() ? ddlab::exit_ok : ddlab::exit_check_failed;
    } catch (const ddlab::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return ddlab::exit_config_error;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"ddlab: drawdown-constrained portfolio experiments"};
    app.require_subcommand(1);

    RunFlags run_flags;
    auto* run = app.add_subcommand("run", "run the experiment named in the config");
    add_run_flags(run, run_flags);

    // one subcommand per experiment kind; the kind in the file is overridden
    std::vector<std::pair<CLI::App*, std::string>> kind_cmds;
    std::vector<RunFlags> kind_flags(ddlab::all_experiment_kinds().size());
    for (std::size_t i = 0; i < ddlab::all_experiment_kinds().size(); ++i) {
        const std::string name = ddlab::to_string(ddlab::all_experiment_kinds()[i]);
        auto* cmd = app.add_subcommand(name, "run the config as a " + name + " experiment");
        add_run_flags(cmd, kind_flags[i]);
        kind_cmds.emplace_back(cmd, name);
    }

    std::string report_a, report_b;
    double multiple = 2.0;
    auto* cmp = app.add_subcommand("compare", "diff two JSON summaries of the same kind");
    cmp->add_option("a", report_a)->required()->check(CLI::ExistingFile);
    cmp->add_option("b", report_b)->required()->check(CLI::ExistingFile);
    cmp->add_option("--stderr-multiple", multiple, "slope tolerance in combined standard errors");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : ddlab::exit_config_error;
    }

    if (*run) return ddlab::run_config_file(run_flags.config, overrides(run_flags, std::nullopt), std::cout, std::cerr);
    for (std::size_t i = 0; i < kind_cmds.size(); ++i) {
        if (*kind_cmds[i].first) {
            return ddlab::run_config_file(kind_flags[i].config, overrides(kind_flags[i], kind_cmds[i].second),
                                          std::cout, std::cerr);
        }
    }
    if (*cmp) return compare(report_a, report_b, multiple);
    return ddlab::exit_config_error;
}
