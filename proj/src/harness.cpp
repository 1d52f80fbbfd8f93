#include "ddlab/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <random>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>

#include "ddlab/azema_yor.hpp"
#include "ddlab/errors.hpp"
#include "ddlab/numerics.hpp"

namespace ddlab {

namespace pt = boost::property_tree;

namespace {

const std::vector<std::pair<ExperimentKind, std::string>>& kind_names() {
    static const std::vector<std::pair<ExperimentKind, std::string>> names{
        {ExperimentKind::transform, "transform"},
        {ExperimentKind::tabulate_kw, "tabulate-kw"},
        {ExperimentKind::estimate_cer, "estimate-cer"},
        {ExperimentKind::verify_main, "verify-main"},
        {ExperimentKind::verify_dollars, "verify-dollars"},
        {ExperimentKind::verify_log, "verify-log"},
        {ExperimentKind::verify_convergence, "verify-convergence"},
        {ExperimentKind::fleming_sheu, "fleming-sheu"},
        {ExperimentKind::deflator_check, "deflator-check"},
        {ExperimentKind::sde_convergence, "sde-convergence"},
        {ExperimentKind::lemma_suite, "lemma-suite"},
        {ExperimentKind::reproducibility, "reproducibility"},
    };
    return names;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream is(s);
    while (std::getline(is, item, sep)) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

double parse_double(const std::string& path, const std::string& text) {
    const std::string s = trim(text);
    std::size_t pos = 0;
    double v = 0.0;
    try {
        v = std::stod(s, &pos);
    } catch (const std::exception&) {
        throw ConfigError(path, "expected a number, got '" + text + "'");
    }
    if (pos != s.size()) throw ConfigError(path, "expected a number, got '" + text + "'");
    return v;
}

long long parse_integer(const std::string& path, const std::string& text) {
    const std::string s = trim(text);
    std::size_t pos = 0;
    long long v = 0;
    try {
        v = std::stoll(s, &pos);
    } catch (const std::exception&) {
        throw ConfigError(path, "expected an integer, got '" + text + "'");
    }
    if (pos != s.size()) throw ConfigError(path, "expected an integer, got '" + text + "'");
    return v;
}

bool parse_bool(const std::string& path, const std::string& text) {
    const std::string s = trim(text);
    if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
    if (s == "false" || s == "0" || s == "no" || s == "off") return false;
    throw ConfigError(path, "expected true or false, got '" + text + "'");
}

// Typed access to the tree that remembers which fields were read, so that
// leftovers can be reported as unknown.
class Reader {
public:
    explicit Reader(const pt::ptree& tree) : tree_(tree) {}

    bool has_section(const std::string& s) const {
        return static_cast<bool>(tree_.get_child_optional(pt::ptree::path_type(s, '\x1f')));
    }

    std::optional<std::string> raw(const std::string& section, const std::string& key) {
        auto sec = tree_.get_child_optional(pt::ptree::path_type(section, '\x1f'));
        if (!sec) return std::nullopt;
        auto v = sec->get_child_optional(pt::ptree::path_type(key, '\x1f'));
        if (!v) return std::nullopt;
        consumed_.insert(section + "." + key);
        return v->data();
    }

    std::string required(const std::string& section, const std::string& key) {
        auto v = raw(section, key);
        if (!v) throw ConfigError(section + "." + key, "missing required field");
        return *v;
    }

    std::optional<double> opt_double(const std::string& s, const std::string& k) {
        auto v = raw(s, k);
        if (!v) return std::nullopt;
        return parse_double(s + "." + k, *v);
    }
    double get_double(const std::string& s, const std::string& k, double def) {
        return opt_double(s, k).value_or(def);
    }
    double req_double(const std::string& s, const std::string& k) {
        return parse_double(s + "." + k, required(s, k));
    }
    long long get_int(const std::string& s, const std::string& k, long long def) {
        auto v = raw(s, k);
        return v ? parse_integer(s + "." + k, *v) : def;
    }
    bool get_bool(const std::string& s, const std::string& k, bool def) {
        auto v = raw(s, k);
        return v ? parse_bool(s + "." + k, *v) : def;
    }
    std::string get_string(const std::string& s, const std::string& k, const std::string& def) {
        return raw(s, k).value_or(def);
    }
    std::optional<std::vector<double>> opt_doubles(const std::string& s, const std::string& k) {
        auto v = raw(s, k);
        if (!v) return std::nullopt;
        std::vector<double> out;
        for (const auto& item : split(*v, ',')) out.push_back(parse_double(s + "." + k, item));
        if (out.empty()) throw ConfigError(s + "." + k, "empty list");
        return out;
    }
    std::vector<std::string> get_names(const std::string& s, const std::string& k) {
        auto v = raw(s, k);
        return v ? split(*v, ',') : std::vector<std::string>{};
    }

    void reject_leftovers(const std::string& kind) const {
        for (const auto& [section, child] : tree_) {
            if (child.empty() && !child.data().empty()) {
                throw ConfigError(section, "field outside any section");
            }
            for (const auto& [key, value] : child) {
                const std::string path = section + "." + key;
                if (!consumed_.count(path)) {
                    throw ConfigError(path, "unknown field for experiment kind " + kind);
                }
            }
        }
    }

private:
    const pt::ptree& tree_;
    std::set<std::string> consumed_;
};

// Domain errors raised while building a section are configuration errors.
template <class Fn>
auto section_guard(const std::string& path, Fn&& fn) -> decltype(fn()) {
    try {
        return fn();
    } catch (const ConfigError&) {
        throw;
    } catch (const DomainError& e) {
        throw ConfigError(path, e.what());
    }
}

Eigen::VectorXd row_vector(const std::string& path, const std::string& text) {
    std::vector<double> v;
    for (const auto& item : split(text, ',')) v.push_back(parse_double(path, item));
    if (v.empty()) throw ConfigError(path, "empty vector");
    return Eigen::Map<Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

Eigen::MatrixXd matrix_rows(const std::string& path, const std::string& text) {
    const auto rows = split(text, ';');
    if (rows.empty()) throw ConfigError(path, "empty matrix");
    std::vector<Eigen::VectorXd> r;
    for (const auto& row : rows) r.push_back(row_vector(path, row));
    Eigen::MatrixXd m(static_cast<Eigen::Index>(r.size()), r.front().size());
    for (std::size_t i = 0; i < r.size(); ++i) {
        if (r[i].size() != m.cols()) throw ConfigError(path, "ragged matrix rows");
        m.row(static_cast<Eigen::Index>(i)) = r[i].transpose();
    }
    return m;
}

MarketPiece read_piece(Reader& rd, const std::string& section, double default_start) {
    MarketPiece p;
    p.t_start = rd.get_double(section, "t_start", default_start);
    p.r = rd.get_double(section, "r", 0.0);
    p.mu = row_vector(section + ".mu", rd.required(section, "mu"));
    p.sigma = matrix_rows(section + ".sigma", rd.required(section, "sigma"));
    return p;
}

CompleteMarketSpec read_market(Reader& rd) {
    if (!rd.has_section("market")) throw ConfigError("market", "missing required section");
    std::vector<MarketPiece> pieces;
    const auto refs = rd.get_names("market", "pieces");
    if (refs.empty()) {
        pieces.push_back(read_piece(rd, "market", 0.0));
    } else {
        for (const auto& ref : refs) {
            if (!rd.has_section(ref)) {
                throw ConfigError("market.pieces", "references missing section [" + ref + "]");
            }
            pieces.push_back(read_piece(rd, ref, pieces.empty() ? 0.0 : NAN));
            if (std::isnan(pieces.back().t_start)) {
                throw ConfigError(ref + ".t_start", "missing required field");
            }
        }
    }
    return section_guard("market", [&] { return CompleteMarketSpec(std::move(pieces)); });
}

std::vector<std::pair<double, double>> read_knots(const std::string& path, const std::string& text) {
    std::vector<std::pair<double, double>> knots;
    for (const auto& item : split(text, ',')) {
        const auto parts = split(item, ':');
        if (parts.size() != 2) throw ConfigError(path, "knots are written x:w, got '" + item + "'");
        knots.emplace_back(parse_double(path, parts[0]), parse_double(path, parts[1]));
    }
    return knots;
}

DrawdownSpec read_drawdown(Reader& rd, const std::string& section) {
    if (!rd.has_section(section)) throw ConfigError(section, "missing required section");
    const std::string kind_text = rd.required(section, "kind");
    const DrawdownKind kind = section_guard(section + ".kind", [&] { return drawdown_kind_from_string(kind_text); });
    DrawdownSpec w = section_guard(section, [&] {
        switch (kind) {
            case DrawdownKind::linear: return DrawdownSpec::linear(rd.req_double(section, "alpha"));
            case DrawdownKind::constant: return DrawdownSpec::constant(rd.req_double(section, "c"));
            case DrawdownKind::piecewise_linear:
                return DrawdownSpec::piecewise_linear(read_knots(section + ".knots", rd.required(section, "knots")),
                                                      rd.get_double(section, "tail_slope", 0.0));
            case DrawdownKind::tabulated:
                return DrawdownSpec::tabulated(read_knots(section + ".knots", rd.required(section, "knots")),
                                               rd.get_double(section, "tail_slope", 0.0));
            default: throw ConfigError(section + ".kind", "kind cannot be configured directly");
        }
    });
    const long long n = rd.get_int(section, "relax", 0);
    if (n < 0) throw ConfigError(section + ".relax", "relaxation order must be positive");
    if (n > 0) w = section_guard(section + ".relax", [&] { return w.relaxed(static_cast<int>(n)); });
    return w;
}

void read_utility(Reader& rd, ExperimentConfig& cfg) {
    if (!rd.has_section("utility")) throw ConfigError("utility", "missing required section");
    const std::string kind = rd.required("utility", "kind");
    if (kind == "power") {
        const double g = rd.req_double("utility", "gamma");
        cfg.utility = section_guard("utility.gamma", [&] { return UtilitySpec::power(g); });
        cfg.utility_exponent = g;
    } else if (kind == "log") {
        cfg.utility = UtilitySpec::log();
    } else if (kind == "exponential") {
        cfg.utility = UtilitySpec::exponential();
    } else {
        throw ConfigError("utility.kind", "expected power, log or exponential, got '" + kind + "'");
    }
}

double require_power(const ExperimentConfig& cfg) {
    if (!cfg.utility_exponent) throw ConfigError("utility.kind", "this experiment needs a power utility");
    return *cfg.utility_exponent;
}

void read_sim(Reader& rd, ExperimentConfig& cfg, bool horizons_required) {
    if (!rd.has_section("sim")) throw ConfigError("sim", "missing required section");
    SimConfig& s = cfg.sim;
    const long long n = rd.get_int("sim", "n_paths", static_cast<long long>(s.n_paths));
    if (n < 2) throw ConfigError("sim.n_paths", "must be at least 2");
    s.n_paths = static_cast<std::size_t>(n);
    s.dt = rd.get_double("sim", "dt", s.dt);
    if (horizons_required) {
        auto h = rd.opt_doubles("sim", "horizons");
        if (!h) throw ConfigError("sim.horizons", "missing required field");
        s.horizons = *h;
    }
    const long long seed = rd.get_int("sim", "seed", static_cast<long long>(s.seed));
    if (seed < 0) throw ConfigError("sim.seed", "must be nonnegative");
    s.seed = static_cast<std::uint64_t>(seed);
    const std::string scheme = rd.get_string("sim", "scheme", to_string(s.scheme));
    s.scheme = section_guard("sim.scheme", [&] { return scheme_from_string(scheme); });
    const long long workers = rd.get_int("sim", "workers", 0);
    if (workers < 0) throw ConfigError("sim.workers", "must be nonnegative");
    s.workers = static_cast<unsigned>(workers);
    s.antithetic = rd.get_bool("sim", "antithetic", s.antithetic);
    s.v0 = cfg.v0;
    section_guard("sim", [&] { s.validate(); return 0; });
}

FactorModelSpec read_factor(Reader& rd, const std::string& section) {
    if (!rd.has_section(section)) throw ConfigError(section, "missing required section");
    FactorModelSpec f;
    f.r = rd.req_double(section, "r");
    f.mu1 = rd.req_double(section, "mu1");
    f.mu2 = rd.req_double(section, "mu2");
    f.sigma = rd.req_double(section, "sigma");
    f.rho = rd.req_double(section, "rho");
    f.b = rd.req_double(section, "b");
    return f;
}

void read_main_drawdown(Reader& rd, ExperimentConfig& cfg) {
    cfg.v0 = rd.get_double("drawdown", "v0", 1.0);
    if (!(cfg.v0 > 0.0)) throw ConfigError("drawdown.v0", "must be positive");
    cfg.drawdown = read_drawdown(rd, "drawdown");
}

void read_verify_options(Reader& rd, ExperimentParams& p) {
    p.rel_tol = rd.get_double("experiment", "rel_tol", p.rel_tol);
    p.stderr_multiple = rd.get_double("experiment", "stderr_multiple", p.stderr_multiple);
    p.policy_scale = rd.get_double("experiment", "policy_scale", p.policy_scale);
}

}  // namespace

std::string to_string(ExperimentKind k) {
    for (const auto& [kind, name] : kind_names()) {
        if (kind == k) return name;
    }
    return "unknown";
}

ExperimentKind experiment_kind_from_string(const std::string& s) {
    for (const auto& [kind, name] : kind_names()) {
        if (name == s) return kind;
    }
    throw ConfigError("experiment.kind", "unknown experiment kind '" + s + "'");
}

const std::vector<ExperimentKind>& all_experiment_kinds() {
    static const std::vector<ExperimentKind> kinds = [] {
        std::vector<ExperimentKind> k;
        for (const auto& [kind, name] : kind_names()) k.push_back(kind);
        return k;
    }();
    return kinds;
}

pt::ptree load_config_tree(const std::string& path) {
    pt::ptree tree;
    std::ifstream in(path);
    if (!in) throw ConfigError(path, "cannot open config file");
    try {
        pt::read_ini(in, tree);
    } catch (const pt::ini_parser_error& e) {
        throw ConfigError(path + ":" + std::to_string(e.line()), e.message());
    }
    return tree;
}

void apply_overrides(pt::ptree& tree, const std::vector<std::string>& overrides) {
    for (const auto& o : overrides) {
        const auto eq = o.find('=');
        if (eq == std::string::npos) throw ConfigError(o, "override must look like section.key=value");
        const std::string path = trim(o.substr(0, eq));
        const auto dot = path.find('.');
        if (dot == std::string::npos || dot == 0 || dot + 1 == path.size() ||
            path.find('.', dot + 1) != std::string::npos) {
            throw ConfigError(path, "override path must be section.key");
        }
        const std::string section = path.substr(0, dot);
        const std::string key = path.substr(dot + 1);
        auto sec = tree.get_child_optional(pt::ptree::path_type(section, '\x1f'));
        if (!sec) sec = tree.put_child(pt::ptree::path_type(section, '\x1f'), pt::ptree{});
        sec->put(pt::ptree::path_type(key, '\x1f'), trim(o.substr(eq + 1)));
    }
}

ExperimentConfig parse_config(const pt::ptree& tree) {
    Reader rd(tree);
    ExperimentConfig cfg;
    cfg.resolved = tree;
    cfg.kind = experiment_kind_from_string(rd.required("experiment", "kind"));
    ExperimentParams& p = cfg.params;

    cfg.output.dir = rd.get_string("output", "dir", cfg.output.dir);
    cfg.output.name = rd.get_string("output", "name", to_string(cfg.kind));
    const std::string fmt = rd.get_string("output", "format", "both");
    if (fmt == "csv") cfg.output.format = OutputFormat::csv;
    else if (fmt == "json") cfg.output.format = OutputFormat::json;
    else if (fmt == "both") cfg.output.format = OutputFormat::both;
    else throw ConfigError("output.format", "expected csv, json or both, got '" + fmt + "'");

    switch (cfg.kind) {
        case ExperimentKind::transform:
            cfg.market = read_market(rd);
            read_main_drawdown(rd, cfg);
            read_sim(rd, cfg, true);
            p.policy_p = rd.opt_double("experiment", "policy_p");
            p.round_trip_tol = rd.get_double("experiment", "round_trip_tol", p.round_trip_tol);
            p.domination_tol = rd.get_double("experiment", "domination_tol", p.domination_tol);
            break;
        case ExperimentKind::tabulate_kw:
            read_main_drawdown(rd, cfg);
            p.x_min = rd.get_double("experiment", "x_min", p.x_min);
            p.x_max = rd.get_double("experiment", "x_max", p.x_max);
            if (!(p.x_min >= 1.0 && p.x_max > p.x_min)) {
                throw ConfigError("experiment.x_max", "need 1 <= x_min < x_max (units of v0)");
            }
            p.points = static_cast<int>(rd.get_int("experiment", "points", p.points));
            if (p.points < 2) throw ConfigError("experiment.points", "need at least 2 points");
            p.force_quadrature = rd.get_bool("experiment", "force_quadrature", p.force_quadrature);
            p.tabulate_tol = rd.get_double("experiment", "tol", p.tabulate_tol);
            p.also = rd.get_names("experiment", "also");
            for (const auto& s : p.also) {
                if (!rd.has_section(s)) {
                    throw ConfigError("experiment.also", "references missing section [" + s + "]");
                }
                cfg.extra_drawdowns.emplace_back(s, read_drawdown(rd, s));
            }
            break;
        case ExperimentKind::estimate_cer: {
            cfg.market = read_market(rd);
            read_utility(rd, cfg);
            read_sim(rd, cfg, true);
            p.policy_p = rd.opt_double("experiment", "policy_p");
            const std::string obj = rd.get_string("experiment", "objective", "cer");
            p.objective = section_guard("experiment.objective", [&] { return objective_from_string(obj); });
            p.expected = rd.opt_double("experiment", "expected");
            p.rel_tol = rd.get_double("experiment", "rel_tol", p.rel_tol);
            break;
        }
        case ExperimentKind::verify_main:
        case ExperimentKind::verify_dollars:
        case ExperimentKind::reproducibility:
            cfg.market = read_market(rd);
            read_main_drawdown(rd, cfg);
            read_utility(rd, cfg);
            require_power(cfg);
            read_sim(rd, cfg, true);
            read_verify_options(rd, p);
            if (cfg.kind == ExperimentKind::verify_dollars) {
                p.identity_grid = static_cast<int>(rd.get_int("experiment", "identity_grid", 0));
                if (p.identity_grid < 0) throw ConfigError("experiment.identity_grid", "must be nonnegative");
                p.identity_tol = rd.get_double("experiment", "identity_tol", p.identity_tol);
            }
            if (cfg.kind == ExperimentKind::reproducibility) {
                if (auto wl = rd.opt_doubles("experiment", "workers")) {
                    p.workers_list.clear();
                    for (double w : *wl) {
                        if (!(w >= 1.0) || w != std::floor(w)) {
                            throw ConfigError("experiment.workers", "worker counts must be positive integers");
                        }
                        p.workers_list.push_back(static_cast<unsigned>(w));
                    }
                }
                if (p.workers_list.size() < 2) {
                    throw ConfigError("experiment.workers", "need at least two worker counts to compare");
                }
            }
            break;
        case ExperimentKind::verify_log:
            cfg.market = read_market(rd);
            read_main_drawdown(rd, cfg);
            read_sim(rd, cfg, true);
            read_verify_options(rd, p);
            p.dollars = rd.get_bool("experiment", "dollars", false);
            break;
        case ExperimentKind::verify_convergence: {
            cfg.market = read_market(rd);
            read_main_drawdown(rd, cfg);
            read_utility(rd, cfg);
            require_power(cfg);
            read_sim(rd, cfg, true);
            auto& c = p.convergence;
            if (auto nl = rd.opt_doubles("experiment", "n_list")) {
                c.n_list.clear();
                for (double n : *nl) {
                    if (!(n >= 1.0) || n != std::floor(n)) {
                        throw ConfigError("experiment.n_list", "relaxation orders must be positive integers");
                    }
                    c.n_list.push_back(static_cast<int>(n));
                }
            }
            c.spot_n = static_cast<int>(rd.get_int("experiment", "spot_n", c.spot_n));
            c.spot_rel_tol = rd.get_double("experiment", "spot_rel_tol", c.spot_rel_tol);
            c.limit_rel_tol = rd.get_double("experiment", "limit_rel_tol", c.limit_rel_tol);
            if (auto v = rd.opt_doubles("experiment", "v0_values")) c.v0_values = *v;
            c.floor_mix = rd.get_double("experiment", "floor_mix", c.floor_mix);
            break;
        }
        case ExperimentKind::fleming_sheu: {
            cfg.factor = read_factor(rd, "factor");
            p.gamma = rd.req_double("experiment", "gamma");
            p.alpha = rd.opt_double("experiment", "alpha");
            const std::string variant = rd.get_string("experiment", "variant", "corrected");
            if (variant == "corrected") p.variant = KVariant::corrected;
            else if (variant == "printed") p.variant = KVariant::printed;
            else throw ConfigError("experiment.variant", "expected corrected or printed, got '" + variant + "'");
            p.fs_tol = rd.get_double("experiment", "tol", p.fs_tol);
            for (const char* key : {"E", "K", "D", "eta", "value"}) {
                if (auto v = rd.opt_double("experiment", std::string("expected_") + key)) p.fs_expected[key] = *v;
            }
            p.reject = rd.get_names("experiment", "reject");
            for (const auto& s : p.reject) {
                if (!rd.has_section(s)) {
                    throw ConfigError("experiment.reject", "references missing section [" + s + "]");
                }
                cfg.reject_factors.emplace_back(s, read_factor(rd, s));
            }
            break;
        }
        case ExperimentKind::deflator_check:
            cfg.market = read_market(rd);
            read_sim(rd, cfg, false);
            p.p = rd.req_double("experiment", "p");
            p.horizon = rd.get_double("experiment", "T", p.horizon);
            if (!(p.horizon > 0.0)) throw ConfigError("experiment.T", "must be positive");
            p.rel_tol = rd.get_double("experiment", "rel_tol", 0.05);
            break;
        case ExperimentKind::sde_convergence:
            cfg.market = read_market(rd);
            read_main_drawdown(rd, cfg);
            read_sim(rd, cfg, false);
            p.policy_p = rd.opt_double("experiment", "policy_p");
            p.horizon = rd.get_double("experiment", "T", p.horizon);
            if (auto d = rd.opt_doubles("experiment", "dt_list")) p.dt_list = *d;
            if (p.dt_list.size() < 2) throw ConfigError("experiment.dt_list", "need at least two step sizes");
            p.min_order = rd.get_double("experiment", "min_order", p.min_order);
            break;
        case ExperimentKind::lemma_suite:
            read_main_drawdown(rd, cfg);
            read_utility(rd, cfg);
            require_power(cfg);
            p.x0 = rd.get_double("experiment", "x0", p.x0);
            p.lemma_x_max = rd.get_double("experiment", "x_max", p.lemma_x_max);
            if (!(p.x0 >= cfg.v0 && p.lemma_x_max > p.x0)) {
                throw ConfigError("experiment.x0", "need v0 <= x0 < x_max");
            }
            p.eps = rd.get_double("experiment", "eps", p.eps);
            if (!(p.eps > 0.0 && p.eps < 1.0)) throw ConfigError("experiment.eps", "must lie in (0, 1)");
            p.lemma_tol = rd.get_double("experiment", "tol", p.lemma_tol);
            break;
    }
    rd.reject_leftovers(to_string(cfg.kind));
    return cfg;
}

ExperimentConfig load_config(const std::string& path, const std::vector<std::string>& overrides) {
    pt::ptree tree = load_config_tree(path);
    apply_overrides(tree, overrides);
    return parse_config(tree);
}

bool RunResult::pass() const { return report.pass(); }

namespace {

Check make_check(std::string name, double measure, double limit, bool pass, std::string note = {}) {
    Check c;
    c.name = std::move(name);
    c.measure = measure;
    c.limit = limit;
    c.pass = pass;
    c.note = std::move(note);
    return c;
}

Check relative(std::string name, double estimate, double target, double tol) {
    const double rel = std::abs(estimate - target) / std::abs(target);
    std::ostringstream note;
    note << std::setprecision(6) << "estimate " << estimate << " vs " << target;
    return make_check(std::move(name), rel, tol, rel <= tol, note.str());
}

void tables_from_estimates(RunResult& res) {
    for (const auto& ne : res.report.estimates) {
        Table t;
        t.name = ne.name;
        t.columns = {"T", "ordinate", "ci"};
        for (const auto& h : ne.estimate.per_horizon) t.rows.push_back({h.T, h.ordinate, h.ci});
        res.tables.push_back(std::move(t));
    }
}

Policy default_policy(const std::optional<double>& p) { return Policy::merton(p.value_or(0.0)); }

RunResult run_transform(const ExperimentConfig& cfg) {
    const auto& m = *cfg.market;
    const auto& w = *cfg.drawdown;
    const auto& p = cfg.params;
    const TransformPair pair = make_transform_pair(w, cfg.v0);
    const PathBatch batch = simulate_wealth(m, default_policy(p.policy_p), cfg.sim);

    double round_trip = 0.0;
    std::size_t max_mismatch = 0;
    double domination = std::numeric_limits<double>::infinity();
    std::size_t domination_violations = 0;
    std::size_t dd_ok = 0;
    double min_margin = std::numeric_limits<double>::infinity();
    for (const auto& v : batch.paths) {
        const SamplePath x = ay_transform(pair.F, v);
        const SamplePath back = ay_inverse(pair.K, x);
        for (std::size_t i = 0; i < v.size(); ++i) {
            round_trip = std::max(round_trip, std::abs(back.values()[i] - v.values()[i]) / v.values()[i]);
            if (x.runmax()[i] != pair.F(v.runmax()[i])) ++max_mismatch;
            const double fv = pair.F(v.values()[i]);
            const double gap = (x.values()[i] - fv) / std::abs(fv);
            domination = std::min(domination, gap);
            if (gap < -p.domination_tol) ++domination_violations;
        }
        const DrawdownReport dd = check_drawdown(x, w);
        min_margin = std::min(min_margin, dd.min_margin);
        if (dd.satisfied && dd.min_margin >= 0.0) ++dd_ok;
    }

    RunResult res;
    auto& rep = res.report;
    rep.kind = to_string(cfg.kind);
    rep.paths = batch.paths.size();
    rep.paths_satisfying_drawdown = dd_ok;
    rep.min_margin = min_margin;
    rep.checks.push_back(make_check("round trip K-transform of F-transform", round_trip, p.round_trip_tol,
                                    round_trip <= p.round_trip_tol, "max relative error over all grid points"));
    rep.checks.push_back(make_check("runmax(M^F(V)) = F(runmax(V)) exactly", static_cast<double>(max_mismatch), 0.0,
                                    max_mismatch == 0, "grid points that differ"));
    rep.checks.push_back(make_check("M^F(V) >= F(V) pointwise", static_cast<double>(domination_violations), 0.0,
                                    domination_violations == 0, "smallest relative gap " + std::to_string(domination)));
    rep.checks.push_back(make_check("drawdown holds on every transformed path",
                                    static_cast<double>(rep.paths - dd_ok), 0.0, dd_ok == rep.paths,
                                    "min margin " + std::to_string(min_margin)));
    if (batch.exploded > 0) {
        rep.checks.push_back(make_check("no simulated path lost", static_cast<double>(batch.exploded), 0.0, false));
    }
    res.metrics = {{"max_round_trip_error", round_trip},
                   {"runmax_mismatches", static_cast<double>(max_mismatch)},
                   {"min_domination_gap", domination},
                   {"min_margin", min_margin}};

    if (!batch.paths.empty()) {
        const SamplePath& v = batch.paths.front();
        const SamplePath x = ay_transform(pair.F, v);
        Table t;
        t.name = "path0";
        t.columns = {"t", "V", "Vbar", "X", "Xbar", "F_of_V", "floor"};
        for (std::size_t i = 0; i < v.size(); ++i) {
            t.rows.push_back({v.times()[i], v.values()[i], v.runmax()[i], x.values()[i], x.runmax()[i],
                              pair.F(v.values()[i]), w(x.runmax()[i])});
        }
        res.tables.push_back(std::move(t));
    }
    return res;
}

bool has_closed_form(const DrawdownSpec& w) {
    return w.kind() == DrawdownKind::linear || w.kind() == DrawdownKind::constant;
}

RunResult run_tabulate_kw(const ExperimentConfig& cfg) {
    const auto& p = cfg.params;
    std::vector<std::pair<std::string, DrawdownSpec>> all{{"drawdown", *cfg.drawdown}};
    all.insert(all.end(), cfg.extra_drawdowns.begin(), cfg.extra_drawdowns.end());
    const auto xs = numerics::log_grid(p.x_min * cfg.v0, p.x_max * cfg.v0, static_cast<std::size_t>(p.points));

    RunResult res;
    res.report.kind = to_string(cfg.kind);
    for (const auto& [name, w] : all) {
        KwOptions opts;
        opts.force_quadrature = p.force_quadrature;
        const MonotoneMap K = build_kw(w, cfg.v0, opts);
        const bool closed = has_closed_form(w);
        const MonotoneMap Kc = closed ? build_kw(w, cfg.v0) : MonotoneMap{};
        Table t;
        t.name = name;
        t.columns = {"v", "K", "K_closed", "rel_err"};
        double worst = 0.0;
        bool monotone = true;
        double prev = -std::numeric_limits<double>::infinity();
        for (double x : xs) {
            const double k = K(x);
            const double kc = closed ? Kc(x) : std::numeric_limits<double>::quiet_NaN();
            const double err = closed ? std::abs(k - kc) / std::abs(kc) : std::numeric_limits<double>::quiet_NaN();
            if (closed) worst = std::max(worst, err);
            if (!(k > prev) || k < x * (1.0 - 1e-12)) monotone = false;
            prev = k;
            t.rows.push_back({x, k, kc, err});
        }
        const std::string label = name + " (" + to_string(w.kind()) + ")";
        if (closed) {
            res.report.checks.push_back(make_check("K by quadrature matches closed form for " + label, worst,
                                                   p.tabulate_tol, worst <= p.tabulate_tol,
                                                   "max relative error on " + std::to_string(xs.size()) +
                                                       " log-spaced points"));
            res.metrics.emplace_back("max_rel_err_" + name, worst);
        }
        res.report.checks.push_back(make_check("K increasing with K(x) >= x for " + label, monotone ? 0.0 : 1.0, 0.0,
                                               monotone));
        res.tables.push_back(std::move(t));
    }
    return res;
}

RunResult run_estimate_cer(const ExperimentConfig& cfg) {
    const auto& m = *cfg.market;
    const auto& p = cfg.params;
    const UtilitySpec& U = *cfg.utility;
    const double policy_p = p.policy_p.value_or(cfg.utility_exponent.value_or(0.0));
    const HorizonSamples s = simulate_horizons(m, Policy::merton(policy_p), cfg.sim);
    const CerEstimate est = estimate_growth(s.horizons, s.v, s.valid, U, p.objective, &m);

    RunResult res;
    auto& rep = res.report;
    rep.kind = to_string(cfg.kind);
    rep.paths = s.valid_count();
    rep.estimates.push_back({"estimate", est});

    std::optional<double> target = p.expected;
    const bool optimal = !p.policy_p || (cfg.utility_exponent && *p.policy_p == *cfg.utility_exponent);
    if (!target && optimal) {
        const double r = p.objective == Objective::cer ? 0.0 : m.r_star();
        if (cfg.utility_exponent && p.objective != Objective::tilde_cer) {
            target = cer_power_unconstrained(r, m.theta_sq_star(), *cfg.utility_exponent);
        } else if (U.kind() == UtilityKind::log && p.objective == Objective::tilde_cer) {
            target = log_growth_optimal(r, m.theta_sq_star());
        }
    }
    if (target) {
        rep.closed_form.push_back({"closed_form", *target});
        rep.checks.push_back(relative(to_string(p.objective) + " slope near closed form", est.slope, *target, p.rel_tol));
    } else {
        rep.checks.push_back(make_check("finite slope", est.slope, 0.0, std::isfinite(est.slope),
                                        "no closed form for this utility and policy"));
    }
    if (rep.paths < cfg.sim.n_paths) {
        rep.checks.push_back(make_check("no simulated path lost", static_cast<double>(cfg.sim.n_paths - rep.paths), 0.0,
                                        false));
    }
    tables_from_estimates(res);
    return res;
}

VerifyOptions verify_options(const ExperimentParams& p) {
    VerifyOptions o;
    o.rel_tol = p.rel_tol;
    o.stderr_multiple = p.stderr_multiple;
    o.policy_scale = p.policy_scale;
    return o;
}

double identity_grid_gap(double r, double theta_sq, int side, std::vector<std::vector<double>>& rows) {
    double worst = 0.0;
    for (int i = 0; i < side; ++i) {
        // gamma from -3 to 0.9, nudged off zero
        double gamma = -3.0 + 3.9 * (side > 1 ? static_cast<double>(i) / (side - 1) : 0.0);
        if (std::abs(gamma) < 1e-6) gamma = 1e-3;
        for (int j = 0; j < side; ++j) {
            const double alpha = 0.9 * (side > 1 ? static_cast<double>(j) / (side - 1) : 0.0);
            const double lhs = cer_drawdown_constrained(r, theta_sq, gamma, alpha);
            const double rhs = cer_power_unconstrained(r, theta_sq, gamma * (1.0 - alpha)) +
                               std::abs(gamma) * alpha * r;
            const double gap = std::abs(lhs - rhs);
            worst = std::max(worst, gap);
            rows.push_back({gamma, alpha, lhs, rhs, gap});
        }
    }
    return worst;
}

RunResult run_verify(const ExperimentConfig& cfg) {
    const auto& m = *cfg.market;
    const double gamma = *cfg.utility_exponent;
    RunResult res;
    if (cfg.kind == ExperimentKind::verify_main) {
        res.report = verify_equivalence_main(m, gamma, *cfg.drawdown, cfg.sim, verify_options(cfg.params));
    } else {
        res.report = verify_equivalence_dollars(m, gamma, *cfg.drawdown, cfg.sim, verify_options(cfg.params));
        if (cfg.params.identity_grid > 0) {
            Table t;
            t.name = "offset_identity";
            t.columns = {"gamma", "alpha", "cer_drawdown", "cer_unconstrained_plus_offset", "abs_gap"};
            const double worst = identity_grid_gap(m.r_star(), m.theta_sq_star(), cfg.params.identity_grid, t.rows);
            const auto n = t.rows.size();
            res.report.checks.push_back(make_check("offset identity on the (gamma, alpha) grid", worst,
                                                   cfg.params.identity_tol, worst <= cfg.params.identity_tol,
                                                   std::to_string(n) + " grid points, gamma in [-3, 0.9]"));
            res.metrics.emplace_back("identity_grid_max_gap", worst);
            res.tables.push_back(std::move(t));
        }
    }
    tables_from_estimates(res);
    return res;
}

RunResult run_verify_log(const ExperimentConfig& cfg) {
    RunResult res;
    res.report = verify_log_theorem(*cfg.market, *cfg.drawdown, cfg.sim, cfg.params.dollars, verify_options(cfg.params));
    tables_from_estimates(res);
    return res;
}

RunResult run_verify_convergence(const ExperimentConfig& cfg) {
    RunResult res;
    res.report = verify_convergence_lemma(*cfg.market, *cfg.utility_exponent, *cfg.drawdown, cfg.sim,
                                          cfg.params.convergence);
    Table t;
    t.name = "closed_forms";
    t.columns = {"n", "cer"};
    for (const auto& [k, v] : res.report.closed_form) {
        if (k.rfind("n=", 0) == 0) t.rows.push_back({std::stod(k.substr(2)), v});
    }
    res.tables.push_back(std::move(t));
    tables_from_estimates(res);
    return res;
}

RunResult run_fleming_sheu(const ExperimentConfig& cfg) {
    const auto& p = cfg.params;
    const FactorValue v = p.alpha ? fleming_sheu_constrained_value(*cfg.factor, p.gamma, *p.alpha, p.variant, p.fs_tol)
                                  : fleming_sheu_value(*cfg.factor, p.gamma, p.variant, p.fs_tol);
    RunResult res;
    auto& rep = res.report;
    rep.kind = to_string(cfg.kind);
    const std::map<std::string, double> got{{"E", v.E}, {"K", v.K}, {"D", v.D}, {"eta", v.eta}, {"value", v.value}};
    for (const auto& [k, x] : got) {
        rep.closed_form.push_back({k, x});
        res.metrics.emplace_back(k, x);
    }
    for (const auto& [k, expected] : p.fs_expected) {
        const double err = std::abs(got.at(k) - expected);
        std::ostringstream note;
        note << std::setprecision(17) << got.at(k) << " vs " << expected;
        rep.checks.push_back(make_check(k + " matches", err, p.fs_tol, err <= p.fs_tol, note.str()));
    }
    for (const auto& [name, f] : cfg.reject_factors) {
        bool rejected = false;
        std::string why = "accepted";
        try {
            (void)fleming_sheu_value(f, p.gamma, p.variant, p.fs_tol);
        } catch (const DomainError& e) {
            rejected = true;
            why = e.what();
        }
        rep.checks.push_back(make_check("[" + name + "] rejected", rejected ? 0.0 : 1.0, 0.0, rejected, why));
    }
    if (rep.checks.empty()) {
        rep.checks.push_back(make_check("finite value", v.value, 0.0, std::isfinite(v.value)));
    }
    return res;
}

RunResult run_deflator(const ExperimentConfig& cfg) {
    const auto& m = *cfg.market;
    const auto& p = cfg.params;
    const double T = p.horizon;
    const double theta_sq = m.theta_sq_average(T);
    const double r = m.r_average(T);
    const double q = -p.p / (1.0 - p.p);

    std::vector<double> log_z(cfg.sim.n_paths);
    for (std::size_t i = 0; i < log_z.size(); ++i) {
        std::mt19937_64 gen(stream_seed(cfg.sim.seed, i));
        std::normal_distribution<double> n01;
        log_z[i] = -std::sqrt(theta_sq * T) * n01(gen) - (0.5 * theta_sq + r) * T;
    }
    const double empirical = empirical_deflator_moment_rate(log_z, T, q);
    const double exact = lognormal_deflator_moment_rate(theta_sq, r, q);
    const DeflatorBound bound = deflator_finiteness_check(exact, p.p);
    const double cer = cer_power_unconstrained(m.r_star(), m.theta_sq_star(), p.p);

    RunResult res;
    auto& rep = res.report;
    rep.kind = to_string(cfg.kind);
    rep.paths = log_z.size();
    rep.closed_form = {{"q", q}, {"moment_rate", exact}, {"bound", bound.bound}, {"cer_upper", bound.cer_upper},
                       {"merton_cer", cer}};
    res.metrics = {{"empirical_moment_rate", empirical}};
    rep.checks.push_back(relative("sampled moment rate near lognormal rate", empirical, exact, p.rel_tol));
    rep.checks.push_back(make_check("bound is finite", bound.finite ? 0.0 : 1.0, 0.0, bound.finite));
    const double gap = std::abs(bound.cer_upper - cer);
    rep.checks.push_back(make_check("CER bound attained by Merton CER", gap, 1e-12 * std::max(1.0, std::abs(cer)),
                                    gap <= 1e-12 * std::max(1.0, std::abs(cer))));
    return res;
}

RunResult run_sde_convergence(const ExperimentConfig& cfg) {
    const auto& m = *cfg.market;
    const auto& w = *cfg.drawdown;
    const auto& p = cfg.params;
    std::vector<double> dts = p.dt_list;
    std::sort(dts.begin(), dts.end());
    const double fine = dts.front();
    std::vector<std::size_t> strides;
    for (double dt : dts) {
        const double k = dt / fine;
        if (std::abs(k - std::round(k)) > 1e-9 * k) {
            throw ConfigError("experiment.dt_list", "every step must be a multiple of the finest one");
        }
        strides.push_back(static_cast<std::size_t>(std::llround(k)));
    }
    SimConfig sim = cfg.sim;
    sim.dt = fine;
    sim.horizons = {p.horizon};
    sim.validate();
    const TransformPair pair = make_transform_pair(w, cfg.v0);
    const PathBatch batch = simulate_wealth(m, default_policy(p.policy_p), sim);

    std::vector<double> sum_err(dts.size(), 0.0);
    std::size_t used = 0, breached = 0;
    for (const auto& v : batch.paths) {
        const SamplePath ref = ay_transform(pair.F, v);
        std::vector<double> errs(dts.size(), 0.0);
        bool ok = true;
        for (std::size_t d = 0; d < dts.size() && ok; ++d) {
            std::vector<double> t, val;
            for (std::size_t i = 0; i < v.size(); i += strides[d]) {
                t.push_back(v.times()[i]);
                val.push_back(v.values()[i]);
            }
            try {
                const SamplePath xe = sde_integrate(SamplePath(t, val), w);
                for (std::size_t k = 0; k < xe.size(); ++k) {
                    errs[d] = std::max(errs[d], std::abs(xe.values()[k] - ref.values()[k * strides[d]]));
                }
            } catch (const DomainError&) {
                ok = false;
            }
        }
        if (!ok) {
            ++breached;
            continue;
        }
        ++used;
        for (std::size_t d = 0; d < dts.size(); ++d) sum_err[d] += errs[d];
    }
    if (used < 2) throw ConvergenceError("sde-convergence: fewer than two usable paths");

    RunResult res;
    auto& rep = res.report;
    rep.kind = to_string(cfg.kind);
    rep.paths = used;
    Table t;
    t.name = "errors";
    t.columns = {"dt", "mean_sup_error"};
    std::vector<double> lx, ly;
    for (std::size_t d = 0; d < dts.size(); ++d) {
        const double e = sum_err[d] / static_cast<double>(used);
        t.rows.push_back({dts[d], e});
        lx.push_back(std::log(dts[d]));
        ly.push_back(std::log(e));
    }
    const auto fit = numerics::weighted_linear_fit(lx, ly);
    res.tables.push_back(std::move(t));
    res.metrics = {{"order", fit.slope}, {"paths_breaching_floor", static_cast<double>(breached)}};
    rep.checks.push_back(make_check("empirical sup-norm order in dt", fit.slope, p.min_order, fit.slope >= p.min_order,
                                    std::to_string(used) + " paths, " + std::to_string(breached) + " dropped"));
    return res;
}

// Pointwise elasticity of U o F against that of U at F(x).
Check composition_bound(const UtilitySpec& U, const UtilitySpec& UF, const MonotoneMap& F,
                        const std::vector<double>& xs, double tol) {
    double worst = -std::numeric_limits<double>::infinity();
    std::size_t bad = 0;
    for (double x : xs) {
        const double lhs = elasticity(UF, x);
        const double rhs = elasticity(U, F(x));
        worst = std::max(worst, lhs - rhs);
        if (lhs > rhs * (1.0 + tol) + tol) ++bad;
    }
    return make_check("elasticity of U o F bounded by that of U", static_cast<double>(bad), 0.0, bad == 0,
                      "largest excess " + std::to_string(worst));
}

Check sandwich_check(const std::string& label, const UtilitySpec& U, double gamma, double eps, double x0,
                     double x_max, double tol, std::vector<std::vector<double>>& rows) {
    const SandwichBounds b = power_sandwich(U, gamma, eps, x0, x_max);
    const double gm = gamma * (1.0 - eps), gp = gamma * (1.0 + eps);
    std::size_t bad = 0;
    for (double x : numerics::log_grid(x0, x_max, 1024)) {
        const double u = U(x);
        const double lo = b.c_minus * std::pow(x, gm) / gm;
        const double hi = b.c_plus * std::pow(x, gp) / gp;
        const double slack = tol * std::abs(u);
        if (u < std::min(lo, hi) - slack || u > std::max(lo, hi) + slack) ++bad;
        rows.push_back({x, lo, u, hi});
    }
    std::ostringstream note;
    note << std::setprecision(6) << "c- " << b.c_minus << ", c+ " << b.c_plus << ", y0 " << b.y0;
    return make_check("power sandwich holds for " + label, static_cast<double>(bad), 0.0, bad == 0, note.str());
}

RunResult run_lemma_suite(const ExperimentConfig& cfg) {
    const auto& p = cfg.params;
    const double gamma = *cfg.utility_exponent;
    const TransformPair pair = make_transform_pair(*cfg.drawdown, cfg.v0);
    ScalingGrids grids = ScalingGrids::defaults(p.x0);
    grids.xs = numerics::log_grid(p.x0, p.lemma_x_max, grids.xs.size());

    const UtilitySpec power = UtilitySpec::power(gamma);
    const UtilitySpec composed = compose(power, pair);
    const UtilitySpec log_dollar = compose(UtilitySpec::log(), pair);

    RunResult res;
    auto& rep = res.report;
    rep.kind = to_string(cfg.kind);
    for (const auto* u : {&power, &composed, &log_dollar}) {
        const ElasticityReport e = verify_scaling_lemma(*u, p.x0, grids, p.lemma_tol);
        rep.checks.push_back(make_check("scaling inequality for " + u->name(), static_cast<double>(e.violations), 0.0,
                                        e.violations == 0 && e.asymptotic_elasticity_ok,
                                        "gamma " + std::to_string(e.gamma) + (e.note.empty() ? "" : ", " + e.note)));
        res.metrics.emplace_back("scaling_max_violation_" + u->name(), e.grid_max_violation);
    }
    rep.checks.push_back(composition_bound(power, composed, pair.F, grids.xs, p.lemma_tol));

    Table t;
    t.name = "sandwich";
    t.columns = {"x", "lower", "U", "upper"};
    const double g_inf = gamma * (1.0 - asymptotic_ratio(*cfg.drawdown));
    rep.checks.push_back(sandwich_check(composed.name(), composed, g_inf, p.eps, p.x0, p.lemma_x_max, p.lemma_tol, t.rows));
    const UtilitySpec probe = UtilitySpec::sandwich_probe();
    std::vector<std::vector<double>> probe_rows;
    rep.checks.push_back(sandwich_check(probe.name(), probe, 0.5, p.eps, std::max(1.0, p.x0), p.lemma_x_max,
                                        p.lemma_tol, probe_rows));
    res.tables.push_back(std::move(t));
    Table tp;
    tp.name = "sandwich_probe";
    tp.columns = {"x", "lower", "U", "upper"};
    tp.rows = std::move(probe_rows);
    res.tables.push_back(std::move(tp));
    return res;
}

bool same_bits(double a, double b) { return std::memcmp(&a, &b, sizeof(double)) == 0; }

RunResult run_reproducibility(const ExperimentConfig& cfg) {
    const auto& p = cfg.params;
    std::vector<VerificationReport> runs;
    for (unsigned workers : p.workers_list) {
        SimConfig sim = cfg.sim;
        sim.workers = workers;
        runs.push_back(verify_equivalence_main(*cfg.market, *cfg.utility_exponent, *cfg.drawdown, sim,
                                               verify_options(p)));
    }
    RunResult res;
    auto& rep = res.report;
    rep.kind = to_string(cfg.kind);
    rep.closed_form = runs.front().closed_form;
    rep.estimates = runs.front().estimates;
    rep.paths = runs.front().paths;
    rep.paths_satisfying_drawdown = runs.front().paths_satisfying_drawdown;
    rep.min_margin = runs.front().min_margin;
    for (std::size_t k = 1; k < runs.size(); ++k) {
        std::size_t differing = 0, compared = 0;
        for (std::size_t e = 0; e < runs[0].estimates.size(); ++e) {
            const auto& a = runs[0].estimates[e].estimate.per_horizon;
            const auto& b = runs[k].estimates.at(e).estimate.per_horizon;
            for (std::size_t h = 0; h < a.size(); ++h) {
                ++compared;
                if (h >= b.size() || !same_bits(a[h].ordinate, b[h].ordinate) || !same_bits(a[h].stderr, b[h].stderr)) {
                    ++differing;
                }
            }
        }
        rep.checks.push_back(make_check("ordinates bit-identical, workers " + std::to_string(p.workers_list[0]) +
                                            " vs " + std::to_string(p.workers_list[k]),
                                        static_cast<double>(differing), 0.0, differing == 0,
                                        std::to_string(compared) + " per-horizon values compared"));
    }
    tables_from_estimates(res);
    return res;
}

nlohmann::json tree_to_json(const pt::ptree& tree) {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [section, child] : tree) {
        if (child.empty()) {
            j[section] = child.data();
            continue;
        }
        nlohmann::json s = nlohmann::json::object();
        for (const auto& [key, value] : child) s[key] = value.data();
        j[section] = s;
    }
    return j;
}

nlohmann::json number(double x) {
    if (std::isfinite(x)) return x;
    return nullptr;
}

}  // namespace

RunResult run_experiment(const ExperimentConfig& cfg) {
    const auto start = std::chrono::steady_clock::now();
    RunResult res;
    switch (cfg.kind) {
        case ExperimentKind::transform: res = run_transform(cfg); break;
        case ExperimentKind::tabulate_kw: res = run_tabulate_kw(cfg); break;
        case ExperimentKind::estimate_cer: res = run_estimate_cer(cfg); break;
        case ExperimentKind::verify_main:
        case ExperimentKind::verify_dollars: res = run_verify(cfg); break;
        case ExperimentKind::verify_log: res = run_verify_log(cfg); break;
        case ExperimentKind::verify_convergence: res = run_verify_convergence(cfg); break;
        case ExperimentKind::fleming_sheu: res = run_fleming_sheu(cfg); break;
        case ExperimentKind::deflator_check: res = run_deflator(cfg); break;
        case ExperimentKind::sde_convergence: res = run_sde_convergence(cfg); break;
        case ExperimentKind::lemma_suite: res = run_lemma_suite(cfg); break;
        case ExperimentKind::reproducibility: res = run_reproducibility(cfg); break;
    }
    res.kind = cfg.kind;
    res.report.kind = to_string(cfg.kind);
    res.runtime_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return res;
}

nlohmann::json to_json(const ExperimentConfig& cfg, const RunResult& result) {
    nlohmann::json j;
    const auto& rep = result.report;
    j["kind"] = to_string(cfg.kind);
    j["seed"] = cfg.sim.seed;
    j["config"] = tree_to_json(cfg.resolved);
    nlohmann::json closed = nlohmann::json::object();
    for (const auto& [k, v] : rep.closed_form) closed[k] = number(v);
    j["closed_form"] = closed;
    nlohmann::json ests = nlohmann::json::object();
    for (const auto& ne : rep.estimates) {
        const auto& e = ne.estimate;
        nlohmann::json h = nlohmann::json::array();
        for (const auto& p : e.per_horizon) {
            h.push_back({{"T", p.T}, {"ordinate", number(p.ordinate)}, {"stderr", number(p.stderr)}, {"ci", number(p.ci)}});
        }
        ests[ne.name] = {{"objective", to_string(e.objective)},
                         {"slope", number(e.slope)},
                         {"intercept", number(e.intercept)},
                         {"stderr", number(e.stderr)},
                         {"ci", number(1.96 * e.stderr)},
                         {"fit_from", e.fit_from},
                         {"n_used", e.n_used},
                         {"per_horizon", h}};
    }
    j["estimates"] = ests;
    nlohmann::json checks = nlohmann::json::array();
    for (const auto& c : rep.checks) {
        checks.push_back({{"name", c.name}, {"measure", number(c.measure)}, {"limit", number(c.limit)},
                          {"pass", c.pass}, {"note", c.note}});
    }
    j["checks"] = checks;
    nlohmann::json metrics = nlohmann::json::object();
    for (const auto& [k, v] : result.metrics) metrics[k] = number(v);
    j["metrics"] = metrics;
    j["paths"] = rep.paths;
    j["paths_satisfying_drawdown"] = rep.paths_satisfying_drawdown;
    j["min_margin"] = number(rep.min_margin);
    j["pass"] = result.pass();
    j["runtime_s"] = result.runtime_seconds;
    return j;
}

std::vector<std::string> write_artifacts(const ExperimentConfig& cfg, const RunResult& result) {
    namespace fs = std::filesystem;
    const fs::path dir(cfg.output.dir);
    fs::create_directories(dir);
    std::vector<std::string> written;
    const nlohmann::json summary = to_json(cfg, result);
    auto open = [&](const fs::path& path) {
        std::ofstream os(path);
        if (!os) throw std::runtime_error("cannot write " + path.string());
        written.push_back(path.string());
        return os;
    };
    if (cfg.output.format != OutputFormat::csv) {
        auto os = open(dir / (cfg.output.name + ".json"));
        os << summary.dump(2) << '\n';
    }
    if (cfg.output.format != OutputFormat::json) {
        for (const auto& t : result.tables) {
            std::string stem = t.name;
            std::replace_if(stem.begin(), stem.end(), [](char c) { return !std::isalnum(static_cast<unsigned char>(c)); }, '_');
            auto os = open(dir / (cfg.output.name + "_" + stem + ".csv"));
            os << "# kind=" << to_string(cfg.kind) << " seed=" << cfg.sim.seed << '\n';
            os << "# config=" << summary["config"].dump() << '\n';
            for (std::size_t i = 0; i < t.columns.size(); ++i) os << (i ? "," : "") << t.columns[i];
            os << '\n' << std::setprecision(17);
            for (const auto& row : t.rows) {
                for (std::size_t i = 0; i < row.size(); ++i) os << (i ? "," : "") << row[i];
                os << '\n';
            }
        }
    }
    auto os = open(dir / (cfg.output.name + ".verdict"));
    for (const auto& c : result.report.checks) {
        os << (c.pass ? "PASS " : "FAIL ") << c.name << " (" << c.measure << " vs " << c.limit << ")\n";
    }
    os << (result.pass() ? "PASS" : "FAIL") << '\n';
    return written;
}

int run_config_file(const std::string& path, const std::vector<std::string>& overrides, std::ostream& out,
                    std::ostream& err) {
    try {
        const ExperimentConfig cfg = load_config(path, overrides);
        const RunResult res = run_experiment(cfg);
        write_artifacts(cfg, res);
        for (const auto& c : res.report.checks) {
            out << (c.pass ? "[pass] " : "[FAIL] ") << c.name << ": " << c.measure << " (limit " << c.limit << ")";
            if (!c.note.empty()) out << "  " << c.note;
            out << '\n';
        }
        for (const auto& ne : res.report.estimates) {
            out << "  " << ne.name << ": slope " << ne.estimate.slope << " +- " << 1.96 * ne.estimate.stderr << '\n';
        }
        out << to_string(cfg.kind) << ": " << (res.pass() ? "pass" : "fail") << " in " << std::fixed
            << std::setprecision(2) << res.runtime_seconds << " s" << std::defaultfloat << '\n';
        return res.pass() ? exit_ok : exit_check_failed;
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return exit_config_error;
    } catch (const DomainError& e) {
        err << "numerical error: " << e.what() << '\n';
        return exit_numerical_error;
    } catch (const ConvergenceError& e) {
        err << "numerical error: " << e.what() << '\n';
        return exit_numerical_error;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return exit_numerical_error;
    }
}

bool ReportDiff::pass() const {
    return std::all_of(entries.begin(), entries.end(), [](const DiffEntry& d) { return d.pass; });
}

namespace {

bool nonsemantic(const std::string& field) {
    return field == "sim.seed" || field == "sim.workers" || field.rfind("output.", 0) == 0;
}

double as_double(const nlohmann::json& v) {
    return v.is_number() ? v.get<double>() : std::numeric_limits<double>::quiet_NaN();
}

bool same_value(const nlohmann::json& a, const nlohmann::json& b) {
    if (a.is_number() && b.is_number()) return same_bits(a.get<double>(), b.get<double>());
    return a == b;
}

}  // namespace

ReportDiff compare_reports(const nlohmann::json& a, const nlohmann::json& b, double stderr_multiple) {
    if (a.value("kind", "") != b.value("kind", "")) {
        throw ConfigError("kind", "cannot compare " + a.value("kind", "?") + " with " + b.value("kind", "?"));
    }
    ReportDiff diff;
    const nlohmann::json ca = a.value("config", nlohmann::json::object()).flatten();
    const nlohmann::json cb = b.value("config", nlohmann::json::object()).flatten();
    bool semantic_change = false, any_change = false;
    std::set<std::string> keys;
    for (const auto& [k, v] : ca.items()) keys.insert(k);
    for (const auto& [k, v] : cb.items()) keys.insert(k);
    for (const auto& k : keys) {
        const auto va = ca.contains(k) ? ca[k] : nlohmann::json();
        const auto vb = cb.contains(k) ? cb[k] : nlohmann::json();
        if (va == vb) continue;
        std::string field = k.substr(1);
        std::replace(field.begin(), field.end(), '/', '.');
        any_change = true;
        if (!nonsemantic(field)) semantic_change = true;
        DiffEntry d;
        d.field = field;
        d.level = "config";
        d.note = va.dump() + " -> " + vb.dump();
        diff.entries.push_back(d);
    }

    const auto& cfa = a.value("closed_form", nlohmann::json::object());
    const auto& cfb = b.value("closed_form", nlohmann::json::object());
    for (const auto& [k, v] : cfa.items()) {
        const auto vb = cfb.contains(k) ? cfb[k] : nlohmann::json();
        if (same_value(v, vb)) continue;
        DiffEntry d;
        d.field = "closed_form." + k;
        d.level = semantic_change ? "config" : "closed_form";
        d.a = as_double(v);
        d.b = as_double(vb);
        d.pass = semantic_change;
        d.note = semantic_change ? "follows a config change" : "closed form changed without a config change";
        diff.entries.push_back(d);
    }

    const auto& ea = a.value("estimates", nlohmann::json::object());
    const auto& eb = b.value("estimates", nlohmann::json::object());
    for (const auto& [k, v] : ea.items()) {
        DiffEntry d;
        d.field = "estimates." + k + ".slope";
        d.level = "estimate";
        if (!eb.contains(k)) {
            d.pass = false;
            d.note = "missing in second report";
            diff.entries.push_back(d);
            continue;
        }
        d.a = as_double(v["slope"]);
        d.b = as_double(eb[k]["slope"]);
        const bool identical = same_value(v["slope"], eb[k]["slope"]) && v["per_horizon"] == eb[k]["per_horizon"];
        if (identical) continue;
        const double sa = as_double(v["stderr"]), sb = as_double(eb[k]["stderr"]);
        d.tolerance = stderr_multiple * std::sqrt(sa * sa + sb * sb);
        const bool within = std::abs(d.a - d.b) <= d.tolerance;
        d.pass = within || semantic_change;
        d.note = within ? "within " + std::to_string(stderr_multiple) + " combined stderr"
                        : (semantic_change ? "config differs" : "outside combined stderr");
        diff.entries.push_back(d);
    }

    const auto& ka = a.value("checks", nlohmann::json::array());
    const auto& kb = b.value("checks", nlohmann::json::array());
    for (std::size_t i = 0; i < ka.size(); ++i) {
        const bool pa = ka[i].value("pass", false);
        const bool pb = i < kb.size() ? kb[i].value("pass", false) : false;
        if (pa == pb) continue;
        DiffEntry d;
        d.field = "checks." + ka[i].value("name", std::to_string(i));
        d.level = "check";
        d.a = pa;
        d.b = pb;
        d.pass = any_change;
        d.note = any_change ? "verdict flipped between different configs" : "verdict flipped with identical config";
        diff.entries.push_back(d);
    }

    const auto& ma = a.value("metrics", nlohmann::json::object());
    const auto& mb = b.value("metrics", nlohmann::json::object());
    for (const auto& [k, v] : ma.items()) {
        const auto vb = mb.contains(k) ? mb[k] : nlohmann::json();
        if (same_value(v, vb)) continue;
        DiffEntry d;
        d.field = "metrics." + k;
        d.level = "metric";
        d.a = as_double(v);
        d.b = as_double(vb);
        d.pass = any_change;
        diff.entries.push_back(d);
    }
    return diff;
}

}  // namespace ddlab
