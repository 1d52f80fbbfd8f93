#include "ddlab/montecarlo.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <random>
#include <sstream>
#include <thread>

#include "ddlab/errors.hpp"
#include "ddlab/numerics.hpp"

namespace ddlab {

std::string to_string(Scheme s) { return s == Scheme::euler ? "euler" : "exact-lognormal"; }

Scheme scheme_from_string(const std::string& s) {
    if (s == "euler") return Scheme::euler;
    if (s == "exact-lognormal" || s == "exact") return Scheme::exact_lognormal;
    throw DomainError("unknown scheme '" + s + "'");
}

std::string to_string(Objective o) {
    switch (o) {
        case Objective::cer: return "CER";
        case Objective::dollar_cer: return "¢ER";
        case Objective::tilde_cer: return "tildeCER";
    }
    return "unknown";
}

Objective objective_from_string(const std::string& s) {
    if (s == "cer" || s == "CER") return Objective::cer;
    if (s == "dollar-cer" || s == "¢ER") return Objective::dollar_cer;
    if (s == "tilde-cer" || s == "tildeCER") return Objective::tilde_cer;
    throw DomainError("unknown objective '" + s + "'");
}

void SimConfig::validate() const {
    if (n_paths < 2) throw DomainError("sim: n_paths must be at least 2");
    if (!(dt > 0.0) || !std::isfinite(dt)) throw DomainError("sim: dt must be positive");
    if (horizons.empty()) throw DomainError("sim: at least one horizon required");
    if (!(v0 > 0.0)) throw DomainError("sim: v0 must be positive");
    for (std::size_t h = 0; h < horizons.size(); ++h) {
        const double T = horizons[h];
        if (!(T > 0.0)) throw DomainError("sim: horizons must be positive");
        if (h > 0 && !(T > horizons[h - 1])) throw DomainError("sim: horizons must ascend");
        const double k = T / dt;
        if (std::abs(k - std::round(k)) > 1e-9 * std::max(1.0, k)) {
            std::ostringstream os;
            os << "sim: horizon " << T << " is not a multiple of dt=" << dt;
            throw DomainError(os.str());
        }
    }
}

unsigned SimConfig::resolved_workers() const {
    if (workers > 0) return workers;
    if (const char* env = std::getenv("DDLAB_WORKERS")) {
        const int n = std::atoi(env);
        if (n > 0) return static_cast<unsigned>(n);
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

Policy Policy::fixed(Eigen::VectorXd fractions) {
    Policy p;
    p.fixed_ = std::move(fractions);
    return p;
}

Policy Policy::merton(double p, double scale) {
    if (!(p < 1.0) || !std::isfinite(p)) throw DomainError("merton policy: p must be below 1");
    Policy out;
    out.merton_ = true;
    out.p_ = p;
    out.scale_ = scale;
    return out;
}

Eigen::VectorXd Policy::fractions(const CompleteMarketSpec& m, double t) const {
    if (!merton_) {
        if (fixed_.size() != m.d()) throw DomainError("policy: fraction vector has wrong size");
        return fixed_;
    }
    const auto& piece = m.piece_at(t);
    const Eigen::VectorXd theta = market_price_of_risk(m, t);
    return scale_ * piece.sigma.transpose().fullPivLu().solve(theta) / (1.0 - p_);
}

std::string Policy::describe() const {
    std::ostringstream os;
    if (merton_) {
        os << "merton(p=" << p_ << ", scale=" << scale_ << ")";
    } else {
        os << "fixed(";
        for (Eigen::Index i = 0; i < fixed_.size(); ++i) os << (i ? "," : "") << fixed_(i);
        os << ")";
    }
    return os.str();
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

}  // namespace

std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t stream) {
    return splitmix64(splitmix64(seed) ^ splitmix64(stream + 0x632be59bd9b4e019ULL));
}

namespace {

/// Drift a = pi'(mu - r) and volatility b = |sigma' pi| of the discounted
/// portfolio on each market piece.
struct PieceGrowth {
    double t_start;
    double a;
    double b;
};

std::vector<PieceGrowth> growth_profile(const CompleteMarketSpec& m, const Policy& policy) {
    std::vector<PieceGrowth> out;
    for (const auto& piece : m.pieces()) {
        const Eigen::VectorXd pi = policy.fractions(m, piece.t_start);
        const Eigen::VectorXd excess = piece.mu - piece.r * Eigen::VectorXd::Ones(piece.mu.size());
        out.push_back({piece.t_start, pi.dot(excess), (piece.sigma.transpose() * pi).norm()});
    }
    return out;
}

template <class Fn>
void run_parallel(std::size_t n, unsigned workers, Fn fn) {
    workers = static_cast<unsigned>(std::min<std::size_t>(std::max(1u, workers), n));
    if (workers <= 1) {
        fn(std::size_t{0}, n);
        return;
    }
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(workers);
    const std::size_t chunk = (n + workers - 1) / workers;
    for (unsigned w = 0; w < workers; ++w) {
        const std::size_t begin = w * chunk, end = std::min(n, begin + chunk);
        if (begin >= end) break;
        pool.emplace_back([&, w, begin, end] {
            try {
                fn(begin, end);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

/// Normal source for one path; antithetic partners share a stream.
class PathNormals {
public:
    PathNormals(const SimConfig& cfg, std::size_t path)
        : rng_(stream_seed(cfg.seed, cfg.antithetic ? path / 2 : path)),
          sign_(cfg.antithetic && path % 2 == 1 ? -1.0 : 1.0) {}
    double operator()() { return sign_ * dist_(rng_); }

private:
    std::mt19937_64 rng_;
    std::normal_distribution<double> dist_;
    double sign_;
};

/// Walks the dt grid of one path; step() returns false on Euler explosion.
class GridWalker {
public:
    GridWalker(const std::vector<PieceGrowth>& prof, const SimConfig& cfg, std::size_t path)
        : prof_(prof), cfg_(cfg), z_(cfg, path), sqdt_(std::sqrt(cfg.dt)), v_(cfg.v0),
          logv_(std::log(cfg.v0)) {
        set_piece(0);
    }

    bool step() {
        const double t = static_cast<double>(k_) * cfg_.dt;
        while (piece_ + 1 < prof_.size() && t >= prof_[piece_ + 1].t_start - 1e-12) set_piece(piece_ + 1);
        const double z = z_();
        ++k_;
        if (cfg_.scheme == Scheme::exact_lognormal) {
            logv_ += drift_ + vol_ * z;
            v_ = std::exp(logv_);
        } else {
            v_ *= 1.0 + euler_drift_ + vol_ * z;
            if (!(v_ > 0.0)) return false;
        }
        return true;
    }

    double v() const { return v_; }
    std::size_t steps() const { return k_; }

private:
    void set_piece(std::size_t i) {
        piece_ = i;
        const auto& g = prof_[i];
        drift_ = (g.a - 0.5 * g.b * g.b) * cfg_.dt;
        euler_drift_ = g.a * cfg_.dt;
        vol_ = g.b * sqdt_;
    }

    const std::vector<PieceGrowth>& prof_;
    const SimConfig& cfg_;
    PathNormals z_;
    double sqdt_;
    double v_, logv_;
    std::size_t k_ = 0, piece_ = 0;
    double drift_ = 0, euler_drift_ = 0, vol_ = 0;
};

std::size_t steps_for(double T, double dt) { return static_cast<std::size_t>(std::llround(T / dt)); }

/// Mean and variance of log V increments over [t1, t2] for piecewise coefficients.
std::pair<double, double> log_moments(const std::vector<PieceGrowth>& prof, double t1, double t2) {
    double mean = 0.0, var = 0.0;
    for (std::size_t i = 0; i < prof.size(); ++i) {
        const double a = std::max(t1, prof[i].t_start);
        const double b = i + 1 < prof.size() ? std::min(t2, prof[i + 1].t_start) : t2;
        if (b <= a) continue;
        mean += (prof[i].a - 0.5 * prof[i].b * prof[i].b) * (b - a);
        var += prof[i].b * prof[i].b * (b - a);
    }
    return {mean, var};
}

}  // namespace

PathBatch simulate_wealth(const CompleteMarketSpec& m, const Policy& policy, const SimConfig& cfg) {
    cfg.validate();
    const auto prof = growth_profile(m, policy);
    const std::size_t n_steps = steps_for(cfg.horizons.back(), cfg.dt);
    std::vector<std::vector<double>> values(cfg.n_paths);
    std::vector<std::uint8_t> ok(cfg.n_paths, 1);
    run_parallel(cfg.n_paths, cfg.resolved_workers(), [&](std::size_t b, std::size_t e) {
        for (std::size_t i = b; i < e; ++i) {
            GridWalker walk(prof, cfg, i);
            auto& v = values[i];
            v.resize(n_steps + 1);
            v[0] = cfg.v0;
            for (std::size_t k = 1; k <= n_steps; ++k) {
                if (!walk.step()) {
                    ok[i] = 0;
                    break;
                }
                v[k] = walk.v();
            }
        }
    });
    std::vector<double> times(n_steps + 1);
    for (std::size_t k = 0; k <= n_steps; ++k) times[k] = static_cast<double>(k) * cfg.dt;
    PathBatch out;
    for (std::size_t i = 0; i < cfg.n_paths; ++i) {
        if (!ok[i]) {
            ++out.exploded;
            continue;
        }
        out.paths.emplace_back(times, std::move(values[i]));
    }
    return out;
}

std::size_t HorizonSamples::valid_count() const {
    return static_cast<std::size_t>(std::count(valid.begin(), valid.end(), std::uint8_t{1}));
}

HorizonSamples simulate_horizons(const CompleteMarketSpec& m, const Policy& policy,
                                 const SimConfig& cfg, const TransformPair* transform) {
    cfg.validate();
    const auto prof = growth_profile(m, policy);
    const std::size_t n = cfg.n_paths, nh = cfg.horizons.size();
    HorizonSamples out;
    out.horizons = cfg.horizons;
    out.n_paths = n;
    out.v.assign(n * nh, 0.0);
    out.vbar.assign(n * nh, 0.0);
    out.valid.assign(n, 1);
    std::optional<TransformPair> tab;
    if (transform) {
        out.x.assign(n * nh, 0.0);
        out.min_margin.assign(n * nh, 0.0);
        if (transform->K.representation() != Representation::closed_form) {
            tab = tabulated_pair(*transform, 1e3 * cfg.v0);
            transform = &*tab;
        }
    }
    const bool terminal_only = !transform && cfg.scheme == Scheme::exact_lognormal;

    run_parallel(n, cfg.resolved_workers(), [&](std::size_t b, std::size_t e) {
        for (std::size_t i = b; i < e; ++i) {
            if (terminal_only) {
                PathNormals z(cfg, i);
                double logv = std::log(cfg.v0), t = 0.0;
                for (std::size_t h = 0; h < nh; ++h) {
                    const auto [mean, var] = log_moments(prof, t, cfg.horizons[h]);
                    logv += mean + std::sqrt(var) * z();
                    t = cfg.horizons[h];
                    out.v[h * n + i] = std::exp(logv);
                    out.vbar[h * n + i] = NAN;
                }
                continue;
            }
            GridWalker walk(prof, cfg, i);
            double vbar = cfg.v0;
            double fb = 0, dfb = 0, x = 0, xbar = 0, floor = 0, min_margin = INFINITY;
            if (transform) {
                fb = transform->F(vbar);
                dfb = transform->F.deriv(vbar);
                x = xbar = fb;
                floor = transform->w(xbar);
                min_margin = x - floor;
            }
            bool alive = true;
            for (std::size_t h = 0; h < nh && alive; ++h) {
                const std::size_t target = steps_for(cfg.horizons[h], cfg.dt);
                while (walk.steps() < target) {
                    if (!walk.step()) {
                        alive = false;
                        break;
                    }
                    const double v = walk.v();
                    if (v > vbar) {
                        vbar = v;
                        if (transform) {
                            fb = transform->F(vbar);
                            dfb = transform->F.deriv(vbar);
                        }
                    }
                    if (transform) {
                        x = fb - dfb * (vbar - v);
                        if (x > xbar) {
                            xbar = x;
                            floor = transform->w(xbar);
                        }
                        min_margin = std::min(min_margin, x - floor);
                    }
                }
                if (!alive) break;
                out.v[h * n + i] = walk.v();
                out.vbar[h * n + i] = vbar;
                if (transform) {
                    out.x[h * n + i] = x;
                    out.min_margin[h * n + i] = min_margin;
                }
            }
            if (!alive) out.valid[i] = 0;
        }
    });
    return out;
}

CerEstimate estimate_growth(const std::vector<double>& horizons, const std::vector<double>& wealth,
                            const std::vector<std::uint8_t>& valid, const UtilitySpec& U,
                            Objective objective, const CompleteMarketSpec* numeraire) {
    const std::size_t nh = horizons.size();
    if (nh == 0 || wealth.size() % nh != 0) throw DomainError("estimate_growth: bad sample layout");
    const std::size_t n = wealth.size() / nh;
    if (valid.size() != n) throw DomainError("estimate_growth: validity mask has wrong size");
    const bool tilde = objective == Objective::tilde_cer;
    if (!tilde && U.sign() == 0) {
        throw DomainError("estimate_growth: log-like utilities need the tilde objective");
    }
    if (objective == Objective::dollar_cer && !numeraire) {
        throw DomainError("estimate_growth: dollar objective needs a numeraire market");
    }
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < n; ++i) {
        if (valid[i]) idx.push_back(i);
    }
    const std::size_t m = idx.size();
    if (m < 2) throw DomainError("estimate_growth: fewer than two valid paths");

    CerEstimate est;
    est.objective = objective;
    est.n_used = m;
    // Centred per-path contributions to each ordinate, for the slope's
    // standard error: infl[h][j] with mean zero over j.
    std::vector<std::vector<double>> infl(nh, std::vector<double>(m));
    for (std::size_t h = 0; h < nh; ++h) {
        const double T = horizons[h];
        double growth = 1.0;
        if (numeraire && objective != Objective::cer) growth = std::exp(numeraire->r_average(T) * T);
        HorizonPoint pt;
        pt.T = T;
        if (tilde) {
            double mean = 0.0;
            for (std::size_t j = 0; j < m; ++j) {
                infl[h][j] = U(wealth[h * n + idx[j]] * growth);
                mean += infl[h][j];
            }
            mean /= static_cast<double>(m);
            double ss = 0.0;
            for (auto& u : infl[h]) {
                u -= mean;
                ss += u * u;
            }
            pt.ordinate = mean;
            pt.stderr = std::sqrt(ss / static_cast<double>(m - 1) / static_cast<double>(m));
        } else {
            std::vector<double>& la = infl[h];
            double mx = -INFINITY;
            for (std::size_t j = 0; j < m; ++j) {
                const double wv = wealth[h * n + idx[j]] * growth;
                if (U.kind() == UtilityKind::custom || U.kind() == UtilityKind::composed) {
                    const double u = U(wv);
                    if (u * U.sign() < 0.0) {
                        std::ostringstream os;
                        os << "estimate_growth: utility changes sign at wealth " << wv;
                        throw DomainError(os.str());
                    }
                }
                la[j] = U.log_abs(wv);
                mx = std::max(mx, la[j]);
            }
            double mean = 0.0;
            for (auto& l : la) {
                l = std::exp(l - mx);
                mean += l;
            }
            mean /= static_cast<double>(m);
            double ss = 0.0;
            for (auto& s : la) {
                s = (s - mean) / mean;
                ss += s * s;
            }
            // Signed log: log x for x > 0 and -log(-x) for x < 0.
            const double log_abs_mean = mx + std::log(mean);
            pt.ordinate = U.sign() > 0 ? log_abs_mean : -log_abs_mean;
            for (auto& s : la) s *= U.sign();
            pt.stderr = std::sqrt(ss / static_cast<double>(m - 1) / static_cast<double>(m));
        }
        pt.ci = 1.96 * pt.stderr;
        est.per_horizon.push_back(pt);
    }

    const std::size_t k = nh == 1 ? 1 : std::max<std::size_t>(2, (nh + 1) / 2);
    est.fit_from = nh - k;
    std::vector<double> coef(nh, 0.0);
    if (nh == 1) {
        est.slope = est.per_horizon[0].ordinate / horizons[0];
        coef[0] = 1.0 / horizons[0];
    } else {
        std::vector<double> xs, ys, ws;
        bool any_zero = false;
        for (std::size_t h = est.fit_from; h < nh; ++h) {
            xs.push_back(horizons[h]);
            ys.push_back(est.per_horizon[h].ordinate);
            const double se = est.per_horizon[h].stderr;
            any_zero = any_zero || !(se > 0.0);
            ws.push_back(se > 0.0 ? 1.0 / (se * se) : 1.0);
        }
        if (any_zero) ws.clear();
        const auto fit = numerics::weighted_linear_fit(xs, ys, ws);
        est.slope = fit.slope;
        est.intercept = fit.intercept;
        for (std::size_t j = 0; j < fit.slope_coefficients.size(); ++j) {
            coef[est.fit_from + j] = fit.slope_coefficients[j];
        }
    }
    double ss = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
        double phi = 0.0;
        for (std::size_t h = est.fit_from; h < nh; ++h) phi += coef[h] * infl[h][j];
        ss += phi * phi;
    }
    est.stderr = std::sqrt(ss / static_cast<double>(m - 1) / static_cast<double>(m));
    return est;
}

bool VerificationReport::pass() const {
    return !checks.empty() &&
           std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.pass; });
}

double VerificationReport::closed(const std::string& key) const {
    for (const auto& [k, v] : closed_form) {
        if (k == key) return v;
    }
    throw DomainError("report has no closed-form value '" + key + "'");
}

const CerEstimate& VerificationReport::estimate(const std::string& name) const {
    for (const auto& e : estimates) {
        if (e.name == name) return e.estimate;
    }
    throw DomainError("report has no estimate '" + name + "'");
}

double asymptotic_ratio(const DrawdownSpec& w) {
    switch (w.kind()) {
        case DrawdownKind::linear: return w.parameter();
        case DrawdownKind::constant: return 0.0;
        case DrawdownKind::piecewise_linear:
        case DrawdownKind::tabulated: return w.tail_slope();
        case DrawdownKind::relaxed: {
            const double n = w.relaxation_order();
            return (1.0 + 1.0 / n) * asymptotic_ratio(*w.relaxed_base()) - 1.0 / n;
        }
    }
    return 0.0;
}

namespace {

Check relative_check(const std::string& name, double value, double target, double tol) {
    Check c;
    c.name = name;
    c.measure = std::abs(value - target) / std::abs(target);
    c.limit = tol;
    c.pass = c.measure <= tol;
    std::ostringstream os;
    os << "estimate " << value << " vs " << target;
    c.note = os.str();
    return c;
}

Check agreement_check(const std::string& name, const CerEstimate& a, const CerEstimate& b,
                      double multiple) {
    Check c;
    c.name = name;
    const double combined = std::sqrt(a.stderr * a.stderr + b.stderr * b.stderr);
    c.measure = std::abs(a.slope - b.slope) / combined;
    c.limit = multiple;
    c.pass = c.measure <= multiple;
    std::ostringstream os;
    os << "|" << a.slope << " - " << b.slope << "| / " << combined;
    c.note = os.str();
    return c;
}

void tally_drawdown(VerificationReport& rep, const HorizonSamples& s) {
    const std::size_t last = s.horizons.size() - 1;
    rep.paths = s.valid_count();
    rep.paths_satisfying_drawdown = 0;
    rep.min_margin = INFINITY;
    for (std::size_t i = 0; i < s.n_paths; ++i) {
        if (!s.valid[i]) continue;
        const double mm = s.at(s.min_margin, last, i);
        rep.min_margin = std::min(rep.min_margin, mm);
        if (mm >= 0.0) ++rep.paths_satisfying_drawdown;
    }
    Check c;
    c.name = "drawdown satisfied on every constrained path";
    c.measure = static_cast<double>(rep.paths - rep.paths_satisfying_drawdown);
    c.limit = 0.0;
    c.pass = rep.paths_satisfying_drawdown == rep.paths && rep.paths > 0;
    std::ostringstream os;
    os << rep.paths_satisfying_drawdown << "/" << rep.paths << " paths, min margin " << rep.min_margin;
    c.note = os.str();
    rep.checks.push_back(c);
}

double linear_alpha(const DrawdownSpec& w) {
    const double a = asymptotic_ratio(w);
    if (!(a >= 0.0 && a < 1.0)) throw DomainError("verify: asymptotic w(x)/x must lie in [0, 1)");
    return a;
}

VerificationReport power_equivalence(const CompleteMarketSpec& m, double gamma, const DrawdownSpec& w,
                                     const SimConfig& cfg, const VerifyOptions& opts, bool dollars) {
    const double alpha = linear_alpha(w);
    const double p_star = gamma * (1.0 - alpha);
    const auto pair = make_transform_pair(w, cfg.v0);
    const auto U = UtilitySpec::power(gamma);
    const auto UF = compose(U, pair);
    const auto samples = simulate_horizons(m, Policy::merton(p_star, opts.policy_scale), cfg, &pair);

    VerificationReport rep;
    rep.kind = dollars ? "verify-dollars" : "verify-main";
    const double r_star = dollars ? m.r_star() : 0.0;
    const double target = cer_drawdown_constrained(r_star, m.theta_sq_star(), gamma, alpha);
    rep.closed_form.push_back({"closed_form", target});
    rep.closed_form.push_back({"composed_exponent", p_star});
    const Objective obj = dollars ? Objective::dollar_cer : Objective::cer;
    auto constrained = estimate_growth(samples.horizons, samples.x, samples.valid, U, obj, &m);
    rep.estimates.push_back({"constrained", constrained});
    tally_drawdown(rep, samples);
    if (!dollars) {
        auto composed = estimate_growth(samples.horizons, samples.v, samples.valid, UF, obj, &m);
        rep.estimates.push_back({"composed", composed});
        rep.checks.push_back(relative_check("R_U(X) near closed form", constrained.slope, target, opts.rel_tol));
        rep.checks.push_back(relative_check("R_UoF(V*) near closed form", composed.slope, target, opts.rel_tol));
        rep.checks.push_back(agreement_check("both sides agree", constrained, composed, opts.stderr_multiple));
    } else {
        const double offset = std::abs(gamma) * alpha * m.r_star();
        const double base = cer_power_unconstrained(m.r_star(), m.theta_sq_star(), p_star);
        rep.closed_form.push_back({"unconstrained_at_composed_exponent", base});
        rep.closed_form.push_back({"offset", offset});
        auto unconstrained = estimate_growth(samples.horizons, samples.v, samples.valid,
                                             UtilitySpec::power(p_star), obj, &m);
        rep.estimates.push_back({"unconstrained_at_composed_exponent", unconstrained});
        rep.checks.push_back(relative_check("¢ER of X near closed form", constrained.slope, target, opts.rel_tol));
        Check alg;
        alg.name = "closed-form offset identity";
        alg.measure = std::abs(target - (base + offset));
        alg.limit = 1e-12;
        alg.pass = alg.measure <= alg.limit;
        rep.checks.push_back(alg);
    }
    return rep;
}

}  // namespace

VerificationReport verify_equivalence_main(const CompleteMarketSpec& m, double gamma,
                                           const DrawdownSpec& w, const SimConfig& cfg,
                                           const VerifyOptions& opts) {
    return power_equivalence(m, gamma, w, cfg, opts, false);
}

VerificationReport verify_equivalence_dollars(const CompleteMarketSpec& m, double gamma,
                                              const DrawdownSpec& w, const SimConfig& cfg,
                                              const VerifyOptions& opts) {
    return power_equivalence(m, gamma, w, cfg, opts, true);
}

VerificationReport verify_log_theorem(const CompleteMarketSpec& m, const DrawdownSpec& w,
                                      const SimConfig& cfg, bool dollars, const VerifyOptions& opts) {
    const double alpha = linear_alpha(w);
    const auto pair = make_transform_pair(w, cfg.v0);
    const auto samples = simulate_horizons(m, Policy::merton(0.0, opts.policy_scale), cfg, &pair);
    VerificationReport rep;
    rep.kind = "verify-log";
    const double r_star = dollars ? m.r_star() : 0.0;
    const double target =
        (1.0 - alpha) * log_growth_optimal(r_star, m.theta_sq_star()) + alpha * r_star;
    rep.closed_form.push_back({"closed_form", target});
    const auto U = UtilitySpec::log();
    auto constrained = estimate_growth(samples.horizons, samples.x, samples.valid, U,
                                       Objective::tilde_cer, dollars ? &m : nullptr);
    rep.estimates.push_back({"constrained", constrained});
    tally_drawdown(rep, samples);
    rep.checks.push_back(relative_check("tilde-CER of X near closed form", constrained.slope, target, opts.rel_tol));
    if (!dollars) {
        auto composed = estimate_growth(samples.horizons, samples.v, samples.valid, compose(U, pair),
                                        Objective::tilde_cer);
        rep.estimates.push_back({"composed", composed});
        rep.checks.push_back(relative_check("tilde-CER of logoF(V*) near closed form", composed.slope, target, opts.rel_tol));
    }
    return rep;
}

double relaxed_exponent(double gamma, double alpha, int n) {
    if (n <= 0) throw DomainError("relaxed_exponent: n must be positive");
    return gamma * (1.0 - alpha) * (1.0 + n) / n;
}

VerificationReport verify_convergence_lemma(const CompleteMarketSpec& m, double gamma,
                                            const DrawdownSpec& w, const SimConfig& cfg,
                                            const ConvergenceOptions& opts) {
    if (w.kind() != DrawdownKind::linear) throw DomainError("verify_convergence: needs linear w");
    const double alpha = w.parameter();
    const double th = m.theta_sq_star();
    const double limit = cer_power_unconstrained(0.0, th, gamma * (1.0 - alpha));
    VerificationReport rep;
    rep.kind = "verify-convergence";
    rep.closed_form.push_back({"limit", limit});
    std::vector<int> ns = opts.n_list;
    std::sort(ns.begin(), ns.end());
    std::vector<double> values;
    for (int n : ns) {
        const double pn = relaxed_exponent(gamma, alpha, n);
        const double v = cer_power_unconstrained(0.0, th, pn);
        values.push_back(v);
        rep.closed_form.push_back({"n=" + std::to_string(n), v});
    }
    {
        Check c;
        c.name = "closed forms decrease monotonically toward the limit";
        std::size_t bad = 0;
        for (std::size_t i = 0; i < values.size(); ++i) {
            const double prev = i == 0 ? INFINITY : values[i - 1];
            if (!(values[i] < prev) || !(values[i] > limit)) ++bad;
        }
        c.measure = static_cast<double>(bad);
        c.pass = bad == 0;
        c.limit = 0.0;
        rep.checks.push_back(c);
    }
    if (!values.empty()) {
        rep.checks.push_back(relative_check("largest-n value within tolerance of the limit",
                                            values.back(), limit, opts.limit_rel_tol));
        rep.checks.back().note += " (n=" + std::to_string(ns.back()) + ")";
    }
    if (opts.spot_n > 0) {
        const int n = opts.spot_n;
        const double pn = relaxed_exponent(gamma, alpha, n);
        const auto base = make_transform_pair(w, cfg.v0);
        const auto [wn, pair_n] = relax_wn(base, n);
        const auto U = compose(UtilitySpec::power(gamma), pair_n.F, pn);
        const auto s = simulate_horizons(m, Policy::merton(pn), cfg);
        auto est = estimate_growth(s.horizons, s.v, s.valid, U, Objective::cer);
        rep.estimates.push_back({"spot n=" + std::to_string(n), est});
        rep.checks.push_back(relative_check("Monte Carlo spot check", est.slope,
                                            cer_power_unconstrained(0.0, th, pn), opts.spot_rel_tol));
        for (double v0 : opts.v0_values) {
            SimConfig c2 = cfg;
            c2.v0 = v0;
            const auto b2 = make_transform_pair(w, v0);
            const auto [w2, p2] = relax_wn(b2, n);
            const auto s2 = simulate_horizons(m, Policy::merton(pn), c2);
            auto e2 = estimate_growth(s2.horizons, s2.v, s2.valid,
                                      compose(UtilitySpec::power(gamma), p2.F, pn), Objective::cer);
            std::ostringstream nm;
            nm << "v0=" << v0;
            rep.estimates.push_back({nm.str(), e2});
            rep.checks.push_back(agreement_check("slope invariant under " + nm.str(), est, e2, 3.0));
        }
        if (opts.floor_mix > 0.0) {
            const double eps = opts.floor_mix;
            std::vector<double> mixed(s.v.size());
            for (std::size_t k = 0; k < s.v.size(); ++k) mixed[k] = eps * cfg.v0 + (1.0 - eps) * s.v[k];
            auto e3 = estimate_growth(s.horizons, mixed, s.valid, U, Objective::cer);
            rep.estimates.push_back({"floor-mix", e3});
            rep.checks.push_back(agreement_check("slope invariant under floor mix", est, e3, 3.0));
        }
    }
    return rep;
}

}  // namespace ddlab
