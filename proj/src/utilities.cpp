#include "ddlab/utilities.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "ddlab/errors.hpp"
#include "ddlab/numerics.hpp"

namespace ddlab {

std::string to_string(UtilityKind k) {
    switch (k) {
        case UtilityKind::power: return "power";
        case UtilityKind::log: return "log";
        case UtilityKind::composed: return "composed";
        case UtilityKind::custom: return "custom";
    }
    return "unknown";
}

UtilitySpec UtilitySpec::power(double p) {
    if (!(p < 1.0) || p == 0.0 || !std::isfinite(p)) {
        throw DomainError("power utility: exponent must be finite, nonzero and below 1");
    }
    UtilitySpec u;
    std::ostringstream os;
    os << "power(" << p << ")";
    u.name_ = os.str();
    u.kind_ = UtilityKind::power;
    u.sign_ = p > 0 ? 1 : -1;
    u.eval_ = [p](double x) { return std::pow(x, p) / p; };
    u.deriv_ = [p](double x) { return std::pow(x, p - 1.0); };
    u.log_abs_ = [p](double x) { return p * std::log(x) - std::log(std::abs(p)); };
    u.exponent_ = p;
    return u;
}

UtilitySpec UtilitySpec::log() {
    UtilitySpec u;
    u.name_ = "log";
    u.kind_ = UtilityKind::log;
    u.sign_ = 0;
    u.eval_ = [](double x) { return std::log(x); };
    u.deriv_ = [](double x) { return 1.0 / x; };
    u.log_abs_ = [](double x) { return std::log(std::abs(std::log(x))); };
    return u;
}

UtilitySpec UtilitySpec::custom(std::string name, Fn eval, Fn right_deriv, int sign, Fn log_abs,
                                std::optional<double> exponent) {
    if (!eval || !right_deriv) throw DomainError("custom utility needs eval and right derivative");
    if (sign < -1 || sign > 1) throw DomainError("custom utility: sign must be -1, 0 or +1");
    UtilitySpec u;
    u.name_ = std::move(name);
    u.kind_ = UtilityKind::custom;
    u.sign_ = sign;
    u.eval_ = std::move(eval);
    u.deriv_ = std::move(right_deriv);
    u.log_abs_ = std::move(log_abs);
    u.exponent_ = exponent;
    return u;
}

UtilitySpec UtilitySpec::exponential() {
    return custom(
        "exponential", [](double x) { return -std::exp(-x); },
        [](double x) { return std::exp(-x); }, -1, [](double x) { return -x; });
}

UtilitySpec UtilitySpec::sandwich_probe() {
    auto eval = [](double x) { return std::sqrt(x) * (1.0 + 1.0 / (1.0 + std::log(x))); };
    auto deriv = [](double x) {
        const double L = 1.0 + std::log(x);
        return 0.5 / std::sqrt(x) * (1.0 + 1.0 / L) - std::sqrt(x) / (x * L * L);
    };
    auto log_abs = [](double x) {
        return 0.5 * std::log(x) + std::log1p(1.0 / (1.0 + std::log(x)));
    };
    return custom("sandwich-probe", eval, deriv, 1, log_abs);
}

double UtilitySpec::log_abs(double x) const {
    if (log_abs_) return log_abs_(x);
    return std::log(std::abs(eval_(x)));
}

UtilitySpec UtilitySpec::shifted(double kappa) const {
    if (sign_ == 0) throw DomainError("shift: log-like utilities have no sign to preserve");
    if (sign_ * kappa < 0.0) throw DomainError("shift: constant must preserve the sign of U");
    UtilitySpec u = *this;
    std::ostringstream os;
    os << name_ << "+" << kappa;
    u.name_ = os.str();
    u.kind_ = UtilityKind::custom;
    auto base = eval_;
    u.eval_ = [base, kappa](double x) { return base(x) + kappa; };
    u.log_abs_ = nullptr;
    u.exponent_.reset();
    return u;
}

UtilitySpec compose(const UtilitySpec& U, const MonotoneMap& F, std::optional<double> exponent_hint) {
    if (!F.valid()) throw DomainError("compose: empty map");
    if (F.lower() > 0.0) {
        std::ostringstream os;
        os << "compose: F must be defined from 0, got domain [" << F.lower() << ", inf)";
        throw DomainError(os.str());
    }
    UtilitySpec u;
    u.name_ = U.name() + "∘F";
    u.kind_ = UtilityKind::composed;
    u.sign_ = U.sign();
    u.outer_ = U.kind() == UtilityKind::composed ? U.outer_kind() : std::optional(U.kind());
    auto ue = U.eval_, ud = U.deriv_;
    u.eval_ = [ue, F](double x) { return ue(F(x)); };
    u.deriv_ = [ud, F](double x) { return ud(F(x)) * F.deriv(x); };
    if (U.log_abs_) {
        auto la = U.log_abs_;
        u.log_abs_ = [la, F](double x) { return la(F(x)); };
    }
    u.exponent_ = exponent_hint;
    return u;
}

UtilitySpec compose(const UtilitySpec& U, const TransformPair& pair) {
    std::optional<double> hint;
    if (U.exponent() && pair.w.kind() == DrawdownKind::linear) {
        hint = *U.exponent() * (1.0 - pair.w.parameter());
    }
    return compose(U, pair.F, hint);
}

double composed_risk_aversion(double rho, double alpha) { return alpha + rho * (1.0 - alpha); }

double elasticity(const UtilitySpec& U, double x) {
    if (!(x > 0.0)) throw DomainError("elasticity: x must be positive");
    const double u = U(x);
    if (u == 0.0) {
        std::ostringstream os;
        os << "elasticity: U(" << x << ") = 0";
        throw DomainError(os.str());
    }
    return x * U.deriv(x) / std::abs(u);
}

ScalingGrids ScalingGrids::defaults(double x0) {
    return {{1.01, 1.1, 2.0, 10.0, 100.0}, numerics::log_grid(x0, 1e6 * x0, 512)};
}

ElasticityReport verify_scaling_lemma(const UtilitySpec& U, double x0, const ScalingGrids& grids,
                                      double tol) {
    ElasticityReport rep;
    rep.x0 = x0;
    const bool additive = U.sign() == 0;
    // Elasticity (or x U' for log-like U) on every point the check touches.
    std::vector<double> pts = grids.xs;
    for (double x : grids.xs) {
        for (double l : grids.lambdas) pts.push_back(l * x);
    }
    double sup = -INFINITY;
    for (double x : pts) {
        if (x < x0) continue;
        const double e = additive ? x * U.deriv(x) : x * U.deriv(x) / std::abs(U(x));
        if (!std::isfinite(e)) {
            rep.asymptotic_elasticity_ok = false;
            std::ostringstream os;
            os << "elasticity not finite at x=" << x;
            rep.note = os.str();
            break;
        }
        sup = std::max(sup, e);
    }
    // Tail growth: compare the last decade of the x grid with the one before.
    if (rep.asymptotic_elasticity_ok && grids.xs.size() >= 2) {
        const double hi = grids.xs.back();
        auto e_at = [&](double x) {
            return additive ? x * U.deriv(x) : x * U.deriv(x) / std::abs(U(x));
        };
        const double e1 = e_at(hi / 10.0), e2 = e_at(hi);
        if (hi / 10.0 >= x0 && e1 > 0.0 && e2 > 1.5 * e1) {
            rep.asymptotic_elasticity_ok = false;
            std::ostringstream os;
            os << "elasticity grows from " << e1 << " to " << e2 << " over the last decade";
            rep.note = os.str();
        }
    }
    if (!rep.asymptotic_elasticity_ok) {
        rep.gamma = INFINITY;
        return rep;
    }
    rep.gamma = additive ? sup : U.sign() * sup;
    for (double x : grids.xs) {
        if (x < x0) continue;
        const double ux = U(x);
        for (double l : grids.lambdas) {
            if (!(l > 1.0)) continue;
            const double ul = U(l * x);
            // Log-like utilities cross zero; measure their violations in utils.
            const double scale = std::max({std::abs(ux), std::abs(ul), additive ? 1.0 : 1e-300});
            const double upper = additive ? ux + rep.gamma * std::log(l) : std::pow(l, rep.gamma) * ux;
            const double v = std::max(ux - ul, ul - upper) / scale;
            if (v > 0.0) rep.grid_max_violation = std::max(rep.grid_max_violation, v);
            if (v > tol) ++rep.violations;
        }
    }
    return rep;
}

namespace {

/// Golden-section search for the extremum of f on [a, b]; `maximize` picks the side.
double golden_extremum(const std::function<double(double)>& f, double a, double b, bool maximize) {
    const double g = 0.5 * (std::sqrt(5.0) - 1.0);
    auto val = [&](double x) { return maximize ? -f(x) : f(x); };
    double c = b - g * (b - a), d = a + g * (b - a);
    double fc = val(c), fd = val(d);
    for (int it = 0; it < 200 && (b - a) > 1e-13 * std::max(1.0, std::abs(b)); ++it) {
        if (fc < fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = val(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = val(d);
        }
    }
    const double best = std::min({fc, fd, val(a), val(b)});
    return maximize ? -best : best;
}

}  // namespace

SandwichBounds power_sandwich(const UtilitySpec& U, double gamma, double eps, double x0,
                              double x_max) {
    if (U.sign() == 0 || gamma == 0.0) {
        throw DomainError("power_sandwich: needs a sign-definite utility and gamma != 0");
    }
    if (!(gamma < 1.0) || !(eps >= 0.0 && eps < 1.0) || !(x0 > 0.0)) {
        throw DomainError("power_sandwich: need gamma < 1, 0 <= eps < 1, x0 > 0");
    }
    if ((gamma > 0) != (U.sign() > 0)) throw DomainError("power_sandwich: gamma must share U's sign");
    if (x_max <= 0.0) x_max = 1e6 * x0;
    const auto grid = numerics::log_grid(x0, x_max, 2048);
    const double g_lo = std::min(gamma * (1 - eps), gamma * (1 + eps));
    const double g_hi = std::max(gamma * (1 - eps), gamma * (1 + eps));
    const double band_tol = 1e-12 * std::abs(gamma);
    // Signed elasticity x U'/U tends to gamma; find where it settles in the band.
    std::size_t first_in = grid.size();
    for (std::size_t i = grid.size(); i-- > 0;) {
        const double e = U.sign() * elasticity(U, grid[i]);
        if (e < g_lo - band_tol || e > g_hi + band_tol) break;
        first_in = i;
    }
    if (first_in == grid.size()) {
        std::ostringstream os;
        os << "power_sandwich: elasticity at x=" << grid.back() << " is "
           << U.sign() * elasticity(U, grid.back()) << ", outside [" << g_lo << ", " << g_hi << "]";
        throw ConvergenceError(os.str());
    }
    SandwichBounds b;
    b.y0 = grid[first_in];
    const double gm = gamma * (1 - eps), gp = gamma * (1 + eps);
    auto r_minus = [&](double x) { return U(x) / (std::pow(x, gm) / gm); };
    auto r_plus = [&](double x) { return U(x) / (std::pow(x, gp) / gp); };
    const bool positive = U.sign() > 0;
    // Positive U: c- = min U/P-, c+ = max U/P+. Negative U flips both.
    const bool minus_max = !positive, plus_max = positive;
    auto extremum = [&](const std::function<double(double)>& r, bool maximize) {
        std::size_t best = 0;
        double bv = r(grid[0]);
        for (std::size_t i = 1; i <= first_in; ++i) {
            const double v = r(grid[i]);
            if (maximize ? v > bv : v < bv) {
                bv = v;
                best = i;
            }
        }
        const double a = grid[best == 0 ? 0 : best - 1];
        const double c = grid[std::min(best + 1, first_in)];
        if (c > a) {
            const double polished = golden_extremum(r, a, c, maximize);
            bv = maximize ? std::max(bv, polished) : std::min(bv, polished);
        }
        return bv;
    };
    b.c_minus = extremum(r_minus, minus_max);
    b.c_plus = extremum(r_plus, plus_max);
    return b;
}

}  // namespace ddlab
