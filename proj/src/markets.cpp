#include "ddlab/markets.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "ddlab/azema_yor.hpp"
#include "ddlab/errors.hpp"

namespace ddlab {

CompleteMarketSpec::CompleteMarketSpec(std::vector<MarketPiece> pieces) : pieces_(std::move(pieces)) {
    if (pieces_.empty()) throw DomainError("market: at least one piece required");
    if (pieces_.front().t_start != 0.0) throw DomainError("market: first piece must start at t=0");
    const auto d = pieces_.front().mu.size();
    if (d == 0) throw DomainError("market: need at least one asset");
    for (std::size_t i = 0; i < pieces_.size(); ++i) {
        const auto& p = pieces_[i];
        if (i > 0 && !(p.t_start > pieces_[i - 1].t_start)) {
            throw DomainError("market: piece start times must increase");
        }
        if (p.mu.size() != d || p.sigma.rows() != d || p.sigma.cols() != d) {
            throw DomainError("market: mu and sigma dimensions disagree");
        }
        Eigen::FullPivLU<Eigen::MatrixXd> lu(p.sigma);
        if (!lu.isInvertible()) {
            std::ostringstream os;
            os << "market: sigma singular on piece starting at t=" << p.t_start;
            throw DomainError(os.str());
        }
        theta_.push_back(lu.solve(p.mu - p.r * Eigen::VectorXd::Ones(d)));
    }
}

CompleteMarketSpec CompleteMarketSpec::constant(double mu, double r, double sigma) {
    MarketPiece p;
    p.r = r;
    p.mu = Eigen::VectorXd::Constant(1, mu);
    p.sigma = Eigen::MatrixXd::Constant(1, 1, sigma);
    return CompleteMarketSpec({p});
}

const MarketPiece& CompleteMarketSpec::piece_at(double t) const {
    if (t < 0.0) throw DomainError("market: negative time");
    auto it = std::upper_bound(pieces_.begin(), pieces_.end(), t,
                               [](double v, const MarketPiece& p) { return v < p.t_start; });
    return *(it - 1);
}

double CompleteMarketSpec::theta_sq_star() const { return theta_.back().squaredNorm(); }

namespace {

template <class G>
double time_average(const std::vector<MarketPiece>& pieces, double T, G value_of) {
    if (!(T > 0.0)) throw DomainError("market: averaging horizon must be positive");
    double total = 0.0;
    for (std::size_t i = 0; i < pieces.size(); ++i) {
        const double a = pieces[i].t_start;
        if (a >= T) break;
        const double b = i + 1 < pieces.size() ? std::min(pieces[i + 1].t_start, T) : T;
        total += value_of(i) * (b - a);
    }
    return total / T;
}

}  // namespace

double CompleteMarketSpec::theta_sq_average(double T) const {
    return time_average(pieces_, T, [&](std::size_t i) { return theta_[i].squaredNorm(); });
}

double CompleteMarketSpec::r_average(double T) const {
    return time_average(pieces_, T, [&](std::size_t i) { return pieces_[i].r; });
}

std::vector<double> CompleteMarketSpec::condition_numbers() const {
    std::vector<double> out;
    for (const auto& p : pieces_) {
        Eigen::JacobiSVD<Eigen::MatrixXd> svd(p.sigma);
        const auto& s = svd.singularValues();
        out.push_back(s(0) / s(s.size() - 1));
    }
    return out;
}

Eigen::VectorXd market_price_of_risk(const CompleteMarketSpec& m, double t) {
    const auto& p = m.piece_at(t);
    return p.sigma.fullPivLu().solve(p.mu - p.r * Eigen::VectorXd::Ones(p.mu.size()));
}

namespace {

void check_exponent(double p, const char* what) {
    if (!(p < 1.0) || p == 0.0 || !std::isfinite(p)) {
        std::ostringstream os;
        os << what << ": exponent " << p << " outside (-inf, 1) \\ {0}";
        throw DomainError(os.str());
    }
}

}  // namespace

Eigen::VectorXd merton_fraction(const CompleteMarketSpec& m, double p, double t) {
    check_exponent(p, "merton_fraction");
    const auto& piece = m.piece_at(t);
    const Eigen::VectorXd theta = market_price_of_risk(m, t);
    return piece.sigma.transpose().fullPivLu().solve(theta) / (1.0 - p);
}

double cer_power_unconstrained(double r_star, double theta_sq, double p) {
    check_exponent(p, "cer_power_unconstrained");
    return std::abs(p) * r_star + std::abs(p) * theta_sq / (2.0 * (1.0 - p));
}

double cer_drawdown_constrained(double r_star, double theta_sq, double gamma, double alpha) {
    if (!(alpha >= 0.0 && alpha < 1.0)) throw DomainError("cer_drawdown_constrained: alpha in [0, 1)");
    check_exponent(gamma, "cer_drawdown_constrained");
    const double g = gamma * (1.0 - alpha);
    return std::abs(gamma) * (r_star + (1.0 - alpha) * theta_sq / (2.0 * (1.0 - g)));
}

double cer_power_unconstrained(const CompleteMarketSpec& m, double p) {
    return cer_power_unconstrained(m.r_star(), m.theta_sq_star(), p);
}

double cer_drawdown_constrained(const CompleteMarketSpec& m, double gamma, double alpha) {
    return cer_drawdown_constrained(m.r_star(), m.theta_sq_star(), gamma, alpha);
}

double log_growth_optimal(double r_star, double theta_sq) { return r_star + 0.5 * theta_sq; }

double constrained_policy_step(const CompleteMarketSpec& m, double gamma, double alpha,
                               const DrawdownSpec& w, double x, double xbar,
                               std::span<const double> returns, double t) {
    const Eigen::VectorXd pi = merton_fraction(m, gamma * (1.0 - alpha), t);
    if (static_cast<Eigen::Index>(returns.size()) != pi.size()) {
        throw DomainError("constrained_policy_step: return vector has wrong size");
    }
    double portfolio = 0.0;
    for (Eigen::Index i = 0; i < pi.size(); ++i) portfolio += pi(i) * returns[i];
    return sde_euler_step(x, xbar, w, portfolio);
}

namespace {

struct FactorCore {
    double E, K, D, eta, value;
};

FactorCore factor_core(const FactorModelSpec& f, double gamma, KVariant variant, double tol) {
    if (!(gamma < 1.0) || gamma == 0.0 || !std::isfinite(gamma)) {
        throw DomainError("fleming_sheu_value: gamma must lie in (-inf, 0) or (0, 1)");
    }
    const double s2 = f.sigma * f.sigma + f.rho * f.rho;
    if (!(s2 > 0.0)) throw DomainError("fleming_sheu_value: sigma^2 + rho^2 must be positive");
    const double g = gamma / (1.0 - gamma);
    const double E = 1.0 + g * f.sigma * f.sigma / s2;
    if (!(E > 0.0)) throw DomainError("fleming_sheu_value: E must be positive");
    const double shift_d = f.b + g * f.mu2 * f.sigma / s2;
    const double shift_k = variant == KVariant::corrected ? shift_d : f.b + g / s2;
    const double rad_d = -g * f.mu2 * f.mu2 / s2 + shift_d * shift_d / E;
    const double rad_k = -g * f.mu2 * f.mu2 / s2 + shift_k * shift_k / E;
    if (rad_d < 0.0 || rad_k < 0.0) {
        std::ostringstream os;
        os << "fleming_sheu_value: negative radicand (" << std::min(rad_d, rad_k) << ") at gamma="
           << gamma;
        throw DomainError(os.str());
    }
    const double K = -shift_d / E - std::sqrt(rad_k) / std::sqrt(E);
    const double D = -std::sqrt(E) * std::sqrt(rad_d);
    // Validity condition mu2^2 >= sigma^2 K^2.
    const double lhs = f.mu2 * f.mu2, rhs = f.sigma * f.sigma * K * K;
    if (lhs < rhs - tol * std::max(1.0, rhs)) {
        std::ostringstream os;
        os << "fleming_sheu_value: validity condition mu2^2 >= sigma^2 K^2 fails (" << lhs << " < "
           << rhs << ")";
        throw DomainError(os.str());
    }
    const double denom = (D + K * E) * s2;
    const double num = f.mu2 + K * f.sigma * (f.mu1 - f.r);
    double eta = 0.0;
    if (num != 0.0) {
        if (denom == 0.0) throw DomainError("fleming_sheu_value: eta denominator vanishes");
        eta = -g * num / denom;
    }
    const double excess = f.mu1 - f.r + f.sigma * eta;
    const double value =
        0.5 * K + 0.5 * eta * eta + 0.5 * g * excess * excess / s2 + std::abs(gamma) * f.r;
    return {E, K, D, eta, value};
}

}  // namespace

FactorValue fleming_sheu_value(const FactorModelSpec& f, double gamma, KVariant variant, double tol) {
    auto c = factor_core(f, gamma, variant, tol);
    return {c.E, c.K, c.D, c.eta, c.value};
}

FactorValue fleming_sheu_constrained_value(const FactorModelSpec& f, double gamma, double alpha,
                                           KVariant variant, double tol) {
    if (!(alpha >= 0.0 && alpha < 1.0)) throw DomainError("fleming_sheu: alpha in [0, 1)");
    auto v = fleming_sheu_value(f, gamma * (1.0 - alpha), variant, tol);
    v.value += std::abs(gamma) * alpha * f.r;
    return v;
}

double lognormal_deflator_moment_rate(double theta_sq, double r_star, double q) {
    return 0.5 * (q * q - q) * theta_sq - q * r_star;
}

double empirical_deflator_moment_rate(std::span<const double> log_z, double T, double q) {
    if (log_z.empty() || !(T > 0.0)) throw DomainError("empirical_deflator_moment_rate: bad input");
    double mx = -INFINITY;
    for (double l : log_z) mx = std::max(mx, q * l);
    double s = 0.0;
    for (double l : log_z) s += std::exp(q * l - mx);
    return (mx + std::log(s / static_cast<double>(log_z.size()))) / T;
}

DeflatorBound deflator_finiteness_check(double moment_rate, double p) {
    check_exponent(p, "deflator_finiteness_check");
    DeflatorBound b;
    b.q = -p / (1.0 - p);
    // U^(q)(z) = z^q / q has the sign of q; the signed log flips for q < 0.
    // The 1/|q| constant drops out of the long-run rate.
    if (b.q == 0.0) {
        b.bound = 0.0;
    } else {
        b.bound = b.q > 0 ? moment_rate : -moment_rate;
    }
    b.finite = std::isfinite(b.bound);
    b.cer_upper = -(1.0 - p) * b.bound;
    return b;
}

}  // namespace ddlab
