#pragma once

#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ddlab/drawdown.hpp"

namespace ddlab {

/// Coefficients on [t_start, next t_start). The last piece extends to infinity.
struct MarketPiece {
    double t_start = 0.0;
    double r = 0.0;
    Eigen::VectorXd mu;
    Eigen::MatrixXd sigma;
};

/// Complete diffusion market with piecewise-constant deterministic coefficients.
class CompleteMarketSpec {
public:
    explicit CompleteMarketSpec(std::vector<MarketPiece> pieces);
    /// One asset, constant coefficients.
    static CompleteMarketSpec constant(double mu, double r, double sigma);

    int d() const { return static_cast<int>(pieces_.front().mu.size()); }
    const std::vector<MarketPiece>& pieces() const { return pieces_; }
    const MarketPiece& piece_at(double t) const;
    double r(double t) const { return piece_at(t).r; }
    /// Tail rate r*.
    double r_star() const { return pieces_.back().r; }
    /// Tail value of ||theta||^2, which is the long-run average.
    double theta_sq_star() const;
    /// (1/T) int_0^T ||theta_u||^2 du and (1/T) int_0^T r_u du.
    double theta_sq_average(double T) const;
    double r_average(double T) const;
    /// 2-norm condition number of sigma on each piece.
    std::vector<double> condition_numbers() const;

private:
    std::vector<MarketPiece> pieces_;
    std::vector<Eigen::VectorXd> theta_;
};

/// theta_t = sigma^{-1} (mu - r 1).
Eigen::VectorXd market_price_of_risk(const CompleteMarketSpec& m, double t);

/// Fractions of wealth sigma^{-T} theta / (1 - p); p < 1, p != 0.
Eigen::VectorXd merton_fraction(const CompleteMarketSpec& m, double p, double t);

/// |p| r* + |p| theta^2 / (2 (1 - p)).
double cer_power_unconstrained(double r_star, double theta_sq, double p);
/// |gamma| (r* + (1 - alpha) theta^2 / (2 (1 - gamma (1 - alpha)))).
double cer_drawdown_constrained(double r_star, double theta_sq, double gamma, double alpha);
double cer_power_unconstrained(const CompleteMarketSpec& m, double p);
double cer_drawdown_constrained(const CompleteMarketSpec& m, double gamma, double alpha);
/// Long-run expected log growth of the log-optimal portfolio, r* + theta^2/2.
double log_growth_optimal(double r_star, double theta_sq);

/// One step of the constrained optimal wealth: the floor gap is invested in
/// the Merton fraction at exponent gamma (1 - alpha). `returns` are the
/// discounted asset returns dS/S over the step.
double constrained_policy_step(const CompleteMarketSpec& m, double gamma, double alpha,
                               const DrawdownSpec& w, double x, double xbar,
                               std::span<const double> returns, double t);

struct FactorModelSpec {
    double r = 0.0;
    double mu1 = 0.0;
    double mu2 = 0.0;
    double sigma = 0.0;
    double rho = 0.0;
    double b = 0.0;
};

enum class KVariant {
    corrected,  ///< mu2 sigma inside the squared term, as in D
    printed,    ///< squared term without the mu2 sigma factor
};

struct FactorValue {
    double E = 0.0;
    double K = 0.0;
    double D = 0.0;
    double eta = 0.0;
    double value = 0.0;
};

/// Long-run value of the power-gamma investor in the one-factor model. gamma < 0,
/// or gamma in (0, 1) when the radicand stays nonnegative. Throws DomainError
/// on a negative radicand or when mu2^2 >= sigma^2 K^2 fails beyond `tol`.
FactorValue fleming_sheu_value(const FactorModelSpec& f, double gamma,
                               KVariant variant = KVariant::corrected, double tol = 1e-12);

/// Constrained value: value at gamma (1 - alpha) plus |gamma| alpha r.
FactorValue fleming_sheu_constrained_value(const FactorModelSpec& f, double gamma, double alpha,
                                           KVariant variant = KVariant::corrected,
                                           double tol = 1e-12);

/// lim (1/T) log E[(Z_T / N_T)^q] for a lognormal deflator with constant
/// ||theta||^2 and rate r*: (q^2 - q) theta^2 / 2 - q r*.
double lognormal_deflator_moment_rate(double theta_sq, double r_star, double q);

/// Estimate of (1/T) log E[Z^q] from samples of log Z_T, via log-sum-exp.
double empirical_deflator_moment_rate(std::span<const double> log_z, double T, double q);

struct DeflatorBound {
    double q = 0.0;
    /// R_{U^(q)}(Z/N) under the signed-log convention.
    double bound = 0.0;
    /// Implied upper bound on CER_{U^(p)}, -(1 - p) R.
    double cer_upper = 0.0;
    bool finite = false;
};

/// Finiteness check for CER_{U^(p)} from the growth rate of E[(Z/N)^q],
/// q = -p / (1 - p).
DeflatorBound deflator_finiteness_check(double moment_rate, double p);

}  // namespace ddlab
