#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "ddlab/drawdown.hpp"
#include "ddlab/monotone_map.hpp"

namespace ddlab {

enum class UtilityKind { power, log, composed, custom };

std::string to_string(UtilityKind k);

/// A nondecreasing concave utility with analytic right derivative.
/// sign() is +1 or -1 for sign-definite utilities and 0 for log-like ones.
class UtilitySpec {
public:
    using Fn = std::function<double(double)>;

    /// x^p / p, p < 1, p != 0.
    static UtilitySpec power(double p);
    static UtilitySpec log();
    /// `log_abs` (optional) returns log|U(x)| without overflow; `exponent`
    /// marks utilities known to be a positive multiple of x^exponent.
    static UtilitySpec custom(std::string name, Fn eval, Fn right_deriv, int sign,
                              Fn log_abs = nullptr, std::optional<double> exponent = std::nullopt);
    /// -exp(-x): sign-definite but with unbounded elasticity.
    static UtilitySpec exponential();
    /// x^{1/2} (1 + 1/(1 + log x)) on [1, inf); elasticity tends to 1/2 from
    /// below. Not concave near 1, so only meant as a sandwich test input.
    static UtilitySpec sandwich_probe();

    double operator()(double x) const { return eval_(x); }
    double deriv(double x) const { return deriv_(x); }
    double log_abs(double x) const;
    int sign() const { return sign_; }
    UtilityKind kind() const { return kind_; }
    const std::string& name() const { return name_; }
    /// Power exponent when U is (a positive multiple of) a power utility.
    std::optional<double> exponent() const { return exponent_; }
    /// For composed utilities: the outer utility's kind.
    std::optional<UtilityKind> outer_kind() const { return outer_; }

    /// U + kappa; sign must be preserved on (0, inf).
    UtilitySpec shifted(double kappa) const;

private:
    UtilitySpec() = default;
    friend UtilitySpec compose(const UtilitySpec&, const MonotoneMap&, std::optional<double>);

    std::string name_;
    UtilityKind kind_ = UtilityKind::custom;
    int sign_ = 1;
    Fn eval_, deriv_, log_abs_;
    std::optional<double> exponent_;
    std::optional<UtilityKind> outer_;
};

/// U o F with right derivative U'(F(x)) F'(x). `exponent_hint` records a
/// known power form (for instance p (1 - alpha) on [v0, inf) for linear w).
UtilitySpec compose(const UtilitySpec& U, const MonotoneMap& F,
                    std::optional<double> exponent_hint = std::nullopt);
/// U o F_w from a transform pair; records p (1 - alpha) for power U and linear w.
UtilitySpec compose(const UtilitySpec& U, const TransformPair& pair);

/// Relative risk aversion of the composed investor, alpha + rho (1 - alpha).
double composed_risk_aversion(double rho, double alpha);

/// x U'(x) / |U(x)|; DomainError where U(x) = 0 or x <= 0.
double elasticity(const UtilitySpec& U, double x);

struct ElasticityReport {
    double gamma = 0.0;
    double x0 = 0.0;
    /// Largest relative violation of the two-sided scaling inequality.
    double grid_max_violation = 0.0;
    std::size_t violations = 0;
    /// False when the elasticity is non-finite or keeps growing in the tail.
    bool asymptotic_elasticity_ok = true;
    std::string note;
};

struct ScalingGrids {
    std::vector<double> lambdas;
    std::vector<double> xs;
    /// 512 log points on [x0, 1e6 x0] and lambda in {1.01, 1.1, 2, 10, 100}.
    static ScalingGrids defaults(double x0);
};

/// Checks U(x) <= U(lambda x) <= lambda^gamma U(x) on all grid pairs with
/// gamma = sign * sup elasticity. For log-like utilities (sign 0) checks
/// U(x) <= U(lambda x) <= U(x) + gamma log(lambda), gamma = sup x U'(x).
ElasticityReport verify_scaling_lemma(const UtilitySpec& U, double x0, const ScalingGrids& grids,
                                      double tol = 1e-12);

struct SandwichBounds {
    double c_minus = 0.0;
    double c_plus = 0.0;
    /// Threshold past which the elasticity stays in the eps-band around gamma.
    double y0 = 0.0;
};

/// Constants with c_- x^{g-}/g- <= U(x) <= c_+ x^{g+}/g+ on [x0, inf), where
/// g-+ = gamma (1 -+ eps). The probe grid spans [x0, x_max].
SandwichBounds power_sandwich(const UtilitySpec& U, double gamma, double eps, double x0,
                              double x_max = 0.0);

}  // namespace ddlab
