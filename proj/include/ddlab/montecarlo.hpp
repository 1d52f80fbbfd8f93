#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ddlab/azema_yor.hpp"
#include "ddlab/drawdown.hpp"
#include "ddlab/markets.hpp"
#include "ddlab/utilities.hpp"

namespace ddlab {

enum class Scheme { exact_lognormal, euler };

std::string to_string(Scheme s);
Scheme scheme_from_string(const std::string& s);

struct SimConfig {
    std::size_t n_paths = 1000;
    /// Years.
    double dt = 1e-3;
    /// Ascending horizons in years, each a multiple of dt.
    std::vector<double> horizons{1.0};
    std::uint64_t seed = 1;
    Scheme scheme = Scheme::exact_lognormal;
    /// 0 picks DDLAB_WORKERS or the hardware concurrency.
    unsigned workers = 0;
    /// Paths 2k and 2k+1 use negated normals.
    bool antithetic = false;
    double v0 = 1.0;

    void validate() const;
    unsigned resolved_workers() const;
};

/// Fractions of wealth held in each asset, as a function of the market piece.
class Policy {
public:
    static Policy fixed(Eigen::VectorXd fractions);
    /// scale * sigma^{-T} theta / (1 - p); p = 0 gives the log-optimal policy.
    static Policy merton(double p, double scale = 1.0);

    Eigen::VectorXd fractions(const CompleteMarketSpec& m, double t) const;
    std::string describe() const;

private:
    bool merton_ = false;
    double p_ = 0.0;
    double scale_ = 1.0;
    Eigen::VectorXd fixed_;
};

/// Deterministic per-path generator: mt19937_64 seeded from (seed, stream).
std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t stream);

/// Full paths of V in numeraire units on the dt grid up to the last horizon.
/// Paths that hit zero under the Euler scheme are dropped and counted.
struct PathBatch {
    std::vector<SamplePath> paths;
    std::size_t exploded = 0;
};
PathBatch simulate_wealth(const CompleteMarketSpec& m, const Policy& policy, const SimConfig& cfg);

/// Per-horizon terminal statistics of V and, when a transform is supplied,
/// of X = M^F(V). Arrays are horizon-major: index h * n_paths + i.
struct HorizonSamples {
    std::vector<double> horizons;
    std::size_t n_paths = 0;
    std::vector<double> v;
    std::vector<double> vbar;
    std::vector<double> x;
    /// Smallest X - w(Xbar) seen on the grid up to each horizon.
    std::vector<double> min_margin;
    /// 0 for paths aborted by the Euler explosion guard.
    std::vector<std::uint8_t> valid;

    double at(const std::vector<double>& a, std::size_t h, std::size_t i) const {
        return a[h * n_paths + i];
    }
    std::size_t valid_count() const;
};

/// Streams paths without storing them. Without a transform, with the exact
/// scheme, V is sampled only at the horizons.
HorizonSamples simulate_horizons(const CompleteMarketSpec& m, const Policy& policy,
                                 const SimConfig& cfg, const TransformPair* transform = nullptr);

enum class Objective { cer, dollar_cer, tilde_cer };

std::string to_string(Objective o);
Objective objective_from_string(const std::string& s);

struct HorizonPoint {
    double T = 0.0;
    /// Signed log of E[U] (CER kinds) or E[U] (tilde kind).
    double ordinate = 0.0;
    double stderr = 0.0;
    /// 95% half-width.
    double ci = 0.0;
};

struct CerEstimate {
    Objective objective = Objective::cer;
    double slope = 0.0;
    double intercept = 0.0;
    double stderr = 0.0;
    std::vector<HorizonPoint> per_horizon;
    /// Index of the first horizon used in the fit.
    std::size_t fit_from = 0;
    std::size_t n_used = 0;
};

/// Growth-rate estimate of U applied to wealth samples (one array per
/// horizon, horizon-major, n values each). For dollar_cer the wealth is
/// multiplied by N_T = exp(int_0^T r) of `numeraire` first. The slope is a
/// weighted fit over the upper half of the horizons; its standard error uses
/// per-path influence terms so the correlation between horizons is kept.
CerEstimate estimate_growth(const std::vector<double>& horizons, const std::vector<double>& wealth,
                            const std::vector<std::uint8_t>& valid, const UtilitySpec& U,
                            Objective objective, const CompleteMarketSpec* numeraire = nullptr);

struct Check {
    std::string name;
    double measure = 0.0;
    double limit = 0.0;
    bool pass = false;
    std::string note;
};

struct NamedEstimate {
    std::string name;
    CerEstimate estimate;
};

struct VerificationReport {
    std::string kind;
    std::vector<std::pair<std::string, double>> closed_form;
    std::vector<NamedEstimate> estimates;
    std::vector<Check> checks;
    std::size_t paths = 0;
    std::size_t paths_satisfying_drawdown = 0;
    double min_margin = 0.0;

    bool pass() const;
    double closed(const std::string& key) const;
    const CerEstimate& estimate(const std::string& name) const;
};

/// w(x)/x at infinity: alpha for linear w, the tail slope for knot-based w,
/// 0 for constant w.
double asymptotic_ratio(const DrawdownSpec& w);

struct VerifyOptions {
    /// Relative tolerance against the closed form.
    double rel_tol = 0.10;
    /// Agreement of the two sides in units of the combined standard error.
    double stderr_multiple = 2.0;
    /// Multiplier on the optimal policy (1 = optimal).
    double policy_scale = 1.0;
};

/// Merton V* at gamma (1 - alpha), X = M^{F_w}(V*); compares R_{U_gamma}(X)
/// and R_{U_gamma o F_w}(V*) with the closed form; checks the drawdown on X.
VerificationReport verify_equivalence_main(const CompleteMarketSpec& m, double gamma,
                                           const DrawdownSpec& w, const SimConfig& cfg,
                                           const VerifyOptions& opts = {});

/// Dollar version: utilities see X N and V N with N_t = exp(int r); the
/// constraint binds discounted X.
VerificationReport verify_equivalence_dollars(const CompleteMarketSpec& m, double gamma,
                                              const DrawdownSpec& w, const SimConfig& cfg,
                                              const VerifyOptions& opts = {});

/// Log investor under the tilde objective: log-optimal V*, X = M^{F_w}(V*).
/// With `dollars`, wealth is multiplied by N before taking logs.
VerificationReport verify_log_theorem(const CompleteMarketSpec& m, const DrawdownSpec& w,
                                      const SimConfig& cfg, bool dollars = false,
                                      const VerifyOptions& opts = {});

struct ConvergenceOptions {
    std::vector<int> n_list{2, 5, 20, 100};
    /// n for the Monte Carlo spot check (0 to skip).
    int spot_n = 5;
    double spot_rel_tol = 0.10;
    /// Closed-form value at the largest n must be within this of the limit.
    double limit_rel_tol = 0.01;
    /// Extra v0 values for the invariance check (empty to skip).
    std::vector<double> v0_values{};
    /// Floor mix eps for the invariance check (0 to skip).
    double floor_mix = 0.0;
};

/// Closed-form CER of U_gamma o F_n for linear w against the limit
/// gamma (1 - alpha), plus a Monte Carlo spot check.
VerificationReport verify_convergence_lemma(const CompleteMarketSpec& m, double gamma,
                                            const DrawdownSpec& w, const SimConfig& cfg,
                                            const ConvergenceOptions& opts = {});

/// Exponent of U_gamma o F_n for linear w: gamma (1 - alpha) (1 + n) / n.
double relaxed_exponent(double gamma, double alpha, int n);

}  // namespace ddlab
