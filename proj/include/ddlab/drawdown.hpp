#pragma once

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ddlab/monotone_map.hpp"

namespace ddlab {

enum class DrawdownKind { linear, constant, piecewise_linear, tabulated, relaxed };

std::string to_string(DrawdownKind k);
DrawdownKind drawdown_kind_from_string(const std::string& s);

/// A drawdown function w: the wealth floor as a function of the running
/// maximum. Valid specs are nondecreasing (relaxed specs excepted) and satisfy
/// 0 < w(x)/x <= alpha1 < 1 on the evaluation domain [v0, inf).
///
/// Knot-based kinds take (x, w(x)) pairs with ascending x. Below the first knot
/// w is proportional to x; beyond the last knot it continues with
/// `tail_slope`. piecewise_linear interpolates linearly between knots,
/// tabulated uses a monotone cubic through the knots.
class DrawdownSpec {
public:
    static DrawdownSpec linear(double alpha);
    static DrawdownSpec constant(double c);
    static DrawdownSpec piecewise_linear(std::vector<std::pair<double, double>> knots,
                                         double tail_slope = 0.0);
    static DrawdownSpec tabulated(std::vector<std::pair<double, double>> knots,
                                  double tail_slope = 0.0);

    double operator()(double x) const;

    DrawdownKind kind() const { return kind_; }
    /// alpha for linear, c for constant.
    double parameter() const { return param_; }
    const std::vector<std::pair<double, double>>& knots() const { return knots_; }
    double tail_slope() const { return tail_slope_; }
    /// Abscissae where w is not smooth; quadrature splits there.
    std::vector<double> breakpoints() const;

    /// Tightest alpha1 with w(x)/x <= alpha1 on [v0, inf). Throws DomainError
    /// if the bound reaches 1 or w(x)/x <= 0 somewhere (for relaxed specs the
    /// check runs on `grid_max_factor` * v0 worth of log grid).
    double alpha1(double v0) const;

    /// Relaxation w_n = (1 + 1/n) w - x/n. Not necessarily nondecreasing.
    DrawdownSpec relaxed(int n) const;
    /// For relaxed specs: the original w and n.
    const DrawdownSpec* relaxed_base() const { return base_.get(); }
    int relaxation_order() const { return n_; }

private:
    DrawdownSpec() = default;
    double eval_knots(double x) const;

    DrawdownKind kind_ = DrawdownKind::linear;
    double param_ = 0.0;
    std::vector<std::pair<double, double>> knots_;
    double tail_slope_ = 0.0;
    std::vector<double> cubic_slopes_;
    std::shared_ptr<const DrawdownSpec> base_;
    int n_ = 0;
};

/// Upper end of the log grid (as a multiple of v0) used when validity cannot
/// be decided analytically.
inline constexpr double kValidityGridFactor = 1e6;

struct KwOptions {
    /// Build K_w by quadrature even when a closed form exists.
    bool force_quadrature = false;
    double quadrature_tol = 1e-10;
};

/// K_w(x) = v0 exp(int_{v0}^x du / (u - w(u))) on [v0, inf).
MonotoneMap build_kw(const DrawdownSpec& w, double v0, const KwOptions& opts = {});

/// F_w: inverse of K on [v0, inf), extended below v0 by the tangent line at v0
/// (or by `hook`). Rejects K whose implied floor x - K/K' vanishes at v0.
MonotoneMap build_fw(const MonotoneMap& K, double v0, const DrawdownSpec& w,
                     std::optional<MonotoneMap::ExtensionHook> hook = std::nullopt);

struct TransformPair {
    double v0 = 1.0;
    DrawdownSpec w;
    MonotoneMap K;
    MonotoneMap F;
};

TransformPair make_transform_pair(const DrawdownSpec& w, double v0, const KwOptions& opts = {});

/// Replaces K by a tabulated copy reaching at least `max_wealth` (in K's
/// argument units) times the safety factor; F becomes its numerical inverse.
TransformPair tabulated_pair(const TransformPair& pair, double max_wealth,
                             double safety_factor = 4.0);

/// w_n with its transform pair; K_n = v0^{1/(1+n)} K^{n/(1+n)} and
/// F_n(v) = F(v0^{-1/n} v^{(1+n)/n}) on [v0, inf), both from the base pair.
std::pair<DrawdownSpec, TransformPair> relax_wn(const TransformPair& base, int n);
std::pair<DrawdownSpec, TransformPair> relax_wn(const DrawdownSpec& w, int n, double v0);

}  // namespace ddlab
