#include "ddlab/drawdown.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <shared_mutex>
#include <sstream>

#include "ddlab/errors.hpp"
#include "ddlab/numerics.hpp"

namespace ddlab {

std::string to_string(DrawdownKind k) {
    switch (k) {
        case DrawdownKind::linear: return "linear";
        case DrawdownKind::constant: return "constant";
        case DrawdownKind::piecewise_linear: return "piecewise-linear";
        case DrawdownKind::tabulated: return "tabulated";
        case DrawdownKind::relaxed: return "relaxed";
    }
    return "unknown";
}

DrawdownKind drawdown_kind_from_string(const std::string& s) {
    if (s == "linear") return DrawdownKind::linear;
    if (s == "constant") return DrawdownKind::constant;
    if (s == "piecewise-linear" || s == "piecewise_linear") return DrawdownKind::piecewise_linear;
    if (s == "tabulated") return DrawdownKind::tabulated;
    throw DomainError("unknown drawdown kind '" + s + "'");
}

namespace {

void validate_knots(const std::vector<std::pair<double, double>>& knots, double tail_slope,
                    std::size_t min_knots) {
    if (knots.size() < min_knots) {
        throw DomainError("drawdown knots: need at least " + std::to_string(min_knots));
    }
    for (std::size_t i = 0; i < knots.size(); ++i) {
        const auto [x, w] = knots[i];
        if (!(x > 0.0) || !(w > 0.0) || !std::isfinite(x) || !std::isfinite(w)) {
            throw DomainError("drawdown knots: x and w(x) must be positive");
        }
        if (!(w < x)) {
            std::ostringstream os;
            os << "drawdown knots: w(" << x << ") = " << w << " touches or exceeds x";
            throw DomainError(os.str());
        }
        if (i > 0) {
            if (!(x > knots[i - 1].first)) throw DomainError("drawdown knots: x must ascend");
            if (w < knots[i - 1].second) throw DomainError("drawdown knots: w must be nondecreasing");
        }
    }
    if (!(tail_slope >= 0.0 && tail_slope < 1.0)) {
        throw DomainError("drawdown tail slope must lie in [0, 1)");
    }
}

}  // namespace

DrawdownSpec DrawdownSpec::linear(double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) {
        throw DomainError("linear drawdown: alpha must lie in (0, 1)");
    }
    DrawdownSpec s;
    s.kind_ = DrawdownKind::linear;
    s.param_ = alpha;
    return s;
}

DrawdownSpec DrawdownSpec::constant(double c) {
    if (!(c > 0.0) || !std::isfinite(c)) throw DomainError("constant drawdown: c must be positive");
    DrawdownSpec s;
    s.kind_ = DrawdownKind::constant;
    s.param_ = c;
    return s;
}

DrawdownSpec DrawdownSpec::piecewise_linear(std::vector<std::pair<double, double>> knots,
                                            double tail_slope) {
    validate_knots(knots, tail_slope, 1);
    DrawdownSpec s;
    s.kind_ = DrawdownKind::piecewise_linear;
    s.knots_ = std::move(knots);
    s.tail_slope_ = tail_slope;
    return s;
}

DrawdownSpec DrawdownSpec::tabulated(std::vector<std::pair<double, double>> knots,
                                     double tail_slope) {
    validate_knots(knots, tail_slope, 2);
    DrawdownSpec s;
    s.kind_ = DrawdownKind::tabulated;
    s.knots_ = std::move(knots);
    s.tail_slope_ = tail_slope;
    std::vector<double> xs, ys;
    for (const auto& [x, w] : s.knots_) {
        xs.push_back(x);
        ys.push_back(w);
    }
    const numerics::Pchip p(xs, ys);
    for (std::size_t i = 0; i < xs.size(); ++i) s.cubic_slopes_.push_back(p.derivative(xs[i]));
    return s;
}

double DrawdownSpec::eval_knots(double x) const {
    const auto& [x0, w0] = knots_.front();
    if (x <= x0) return w0 * x / x0;
    const auto& [xl, wl] = knots_.back();
    if (x >= xl) return wl + tail_slope_ * (x - xl);
    auto it = std::upper_bound(knots_.begin(), knots_.end(), x,
                               [](double v, const auto& k) { return v < k.first; });
    const std::size_t i = static_cast<std::size_t>(it - knots_.begin()) - 1;
    const auto& [xa, wa] = knots_[i];
    const auto& [xb, wb] = knots_[i + 1];
    const double h = xb - xa;
    const double t = (x - xa) / h;
    if (kind_ == DrawdownKind::piecewise_linear) return wa + t * (wb - wa);
    const double t2 = t * t;
    const double t3 = t2 * t;
    return (2 * t3 - 3 * t2 + 1) * wa + (t3 - 2 * t2 + t) * h * cubic_slopes_[i] +
           (-2 * t3 + 3 * t2) * wb + (t3 - t2) * h * cubic_slopes_[i + 1];
}

double DrawdownSpec::operator()(double x) const {
    switch (kind_) {
        case DrawdownKind::linear: return param_ * x;
        case DrawdownKind::constant: return param_;
        case DrawdownKind::piecewise_linear:
        case DrawdownKind::tabulated: return eval_knots(x);
        case DrawdownKind::relaxed: {
            const double inv_n = 1.0 / n_;
            return (1.0 + inv_n) * (*base_)(x) - inv_n * x;
        }
    }
    return 0.0;
}

std::vector<double> DrawdownSpec::breakpoints() const {
    if (kind_ == DrawdownKind::relaxed) return base_->breakpoints();
    std::vector<double> b;
    for (const auto& k : knots_) b.push_back(k.first);
    return b;
}

double DrawdownSpec::alpha1(double v0) const {
    if (!(v0 > 0.0)) throw DomainError("drawdown: v0 must be positive");
    auto fail = [&](const std::string& why) {
        std::ostringstream os;
        os << to_string(kind_) << " drawdown invalid on [" << v0 << ", inf): " << why;
        throw DomainError(os.str());
    };
    double sup = 0.0;
    switch (kind_) {
        case DrawdownKind::linear:
            return param_;
        case DrawdownKind::constant:
            if (!(param_ < v0)) fail("constant floor c must be below v0");
            return param_ / v0;
        case DrawdownKind::piecewise_linear: {
            // w(x)/x is monotone on each affine piece, so endpoints suffice.
            sup = (*this)(v0) / v0;
            for (const auto& [x, w] : knots_) {
                if (x > v0) sup = std::max(sup, w / x);
            }
            sup = std::max(sup, tail_slope_);
            break;
        }
        case DrawdownKind::tabulated:
        case DrawdownKind::relaxed: {
            std::vector<double> grid = numerics::log_grid(v0, v0 * kValidityGridFactor, 4096);
            for (double b : breakpoints()) {
                if (b > v0) grid.push_back(b);
            }
            double inf = 1.0;
            for (double x : grid) {
                const double r = (*this)(x) / x;
                sup = std::max(sup, r);
                inf = std::min(inf, r);
            }
            if (kind_ == DrawdownKind::tabulated) sup = std::max(sup, tail_slope_);
            if (!(inf > 0.0)) {
                std::ostringstream os;
                os << "w(x)/x reaches " << inf << " <= 0 on the validity grid";
                fail(os.str());
            }
            break;
        }
    }
    if (!(sup < 1.0)) fail("w(x)/x reaches 1");
    return sup;
}

DrawdownSpec DrawdownSpec::relaxed(int n) const {
    if (n <= 0) throw DomainError("relaxation order n must be positive");
    if (kind_ == DrawdownKind::linear) {
        const double alpha_n = (1.0 + 1.0 / n) * param_ - 1.0 / n;
        if (!(alpha_n > 0.0)) {
            std::ostringstream os;
            os << "relaxation n=" << n << " of linear alpha=" << param_
               << " gives w_n(x)/x = " << alpha_n << " <= 0";
            throw DomainError(os.str());
        }
        return linear(alpha_n);
    }
    DrawdownSpec s;
    s.kind_ = DrawdownKind::relaxed;
    s.base_ = std::make_shared<const DrawdownSpec>(*this);
    s.n_ = n;
    return s;
}

namespace {

/// K_w by adaptive quadrature. Cumulative integrals are cached at nodes
/// (log grid merged with w's breakpoints); the node table grows on demand.
class QuadratureKImpl final : public MonotoneMap::Impl {
public:
    QuadratureKImpl(DrawdownSpec w, double v0, double alpha1, double tol)
        : w_(std::move(w)), v0_(v0), alpha1_(alpha1), breaks_(w_.breakpoints()) {
        opts_.abs_tol = tol;
        opts_.rel_tol = tol;
        nodes_.push_back({v0_, 0.0});
        extend_to(v0_ * 1e3);
    }

    double eval(double x) const override { return v0_ * std::exp(log_ratio(x)); }

    double deriv(double x) const override {
        const double gap = x - w_(x);
        return eval(x) / gap;
    }

    double inverse(double y) const override {
        if (y < v0_) {
            std::ostringstream os;
            os << "K_w inverse: argument " << y << " below v0 = " << v0_;
            throw DomainError(os.str());
        }
        // x <= K(x) <= v0 (x/v0)^{1/(1-alpha1)} brackets the preimage.
        const double lo = std::max(v0_, v0_ * std::pow(y / v0_, 1.0 - alpha1_) * (1.0 - 1e-6));
        const double hi = y * (1.0 + 1e-9);
        return numerics::invert_increasing([this](double x) { return eval(x); },
                                           [this](double x) { return deriv(x); }, y, lo, hi);
    }

    double lower() const override { return v0_; }
    Representation representation() const override { return Representation::quadrature; }

private:
    struct Node {
        double x;
        double integral;
    };

    double integrand(double u) const { return 1.0 / (u - w_(u)); }

    double log_ratio(double x) const {
        if (x < v0_) {
            std::ostringstream os;
            os << "K_w: argument " << x << " below v0 = " << v0_;
            throw DomainError(os.str());
        }
        Node base{};
        {
            std::shared_lock lock(mutex_);
            if (x <= nodes_.back().x) {
                base = locate(x);
            }
        }
        if (base.x == 0.0) {
            std::unique_lock lock(mutex_);
            double target = nodes_.back().x;
            while (target < x) target *= 10.0;
            extend_to_locked(target);
            base = locate(x);
        }
        if (x == base.x) return base.integral;
        return base.integral +
               numerics::adaptive_simpson([this](double u) { return integrand(u); }, base.x, x,
                                          opts_);
    }

    Node locate(double x) const {
        auto it = std::upper_bound(nodes_.begin(), nodes_.end(), x,
                                   [](double v, const Node& n) { return v < n.x; });
        return *(it - 1);
    }

    void extend_to(double target) {
        std::unique_lock lock(mutex_);
        extend_to_locked(target);
    }

    void extend_to_locked(double target) const {
        const double start = nodes_.back().x;
        if (target <= start) return;
        const double decades = std::log10(target / start);
        const auto n = static_cast<std::size_t>(std::ceil(decades * kNodesPerDecade)) + 1;
        std::vector<double> xs = numerics::log_grid(start, target, std::max<std::size_t>(n, 2));
        for (double b : breaks_) {
            if (b > start && b < target) xs.push_back(b);
        }
        std::sort(xs.begin(), xs.end());
        xs.erase(std::unique(xs.begin(), xs.end()), xs.end());
        for (double x : xs) {
            const Node& last = nodes_.back();
            if (x <= last.x) continue;
            const double piece = numerics::adaptive_simpson(
                [this](double u) { return integrand(u); }, last.x, x, opts_);
            nodes_.push_back({x, last.integral + piece});
        }
    }

    static constexpr double kNodesPerDecade = 32.0;

    DrawdownSpec w_;
    double v0_;
    double alpha1_;
    std::vector<double> breaks_;
    numerics::QuadratureOptions opts_;
    mutable std::shared_mutex mutex_;
    mutable std::vector<Node> nodes_;
};

}  // namespace

MonotoneMap build_kw(const DrawdownSpec& w, double v0, const KwOptions& opts) {
    const double alpha1 = w.alpha1(v0);
    if (!opts.force_quadrature) {
        if (w.kind() == DrawdownKind::linear) {
            const double k = 1.0 / (1.0 - w.parameter());
            return MonotoneMap::power(std::pow(v0, 1.0 - k), k, v0);
        }
        if (w.kind() == DrawdownKind::constant) {
            const double c = w.parameter();
            return MonotoneMap::affine(-c * v0 / (v0 - c), v0 / (v0 - c), v0);
        }
    }
    return MonotoneMap(std::make_shared<QuadratureKImpl>(w, v0, alpha1, opts.quadrature_tol));
}

MonotoneMap build_fw(const MonotoneMap& K, double v0, const DrawdownSpec& w,
                     std::optional<MonotoneMap::ExtensionHook> hook) {
    const double floor_at_v0 = v0 - K(v0) / K.deriv(v0);
    if (!(floor_at_v0 > 0.0)) {
        std::ostringstream os;
        os << "build_fw: K implies floor w(v0) = " << floor_at_v0
           << " <= 0; a drawdown function must be strictly positive";
        throw DomainError(os.str());
    }
    const double expected = w(v0);
    if (std::abs(floor_at_v0 - expected) > 1e-8 * v0) {
        std::ostringstream os;
        os << "build_fw: K implies w(v0) = " << floor_at_v0 << " but the drawdown gives " << expected;
        throw DomainError(os.str());
    }
    MonotoneMap upper;
    if (K.representation() == Representation::closed_form && w.kind() == DrawdownKind::linear) {
        const double a = w.parameter();
        upper = MonotoneMap::power(std::pow(v0, a), 1.0 - a, v0);
    } else if (K.representation() == Representation::closed_form &&
               w.kind() == DrawdownKind::constant) {
        const double c = w.parameter();
        upper = MonotoneMap::affine(c, (v0 - c) / v0, v0);
    } else {
        upper = MonotoneMap::inverse_of(K);
    }
    if (hook) return MonotoneMap::hooked_extension(std::move(upper), v0, std::move(*hook));
    return MonotoneMap::linear_extension(std::move(upper), v0);
}

TransformPair make_transform_pair(const DrawdownSpec& w, double v0, const KwOptions& opts) {
    TransformPair p{v0, w, build_kw(w, v0, opts), {}};
    p.F = build_fw(p.K, v0, w);
    return p;
}

TransformPair tabulated_pair(const TransformPair& pair, double max_wealth, double safety_factor) {
    const double reach = std::max(pair.v0 * 10.0, pair.F(std::max(max_wealth, pair.v0)) * safety_factor);
    TransformPair out = pair;
    out.K = MonotoneMap::tabulate(pair.K, reach);
    out.F = MonotoneMap::linear_extension(MonotoneMap::inverse_of(out.K), pair.v0);
    return out;
}

std::pair<DrawdownSpec, TransformPair> relax_wn(const TransformPair& base, int n) {
    DrawdownSpec wn = base.w.relaxed(n);
    wn.alpha1(base.v0);
    const double v0 = base.v0;
    const double dn = static_cast<double>(n);
    TransformPair p{v0, wn, {}, {}};
    p.K = MonotoneMap::power_of(base.K, std::pow(v0, 1.0 / (1.0 + dn)), dn / (1.0 + dn));
    // F_n(v) = F(v0^{-1/n} v^{(1+n)/n}) on [v0, inf); below v0 the tangent line.
    p.F = MonotoneMap::linear_extension(
        MonotoneMap::precompose_power(base.F, std::pow(v0, -1.0 / dn), (1.0 + dn) / dn, v0), v0);
    return {wn, p};
}

std::pair<DrawdownSpec, TransformPair> relax_wn(const DrawdownSpec& w, int n, double v0) {
    return relax_wn(make_transform_pair(w, v0), n);
}

}  // namespace ddlab
