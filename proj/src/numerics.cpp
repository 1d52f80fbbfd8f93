#include "ddlab/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "ddlab/errors.hpp"

namespace ddlab::numerics {

namespace {

struct SimpsonState {
    const std::function<double(double)>& f;
    const QuadratureOptions& opts;
};

double simpson_recurse(const SimpsonState& st, double a, double b, double fa, double fm,
                       double fb, double whole, double tol, int depth) {
    const double m = 0.5 * (a + b);
    const double lm = 0.5 * (a + m);
    const double rm = 0.5 * (m + b);
    const double flm = st.f(lm);
    const double frm = st.f(rm);
    const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    const double delta = left + right - whole;
    if (!std::isfinite(delta)) {
        throw DomainError("adaptive_simpson: non-finite integrand on [" + std::to_string(a) +
                          ", " + std::to_string(b) + "]");
    }
    if (std::abs(delta) <= 15.0 * tol) {
        return left + right + delta / 15.0;
    }
    if (depth >= st.opts.max_depth) {
        std::ostringstream os;
        os << "adaptive_simpson: tolerance not met on [" << a << ", " << b << "] (residual "
           << delta << ")";
        throw ConvergenceError(os.str());
    }
    return simpson_recurse(st, a, m, fa, flm, fm, left, 0.5 * tol, depth + 1) +
           simpson_recurse(st, m, b, fm, frm, fb, right, 0.5 * tol, depth + 1);
}

}  // namespace

double adaptive_simpson(const std::function<double(double)>& f, double a, double b,
                        const QuadratureOptions& opts) {
    if (a == b) return 0.0;
    if (b < a) return -adaptive_simpson(f, b, a, opts);
    const double fa = f(a);
    const double fb = f(b);
    const double fm = f(0.5 * (a + b));
    const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    // Magnitude for the relative tolerance from an 8-panel composite rule;
    // a single panel badly misjudges peaked integrands.
    double mag = 0.0;
    {
        const double h = (b - a) / 16.0;
        double s = fa + fb;
        for (int i = 1; i < 16; ++i) s += (i % 2 ? 4.0 : 2.0) * f(a + i * h);
        mag = std::abs(s * h / 3.0);
    }
    const double tol = std::max(opts.abs_tol, opts.rel_tol * mag);
    const SimpsonState st{f, opts};
    return simpson_recurse(st, a, b, fa, fm, fb, whole, tol, 0);
}

double adaptive_simpson_split(const std::function<double(double)>& f, double a, double b,
                              std::span<const double> breakpoints,
                              const QuadratureOptions& opts) {
    if (b < a) return -adaptive_simpson_split(f, b, a, breakpoints, opts);
    double total = 0.0;
    double left = a;
    for (double k : breakpoints) {
        if (k > left && k < b) {
            total += adaptive_simpson(f, left, k, opts);
            left = k;
        }
    }
    total += adaptive_simpson(f, left, b, opts);
    return total;
}

double invert_increasing(const std::function<double(double)>& f,
                         const std::function<double(double)>& df, double y, double lo,
                         double hi, const InversionOptions& opts) {
    double flo = f(lo);
    double fhi = f(hi);
    const double slack = 4.0 * std::numeric_limits<double>::epsilon() * std::abs(y);
    if (y < flo && y >= flo - slack) return lo;
    if (y > fhi && y <= fhi + slack) return hi;
    if (!(flo <= y && y <= fhi)) {
        std::ostringstream os;
        os << "invert_increasing: target " << y << " not bracketed by [" << flo << ", " << fhi
           << "]";
        throw DomainError(os.str());
    }
    if (y == flo) return lo;
    if (y == fhi) return hi;
    double x = 0.5 * (lo + hi);
    for (int it = 0; it < opts.max_iter; ++it) {
        const double fx = f(x) - y;
        if (fx == 0.0) return x;
        if (fx < 0.0) {
            lo = x;
        } else {
            hi = x;
        }
        const double d = df(x);
        double next = (d > 0.0 && std::isfinite(d)) ? x - fx / d : lo - 1.0;
        if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
        if (std::abs(next - x) <= opts.rel_tol * std::abs(x) || hi - lo <= opts.rel_tol * std::abs(x)) {
            return next;
        }
        x = next;
    }
    throw ConvergenceError("invert_increasing: iteration budget exhausted");
}

std::vector<double> log_grid(double lo, double hi, std::size_t n) {
    if (!(lo > 0.0 && hi >= lo) || n < 2) {
        throw DomainError("log_grid: need 0 < lo <= hi and n >= 2");
    }
    std::vector<double> g(n);
    const double a = std::log(lo);
    const double step = (std::log(hi) - a) / static_cast<double>(n - 1);
    for (std::size_t i = 0; i < n; ++i) g[i] = std::exp(a + step * static_cast<double>(i));
    g.front() = lo;
    g.back() = hi;
    return g;
}

Pchip::Pchip(std::vector<double> x, std::vector<double> y) : x_(std::move(x)), y_(std::move(y)) {
    const std::size_t n = x_.size();
    if (n < 2 || y_.size() != n) throw DomainError("Pchip: need at least two matching nodes");
    for (std::size_t i = 1; i < n; ++i) {
        if (!(x_[i] > x_[i - 1])) throw DomainError("Pchip: abscissae must be increasing");
    }
    std::vector<double> h(n - 1), delta(n - 1);
    for (std::size_t i = 0; i + 1 < n; ++i) {
        h[i] = x_[i + 1] - x_[i];
        delta[i] = (y_[i + 1] - y_[i]) / h[i];
    }
    d_.assign(n, 0.0);
    if (n == 2) {
        d_[0] = d_[1] = delta[0];
        return;
    }
    for (std::size_t i = 1; i + 1 < n; ++i) {
        if (delta[i - 1] * delta[i] <= 0.0) {
            d_[i] = 0.0;
        } else {
            const double w1 = 2.0 * h[i] + h[i - 1];
            const double w2 = h[i] + 2.0 * h[i - 1];
            d_[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
        }
    }
    auto end_slope = [](double h0, double h1, double d0, double d1) {
        double d = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
        if (d * d0 <= 0.0) return 0.0;
        if (d0 * d1 <= 0.0 && std::abs(d) > std::abs(3.0 * d0)) return 3.0 * d0;
        return d;
    };
    d_[0] = end_slope(h[0], h[1], delta[0], delta[1]);
    d_[n - 1] = end_slope(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
}

std::size_t Pchip::segment(double x) const {
    auto it = std::upper_bound(x_.begin(), x_.end(), x);
    std::size_t i = (it == x_.begin()) ? 0 : static_cast<std::size_t>(it - x_.begin()) - 1;
    return std::min(i, x_.size() - 2);
}

double Pchip::operator()(double x) const {
    const std::size_t i = segment(x);
    const double h = x_[i + 1] - x_[i];
    const double t = (x - x_[i]) / h;
    const double t2 = t * t;
    const double t3 = t2 * t;
    const double h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
    const double h10 = t3 - 2.0 * t2 + t;
    const double h01 = -2.0 * t3 + 3.0 * t2;
    const double h11 = t3 - t2;
    return h00 * y_[i] + h10 * h * d_[i] + h01 * y_[i + 1] + h11 * h * d_[i + 1];
}

double Pchip::derivative(double x) const {
    const std::size_t i = segment(x);
    const double h = x_[i + 1] - x_[i];
    const double t = (x - x_[i]) / h;
    const double t2 = t * t;
    const double dh00 = (6.0 * t2 - 6.0 * t) / h;
    const double dh10 = 3.0 * t2 - 4.0 * t + 1.0;
    const double dh01 = (-6.0 * t2 + 6.0 * t) / h;
    const double dh11 = 3.0 * t2 - 2.0 * t;
    return dh00 * y_[i] + dh10 * d_[i] + dh01 * y_[i + 1] + dh11 * d_[i + 1];
}

LinearFit weighted_linear_fit(std::span<const double> x, std::span<const double> y,
                              std::span<const double> weights) {
    const std::size_t n = x.size();
    if (n < 2 || y.size() != n || (!weights.empty() && weights.size() != n)) {
        throw DomainError("weighted_linear_fit: need >= 2 matching points");
    }
    double sw = 0.0, sx = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double wi = weights.empty() ? 1.0 : weights[i];
        sw += wi;
        sx += wi * x[i];
    }
    const double xbar = sx / sw;
    double sxx = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double wi = weights.empty() ? 1.0 : weights[i];
        sxx += wi * (x[i] - xbar) * (x[i] - xbar);
    }
    if (!(sxx > 0.0)) throw DomainError("weighted_linear_fit: degenerate abscissae");
    LinearFit fit;
    fit.slope_coefficients.resize(n);
    double ybar = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double wi = weights.empty() ? 1.0 : weights[i];
        fit.slope_coefficients[i] = wi * (x[i] - xbar) / sxx;
        fit.slope += fit.slope_coefficients[i] * y[i];
        ybar += wi * y[i];
    }
    ybar /= sw;
    fit.intercept = ybar - fit.slope * xbar;
    return fit;
}

}  // namespace ddlab::numerics
