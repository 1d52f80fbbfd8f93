#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace ddlab::numerics {

struct QuadratureOptions {
    double abs_tol = 1e-10;
    double rel_tol = 1e-10;
    int max_depth = 60;
};

/// Adaptive Simpson quadrature of f over [a, b] with Richardson correction.
/// Throws ConvergenceError when the depth budget is exhausted before the
/// combined absolute+relative tolerance is met.
double adaptive_simpson(const std::function<double(double)>& f, double a, double b,
                        const QuadratureOptions& opts = {});

/// Same as above, but splits [a, b] at every breakpoint strictly inside it.
double adaptive_simpson_split(const std::function<double(double)>& f, double a, double b,
                              std::span<const double> breakpoints,
                              const QuadratureOptions& opts = {});

struct InversionOptions {
    double rel_tol = 1e-12;
    int max_iter = 400;
};

/// Solves f(x) = y for strictly increasing f on [lo, hi] by bisection
/// safeguarded Newton steps. `df` must be positive on the bracket. The bracket
/// must satisfy f(lo) <= y <= f(hi); otherwise DomainError.
double invert_increasing(const std::function<double(double)>& f,
                         const std::function<double(double)>& df, double y, double lo,
                         double hi, const InversionOptions& opts = {});

/// `n` points log-spaced on [lo, hi], endpoints included.
std::vector<double> log_grid(double lo, double hi, std::size_t n);

/// Monotone piecewise cubic Hermite interpolant (Fritsch-Carlson slopes).
class Pchip {
public:
    Pchip() = default;
    Pchip(std::vector<double> x, std::vector<double> y);

    double operator()(double x) const;
    double derivative(double x) const;

    double front() const { return x_.front(); }
    double back() const { return x_.back(); }
    std::size_t size() const { return x_.size(); }

private:
    std::size_t segment(double x) const;

    std::vector<double> x_;
    std::vector<double> y_;
    std::vector<double> d_;
};

/// Least-squares slope and intercept with weights; `weights` may be empty
/// (ordinary least squares). Also returns the linear coefficients c such that
/// slope = sum c_i y_i, which callers use for delta-method standard errors.
struct LinearFit {
    double slope = 0.0;
    double intercept = 0.0;
    std::vector<double> slope_coefficients;
};

LinearFit weighted_linear_fit(std::span<const double> x, std::span<const double> y,
                              std::span<const double> weights = {});

}  // namespace ddlab::numerics
