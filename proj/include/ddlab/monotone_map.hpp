#pragma once

#include <functional>
#include <memory>
#include <string>

namespace ddlab {

enum class Representation {
    closed_form,  ///< analytic power/affine expression
    quadrature,   ///< K_w evaluated by adaptive quadrature of 1/(u - w(u))
    inverse,      ///< numerical inverse of another map
    tabulated,    ///< monotone cubic interpolant on a log-spaced grid
    composite,    ///< built from other maps (extensions, power relations)
};

std::string to_string(Representation r);

/// A strictly increasing map on [lower(), inf) with derivative and inverse.
///
/// Instances are immutable handles to a shared implementation and are safe to
/// evaluate concurrently. Tabulated maps extend their grid lazily under an
/// internal lock; already returned values never change.
class MonotoneMap {
public:
    class Impl {
    public:
        virtual ~Impl() = default;
        virtual double eval(double x) const = 0;
        /// Right derivative.
        virtual double deriv(double x) const = 0;
        virtual double inverse(double y) const = 0;
        virtual double lower() const = 0;
        virtual Representation representation() const = 0;
    };

    MonotoneMap() = default;
    explicit MonotoneMap(std::shared_ptr<const Impl> impl) : impl_(std::move(impl)) {}

    double operator()(double x) const { return eval(x); }
    double eval(double x) const;
    double deriv(double x) const;
    double inverse(double y) const;
    double lower() const { return impl_->lower(); }
    Representation representation() const { return impl_->representation(); }
    bool valid() const { return static_cast<bool>(impl_); }

    /// y = scale * x^exponent on [lower, inf); exponent > 0, scale > 0.
    static MonotoneMap power(double scale, double exponent, double lower);
    /// y = intercept + slope * x on [lower, inf); slope > 0.
    static MonotoneMap affine(double intercept, double slope, double lower);
    /// The inverse of `base`, defined on [base(base.lower()), inf).
    static MonotoneMap inverse_of(MonotoneMap base);
    /// y = scale * base(x)^exponent, same domain as base.
    static MonotoneMap power_of(MonotoneMap base, double scale, double exponent);
    /// y = base(scale * x^exponent) on [lower, inf).
    static MonotoneMap precompose_power(MonotoneMap base, double scale, double exponent,
                                        double lower);

    /// Map on [0, inf) equal to `base` on [pivot, inf) and to the tangent line
    /// at pivot (slope base'(pivot+)) on [0, pivot).
    static MonotoneMap linear_extension(MonotoneMap base, double pivot);

    /// User-supplied extension on [0, pivot). The hook must agree with base at
    /// pivot and keep the map increasing, concave and positive at 0; this is
    /// checked on a grid at construction (DomainError otherwise).
    struct ExtensionHook {
        std::function<double(double)> eval;
        std::function<double(double)> deriv;
    };
    static MonotoneMap hooked_extension(MonotoneMap base, double pivot, ExtensionHook hook);

    /// Monotone cubic interpolant of log(source) against log(x) on a
    /// log-spaced grid starting at source.lower() and initially reaching `hi`.
    /// Evaluations beyond the current extent grow the grid by `growth`.
    static MonotoneMap tabulate(MonotoneMap source, double hi, int points_per_decade = 200,
                                double growth = 4.0);

private:
    std::shared_ptr<const Impl> impl_;
};

}  // namespace ddlab
