#include "ddlab/monotone_map.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <shared_mutex>
#include <sstream>
#include <vector>

#include "ddlab/errors.hpp"
#include "ddlab/numerics.hpp"

namespace ddlab {

std::string to_string(Representation r) {
    switch (r) {
        case Representation::closed_form: return "closed-form";
        case Representation::quadrature: return "quadrature";
        case Representation::inverse: return "inverse";
        case Representation::tabulated: return "tabulated";
        case Representation::composite: return "composite";
    }
    return "unknown";
}

namespace {

[[noreturn]] void below_domain(const char* who, double x, double lo) {
    std::ostringstream os;
    os << who << ": argument " << x << " below domain start " << lo;
    throw DomainError(os.str());
}

class PowerImpl final : public MonotoneMap::Impl {
public:
    PowerImpl(double scale, double exponent, double lower)
        : scale_(scale), exponent_(exponent), lower_(lower) {}

    double eval(double x) const override {
        if (x < lower_) below_domain("power map", x, lower_);
        return scale_ * std::pow(x, exponent_);
    }
    double deriv(double x) const override {
        if (x < lower_) below_domain("power map", x, lower_);
        return scale_ * exponent_ * std::pow(x, exponent_ - 1.0);
    }
    double inverse(double y) const override {
        const double x = std::pow(y / scale_, 1.0 / exponent_);
        if (x < lower_ * (1.0 - 1e-14)) below_domain("power map inverse", x, lower_);
        return std::max(x, lower_);
    }
    double lower() const override { return lower_; }
    Representation representation() const override { return Representation::closed_form; }

private:
    double scale_, exponent_, lower_;
};

class AffineImpl final : public MonotoneMap::Impl {
public:
    AffineImpl(double intercept, double slope, double lower)
        : intercept_(intercept), slope_(slope), lower_(lower) {}

    double eval(double x) const override {
        if (x < lower_) below_domain("affine map", x, lower_);
        return intercept_ + slope_ * x;
    }
    double deriv(double x) const override {
        if (x < lower_) below_domain("affine map", x, lower_);
        return slope_;
    }
    double inverse(double y) const override {
        const double x = (y - intercept_) / slope_;
        if (x < lower_ - 1e-14 * std::max(1.0, std::abs(lower_))) {
            below_domain("affine map inverse", x, lower_);
        }
        return std::max(x, lower_);
    }
    double lower() const override { return lower_; }
    Representation representation() const override { return Representation::closed_form; }

private:
    double intercept_, slope_, lower_;
};

class InverseImpl final : public MonotoneMap::Impl {
public:
    explicit InverseImpl(MonotoneMap base) : base_(std::move(base)), lower_(base_(base_.lower())) {}

    double eval(double y) const override {
        if (y < lower_) below_domain("inverse map", y, lower_);
        return base_.inverse(y);
    }
    double deriv(double y) const override { return 1.0 / base_.deriv(eval(y)); }
    double inverse(double x) const override { return base_.eval(x); }
    double lower() const override { return lower_; }
    Representation representation() const override { return Representation::inverse; }

private:
    MonotoneMap base_;
    double lower_;
};

class PowerOfImpl final : public MonotoneMap::Impl {
public:
    PowerOfImpl(MonotoneMap base, double scale, double exponent)
        : base_(std::move(base)), scale_(scale), exponent_(exponent) {}

    double eval(double x) const override { return scale_ * std::pow(base_(x), exponent_); }
    double deriv(double x) const override {
        return scale_ * exponent_ * std::pow(base_(x), exponent_ - 1.0) * base_.deriv(x);
    }
    double inverse(double y) const override {
        return base_.inverse(std::pow(y / scale_, 1.0 / exponent_));
    }
    double lower() const override { return base_.lower(); }
    Representation representation() const override { return Representation::composite; }

private:
    MonotoneMap base_;
    double scale_, exponent_;
};

class PrecomposeImpl final : public MonotoneMap::Impl {
public:
    PrecomposeImpl(MonotoneMap base, double scale, double exponent, double lower)
        : base_(std::move(base)), scale_(scale), exponent_(exponent), lower_(lower) {}

    double eval(double x) const override {
        if (x < lower_) below_domain("precomposed map", x, lower_);
        return base_(scale_ * std::pow(x, exponent_));
    }
    double deriv(double x) const override {
        if (x < lower_) below_domain("precomposed map", x, lower_);
        const double inner = scale_ * std::pow(x, exponent_);
        return base_.deriv(inner) * scale_ * exponent_ * std::pow(x, exponent_ - 1.0);
    }
    double inverse(double y) const override {
        const double x = std::pow(base_.inverse(y) / scale_, 1.0 / exponent_);
        return std::max(x, lower_);
    }
    double lower() const override { return lower_; }
    Representation representation() const override { return Representation::composite; }

private:
    MonotoneMap base_;
    double scale_, exponent_, lower_;
};

/// base on [pivot, inf), something else on [0, pivot).
class ExtendedImpl final : public MonotoneMap::Impl {
public:
    ExtendedImpl(MonotoneMap base, double pivot, MonotoneMap::ExtensionHook hook)
        : base_(std::move(base)), pivot_(pivot), pivot_value_(base_(pivot)), hook_(std::move(hook)) {}

    double eval(double x) const override {
        if (x >= pivot_) return base_(x);
        if (x < 0.0) below_domain("extended map", x, 0.0);
        return hook_.eval(x);
    }
    double deriv(double x) const override {
        if (x >= pivot_) return base_.deriv(x);
        if (x < 0.0) below_domain("extended map", x, 0.0);
        return hook_.deriv(x);
    }
    double inverse(double y) const override {
        if (y >= pivot_value_) return base_.inverse(y);
        return numerics::invert_increasing(hook_.eval, hook_.deriv, y, 0.0, pivot_);
    }
    double lower() const override { return 0.0; }
    Representation representation() const override { return Representation::composite; }

private:
    MonotoneMap base_;
    double pivot_;
    double pivot_value_;
    MonotoneMap::ExtensionHook hook_;
};

/// Chunked log-log PCHIP table. Chunks are appended, never rebuilt.
class TabulatedImpl final : public MonotoneMap::Impl {
public:
    TabulatedImpl(MonotoneMap source, double hi, int points_per_decade, double growth)
        : source_(std::move(source)), lower_(source_.lower()), ppd_(points_per_decade),
          growth_(growth) {
        if (!(lower_ > 0.0)) throw DomainError("tabulate: source domain must start above 0");
        if (!(hi > lower_)) throw DomainError("tabulate: initial extent must exceed domain start");
        if (ppd_ < 4) throw DomainError("tabulate: need at least 4 points per decade");
        if (!(growth_ > 1.0)) throw DomainError("tabulate: growth factor must exceed 1");
        append_chunk(lower_, hi);
    }

    double eval(double x) const override {
        if (x < lower_) below_domain("tabulated map", x, lower_);
        const Chunk& c = chunk_for(x);
        return std::exp(c.interp(std::log(x)));
    }
    double deriv(double x) const override {
        if (x < lower_) below_domain("tabulated map", x, lower_);
        const Chunk& c = chunk_for(x);
        const double u = std::log(x);
        return std::exp(c.interp(u)) / x * c.interp.derivative(u);
    }
    double inverse(double y) const override {
        const double y0 = eval(lower_);
        if (y < y0) below_domain("tabulated map inverse", y, y0);
        // Grow until the table brackets y.
        double hi = extent();
        while (eval(hi) < y) {
            hi *= growth_;
            chunk_for(hi);
        }
        const double lnY = std::log(y);
        std::shared_lock lock(mutex_);
        for (const Chunk& c : chunks_) {
            if (lnY <= c.ln_y_hi) {
                const double u = numerics::invert_increasing(
                    [&c](double v) { return c.interp(v); },
                    [&c](double v) { return c.interp.derivative(v); }, lnY, c.interp.front(),
                    c.interp.back());
                return std::exp(u);
            }
        }
        throw DomainError("tabulated map inverse: target beyond table");
    }
    double lower() const override { return lower_; }
    Representation representation() const override { return Representation::tabulated; }

private:
    struct Chunk {
        numerics::Pchip interp;  // log y against log x
        double x_hi;
        double ln_y_hi;
    };

    double extent() const {
        std::shared_lock lock(mutex_);
        return chunks_.back().x_hi;
    }

    const Chunk& chunk_for(double x) const {
        {
            std::shared_lock lock(mutex_);
            if (x <= chunks_.back().x_hi) return find(x);
        }
        std::unique_lock lock(mutex_);
        while (x > chunks_.back().x_hi) {
            const double a = chunks_.back().x_hi;
            append_chunk_locked(a, a * growth_);
        }
        return find(x);
    }

    // Caller holds the lock. Chunk addresses are stable (deque-like growth
    // is emulated by reserving).
    const Chunk& find(double x) const {
        for (const Chunk& c : chunks_) {
            if (x <= c.x_hi) return c;
        }
        return chunks_.back();
    }

    void append_chunk(double a, double b) {
        std::unique_lock lock(mutex_);
        append_chunk_locked(a, b);
    }

    void append_chunk_locked(double a, double b) const {
        const double decades = std::log10(b / a);
        const auto n = static_cast<std::size_t>(std::max(4.0, std::ceil(decades * ppd_))) + 1;
        std::vector<double> xs = numerics::log_grid(a, b, n);
        std::vector<double> lx(n), ly(n);
        for (std::size_t i = 0; i < n; ++i) {
            lx[i] = std::log(xs[i]);
            ly[i] = std::log(source_(xs[i]));
        }
        if (chunks_.size() == chunks_.capacity()) {
            throw DomainError("tabulated map: chunk capacity exhausted");
        }
        chunks_.push_back(Chunk{numerics::Pchip(std::move(lx), std::move(ly)), b, ly_back(b)});
    }

    double ly_back(double b) const { return std::log(source_(b)); }

    MonotoneMap source_;
    double lower_;
    int ppd_;
    double growth_;
    mutable std::shared_mutex mutex_;
    // Reserved up front so references returned by find() stay valid while
    // other threads append.
    mutable std::vector<Chunk> chunks_ = [] {
        std::vector<Chunk> v;
        v.reserve(256);
        return v;
    }();
};

void check_finite_positive(double v, const char* what) {
    if (!(v > 0.0) || !std::isfinite(v)) {
        throw DomainError(std::string(what) + " must be positive and finite");
    }
}

}  // namespace

double MonotoneMap::eval(double x) const { return impl_->eval(x); }
double MonotoneMap::deriv(double x) const { return impl_->deriv(x); }
double MonotoneMap::inverse(double y) const { return impl_->inverse(y); }

MonotoneMap MonotoneMap::power(double scale, double exponent, double lower) {
    check_finite_positive(scale, "power map scale");
    check_finite_positive(exponent, "power map exponent");
    if (lower < 0.0) throw DomainError("power map: negative domain start");
    return MonotoneMap(std::make_shared<PowerImpl>(scale, exponent, lower));
}

MonotoneMap MonotoneMap::affine(double intercept, double slope, double lower) {
    check_finite_positive(slope, "affine map slope");
    return MonotoneMap(std::make_shared<AffineImpl>(intercept, slope, lower));
}

MonotoneMap MonotoneMap::inverse_of(MonotoneMap base) {
    return MonotoneMap(std::make_shared<InverseImpl>(std::move(base)));
}

MonotoneMap MonotoneMap::power_of(MonotoneMap base, double scale, double exponent) {
    check_finite_positive(scale, "power_of scale");
    check_finite_positive(exponent, "power_of exponent");
    return MonotoneMap(std::make_shared<PowerOfImpl>(std::move(base), scale, exponent));
}

MonotoneMap MonotoneMap::precompose_power(MonotoneMap base, double scale, double exponent,
                                          double lower) {
    check_finite_positive(scale, "precompose scale");
    check_finite_positive(exponent, "precompose exponent");
    return MonotoneMap(std::make_shared<PrecomposeImpl>(std::move(base), scale, exponent, lower));
}

MonotoneMap MonotoneMap::linear_extension(MonotoneMap base, double pivot) {
    const double value = base(pivot);
    const double slope = base.deriv(pivot);
    check_finite_positive(slope, "extension slope");
    ExtensionHook hook{[=](double x) { return value + slope * (x - pivot); },
                       [=](double) { return slope; }};
    if (!(hook.eval(0.0) > 0.0)) {
        throw DomainError("linear extension: value at 0 must be positive");
    }
    return MonotoneMap(std::make_shared<ExtendedImpl>(std::move(base), pivot, std::move(hook)));
}

MonotoneMap MonotoneMap::hooked_extension(MonotoneMap base, double pivot, ExtensionHook hook) {
    if (!hook.eval || !hook.deriv) throw DomainError("extension hook: eval and deriv required");
    const double at_pivot = base(pivot);
    const double tol = 1e-9 * std::max(1.0, std::abs(at_pivot));
    if (std::abs(hook.eval(pivot) - at_pivot) > tol) {
        throw DomainError("extension hook: must match the map at the pivot");
    }
    if (!(hook.eval(0.0) > 0.0)) throw DomainError("extension hook: value at 0 must be positive");
    constexpr int n = 256;
    double prev_val = hook.eval(0.0);
    double prev_der = hook.deriv(0.0);
    for (int i = 1; i <= n; ++i) {
        const double x = pivot * i / n;
        const double v = hook.eval(x);
        const double d = hook.deriv(x);
        if (!(v > prev_val) || !(d > 0.0)) throw DomainError("extension hook: not increasing");
        if (d > prev_der + 1e-12 * std::max(1.0, prev_der)) {
            throw DomainError("extension hook: not concave");
        }
        prev_val = v;
        prev_der = d;
    }
    if (prev_der + 1e-12 < base.deriv(pivot)) {
        throw DomainError("extension hook: slope at pivot below the map's right slope");
    }
    return MonotoneMap(std::make_shared<ExtendedImpl>(std::move(base), pivot, std::move(hook)));
}

MonotoneMap MonotoneMap::tabulate(MonotoneMap source, double hi, int points_per_decade,
                                  double growth) {
    return MonotoneMap(
        std::make_shared<TabulatedImpl>(std::move(source), hi, points_per_decade, growth));
}

}  // namespace ddlab
