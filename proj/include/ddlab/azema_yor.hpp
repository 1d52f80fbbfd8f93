#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "ddlab/drawdown.hpp"
#include "ddlab/monotone_map.hpp"

namespace ddlab {

/// A positive path sampled on an ascending grid starting at t = 0, with its
/// running maximum cached at every grid point.
class SamplePath {
public:
    SamplePath() = default;
    /// Computes runmax. Throws DomainError on non-positive values or a bad grid.
    SamplePath(std::vector<double> times, std::vector<double> values);
    /// Takes a precomputed runmax and checks it.
    SamplePath(std::vector<double> times, std::vector<double> values, std::vector<double> runmax);

    const std::vector<double>& times() const { return times_; }
    const std::vector<double>& values() const { return values_; }
    const std::vector<double>& runmax() const { return runmax_; }
    std::size_t size() const { return values_.size(); }

private:
    void validate(bool check_runmax) const;

    std::vector<double> times_;
    std::vector<double> values_;
    std::vector<double> runmax_;
};

struct DrawdownReport {
    bool satisfied = true;
    double min_margin = 0.0;
    double argmin_time = 0.0;
};

/// M^F = F(runmax) - F'(runmax) (runmax - value), pointwise on the grid.
SamplePath ay_transform(const MonotoneMap& F, const SamplePath& path);
/// Same transform with K; inverts ay_transform when K = F^{-1}.
SamplePath ay_inverse(const MonotoneMap& K, const SamplePath& path);

/// Margin value - w(runmax) at every grid point. Satisfied iff the smallest
/// margin exceeds -strictness_tol.
DrawdownReport check_drawdown(const SamplePath& path, const DrawdownSpec& w,
                              double strictness_tol = 0.0);

/// One step of dX = (X - w(Xbar)) dV/V. Throws DomainError if x <= w(xbar).
double sde_euler_step(double x, double xbar, const DrawdownSpec& w, double dv_over_v);

/// Integrates the constrained-wealth SDE along `v`, starting from v's first
/// value. Throws DomainError if the floor is breached.
SamplePath sde_integrate(const SamplePath& v, const DrawdownSpec& w);

void write_csv(std::ostream& os, const SamplePath& path);
SamplePath read_csv(std::istream& is);

/// Binary batch layout (little-endian as written by the host):
///   8 bytes magic "DDLBATCH", uint64 path count, then per path
///   uint64 length n followed by n doubles each of t, value, runmax.
void write_batch(std::ostream& os, const std::vector<SamplePath>& paths);
std::vector<SamplePath> read_batch(std::istream& is);

}  // namespace ddlab
