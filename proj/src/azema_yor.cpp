#include "ddlab/azema_yor.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <sstream>

#include "ddlab/errors.hpp"

namespace ddlab {

SamplePath::SamplePath(std::vector<double> times, std::vector<double> values)
    : times_(std::move(times)), values_(std::move(values)) {
    runmax_.resize(values_.size());
    double m = -INFINITY;
    for (std::size_t i = 0; i < values_.size(); ++i) {
        m = std::max(m, values_[i]);
        runmax_[i] = m;
    }
    validate(false);
}

SamplePath::SamplePath(std::vector<double> times, std::vector<double> values,
                       std::vector<double> runmax)
    : times_(std::move(times)), values_(std::move(values)), runmax_(std::move(runmax)) {
    validate(true);
}

void SamplePath::validate(bool check_runmax) const {
    const std::size_t n = values_.size();
    if (n == 0 || times_.size() != n || runmax_.size() != n) {
        throw DomainError("SamplePath: times, values and runmax must be non-empty and equal length");
    }
    if (times_[0] != 0.0) throw DomainError("SamplePath: times must start at 0");
    for (std::size_t i = 0; i < n; ++i) {
        if (!(values_[i] > 0.0) || !std::isfinite(values_[i])) {
            std::ostringstream os;
            os << "SamplePath: value " << values_[i] << " at t=" << times_[i] << " is not positive";
            throw DomainError(os.str());
        }
        if (i > 0 && !(times_[i] > times_[i - 1])) {
            throw DomainError("SamplePath: times must be strictly increasing");
        }
        if (check_runmax) {
            const double expect = i == 0 ? values_[0] : std::max(runmax_[i - 1], values_[i]);
            if (runmax_[i] != expect) throw DomainError("SamplePath: runmax inconsistent with values");
        }
    }
}

namespace {

SamplePath transform(const MonotoneMap& F, const SamplePath& path) {
    const auto& v = path.values();
    const auto& m = path.runmax();
    std::vector<double> out(v.size());
    double last_max = -1.0, f = 0.0, df = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (m[i] != last_max) {
            last_max = m[i];
            f = F(last_max);
            df = F.deriv(last_max);
        }
        out[i] = f - df * (last_max - v[i]);
    }
    return SamplePath(path.times(), std::move(out));
}

}  // namespace

SamplePath ay_transform(const MonotoneMap& F, const SamplePath& path) { return transform(F, path); }

SamplePath ay_inverse(const MonotoneMap& K, const SamplePath& path) { return transform(K, path); }

DrawdownReport check_drawdown(const SamplePath& path, const DrawdownSpec& w,
                              double strictness_tol) {
    DrawdownReport r;
    r.min_margin = INFINITY;
    const auto& v = path.values();
    const auto& m = path.runmax();
    double last_max = -1.0, floor = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (m[i] != last_max) {
            last_max = m[i];
            floor = w(last_max);
        }
        const double margin = v[i] - floor;
        if (margin < r.min_margin) {
            r.min_margin = margin;
            r.argmin_time = path.times()[i];
        }
    }
    r.satisfied = r.min_margin > -strictness_tol;
    return r;
}

double sde_euler_step(double x, double xbar, const DrawdownSpec& w, double dv_over_v) {
    const double gap = x - w(xbar);
    if (!(gap > 0.0)) {
        std::ostringstream os;
        os << "sde_euler_step: wealth " << x << " at or below floor w(" << xbar << ") = " << w(xbar);
        throw DomainError(os.str());
    }
    return x + gap * dv_over_v;
}

SamplePath sde_integrate(const SamplePath& v, const DrawdownSpec& w) {
    const auto& vals = v.values();
    std::vector<double> x(vals.size());
    x[0] = vals[0];
    double xbar = x[0];
    for (std::size_t i = 1; i < vals.size(); ++i) {
        x[i] = sde_euler_step(x[i - 1], xbar, w, vals[i] / vals[i - 1] - 1.0);
        xbar = std::max(xbar, x[i]);
    }
    return SamplePath(v.times(), std::move(x));
}

void write_csv(std::ostream& os, const SamplePath& path) {
    os << "t,value,runmax\n";
    os.precision(17);
    for (std::size_t i = 0; i < path.size(); ++i) {
        os << path.times()[i] << ',' << path.values()[i] << ',' << path.runmax()[i] << '\n';
    }
}

SamplePath read_csv(std::istream& is) {
    std::string line;
    if (!std::getline(is, line)) throw DomainError("read_csv: empty input");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "t,value,runmax") throw DomainError("read_csv: expected header t,value,runmax");
    std::vector<double> t, v, m;
    std::size_t lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        std::istringstream ls(line);
        double a, b, c;
        char s1, s2;
        if (!(ls >> a >> s1 >> b >> s2 >> c) || s1 != ',' || s2 != ',') {
            throw DomainError("read_csv: malformed line " + std::to_string(lineno));
        }
        t.push_back(a);
        v.push_back(b);
        m.push_back(c);
    }
    return SamplePath(std::move(t), std::move(v), std::move(m));
}

namespace {

constexpr char kMagic[8] = {'D', 'D', 'L', 'B', 'A', 'T', 'C', 'H'};

void put_u64(std::ostream& os, std::uint64_t n) { os.write(reinterpret_cast<const char*>(&n), 8); }

std::uint64_t get_u64(std::istream& is) {
    std::uint64_t n = 0;
    if (!is.read(reinterpret_cast<char*>(&n), 8)) throw DomainError("read_batch: truncated input");
    return n;
}

void put_doubles(std::ostream& os, const std::vector<double>& v) {
    os.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * 8));
}

std::vector<double> get_doubles(std::istream& is, std::size_t n) {
    std::vector<double> v(n);
    if (!is.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * 8))) {
        throw DomainError("read_batch: truncated input");
    }
    return v;
}

}  // namespace

void write_batch(std::ostream& os, const std::vector<SamplePath>& paths) {
    os.write(kMagic, 8);
    put_u64(os, paths.size());
    for (const auto& p : paths) {
        put_u64(os, p.size());
        put_doubles(os, p.times());
        put_doubles(os, p.values());
        put_doubles(os, p.runmax());
    }
}

std::vector<SamplePath> read_batch(std::istream& is) {
    char magic[8];
    if (!is.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0) {
        throw DomainError("read_batch: bad magic");
    }
    const std::uint64_t count = get_u64(is);
    std::vector<SamplePath> out;
    for (std::uint64_t k = 0; k < count; ++k) {
        const std::size_t n = get_u64(is);
        auto t = get_doubles(is, n);
        auto v = get_doubles(is, n);
        auto m = get_doubles(is, n);
        out.emplace_back(std::move(t), std::move(v), std::move(m));
    }
    return out;
}

}  // namespace ddlab
