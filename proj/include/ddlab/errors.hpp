#pragma once

#include <stdexcept>
#include <string>

namespace ddlab {

/// A requested evaluation lies outside a map's domain, or an input violates
/// a mathematical precondition (w(x) >= x, p >= 1, singular volatility...).
class DomainError : public std::domain_error {
public:
    explicit DomainError(const std::string& what) : std::domain_error(what) {}
};

/// An iterative routine (quadrature, root bracketing, inversion) failed to
/// reach its tolerance.
class ConvergenceError : public std::runtime_error {
public:
    explicit ConvergenceError(const std::string& what) : std::runtime_error(what) {}
};

/// Malformed or inconsistent experiment configuration. `path` is the dotted
/// field path the diagnostic refers to.
class ConfigError : public std::runtime_error {
public:
    ConfigError(std::string path, const std::string& what)
        : std::runtime_error(path + ": " + what), path_(std::move(path)) {}

    const std::string& path() const noexcept { return path_; }

private:
    std::string path_;
};

}  // namespace ddlab
