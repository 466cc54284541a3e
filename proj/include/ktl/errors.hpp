#pragma once

#include <stdexcept>
#include <string>

namespace ktl {

/// Rejected input: bad parameters, malformed configs, non-finite data.
class InputError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Numerical failure during a run (stability precondition, blow-up).
class NumericalError : public std::runtime_error {
public:
    NumericalError(const std::string& what, double time = -1.0)
        : std::runtime_error(what), time_(time) {}
    double time() const { return time_; }

private:
    double time_;
};

/// On-disk data that does not match its recorded checksum or schema.
class IntegrityError : public std::runtime_error {
public:
    IntegrityError(const std::string& what, std::string path = {})
        : std::runtime_error(what), path_(std::move(path)) {}
    const std::string& path() const { return path_; }

private:
    std::string path_;
};

} // namespace ktl
