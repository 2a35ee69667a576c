#pragma once

#include <stdexcept>
#include <string>

namespace lqg {

// Query outside a tabulated range; carries the valid interval so callers can
// enlarge their simulation box.
class RangeError : public std::runtime_error {
public:
    RangeError(const std::string& what, double lo, double hi, double value)
        : std::runtime_error(what + " (valid range [" + std::to_string(lo) + ", " +
                             std::to_string(hi) + "], got " + std::to_string(value) + ")"),
          lo_(lo), hi_(hi), value_(value) {}
    double lo() const { return lo_; }
    double hi() const { return hi_; }
    double value() const { return value_; }

private:
    double lo_, hi_, value_;
};

// A sample path left the tabulated/simulated domain at a known time.
class PathExitError : public std::runtime_error {
public:
    PathExitError(const std::string& what, double exit_time)
        : std::runtime_error(what + " (exit at t = " + std::to_string(exit_time) + ")"),
          exit_time_(exit_time) {}
    double exit_time() const { return exit_time_; }

private:
    double exit_time_;
};

// Critical-flavor prelimit produced a nonpositive aggregate increment; the
// realization should be resampled.
class RejectedRealization : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace lqg
