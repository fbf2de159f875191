#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace tdmhand {

// A configuration that failed validation; carries the complete violation list.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(std::vector<std::string> violations)
        : std::runtime_error(join(violations)), violations_(std::move(violations)) {}

    const std::vector<std::string>& violations() const { return violations_; }

private:
    static std::string join(const std::vector<std::string>& vs) {
        std::string msg = "invalid configuration:";
        for (const auto& v : vs) {
            msg += "\n  ";
            msg += v;
        }
        return msg;
    }
    std::vector<std::string> violations_;
};

// Input outside the closed-form kinematic domain. Never clamped: a target
// past a joint's range is a hard error so planner bugs surface loudly.
class KinematicRangeError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

// Illegal event ordering on the mechanism state machine (e.g. rotating the
// spindle while a plug is engaged models a mechanical jam).
class StateError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

// Malformed script / demand / config file input.
class ParseError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace tdmhand
