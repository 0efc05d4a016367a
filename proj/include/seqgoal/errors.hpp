#pragma once

#include <stdexcept>
#include <string>

namespace seqgoal {

// Error families map to CLI exit codes: config 2, numeric 3, planner/geometry 4.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

struct PlannerError : std::runtime_error {
    explicit PlannerError(const std::string& what) : std::runtime_error(what) {}
};

struct GeometryError : std::runtime_error {
    explicit GeometryError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace seqgoal
