#pragma once

#include <stdexcept>
#include <string>

namespace qkzb {

enum class ErrorKind {
    NonConvergent,
    InvalidModulus,
    PoleHit,
    IllConditioned,
    ResidualTooLarge,
    NotIntegral,
    IndexError,
    PlanInfeasible,
    NotConverged,
    DivergentEntry,
    InvalidArgument,
};

inline const char* kind_name(ErrorKind k)
{
    switch (k) {
    case ErrorKind::NonConvergent: return "NonConvergent";
    case ErrorKind::InvalidModulus: return "InvalidModulus";
    case ErrorKind::PoleHit: return "PoleHit";
    case ErrorKind::IllConditioned: return "IllConditioned";
    case ErrorKind::ResidualTooLarge: return "ResidualTooLarge";
    case ErrorKind::NotIntegral: return "NotIntegral";
    case ErrorKind::IndexError: return "IndexError";
    case ErrorKind::PlanInfeasible: return "PlanInfeasible";
    case ErrorKind::NotConverged: return "NotConverged";
    case ErrorKind::DivergentEntry: return "DivergentEntry";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    }
    return "Unknown";
}

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(std::string(kind_name(kind)) + ": " + what), kind_(kind)
    {}
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

} // namespace qkzb
