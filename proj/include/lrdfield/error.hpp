#pragma once

#include <stdexcept>
#include <string>

namespace lrdfield {

enum class ErrorKind {
    ConstraintViolation,
    ParameterOutOfRange,
    SingularPoint,
    OutOfDomain,
    OpenCase,
    NotConverged,
    InvalidSingularSet,
    MethodDisagreement,
    RatioNotConstant,
    EmbeddingTooSmall,
    CholeskyFailure,
    RectangleExceedsSample,
    DegenerateRegression,
    AmbiguousVerdict,
    IncompleteGrid,
    BudgetExceeded,
    ConfigError,
    IoError,
};

inline const char* to_string(ErrorKind k)
{
    switch (k) {
    case ErrorKind::ConstraintViolation: return "ConstraintViolation";
    case ErrorKind::ParameterOutOfRange: return "ParameterOutOfRange";
    case ErrorKind::SingularPoint: return "SingularPoint";
    case ErrorKind::OutOfDomain: return "OutOfDomain";
    case ErrorKind::OpenCase: return "OpenCase";
    case ErrorKind::NotConverged: return "NotConverged";
    case ErrorKind::InvalidSingularSet: return "InvalidSingularSet";
    case ErrorKind::MethodDisagreement: return "MethodDisagreement";
    case ErrorKind::RatioNotConstant: return "RatioNotConstant";
    case ErrorKind::EmbeddingTooSmall: return "EmbeddingTooSmall";
    case ErrorKind::CholeskyFailure: return "CholeskyFailure";
    case ErrorKind::RectangleExceedsSample: return "RectangleExceedsSample";
    case ErrorKind::DegenerateRegression: return "DegenerateRegression";
    case ErrorKind::AmbiguousVerdict: return "AmbiguousVerdict";
    case ErrorKind::IncompleteGrid: return "IncompleteGrid";
    case ErrorKind::BudgetExceeded: return "BudgetExceeded";
    case ErrorKind::ConfigError: return "ConfigError";
    case ErrorKind::IoError: return "IoError";
    }
    return "Unknown";
}

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

/// A model parameter failed its admissibility predicate.
class ConstraintViolation : public Error {
public:
    ConstraintViolation(std::string name, double value, std::string constraint)
        : Error(ErrorKind::ConstraintViolation,
                "constraint violated: " + constraint + " (" + name + " = " + std::to_string(value) + ")"),
          name(std::move(name)), value(value), constraint(std::move(constraint)) {}

    std::string name;
    double value;
    std::string constraint;
};

}  // namespace lrdfield
