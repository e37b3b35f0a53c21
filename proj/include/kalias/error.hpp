#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace kalias {

enum class ErrorKind {
    NonFinite,
    Singular,
    BranchCut,
    ShapeMismatch,
    UnknownSystem,
    BadParams,
    PoleHit,
    Divergence,
    MissingStateObservable,
    DuplicateBasis,
    NotInvariant,
    Defective,
    RealEigenvalue,
    AllZeroTruth,
    Config,
};

constexpr std::string_view to_string(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::NonFinite: return "NonFinite";
    case ErrorKind::Singular: return "Singular";
    case ErrorKind::BranchCut: return "BranchCut";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::UnknownSystem: return "UnknownSystem";
    case ErrorKind::BadParams: return "BadParams";
    case ErrorKind::PoleHit: return "PoleHit";
    case ErrorKind::Divergence: return "Divergence";
    case ErrorKind::MissingStateObservable: return "MissingStateObservable";
    case ErrorKind::DuplicateBasis: return "DuplicateBasis";
    case ErrorKind::NotInvariant: return "NotInvariant";
    case ErrorKind::Defective: return "Defective";
    case ErrorKind::RealEigenvalue: return "RealEigenvalue";
    case ErrorKind::AllZeroTruth: return "AllZeroTruth";
    case ErrorKind::Config: return "Config";
    }
    return "Unknown";
}

/// Every failure raised by the library carries one of the kinds above so
/// callers (the sweep harness in particular) can branch on it.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

} // namespace kalias
