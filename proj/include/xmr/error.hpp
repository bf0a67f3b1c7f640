#ifndef XMR_ERROR_HPP
#define XMR_ERROR_HPP

#include <stdexcept>
#include <string>

namespace xmr {

enum class ErrorKind {
    // configuration
    InvalidConfig,
    InvalidSizes,
    // input files / parsing
    FileNotFound,
    RowWidthMismatch,
    DuplicateSnp,
    EmptyMatrix,
    MissingColumn,
    InvalidValue,
    NotSymmetric,
    OutOfRange,
    UnknownProtein,
    // shape agreement between inputs
    DimensionMismatch,
    MissingLd,
    // numerics
    ZeroExposureEffect,
    DegenerateDesign,
    SingularDesign,
    NumericalOverflow,
    // instrument availability
    EmptyInstrumentSet,
    TooFewInstruments,
    NoInstruments,
    NoOverlap,
    NoSignificantEqtls,
};

inline const char *to_string(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::InvalidConfig: return "InvalidConfig";
    case ErrorKind::InvalidSizes: return "InvalidSizes";
    case ErrorKind::FileNotFound: return "FileNotFound";
    case ErrorKind::RowWidthMismatch: return "RowWidthMismatch";
    case ErrorKind::DuplicateSnp: return "DuplicateSnp";
    case ErrorKind::EmptyMatrix: return "EmptyMatrix";
    case ErrorKind::MissingColumn: return "MissingColumn";
    case ErrorKind::InvalidValue: return "InvalidValue";
    case ErrorKind::NotSymmetric: return "NotSymmetric";
    case ErrorKind::OutOfRange: return "OutOfRange";
    case ErrorKind::UnknownProtein: return "UnknownProtein";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::MissingLd: return "MissingLd";
    case ErrorKind::ZeroExposureEffect: return "ZeroExposureEffect";
    case ErrorKind::DegenerateDesign: return "DegenerateDesign";
    case ErrorKind::SingularDesign: return "SingularDesign";
    case ErrorKind::NumericalOverflow: return "NumericalOverflow";
    case ErrorKind::EmptyInstrumentSet: return "EmptyInstrumentSet";
    case ErrorKind::TooFewInstruments: return "TooFewInstruments";
    case ErrorKind::NoInstruments: return "NoInstruments";
    case ErrorKind::NoOverlap: return "NoOverlap";
    case ErrorKind::NoSignificantEqtls: return "NoSignificantEqtls";
    }
    return "Unknown";
}

/// Process exit status used by the command-line front end for each error class.
inline int exit_code(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::InvalidConfig:
    case ErrorKind::InvalidSizes:
        return 1;
    case ErrorKind::RowWidthMismatch:
    case ErrorKind::DuplicateSnp:
    case ErrorKind::EmptyMatrix:
    case ErrorKind::MissingColumn:
    case ErrorKind::InvalidValue:
    case ErrorKind::NotSymmetric:
    case ErrorKind::OutOfRange:
    case ErrorKind::UnknownProtein:
        return 2;
    case ErrorKind::DimensionMismatch:
    case ErrorKind::MissingLd:
        return 3;
    case ErrorKind::ZeroExposureEffect:
    case ErrorKind::DegenerateDesign:
    case ErrorKind::SingularDesign:
    case ErrorKind::NumericalOverflow:
        return 4;
    case ErrorKind::EmptyInstrumentSet:
    case ErrorKind::TooFewInstruments:
    case ErrorKind::NoInstruments:
    case ErrorKind::NoOverlap:
    case ErrorKind::NoSignificantEqtls:
        return 5;
    case ErrorKind::FileNotFound:
        return 6;
    }
    return 1;
}

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string &message)
        : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

} // namespace xmr

#endif // XMR_ERROR_HPP
