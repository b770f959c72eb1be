#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace sdmem {

enum class ErrorKind {
    InvalidArgument,
    DimensionMismatch,
    NotPositiveDefinite,
    SingularGamma,
    SingularV,
    SingularInformation,
    NonFiniteState,
    TooFewPoints,
    MissingAntiderivative,
    RankDeficient,
    SingularRestrictedCovariance,
    TooFewReplicates,
    Identifiability,
    Io,
};

std::string_view to_string(ErrorKind kind);

// Single exception type for the toolkit; callers branch on kind().
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind), message_(what) {}

    ErrorKind kind() const noexcept { return kind_; }
    // The text without the kind prefix.
    const std::string& message() const noexcept { return message_; }

private:
    ErrorKind kind_;
    std::string message_;
};

}  // namespace sdmem
