#pragma once

#include <stdexcept>
#include <string>

namespace palign {

// Every failure the library reports deliberately goes through one of the
// typed exceptions below. The CLI maps them onto its exit-code contract:
// NonFiniteLoss -> 3, everything else -> 2.
enum class Errc {
    NearZeroNorm,
    DimMismatch,
    NonScalarLoss,
    TooFewPoints,
    EmptyTemplateSet,
    ConfigInvalid,
    NonFiniteLoss,
    IoError,
    FormatError,
    ShapeError,
    NotNormalized,
    EmptySplit,
    NoRelevantItems,
    EmptyBank,
    BadK,
    UnknownSample,
};

const char* errc_name(Errc code);

class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& msg)
        : std::runtime_error(std::string(errc_name(code)) + ": " + msg), code_(code) {}

    Errc code() const { return code_; }

private:
    Errc code_;
};

#define PALIGN_DEFINE_ERROR(Name)                                     \
    class Name final : public Error {                                 \
    public:                                                           \
        explicit Name(const std::string& msg) : Error(Errc::Name, msg) {} \
    }

PALIGN_DEFINE_ERROR(NearZeroNorm);
PALIGN_DEFINE_ERROR(DimMismatch);
PALIGN_DEFINE_ERROR(NonScalarLoss);
PALIGN_DEFINE_ERROR(TooFewPoints);
PALIGN_DEFINE_ERROR(EmptyTemplateSet);
PALIGN_DEFINE_ERROR(ConfigInvalid);
PALIGN_DEFINE_ERROR(NonFiniteLoss);
PALIGN_DEFINE_ERROR(IoError);
PALIGN_DEFINE_ERROR(FormatError);
PALIGN_DEFINE_ERROR(ShapeError);
PALIGN_DEFINE_ERROR(NotNormalized);
PALIGN_DEFINE_ERROR(EmptySplit);
PALIGN_DEFINE_ERROR(NoRelevantItems);
PALIGN_DEFINE_ERROR(EmptyBank);
PALIGN_DEFINE_ERROR(BadK);
PALIGN_DEFINE_ERROR(UnknownSample);

#undef PALIGN_DEFINE_ERROR

} // namespace palign
