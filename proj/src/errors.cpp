#include "palign/errors.hpp"

namespace palign {

const char* errc_name(Errc code) {
    switch (code) {
        case Errc::NearZeroNorm: return "NearZeroNorm";
        case Errc::DimMismatch: return "DimMismatch";
        case Errc::NonScalarLoss: return "NonScalarLoss";
        case Errc::TooFewPoints: return "TooFewPoints";
        case Errc::EmptyTemplateSet: return "EmptyTemplateSet";
        case Errc::ConfigInvalid: return "ConfigInvalid";
        case Errc::NonFiniteLoss: return "NonFiniteLoss";
        case Errc::IoError: return "IoError";
        case Errc::FormatError: return "FormatError";
        case Errc::ShapeError: return "ShapeError";
        case Errc::NotNormalized: return "NotNormalized";
        case Errc::EmptySplit: return "EmptySplit";
        case Errc::NoRelevantItems: return "NoRelevantItems";
        case Errc::EmptyBank: return "EmptyBank";
        case Errc::BadK: return "BadK";
        case Errc::UnknownSample: return "UnknownSample";
    }
    return "Error";
}

} // namespace palign
