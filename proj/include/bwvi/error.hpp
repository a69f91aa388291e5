#pragma once

#include <stdexcept>
#include <string>

namespace bwvi {

/// Base class for every error raised by the toolkit.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

#define BWVI_DEFINE_ERROR(Name)              \
    class Name : public Error {              \
    public:                                  \
        using Error::Error;                  \
    }

BWVI_DEFINE_ERROR(InvalidState);
BWVI_DEFINE_ERROR(StepTooLarge);
BWVI_DEFINE_ERROR(DimensionMismatch);
BWVI_DEFINE_ERROR(NonFiniteWeight);
BWVI_DEFINE_ERROR(InvalidPoint);
BWVI_DEFINE_ERROR(HessianUnavailable);
BWVI_DEFINE_ERROR(DegenerateVariance);
BWVI_DEFINE_ERROR(InvalidArgument);

// dataset ingestion
BWVI_DEFINE_ERROR(ParseError);
BWVI_DEFINE_ERROR(MissingColumn);
BWVI_DEFINE_ERROR(NonNumeric);
BWVI_DEFINE_ERROR(ZeroVariance);

// harness
BWVI_DEFINE_ERROR(ConfigError);

#undef BWVI_DEFINE_ERROR

inline void require(bool cond, const std::string& what) {
    if (!cond) throw InvalidArgument(what);
}

inline void require_dim(long expected, long got, const char* what) {
    if (expected != got)
        throw DimensionMismatch(std::string(what) + ": expected dimension " + std::to_string(expected) +
                                ", got " + std::to_string(got));
}

}  // namespace bwvi
