#pragma once

#include <stdexcept>
#include <string>

namespace dynnet {

// Base for all library errors so callers can catch everything from this
// library in one place.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NonFiniteInput : Error {
    using Error::Error;
};

struct ShapeError : Error {
    using Error::Error;
};

struct NonScalarLoss : Error {
    using Error::Error;
};

// A tape is single-use: building a graph, one backward, then discard.
struct TapeReused : Error {
    using Error::Error;
};

// Integration produced a non-finite state. Carries the step at which the
// blow-up was detected so diverged grid cells are diagnosable.
struct NonFinite : Error {
    long step;
    NonFinite(const std::string& msg, long step_) : Error(msg), step(step_) {}
};

struct NonMonotonicTimes : Error {
    using Error::Error;
};

struct BadFractions : Error {
    using Error::Error;
};

struct FileNotFound : Error {
    using Error::Error;
};

struct SchemaMismatch : Error {
    using Error::Error;
};

struct ParseError : Error {
    long line;
    ParseError(const std::string& msg, long line_) : Error(msg), line(line_) {}
};

struct Leakage : Error {
    using Error::Error;
};

struct DimMismatch : Error {
    using Error::Error;
};

struct EmptySpace : Error {
    using Error::Error;
};

struct ConfigError : Error {
    using Error::Error;
};

}  // namespace dynnet
