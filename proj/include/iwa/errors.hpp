#pragma once

#include <stdexcept>
#include <string>

namespace iwa {

// Base class for all errors raised by this library.
struct Error : std::runtime_error {
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Raised when a computation cannot be certified even at the precision ceiling.
struct PrecisionExhausted : Error {
    explicit PrecisionExhausted(const std::string& what) : Error(what) {}
};

// Raised when matrix shapes (or variable counts) do not line up.
struct DimensionMismatch : Error {
    explicit DimensionMismatch(const std::string& what) : Error(what) {}
};

// Raised when d_out * d_in is not zero within the guard band.
struct ComplexNotComposable : Error {
    explicit ComplexNotComposable(const std::string& what) : Error(what) {}
};

// Raised by alpha_element when every tau coordinate is divisible by p.
struct TauInH1 : Error {
    explicit TauInH1(const std::string& what) : Error(what) {}
};

// Raised when homology beyond the supported degree is requested
// for a presentation that carries no free resolution.
struct NoResolution : Error {
    explicit NoResolution(const std::string& what) : Error(what) {}
};

// Raised when a structure quotient is requested below the structure's base level.
struct LevelBelowBase : Error {
    explicit LevelBelowBase(const std::string& what) : Error(what) {}
};

// Raised when a verification law does not apply to the given presentation.
struct LawNotApplicable : Error {
    explicit LawNotApplicable(const std::string& what) : Error(what) {}
};

// Raised when a characteristic-ideal determinant vanishes within the guard band.
struct SingularPresentation : Error {
    explicit SingularPresentation(const std::string& what) : Error(what) {}
};

// Raised when a fixture violates the hypotheses of an exact descent identity.
struct HypothesisFailed : Error {
    explicit HypothesisFailed(const std::string& what) : Error(what) {}
};

// Raised by sequence fitting when fewer than four data points are supplied.
struct SequenceTooShort : Error {
    explicit SequenceTooShort(const std::string& what) : Error(what) {}
};

// Raised when a gamma action fails to preserve the relation submodule at some level.
struct SemilinearityBroken : Error {
    explicit SemilinearityBroken(const std::string& what) : Error(what) {}
};

// Raised when a submodule closure loop exceeds its iteration cap.
struct SaturationDiverged : Error {
    explicit SaturationDiverged(const std::string& what) : Error(what) {}
};

// Raised when a requested level would exceed the configured matrix ceiling.
struct CeilingExceeded : Error {
    explicit CeilingExceeded(const std::string& what) : Error(what) {}
};

// Raised by the document and polynomial parsers; carries a 1-based position.
struct ParseError : Error {
    int line;
    int column;
    ParseError(const std::string& what, int line_, int column_)
        : Error(what + " (line " + std::to_string(line_) + ", column " +
                std::to_string(column_) + ")"),
          line(line_), column(column_) {}
};

}  // namespace iwa
