// Exception types shared across the icls library.
//
// Solver *outcomes* (max-iteration, stagnation, preconditioner breakdown,
// reorthogonalization memory cap) are reported as data in the solve reports;
// the exceptions here signal conditions the caller cannot recover from within
// a run: malformed input, a zero column, a shift budget that is exhausted, or
// an overflowing triangular solve that is caught at the kernel level.

#ifndef ICLS_ERRORS_HPP
#define ICLS_ERRORS_HPP

#include <cstdint>
#include <stdexcept>
#include <string>

namespace icls {

class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// A matrix column has zero 2-norm, so it cannot be scaled to unit norm.
class ZeroColumn : public Error {
public:
    explicit ZeroColumn(std::int64_t col)
        : Error("column " + std::to_string(col) + " has zero 2-norm"),
          column(col) {}
    std::int64_t column;
};

// A triangular solve produced +/-inf at the given position when rounding to
// the application format.
class ApplyBreakdown : public Error {
public:
    explicit ApplyBreakdown(std::int64_t pos)
        : Error("triangular solve overflowed at position " +
                std::to_string(pos)),
          position(pos) {}
    std::int64_t position;
};

// The global shift doubled past its cap without producing a factorization.
class ShiftBudgetExceeded : public Error {
public:
    explicit ShiftBudgetExceeded(double alpha)
        : Error("shift budget exceeded at alpha = " + std::to_string(alpha)),
          alpha(alpha) {}
    double alpha;
};

// The matrix handed to a factorization is not a valid lower-triangular
// representation of a symmetric matrix with positive diagonal.
class NotSymmetric : public Error {
public:
    explicit NotSymmetric(const std::string& detail)
        : Error("matrix is not symmetric positive-diagonal: " + detail) {}
};

// A file could not be parsed; `line` is 1-based.
class ParseError : public Error {
public:
    ParseError(std::int64_t line, const std::string& detail)
        : Error("parse error at line " + std::to_string(line) + ": " + detail),
          line(line) {}
    std::int64_t line;
};

// Dimensions in a file or between operands do not agree.
class DimensionError : public Error {
public:
    explicit DimensionError(const std::string& detail)
        : Error("dimension error: " + detail) {}
};

// An output or input stream failed.
class IoError : public Error {
public:
    explicit IoError(const std::string& detail) : Error("io error: " + detail) {}
};

}  // namespace icls

#endif  // ICLS_ERRORS_HPP
