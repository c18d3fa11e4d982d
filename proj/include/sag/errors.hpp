#ifndef SAG_ERRORS_HPP
#define SAG_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace sag {

/**
 * Base class for all errors raised by the library.
 *
 * Each error family carries the process exit code the command-line driver
 * should use when the error escapes to main().  Library code never calls
 * exit(); it throws, and the driver maps the exception to a code.
 */
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what, int exit_code = 1)
        : std::runtime_error(what), exit_code_(exit_code) {}

    /// Process exit code the CLI uses for this error family.
    int exit_code() const { return exit_code_; }

private:
    int exit_code_;
};

/// Bad configuration: unknown keys, out-of-range values, inconsistent flags.
class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& what) : Error(what, 2) {}
};

/// Filesystem trouble: unreadable, missing, or unwritable files.
class IoError : public Error {
public:
    explicit IoError(const std::string& what) : Error(what, 3) {}
};

/// Input data violates a documented schema or structural invariant.
class DataError : public Error {
public:
    explicit DataError(const std::string& what) : Error(what, 4) {}
};

/// Numeric failure during training or evaluation (NaN / infinity).
class NumericError : public Error {
public:
    explicit NumericError(const std::string& what) : Error(what, 5) {}
};

// ---------------------------------------------------------------------------
// Specific conditions.  Kept as distinct types so tests can assert on them.
// ---------------------------------------------------------------------------

/// The routing graph contains a directed cycle.
class CycleDetected : public DataError {
public:
    explicit CycleDetected(const std::string& what) : DataError(what) {}
};

/// An edge's declared class does not match its endpoint kinds.
class BadEdgeClass : public DataError {
public:
    explicit BadEdgeClass(const std::string& what) : DataError(what) {}
};

/// An edge references a node that was never declared.
class UnknownNode : public DataError {
public:
    explicit UnknownNode(const std::string& what) : DataError(what) {}
};

/// Tensor operands have incompatible shapes.
class ShapeMismatch : public Error {
public:
    explicit ShapeMismatch(const std::string& what) : Error(what, 1) {}
};

/// backward() was asked to differentiate a non-scalar quantity.
class NotScalar : public Error {
public:
    explicit NotScalar(const std::string& what) : Error(what, 1) {}
};

/// Strict backward(): a registered parameter never reached the loss.
class DisconnectedParameter : public Error {
public:
    explicit DisconnectedParameter(const std::string& what) : Error(what, 1) {}
};

/// NaN or infinity appeared in a value or gradient.
class NonFiniteValue : public NumericError {
public:
    explicit NonFiniteValue(const std::string& what) : NumericError(what) {}
};

/// An optimizer step saw a NaN or infinite gradient.
class NonFiniteGradient : public NumericError {
public:
    explicit NonFiniteGradient(const std::string& what) : NumericError(what) {}
};

/// A loss was requested over a mask with no selected entries.
class EmptyMask : public Error {
public:
    explicit EmptyMask(const std::string& what) : Error(what, 1) {}
};

/// A CSV file is missing columns or has malformed cells.
class SchemaError : public DataError {
public:
    explicit SchemaError(const std::string& what) : DataError(what) {}
};

/// The daily calendar has a hole or duplicate date.
class CalendarGap : public DataError {
public:
    explicit CalendarGap(const std::string& what) : DataError(what) {}
};

/// An observation references a segment or date outside the dataset.
class OrphanObservation : public DataError {
public:
    explicit OrphanObservation(const std::string& what) : DataError(what) {}
};

/// A reservoir has release flows without depth temperatures, or vice versa.
class PartialReleaseData : public DataError {
public:
    explicit PartialReleaseData(const std::string& what) : DataError(what) {}
};

/// A data-driven release embedding was requested for a reservoir without data.
class MissingReleaseData : public DataError {
public:
    explicit MissingReleaseData(const std::string& what) : DataError(what) {}
};

/// Stage-two training needs hidden states from a trained forecaster.
class MissingCache : public ConfigError {
public:
    explicit MissingCache(const std::string& what) : ConfigError(what) {}
};

/// A step needs a release embedding that was never produced.
class MissingEmbedding : public Error {
public:
    explicit MissingEmbedding(const std::string& what) : Error(what, 1) {}
};

/// A forecast-based embedding was requested for a reservoir that feeds nothing.
class EmptyDownstreamSet : public ConfigError {
public:
    explicit EmptyDownstreamSet(const std::string& what) : ConfigError(what) {}
};

/// The series is too short to split into train and test periods.
class TooShort : public DataError {
public:
    explicit TooShort(const std::string& what) : DataError(what) {}
};

}  // namespace sag

#endif  // SAG_ERRORS_HPP
