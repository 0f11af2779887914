#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace ptk {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Mismatched dimensions, slot kinds, extents or jet orders.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// A derivative or jet order beyond what is available.
class OrderError : public Error {
public:
    using Error::Error;
};

/// Division by a quantity whose value vanishes.
class SingularityError : public Error {
public:
    using Error::Error;
};

/// Contraction or operation applied to the wrong slot kind.
class KindError : public Error {
public:
    using Error::Error;
};

/// Tensors expressed in the splittings of different representative connections.
class ScaleError : public Error {
public:
    using Error::Error;
};

/// Rank outside the set supported by an operation.
class UnsupportedRankError : public Error {
public:
    using Error::Error;
};

/// Operation precondition not met (e.g. a curved structure passed to a flat-only path).
class PreconditionError : public Error {
public:
    using Error::Error;
};

/// Singular or ill-conditioned linear algebra.
class LinAlgError : public Error {
public:
    using Error::Error;
};

/// Evaluation produced a non-finite value. Carries the offending multi-index
/// when raised from jet evaluation.
class NonFiniteError : public Error {
public:
    NonFiniteError(const std::string& what, std::vector<int> multi_index = {})
        : Error(what), multi_index_(std::move(multi_index)) {}
    const std::vector<int>& multi_index() const noexcept { return multi_index_; }

private:
    std::vector<int> multi_index_;
};

/// Mathematical domain violation (log of a non-positive number and the like).
/// `position` is a byte offset into the expression source when known.
class DomainError : public Error {
public:
    DomainError(const std::string& what, std::ptrdiff_t position = -1)
        : Error(what), position_(position) {}
    std::ptrdiff_t position() const noexcept { return position_; }

private:
    std::ptrdiff_t position_;
};

/// Malformed expression text. `offset` is the byte offset of the problem.
class SyntaxError : public Error {
public:
    SyntaxError(const std::string& what, std::size_t offset)
        : Error(what + " at offset " + std::to_string(offset)), offset_(offset) {}
    std::size_t offset() const noexcept { return offset_; }

private:
    std::size_t offset_;
};

/// Identifier that does not name a coordinate or a known function.
class NameError : public Error {
public:
    NameError(const std::string& name, std::size_t offset)
        : Error("unknown identifier '" + name + "' at offset " + std::to_string(offset)),
          name_(name), offset_(offset) {}
    const std::string& name() const noexcept { return name_; }
    std::size_t offset() const noexcept { return offset_; }

private:
    std::string name_;
    std::size_t offset_;
};

/// Geodesic or transport left the configured chart box.
class ChartExitError : public Error {
public:
    ChartExitError(const std::string& what, double exit_time)
        : Error(what), exit_time_(exit_time) {}
    double exit_time() const noexcept { return exit_time_; }

private:
    double exit_time_;
};

/// Invalid geometry configuration (I/O, schema, or expression errors).
class ConfigError : public Error {
public:
    using Error::Error;
};

}  // namespace ptk
