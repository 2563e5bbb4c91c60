#pragma once

#include <stdexcept>
#include <string>

namespace aqsense {

/// Stable error categories. The CLI maps each one to its own exit code.
enum class ErrorKind {
    Domain,            // argument outside an operation's domain
    InsufficientData,  // calibration input too small or degenerate
    DegenerateInput,   // e.g. zero-variance fusion input, empty gene pool
    Resource,          // memory estimate exceeded
    Parse,             // malformed CSV / JSON
    Validation,        // configuration violates a planning constraint
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

struct DomainError : Error {
    explicit DomainError(const std::string& w) : Error(ErrorKind::Domain, w) {}
};
struct InsufficientDataError : Error {
    explicit InsufficientDataError(const std::string& w) : Error(ErrorKind::InsufficientData, w) {}
};
struct DegenerateInputError : Error {
    explicit DegenerateInputError(const std::string& w) : Error(ErrorKind::DegenerateInput, w) {}
};
struct ResourceError : Error {
    explicit ResourceError(const std::string& w) : Error(ErrorKind::Resource, w) {}
};
struct ParseError : Error {
    explicit ParseError(const std::string& w) : Error(ErrorKind::Parse, w) {}
};
struct ValidationError : Error {
    explicit ValidationError(const std::string& w) : Error(ErrorKind::Validation, w) {}
};

}  // namespace aqsense
