#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace a3 {

/// Base of every error raised by the toolkit.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Tensor or model shapes do not line up.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// A value lies outside the domain of an operation (non-finite input, C < 2, ...).
class DomainError : public Error {
public:
    using Error::Error;
};

/// The requested operation is not supported for this input.
class CapabilityError : public Error {
public:
    using Error::Error;
};

/// Semantically invalid input (bad config, empty dataset, label out of range).
class ValidationError : public Error {
public:
    using Error::Error;
};

/// Malformed binary input. Carries the byte offset where parsing failed.
class FormatError : public Error {
public:
    FormatError(const std::string& what, std::uint64_t offset)
        : Error(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}

    std::uint64_t offset() const noexcept { return offset_; }

private:
    std::uint64_t offset_;
};

/// Budget counter overflow or an inconsistent charge.
class AccountingError : public Error {
public:
    using Error::Error;
};

/// An internal postcondition was violated (e.g. a witness outside the epsilon-ball).
class InvariantError : public Error {
public:
    using Error::Error;
};

/// ODI direction whose input gradient vanishes identically.
class DegenerateDirectionError : public Error {
public:
    using Error::Error;
};

/// File system failure, with the offending path in the message.
class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace a3
