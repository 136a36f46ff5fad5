// error.hpp - exception types shared by all arcfml modules

#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace arcfml {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid parameters or a violated configuration invariant.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Input data with the wrong shape or content for the requested operation.
class InputError : public Error {
public:
    using Error::Error;
};

/// Malformed or truncated binary file. Carries the byte offset where decoding failed.
class ParseError : public Error {
public:
    ParseError(const std::string& what, std::uint64_t offset)
        : Error(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}

    std::uint64_t offset() const noexcept { return offset_; }

private:
    std::uint64_t offset_;
};

/// Training diverged (non-finite loss or parameters).
class TrainingError : public Error {
public:
    TrainingError(const std::string& what, long round, long step)
        : Error(what + " (round " + std::to_string(round) + ", step " + std::to_string(step) + ")"),
          round_(round), step_(step) {}

    long round() const noexcept { return round_; }
    long step() const noexcept { return step_; }

private:
    long round_;
    long step_;
};

/// A closed-form expression was evaluated outside the region where it is defined.
class ValidityError : public Error {
public:
    using Error::Error;
};

}  // namespace arcfml
