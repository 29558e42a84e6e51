#pragma once

#include <stdexcept>
#include <string>

namespace dib {

// Construction-time shape incompatibilities (layer wiring, batch vs input).
class ShapeError : public std::runtime_error {
public:
    explicit ShapeError(const std::string& what) : std::runtime_error(what) {}
};

// Bad argument values (label out of range, empty dataset, invalid fraction).
class ValueError : public std::runtime_error {
public:
    explicit ValueError(const std::string& what) : std::runtime_error(what) {}
};

// Experiment / run configuration rejected before any training starts.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// IDX container failures, one kind per failure mode.
class IdxError : public std::runtime_error {
public:
    enum class Kind { BadMagic, Truncated, CountMismatch, Io };

    IdxError(Kind kind, const std::string& what)
        : std::runtime_error(what), kind_(kind) {}

    Kind kind() const { return kind_; }

private:
    Kind kind_;
};

// Model file failures, distinct kinds so callers can tell truncation from
// version drift.
class ModelIoError : public std::runtime_error {
public:
    enum class Kind { BadMagic, VersionMismatch, Truncated, Invalid, Io };

    ModelIoError(Kind kind, const std::string& what)
        : std::runtime_error(what), kind_(kind) {}

    Kind kind() const { return kind_; }

private:
    Kind kind_;
};

} // namespace dib
