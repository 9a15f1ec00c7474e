// clevercatch/error.hpp
// Exception types shared by every module.
#pragma once

#include <stdexcept>
#include <string>

namespace clevercatch {

// Base for every error raised by the library. `kind()` is a short stable tag
// used by the CLI to print machine-parsable error lines.
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& what)
        : std::runtime_error(what), kind_(std::move(kind)) {}

    const std::string& kind() const noexcept { return kind_; }

private:
    std::string kind_;
};

struct ShapeError : Error {
    explicit ShapeError(const std::string& what) : Error("shape", what) {}
};

struct ParseError : Error {
    explicit ParseError(const std::string& what) : Error("parse", what) {}
};

struct NumericError : Error {
    explicit NumericError(const std::string& what) : Error("numeric", what) {}
};

struct ContractError : Error {
    explicit ContractError(const std::string& what) : Error("contract", what) {}
};

struct ConfigError : Error {
    explicit ConfigError(const std::string& what) : Error("config", what) {}
};

struct IoError : Error {
    explicit IoError(const std::string& what) : Error("io", what) {}
};

struct FingerprintError : Error {
    explicit FingerprintError(const std::string& what) : Error("fingerprint", what) {}
};

}  // namespace clevercatch
