#pragma once

#include <stdexcept>
#include <string>

namespace driftmon {

// Error taxonomy used across the library.
//
// ConfigError     — a spec/config field is out of range or inconsistent
//                   (bad Δ, horizon, cluster layout, hyperparameter, ...).
// ValidationError — runtime data violates a documented precondition
//                   (out-of-range confidence, dimension mismatch, empty
//                   sample where one is required, ...).
// ParseError      — malformed external input (CSV/config files); messages
//                   carry the offending line number.
// LipschitzError  — a requested drift curve exceeds its own Δ bound; a
//                   ConfigError subtype so callers may catch either.

class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

class ValidationError : public std::runtime_error {
public:
    explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

class ParseError : public std::runtime_error {
public:
    explicit ParseError(const std::string& what) : std::runtime_error(what) {}
};

class LipschitzError : public ConfigError {
public:
    explicit LipschitzError(const std::string& what) : ConfigError(what) {}
};

}  // namespace driftmon
