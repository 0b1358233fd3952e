#pragma once

#include <stdexcept>
#include <string>

namespace crowdnav {

// Malformed input text (JSON syntax, bad CSV row, truncated payload).
class ParseError : public std::runtime_error {
 public:
  explicit ParseError(const std::string& what) : std::runtime_error(what) {}
};

// Structurally valid input that violates a semantic rule
// (obstacle outside extent, unknown key, schema version mismatch).
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

// Inconsistent experiment configuration (e.g. crowd localizer without a map).
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace crowdnav
