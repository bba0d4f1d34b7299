#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace rigno {

/// Shape, range or precondition violation in a call.
class ArgumentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Degenerate geometric input (collinear points, duplicate vertices, ...).
class GeometryError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration (bad keys, impossible sizes).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Graph assembly failed an invariant, e.g. a physical node receives no decoder edge.
class ConstructionError : public std::runtime_error {
 public:
  ConstructionError(const std::string& what, std::int64_t node)
      : std::runtime_error(what), node_(node) {}
  std::int64_t node() const { return node_; }

 private:
  std::int64_t node_;
};

/// Malformed binary file. Carries the byte offset at which decoding failed.
class FormatError : public std::runtime_error {
 public:
  FormatError(const std::string& what, std::uint64_t offset)
      : std::runtime_error(what + " (at byte " + std::to_string(offset) + ")"), offset_(offset) {}
  std::uint64_t offset() const { return offset_; }

 private:
  std::uint64_t offset_;
};

/// Training diverged.
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace rigno
