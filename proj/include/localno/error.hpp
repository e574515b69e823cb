#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace localno {

enum class ErrorKind {
  InvalidArgument,
  UnsupportedTopology,
  AssemblyDegenerate,
  NotEquivariant,
  DegenerateNeighborhood,
  DegenerateTarget,
  Diverged,
  IncompatibleDataset,
  Io,
};

constexpr std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidArgument: return "invalid-argument";
    case ErrorKind::UnsupportedTopology: return "unsupported-topology";
    case ErrorKind::AssemblyDegenerate: return "assembly-degenerate";
    case ErrorKind::NotEquivariant: return "not-equivariant";
    case ErrorKind::DegenerateNeighborhood: return "degenerate-neighborhood";
    case ErrorKind::DegenerateTarget: return "degenerate-target";
    case ErrorKind::Diverged: return "diverged";
    case ErrorKind::IncompatibleDataset: return "incompatible-dataset";
    case ErrorKind::Io: return "io";
  }
  return "unknown";
}

/// Single exception type for the library; callers branch on kind().
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline void require(bool condition, ErrorKind kind, const std::string& what) {
  if (!condition) throw Error(kind, what);
}

}  // namespace localno
