#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace qnm {

enum class ErrorKind {
  InvalidArgument,
  NotBangBang,
  TailNotConverged,
  ZeroFrequency,
  ZeroOnContour,
  MaxDepthExceeded,
  NotIsolated,
  NotAtRoot,
  NearMultiple,
  BranchCountMismatch,
  NoConvergence,
  StalledDirection,
  LostEigenvalue,
  CollisionDetected,
  NoFeasibleDirection,
  PhaseJump,
  OnImaginaryAxis,
  CFLViolation,
  DegenerateMedium,
  FitUnstable,
};

std::string_view to_string(ErrorKind kind);

// Single exception type for every numerical/contract failure in the library.
// Callers branch on kind(); the message carries the human-readable detail.
class SolverError : public std::runtime_error {
 public:
  SolverError(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace qnm
