#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace twostage {

enum class ErrorCode {
  EmptyArm,
  BadCounts,
  OutOfRange,
  MissingMechanism,
  BadKind,
  RankDeficient,
  DegenerateMechanism,
  TinyArm,
  ShapeMismatch,
  SingularCovariance,
  BadAlpha,
  NoConvergence,
  ConservativeConditionViolated,
  ZeroAlternative,
  NotSPD,
  EmptyCell,
  BadScheme,
  UnequalClusters,
  ParseError,
  MixedMechanism,
  InvalidConfig,
  Internal,
};

std::string_view to_string(ErrorCode code) noexcept;

// Numerical failures (singularity, non-convergence) as opposed to bad input.
bool is_numerical(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace twostage
