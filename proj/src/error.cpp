#include "twostage/error.hpp"

namespace twostage {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::EmptyArm: return "EmptyArm";
    case ErrorCode::BadCounts: return "BadCounts";
    case ErrorCode::OutOfRange: return "OutOfRange";
    case ErrorCode::MissingMechanism: return "MissingMechanism";
    case ErrorCode::BadKind: return "BadKind";
    case ErrorCode::RankDeficient: return "RankDeficient";
    case ErrorCode::DegenerateMechanism: return "DegenerateMechanism";
    case ErrorCode::TinyArm: return "TinyArm";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::SingularCovariance: return "SingularCovariance";
    case ErrorCode::BadAlpha: return "BadAlpha";
    case ErrorCode::NoConvergence: return "NoConvergence";
    case ErrorCode::ConservativeConditionViolated: return "ConservativeConditionViolated";
    case ErrorCode::ZeroAlternative: return "ZeroAlternative";
    case ErrorCode::NotSPD: return "NotSPD";
    case ErrorCode::EmptyCell: return "EmptyCell";
    case ErrorCode::BadScheme: return "BadScheme";
    case ErrorCode::UnequalClusters: return "UnequalClusters";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::MixedMechanism: return "MixedMechanism";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::Internal: return "Internal";
  }
  return "Unknown";
}

bool is_numerical(ErrorCode code) noexcept {
  return code == ErrorCode::SingularCovariance || code == ErrorCode::NoConvergence ||
         code == ErrorCode::NotSPD || code == ErrorCode::Internal;
}

}  // namespace twostage
