#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace bearing_forge {

enum class ErrorCode {
  DegenerateBearing,
  NonUnitInput,
  MissingBearing,
  NotLocalizable,
  DuplicateFrequency,
  NonPositiveFrequency,
  SingularSylvesterOperator,
  SingularT,
  IsolatedFollower,
  GainConditionViolated,
  DimensionMismatch,
  CertificateFailed,
  CollisionDetected,
  NonFiniteState,
  ParseError,
  ValidationError,
  IoError,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::DegenerateBearing: return "DegenerateBearing";
    case ErrorCode::NonUnitInput: return "NonUnitInput";
    case ErrorCode::MissingBearing: return "MissingBearing";
    case ErrorCode::NotLocalizable: return "NotLocalizable";
    case ErrorCode::DuplicateFrequency: return "DuplicateFrequency";
    case ErrorCode::NonPositiveFrequency: return "NonPositiveFrequency";
    case ErrorCode::SingularSylvesterOperator: return "SingularSylvesterOperator";
    case ErrorCode::SingularT: return "SingularT";
    case ErrorCode::IsolatedFollower: return "IsolatedFollower";
    case ErrorCode::GainConditionViolated: return "GainConditionViolated";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::CertificateFailed: return "CertificateFailed";
    case ErrorCode::CollisionDetected: return "CollisionDetected";
    case ErrorCode::NonFiniteState: return "NonFiniteState";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::ValidationError: return "ValidationError";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

/// Every failure raised by the library carries one of the codes above; the
/// message is prefixed with the code name so it survives being rethrown as
/// a ValidationError by the scenario loader.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  [[nodiscard]] ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// Raised by the integrator when two agents come closer than the collision
/// threshold. Agent ids are 1-based.
class CollisionError : public Error {
 public:
  CollisionError(double time, int agent_a, int agent_b, double distance)
      : Error(ErrorCode::CollisionDetected,
              "agents " + std::to_string(agent_a) + " and " + std::to_string(agent_b) +
                  " at t=" + std::to_string(time) + " (distance " + std::to_string(distance) +
                  ")"),
        time_(time),
        agent_a_(agent_a),
        agent_b_(agent_b) {}

  [[nodiscard]] double time() const noexcept { return time_; }
  [[nodiscard]] int agent_a() const noexcept { return agent_a_; }
  [[nodiscard]] int agent_b() const noexcept { return agent_b_; }

 private:
  double time_;
  int agent_a_;
  int agent_b_;
};

}  // namespace bearing_forge
