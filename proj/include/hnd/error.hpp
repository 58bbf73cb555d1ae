#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace hnd {

enum class ErrorKind {
  DegenerateEdge,
  NonPositiveWeight,
  NodeIdOutOfRange,
  IsolatedNode,
  MalformedDocument,
  InvalidAlpha,
  EdgeSizeExceedsClass,
  InvalidRate,
  ResultingIsolatedNode,
  ShapeMismatch,
  TooLarge,
  NoConvergence,
  TooFewSteps,
  StepUnderflow,
  InvalidRatios,
  UnsupportedSchemeForTraining,
  InvalidConfig,
  Io,
};

constexpr std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::DegenerateEdge: return "DegenerateEdge";
    case ErrorKind::NonPositiveWeight: return "NonPositiveWeight";
    case ErrorKind::NodeIdOutOfRange: return "NodeIdOutOfRange";
    case ErrorKind::IsolatedNode: return "IsolatedNode";
    case ErrorKind::MalformedDocument: return "MalformedDocument";
    case ErrorKind::InvalidAlpha: return "InvalidAlpha";
    case ErrorKind::EdgeSizeExceedsClass: return "EdgeSizeExceedsClass";
    case ErrorKind::InvalidRate: return "InvalidRate";
    case ErrorKind::ResultingIsolatedNode: return "ResultingIsolatedNode";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::TooLarge: return "TooLarge";
    case ErrorKind::NoConvergence: return "NoConvergence";
    case ErrorKind::TooFewSteps: return "TooFewSteps";
    case ErrorKind::StepUnderflow: return "StepUnderflow";
    case ErrorKind::InvalidRatios: return "InvalidRatios";
    case ErrorKind::UnsupportedSchemeForTraining: return "UnsupportedSchemeForTraining";
    case ErrorKind::InvalidConfig: return "InvalidConfig";
    case ErrorKind::Io: return "Io";
  }
  return "Unknown";
}

/// Library-wide exception. `kind()` names the failure; numerical failures
/// may carry the last residual or error estimate.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& detail,
        std::optional<double> residual = std::nullopt)
      : std::runtime_error(std::string(to_string(kind)) + ": " + detail),
        kind_(kind),
        residual_(residual) {}

  ErrorKind kind() const noexcept { return kind_; }
  std::optional<double> residual() const noexcept { return residual_; }

  bool numerical() const noexcept {
    return kind_ == ErrorKind::NoConvergence || kind_ == ErrorKind::StepUnderflow;
  }

 private:
  ErrorKind kind_;
  std::optional<double> residual_;
};

}  // namespace hnd
