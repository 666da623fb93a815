#pragma once

#include <stdexcept>
#include <string>

namespace fieldmap {

// Base class for all library failures.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Geometry / camera
struct NonUnitQuaternion : Error { using Error::Error; };
struct NonPositiveDisparity : Error { using Error::Error; };
struct BehindCamera : Error { using Error::Error; };
struct DegenerateGeometry : Error { using Error::Error; };

// Image / detection
struct DegenerateMask : Error { using Error::Error; };

// Association
struct EmptySide : Error { using Error::Error; };

// Registration
struct InsufficientOverlap : Error { using Error::Error; };
struct NoGroundTruth : Error { using Error::Error; };

// Evaluation
struct EmptyInput : Error { using Error::Error; };
struct MissingGroundTruth : Error { using Error::Error; };
struct FrameMismatch : Error { using Error::Error; };

// Configuration and I/O; the CLI maps these onto its exit-code contract.
struct ConfigError : Error { using Error::Error; };
struct InputIoError : Error { using Error::Error; };
struct OutputIoError : Error { using Error::Error; };

}  // namespace fieldmap
