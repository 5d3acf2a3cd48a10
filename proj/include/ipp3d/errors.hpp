#pragma once

#include <stdexcept>
#include <string>

namespace ipp3d {

// Base of every error raised by the library.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConfigError : Error { using Error::Error; };
struct IoError : Error { using Error::Error; };
struct FormatError : Error { using Error::Error; };

// World generation could not place all trees without overlap.
struct PlacementError : Error { using Error::Error; };

struct BudgetExceeded : Error { using Error::Error; };

// A transition was requested along a segment that is not known-free.
// This is a caller bug, not a recoverable runtime condition.
struct PathBlocked : Error { using Error::Error; };

struct SingularKernel : Error { using Error::Error; };
struct DegenerateTrace : Error { using Error::Error; };

// Every node of a graph is outside the remaining budget.
struct AllMasked : Error { using Error::Error; };

struct NonFiniteLoss : Error { using Error::Error; };

}  // namespace ipp3d
