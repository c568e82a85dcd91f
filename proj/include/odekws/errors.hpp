#pragma once

#include <stdexcept>
#include <string>

namespace odekws {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// I/O and file-format failures
struct IoError : Error { using Error::Error; };
struct FormatError : Error { using Error::Error; };
struct ParseError : Error { using Error::Error; };

// configuration and dataset layout
struct ConfigError : Error { using Error::Error; };
struct LayoutError : Error { using Error::Error; };
struct EmptySplitError : Error { using Error::Error; };

// tensor / graph
struct ShapeError : Error { using Error::Error; };
struct GraphError : Error { using Error::Error; };

// normalization statistics
struct EmptyDatabaseError : Error { using Error::Error; };

// solver and training
struct StepUnderflowError : Error { using Error::Error; };
struct StepBudgetExceededError : Error { using Error::Error; };
struct NonFiniteStateError : Error { using Error::Error; };
struct NonFiniteLossError : Error { using Error::Error; };

}  // namespace odekws
