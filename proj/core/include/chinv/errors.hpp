#pragma once

#include <stdexcept>
#include <string>

namespace chinv {

/// Base class for all library errors.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Bad configuration values (sizes, schemas, unknown keys).
struct ConfigError : Error {
  using Error::Error;
};

/// A channel state violates the domain constraints.
struct StateError : Error {
  using Error::Error;
};

/// An action would push a channel out of the feasible set.
struct InfeasibleActionError : Error {
  using Error::Error;
};

/// Linear algebra failure (singular system, indefinite matrix, non-finite values).
struct NumericalError : Error {
  using Error::Error;
};

/// A caller broke an API precondition.
struct ContractError : Error {
  using Error::Error;
};

/// Malformed stored data (replay buffer, trace files, checkpoints).
struct DataError : Error {
  using Error::Error;
};

/// Filesystem failure.
struct IoError : Error {
  using Error::Error;
};

}  // namespace chinv
