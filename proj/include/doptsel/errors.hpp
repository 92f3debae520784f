#pragma once

#include <stdexcept>
#include <string>

namespace doptsel {

// All library failures derive from Error so callers can catch the whole
// family or the specific condition they can actually handle.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DimensionMismatch : Error {
  using Error::Error;
};

// Cholesky hit a nonpositive or nonfinite pivot. The input was not SPD (or
// cancellation destroyed it); callers decide whether that is fatal.
struct NotPositiveDefinite : Error {
  int pivot_index;
  explicit NotPositiveDefinite(int pivot)
      : Error("matrix not positive definite at pivot " + std::to_string(pivot)),
        pivot_index(pivot) {}
};

struct SingularFactor : Error {
  int index;
  explicit SingularFactor(int i)
      : Error("triangular factor has zero/nonfinite diagonal at " + std::to_string(i)),
        index(i) {}
};

struct NonFiniteResult : Error {
  using Error::Error;
};

struct BudgetExceeded : Error {
  using Error::Error;
};

struct InvalidConfig : Error {
  using Error::Error;
};

struct TooLarge : Error {
  using Error::Error;
};

struct IoError : Error {
  using Error::Error;
};

struct InvalidMatrix : Error {
  using Error::Error;
};

struct CorruptFile : Error {
  using Error::Error;
};

struct IndexOutOfRange : Error {
  using Error::Error;
};

// A selection round where every remaining candidate failed to factorize.
struct InfeasibleRound : Error {
  int round;
  explicit InfeasibleRound(int r)
      : Error("all remaining candidates infeasible in round " + std::to_string(r)),
        round(r) {}
};

struct AllInfeasible : Error {
  using Error::Error;
};

struct PropertyViolation : Error {
  using Error::Error;
};

struct WorkerFailure : Error {
  int round;
  WorkerFailure(int r, const std::string& what)
      : Error("worker failed in round " + std::to_string(r) + ": " + what), round(r) {}
};

}  // namespace doptsel
