#pragma once

#include <stdexcept>
#include <string>

namespace mfgham {

/// Root of every error raised by the library. Callers that only care about
/// "something went wrong in the solver" catch this.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define MFGHAM_DEFINE_ERROR(Name)          \
  class Name : public Error {              \
   public:                                 \
    using Error::Error;                    \
  }

MFGHAM_DEFINE_ERROR(EmptyData);
MFGHAM_DEFINE_ERROR(InvalidBounds);
MFGHAM_DEFINE_ERROR(DimensionMismatch);
MFGHAM_DEFINE_ERROR(InvariantViolation);
MFGHAM_DEFINE_ERROR(EmptyInterval);
MFGHAM_DEFINE_ERROR(OutOfFeasible);
MFGHAM_DEFINE_ERROR(InfeasibleAction);
MFGHAM_DEFINE_ERROR(IterationDiverged);
MFGHAM_DEFINE_ERROR(OracleNoConvergence);
MFGHAM_DEFINE_ERROR(InsufficientTrajectory);
MFGHAM_DEFINE_ERROR(DegenerateInput);
MFGHAM_DEFINE_ERROR(ConfigError);
MFGHAM_DEFINE_ERROR(ParseError);

#undef MFGHAM_DEFINE_ERROR

}  // namespace mfgham
