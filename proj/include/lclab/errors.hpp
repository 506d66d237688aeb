#pragma once

#include <stdexcept>
#include <string>

namespace lclab {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define LCLAB_DEFINE_ERROR(Name)          \
  class Name : public Error {             \
   public:                                \
    using Error::Error;                   \
  };

LCLAB_DEFINE_ERROR(InvalidArgument)
LCLAB_DEFINE_ERROR(DecayViolation)
LCLAB_DEFINE_ERROR(NumericalFailure)
LCLAB_DEFINE_ERROR(QuadratureFailure)
LCLAB_DEFINE_ERROR(ConstructionFailure)
LCLAB_DEFINE_ERROR(DimensionMismatch)
LCLAB_DEFINE_ERROR(PositivityDrift)
LCLAB_DEFINE_ERROR(OracleSizeExceeded)
LCLAB_DEFINE_ERROR(PhiConditionViolation)
LCLAB_DEFINE_ERROR(SupersonicDetected)
LCLAB_DEFINE_ERROR(BoundaryContamination)
LCLAB_DEFINE_ERROR(ParseError)
LCLAB_DEFINE_ERROR(ValidationError)

#undef LCLAB_DEFINE_ERROR

inline void require(bool cond, const std::string& what) {
  if (!cond) throw InvalidArgument(what);
}

}  // namespace lclab
