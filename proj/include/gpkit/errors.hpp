#pragma once

#include <stdexcept>
#include <string>

namespace gpkit {

/// Base class for every error thrown by the library.
class Error : public std::runtime_error {
public:
  explicit Error(const std::string& what_arg) : std::runtime_error(what_arg) {}
};

#define GPKIT_DEFINE_ERROR(NAME)                                          \
  class NAME : public Error {                                             \
  public:                                                                 \
    explicit NAME(const std::string& what_arg) : Error(what_arg) {}       \
  };

// Construction / validation
GPKIT_DEFINE_ERROR(InvalidArgument)
GPKIT_DEFINE_ERROR(DimensionMismatch)
GPKIT_DEFINE_ERROR(NoiseShapeMismatch)
GPKIT_DEFINE_ERROR(NonFiniteValue)
GPKIT_DEFINE_ERROR(LengthMismatch)

// Kernel expressions
GPKIT_DEFINE_ERROR(MissingHyperparameter)
GPKIT_DEFINE_ERROR(UnsupportedNu)
GPKIT_DEFINE_ERROR(EmptyChildList)
GPKIT_DEFINE_ERROR(AxisOutOfRange)
GPKIT_DEFINE_ERROR(EmptyTransformList)
GPKIT_DEFINE_ERROR(NonPositivePeriod)
GPKIT_DEFINE_ERROR(SingularAverageMatrix)
GPKIT_DEFINE_ERROR(NonSPDField)

// Linear algebra / training
GPKIT_DEFINE_ERROR(NotFactorizable)
GPKIT_DEFINE_ERROR(InternalError)
GPKIT_DEFINE_ERROR(AllRestartsFailed)
GPKIT_DEFINE_ERROR(EmptyGrid)

// Benchmark harness / I/O
GPKIT_DEFINE_ERROR(ConfigError)
GPKIT_DEFINE_ERROR(ParseError)
GPKIT_DEFINE_ERROR(SchemaError)
GPKIT_DEFINE_ERROR(IoError)

#undef GPKIT_DEFINE_ERROR

}  // namespace gpkit
