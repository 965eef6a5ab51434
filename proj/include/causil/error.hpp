#pragma once

#include <stdexcept>
#include <string>

namespace causil {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define CAUSIL_DEFINE_ERROR(Name)         \
  class Name : public Error {             \
   public:                                \
    using Error::Error;                   \
  }

CAUSIL_DEFINE_ERROR(CycleDetected);
CAUSIL_DEFINE_ERROR(InconsistentPattern);
CAUSIL_DEFINE_ERROR(InvalidConfig);
CAUSIL_DEFINE_ERROR(CyclicTemplate);
CAUSIL_DEFINE_ERROR(InsufficientData);
CAUSIL_DEFINE_ERROR(DegenerateData);
CAUSIL_DEFINE_ERROR(MissingData);
CAUSIL_DEFINE_ERROR(NodeSetMismatch);
CAUSIL_DEFINE_ERROR(ParseError);

#undef CAUSIL_DEFINE_ERROR

}  // namespace causil
