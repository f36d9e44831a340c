#ifndef PRIMSEG_ERRORS_HPP_
#define PRIMSEG_ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace primseg {

// Base of every error thrown by the library. kind() is a short stable tag
// that the CLI prints as the machine-parsable prefix on stderr.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual const char* kind() const noexcept = 0;
};

#define PRIMSEG_DEFINE_ERROR(Name, Tag)                            \
  class Name : public Error {                                      \
   public:                                                          \
    using Error::Error;                                             \
    const char* kind() const noexcept override { return Tag; }      \
  }

// Invalid argument or configuration.
PRIMSEG_DEFINE_ERROR(ParameterError, "parameter");
// Factorization failure, underflow, or another floating-point breakdown.
PRIMSEG_DEFINE_ERROR(NumericError, "numeric");
// Malformed input file.
PRIMSEG_DEFINE_ERROR(ParseError, "parse");
// Topics do not overlap in time.
PRIMSEG_DEFINE_ERROR(RangeError, "range");
// A topic has a hole larger than the allowed gap inside the resampling window.
PRIMSEG_DEFINE_ERROR(GapError, "gap");
// Catalog consistency violation, conflicting insert, or held lock.
PRIMSEG_DEFINE_ERROR(IntegrityError, "integrity");
// Lookup of a bag, scenario, or behavior that does not exist.
PRIMSEG_DEFINE_ERROR(NotFoundError, "not-found");

#undef PRIMSEG_DEFINE_ERROR

}  // namespace primseg

#endif  // PRIMSEG_ERRORS_HPP_
