#pragma once

#include <stdexcept>
#include <string>

namespace lvi {

// Fatal conditions raised as exceptions. Recoverable per-point signals
// (degenerate planes, skipped residuals, ...) are returned as std::optional
// or small status enums by the modules that produce them.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

#define LVI_DEFINE_ERROR(Name)                                     \
  class Name : public Error {                                      \
   public:                                                         \
    explicit Name(const std::string& what) : Error(#Name ": " + what) {} \
  }

LVI_DEFINE_ERROR(AngleNearPi);
LVI_DEFINE_ERROR(EmptyScan);
LVI_DEFINE_ERROR(ImuGap);
LVI_DEFINE_ERROR(TooCloseToOrigin);
LVI_DEFINE_ERROR(AllResidualsRejected);
LVI_DEFINE_ERROR(SolverSingular);
LVI_DEFINE_ERROR(GaugeUnfixed);
LVI_DEFINE_ERROR(FormatError);
LVI_DEFINE_ERROR(ClockSkew);
LVI_DEFINE_ERROR(NoOverlap);
LVI_DEFINE_ERROR(IoError);
LVI_DEFINE_ERROR(ConfigError);

#undef LVI_DEFINE_ERROR

}  // namespace lvi
