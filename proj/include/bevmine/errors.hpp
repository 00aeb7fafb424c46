#pragma once

#include <stdexcept>
#include <string>

namespace bevmine {

/// Base class for all bevmine errors. `code()` is a stable machine-readable
/// identifier, used verbatim in CLI error objects.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& message)
      : std::runtime_error(message), code_(std::move(code)) {}

  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

#define BEVMINE_DEFINE_ERROR(NAME)                         \
  class NAME : public Error {                              \
   public:                                                 \
    explicit NAME(const std::string& message)              \
        : Error(#NAME, message) {}                         \
  }

// geom
BEVMINE_DEFINE_ERROR(BehindCamera);
BEVMINE_DEFINE_ERROR(NonPositiveDepth);
// homography
BEVMINE_DEFINE_ERROR(PointAtInfinity);
BEVMINE_DEFINE_ERROR(TooFewPoints);
BEVMINE_DEFINE_ERROR(DegenerateConfiguration);
// mining (named in reports; mining itself falls back instead of throwing)
BEVMINE_DEFINE_ERROR(InsufficientSeed);
// gradproj
BEVMINE_DEFINE_ERROR(NonPositiveSigma);
BEVMINE_DEFINE_ERROR(ZeroGradient);
BEVMINE_DEFINE_ERROR(ZeroPrincipalGradient);
BEVMINE_DEFINE_ERROR(DimensionMismatch);
// synth
BEVMINE_DEFINE_ERROR(PlacementFailure);
// eval
BEVMINE_DEFINE_ERROR(DegenerateSeries);
// cli / io
BEVMINE_DEFINE_ERROR(IoError);
BEVMINE_DEFINE_ERROR(InvalidConfig);
BEVMINE_DEFINE_ERROR(UnsupportedVersion);
BEVMINE_DEFINE_ERROR(MismatchedInputs);

#undef BEVMINE_DEFINE_ERROR

}  // namespace bevmine
