#pragma once

#include <stdexcept>
#include <string>

namespace touchloc {

// Exit-code categories used by the CLI (see tools/).
enum class ErrorCode : int {
  Config = 2,
  ArtifactMismatch = 3,
  Runtime = 4,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, std::string type, const std::string& msg)
      : std::runtime_error(msg), code_(code), type_(std::move(type)) {}
  ErrorCode code() const { return code_; }
  const std::string& type() const { return type_; }

 private:
  ErrorCode code_;
  std::string type_;
};

#define TOUCHLOC_DEFINE_ERROR(NAME, CODE)                      \
  class NAME : public Error {                                  \
   public:                                                     \
    explicit NAME(const std::string& msg)                      \
        : Error(ErrorCode::CODE, #NAME, std::string(#NAME ": ") + msg) {} \
  }

TOUCHLOC_DEFINE_ERROR(ParseError, Config);
TOUCHLOC_DEFINE_ERROR(ConfigError, Config);
TOUCHLOC_DEFINE_ERROR(SymmetryError, Config);
TOUCHLOC_DEFINE_ERROR(EmptyMesh, Runtime);
TOUCHLOC_DEFINE_ERROR(NoContactPossible, Runtime);
TOUCHLOC_DEFINE_ERROR(NotSettled, Runtime);
TOUCHLOC_DEFINE_ERROR(DimensionMismatch, Runtime);
TOUCHLOC_DEFINE_ERROR(EmptyGrid, Runtime);
TOUCHLOC_DEFINE_ERROR(DivergenceError, Runtime);
TOUCHLOC_DEFINE_ERROR(ZeroPosterior, Runtime);
TOUCHLOC_DEFINE_ERROR(InvalidTrainingPrior, Runtime);
TOUCHLOC_DEFINE_ERROR(EmptySupport, Runtime);
TOUCHLOC_DEFINE_ERROR(ArtifactMismatchError, ArtifactMismatch);

#undef TOUCHLOC_DEFINE_ERROR

}  // namespace touchloc
