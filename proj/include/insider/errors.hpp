#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace insider {

// Exit categories surfaced by the CLI: 2 configuration, 3 data, 4 numeric.
enum class ErrorKind : int { Config = 2, Data = 3, Numeric = 4 };

class Error : public std::runtime_error {
 public:
  Error(std::string code, ErrorKind kind, const std::string& message)
      : std::runtime_error(code + ": " + message),
        code_(std::move(code)),
        kind_(kind) {}

  const std::string& code() const noexcept { return code_; }
  ErrorKind kind() const noexcept { return kind_; }
  int exit_code() const noexcept { return static_cast<int>(kind_); }

 private:
  std::string code_;
  ErrorKind kind_;
};

#define INSIDER_ERROR_TYPE(NAME, KIND)                          \
  class NAME : public Error {                                   \
   public:                                                      \
    explicit NAME(const std::string& message)                   \
        : Error(#NAME, ErrorKind::KIND, message) {}             \
  };

// form4
INSIDER_ERROR_TYPE(MalformedXml, Data)
INSIDER_ERROR_TYPE(MissingRequiredField, Data)
INSIDER_ERROR_TYPE(EmptyDefendantList, Config)

// dataset
INSIDER_ERROR_TYPE(NonFiniteInput, Data)
INSIDER_ERROR_TYPE(UnknownCategory, Data)
INSIDER_ERROR_TYPE(InsufficientPool, Data)
INSIDER_ERROR_TYPE(DegenerateSplit, Data)
INSIDER_ERROR_TYPE(InvalidSpec, Config)

// linalg
INSIDER_ERROR_TYPE(NotCentered, Data)
INSIDER_ERROR_TYPE(NoConvergence, Numeric)
INSIDER_ERROR_TYPE(TooFewRows, Data)

// pca
INSIDER_ERROR_TYPE(ZeroVariance, Numeric)
INSIDER_ERROR_TYPE(DimensionMismatch, Data)
INSIDER_ERROR_TYPE(KOutOfRange, Data)

// forest
INSIDER_ERROR_TYPE(SingleClassInput, Data)
INSIDER_ERROR_TYPE(EmptyNode, Data)
INSIDER_ERROR_TYPE(NoOobRows, Data)

// evaluate
INSIDER_ERROR_TYPE(LengthMismatch, Data)
INSIDER_ERROR_TYPE(EmptyInput, Data)
INSIDER_ERROR_TYPE(SingleClass, Data)
INSIDER_ERROR_TYPE(NoPositiveClass, Data)
INSIDER_ERROR_TYPE(BadK, Config)
INSIDER_ERROR_TYPE(ConfigError, Config)

// importance
INSIDER_ERROR_TYPE(BadCorrelationMatrix, Data)

#undef INSIDER_ERROR_TYPE

}  // namespace insider
