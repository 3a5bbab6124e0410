#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ivcheck {

enum class ErrorKind {
  MissingColumn,
  ParseError,
  NonFiniteValue,
  EmptyData,
  InvalidArgument,
  DegenerateSupport,
  RankDeficient,
  SingularWeight,
  DomainError,
  InsufficientData,
  EmptyWindow,
  TooManyCells,
  EvaluatorDomainError,
  DegenerateVariance,
  SimulationBudgetTooSmall,
  EmptyGrid,
  OffSupport,
  MissingBounds,
  Io,
};

std::string_view to_string(ErrorKind kind);

/// All library failures are reported through this type; `kind()` lets callers
/// branch without parsing the message.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace ivcheck
