#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>

namespace tefb {

enum class Errc {
  MalformedHeader,
  TruncatedFile,
  SectionOverflow,
  NoExecSection,
  InvariantViolation,
  AlreadyPacked,
  NotPacked,
  UnpackFailure,
  NoUsableIngredients,
  IoFailure,
  DivergenceDetected,
  InsufficientHoldout,
  NotTreeModel,
  MalformedInput,
  EpisodeFinished,
  ExhaustedCorpus,
  NonFiniteLoss,
  BudgetExceeded,
  SurrogateDegenerate,
  KTooLarge,
  EmptyEvaluation,
  MissingArtifacts,
  TimedOut,
  InvalidArgument,
  DegenerateLabels,
};

std::string_view errc_name(Errc code);

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

/// Parse failure carrying the byte offset of the first violated rule.
class ParseError : public Error {
 public:
  ParseError(Errc code, std::size_t offset, const std::string& what)
      : Error(code, what + " (offset " + std::to_string(offset) + ")"), offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

}  // namespace tefb
