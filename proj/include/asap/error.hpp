#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace asap {

enum class ErrorKind {
  MalformedRating,
  UnknownPolarity,
  MissingColumn,
  MalformedRecord,
  DuplicateId,
  EmptyDataset,
  BadRatios,
  EmptyText,
  OutOfVocab,
  ShapeMismatch,
  IndexOutOfRange,
  NoMentionedAspect,
  TaxonomyMismatch,
  NonFiniteLoss,
  SplitViolation,
  LengthMismatch,
  NonFiniteInput,
  MissingTrace,
  InvalidArgument,
  BadCheckpoint,
  Io,
};

std::string_view to_string(ErrorKind kind);

// Errors caused by the content of input files rather than by the program or
// the environment. The CLI maps these to exit code 2.
bool is_data_error(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what),
        kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace asap
