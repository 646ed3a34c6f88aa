#include "asap/error.hpp"

namespace asap {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::MalformedRating: return "MalformedRating";
    case ErrorKind::UnknownPolarity: return "UnknownPolarity";
    case ErrorKind::MissingColumn: return "MissingColumn";
    case ErrorKind::MalformedRecord: return "MalformedRecord";
    case ErrorKind::DuplicateId: return "DuplicateId";
    case ErrorKind::EmptyDataset: return "EmptyDataset";
    case ErrorKind::BadRatios: return "BadRatios";
    case ErrorKind::EmptyText: return "EmptyText";
    case ErrorKind::OutOfVocab: return "OutOfVocab";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorKind::NoMentionedAspect: return "NoMentionedAspect";
    case ErrorKind::TaxonomyMismatch: return "TaxonomyMismatch";
    case ErrorKind::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorKind::SplitViolation: return "SplitViolation";
    case ErrorKind::LengthMismatch: return "LengthMismatch";
    case ErrorKind::NonFiniteInput: return "NonFiniteInput";
    case ErrorKind::MissingTrace: return "MissingTrace";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::BadCheckpoint: return "BadCheckpoint";
    case ErrorKind::Io: return "Io";
  }
  return "Unknown";
}

bool is_data_error(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::MalformedRating:
    case ErrorKind::UnknownPolarity:
    case ErrorKind::MissingColumn:
    case ErrorKind::MalformedRecord:
    case ErrorKind::DuplicateId:
    case ErrorKind::EmptyDataset:
    case ErrorKind::EmptyText:
    case ErrorKind::NoMentionedAspect:
    case ErrorKind::TaxonomyMismatch:
    case ErrorKind::LengthMismatch:
    case ErrorKind::SplitViolation:
    case ErrorKind::BadCheckpoint:
      return true;
    default:
      return false;
  }
}

}  // namespace asap
