// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace psamf {

// Root of every error raised by the library. `kind()` is a stable,
// machine-readable identifier used in CLI error payloads.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(what), kind_(std::move(kind)) {}
  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

#define PSAMF_DEFINE_ERROR(Name, Base, Kind)                          \
  class Name : public Base {                                          \
   public:                                                            \
    explicit Name(const std::string& what) : Base(Kind, what) {}      \
                                                                      \
   protected:                                                         \
    Name(std::string kind, const std::string& what)                   \
        : Base(std::move(kind), what) {}                              \
  };

PSAMF_DEFINE_ERROR(ShapeError, Error, "shape_mismatch")
PSAMF_DEFINE_ERROR(InvalidArgument, Error, "invalid_argument")
PSAMF_DEFINE_ERROR(DegenerateInputError, Error, "degenerate_input")
PSAMF_DEFINE_ERROR(EmptyAttentionError, Error, "empty_attention")
PSAMF_DEFINE_ERROR(VocabularyError, Error, "token_out_of_vocabulary")
PSAMF_DEFINE_ERROR(SequenceTooLongError, Error, "sequence_too_long")
PSAMF_DEFINE_ERROR(ConfigError, Error, "config_error")
PSAMF_DEFINE_ERROR(NonFiniteLossError, Error, "non_finite_loss")
PSAMF_DEFINE_ERROR(IoError, Error, "io_error")

// Archive validation failures, one type per failure class.
PSAMF_DEFINE_ERROR(ArchiveError, Error, "archive_error")
PSAMF_DEFINE_ERROR(MissingFileError, ArchiveError, "missing_file")
PSAMF_DEFINE_ERROR(ArchiveFormatError, ArchiveError, "archive_format")
PSAMF_DEFINE_ERROR(DimensionMismatchError, ArchiveError, "dimension_mismatch")
PSAMF_DEFINE_ERROR(NonFiniteValueError, ArchiveError, "non_finite_value")
PSAMF_DEFINE_ERROR(LabelRangeError, ArchiveError, "label_out_of_range")
PSAMF_DEFINE_ERROR(DuplicateIdError, ArchiveError, "duplicate_id")
PSAMF_DEFINE_ERROR(EmptySplitError, ArchiveError, "empty_split")

#undef PSAMF_DEFINE_ERROR

}  // namespace psamf
