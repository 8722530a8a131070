#pragma once

#include <stdexcept>
#include <string>

namespace fscil {

// Broad failure class. The CLI maps these onto exit codes 1, 2 and 3.
enum class ErrorCategory { validation, runtime, io };

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, std::string name, const std::string& message)
      : std::runtime_error(message), category_(category), name_(std::move(name)) {}

  ErrorCategory category() const noexcept { return category_; }
  const std::string& name() const noexcept { return name_; }

 private:
  ErrorCategory category_;
  std::string name_;
};

#define FSCIL_DEFINE_ERROR(Type, Base, Category)                       \
  class Type : public Base {                                           \
   public:                                                             \
    explicit Type(const std::string& message)                          \
        : Base(ErrorCategory::Category, #Type, message) {}             \
                                                                       \
   protected:                                                          \
    Type(ErrorCategory category, std::string name, const std::string& message) \
        : Base(category, std::move(name), message) {}                  \
  }

FSCIL_DEFINE_ERROR(ValidationError, Error, validation);
FSCIL_DEFINE_ERROR(ShapeError, ValidationError, validation);
FSCIL_DEFINE_ERROR(ArgumentError, ValidationError, validation);
FSCIL_DEFINE_ERROR(LabelOverlapError, ValidationError, validation);
FSCIL_DEFINE_ERROR(PlanViolationError, ValidationError, validation);
FSCIL_DEFINE_ERROR(DisjointnessError, ValidationError, validation);
FSCIL_DEFINE_ERROR(DataError, ValidationError, validation);
FSCIL_DEFINE_ERROR(GenerationError, ValidationError, validation);

// Archive decoding failures, one type per way a file can be bad.
FSCIL_DEFINE_ERROR(FormatError, ValidationError, validation);
FSCIL_DEFINE_ERROR(BadMagicError, FormatError, validation);
FSCIL_DEFINE_ERROR(UnsupportedVersionError, FormatError, validation);
FSCIL_DEFINE_ERROR(TruncatedArchiveError, FormatError, validation);
FSCIL_DEFINE_ERROR(ChecksumMismatchError, FormatError, validation);

FSCIL_DEFINE_ERROR(DegenerateInputError, Error, runtime);
FSCIL_DEFINE_ERROR(ContractError, Error, runtime);
FSCIL_DEFINE_ERROR(TrainingDivergenceError, Error, runtime);
FSCIL_DEFINE_ERROR(EvaluationError, Error, runtime);

FSCIL_DEFINE_ERROR(IoError, Error, io);

#undef FSCIL_DEFINE_ERROR

}  // namespace fscil
