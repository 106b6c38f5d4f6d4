#pragma once

#include <stdexcept>
#include <string>

namespace krew {

// Base of every error the library throws. Subclasses name the failure class
// so callers (CLI, HTTP service) can map them to exit codes / status codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define KREW_DEFINE_ERROR(Name)          \
  class Name : public Error {            \
   public:                               \
    using Error::Error;                  \
  }

KREW_DEFINE_ERROR(SchemaError);
KREW_DEFINE_ERROR(ParseError);
KREW_DEFINE_ERROR(IoError);
KREW_DEFINE_ERROR(KindError);
KREW_DEFINE_ERROR(LookupError);
KREW_DEFINE_ERROR(ParameterError);
KREW_DEFINE_ERROR(ConfigError);
KREW_DEFINE_ERROR(CoverageError);
KREW_DEFINE_ERROR(ConsistencyError);
KREW_DEFINE_ERROR(DomainError);
KREW_DEFINE_ERROR(NumericError);
KREW_DEFINE_ERROR(InsufficientVocabularyError);
KREW_DEFINE_ERROR(UndefinedError);
KREW_DEFINE_ERROR(IncompatibleError);
KREW_DEFINE_ERROR(CorruptionError);

#undef KREW_DEFINE_ERROR

}  // namespace krew
