#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace hwrisk {

// Every module reports contract violations with a subclass of Error so the
// CLI can map them onto exit status 2 in one place.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define HWRISK_DEFINE_ERROR(Name)              \
  class Name : public Error {                  \
   public:                                     \
    explicit Name(const std::string& what)     \
        : Error(#Name ": " + what) {}          \
  }

HWRISK_DEFINE_ERROR(SingularPosition);
HWRISK_DEFINE_ERROR(InvalidGrid);
HWRISK_DEFINE_ERROR(NonPositiveGap);
HWRISK_DEFINE_ERROR(MissingEgo);
HWRISK_DEFINE_ERROR(NoFeasibleInsertion);
HWRISK_DEFINE_ERROR(EpisodeFinished);
HWRISK_DEFINE_ERROR(ShapeMismatch);
HWRISK_DEFINE_ERROR(GraphNotEvaluated);
HWRISK_DEFINE_ERROR(LengthMismatch);
HWRISK_DEFINE_ERROR(NonFiniteLoss);
HWRISK_DEFINE_ERROR(NegativeGap);
HWRISK_DEFINE_ERROR(IncompleteLog);
HWRISK_DEFINE_ERROR(MissingColumn);
HWRISK_DEFINE_ERROR(SubjectNotFound);
HWRISK_DEFINE_ERROR(ConfigError);
HWRISK_DEFINE_ERROR(CheckpointError);

#undef HWRISK_DEFINE_ERROR

// Carries the 1-based line number and the column name of the bad field.
class ParseError : public Error {
 public:
  ParseError(int line, std::string column, const std::string& what)
      : Error("ParseError: line " + std::to_string(line) + ", column '" + column + "': " + what),
        line_(line),
        column_(std::move(column)) {}

  int line() const { return line_; }
  const std::string& column() const { return column_; }

 private:
  int line_;
  std::string column_;
};

}  // namespace hwrisk
