#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace recat {

enum class Errc {
  InvalidLength,
  NonDigit,
  UnknownCode,
  NoParent,
  DuplicateSource,
  MalformedRow,
  CodeLevelMismatch,
  MalformedRecord,
  DuplicateId,
  MissingField,
  UnknownPublication,
  NoBaselineForCode,
  EmptySpec,
  ConflictingOverride,
  EmptyCorpus,
  EmptyLabelSet,
  SingleClass,
  DimensionMismatch,
  InvalidConfig,
  TooFewExamples,
  MissingPriorStage,
  StageComplete,
  ConfigInvalid,
  RunLocked,
  Io,
};

constexpr std::string_view errc_name(Errc e) noexcept {
  switch (e) {
    case Errc::InvalidLength: return "InvalidLength";
    case Errc::NonDigit: return "NonDigit";
    case Errc::UnknownCode: return "UnknownCode";
    case Errc::NoParent: return "NoParent";
    case Errc::DuplicateSource: return "DuplicateSource";
    case Errc::MalformedRow: return "MalformedRow";
    case Errc::CodeLevelMismatch: return "CodeLevelMismatch";
    case Errc::MalformedRecord: return "MalformedRecord";
    case Errc::DuplicateId: return "DuplicateId";
    case Errc::MissingField: return "MissingField";
    case Errc::UnknownPublication: return "UnknownPublication";
    case Errc::NoBaselineForCode: return "NoBaselineForCode";
    case Errc::EmptySpec: return "EmptySpec";
    case Errc::ConflictingOverride: return "ConflictingOverride";
    case Errc::EmptyCorpus: return "EmptyCorpus";
    case Errc::EmptyLabelSet: return "EmptyLabelSet";
    case Errc::SingleClass: return "SingleClass";
    case Errc::DimensionMismatch: return "DimensionMismatch";
    case Errc::InvalidConfig: return "InvalidConfig";
    case Errc::TooFewExamples: return "TooFewExamples";
    case Errc::MissingPriorStage: return "MissingPriorStage";
    case Errc::StageComplete: return "StageComplete";
    case Errc::ConfigInvalid: return "ConfigInvalid";
    case Errc::RunLocked: return "RunLocked";
    case Errc::Io: return "Io";
  }
  return "Unknown";
}

/// Every failure raised by the library carries one of the codes above so
/// callers (and the CLI's machine-readable error report) can branch on it.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message)
      : std::runtime_error(std::string(errc_name(code)) + ": " + message), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

/// Non-fatal findings (dangling references, overwrites, skipped rows).
struct Diagnostics {
  std::vector<std::string> warnings;

  void warn(std::string message) { warnings.push_back(std::move(message)); }
  bool empty() const noexcept { return warnings.empty(); }
};

inline void warn(Diagnostics* diag, std::string message) {
  if (diag != nullptr) diag->warn(std::move(message));
}

}  // namespace recat
