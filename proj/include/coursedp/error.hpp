#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace coursedp {

enum class Errc {
  CycleDetected,
  ElectivePrereqOfMandatory,
  NeverOffered,
  RangeError,
  QuarterOutOfRange,
  WidthMismatch,
  ActionOverlapsState,
  IllegalAction,
  SizeLimit,
  GraphMismatch,
  UnknownState,
  Infeasible,
  ContextOutOfRange,
  LengthMismatch,
  ParseError,
  OverlappingBins,
  UnavailableCell,
  ChecksumMismatch,
  IoError,
};

constexpr std::string_view to_string(Errc code) noexcept {
  switch (code) {
    case Errc::CycleDetected: return "CycleDetected";
    case Errc::ElectivePrereqOfMandatory: return "ElectivePrereqOfMandatory";
    case Errc::NeverOffered: return "NeverOffered";
    case Errc::RangeError: return "RangeError";
    case Errc::QuarterOutOfRange: return "QuarterOutOfRange";
    case Errc::WidthMismatch: return "WidthMismatch";
    case Errc::ActionOverlapsState: return "ActionOverlapsState";
    case Errc::IllegalAction: return "IllegalAction";
    case Errc::SizeLimit: return "SizeLimit";
    case Errc::GraphMismatch: return "GraphMismatch";
    case Errc::UnknownState: return "UnknownState";
    case Errc::Infeasible: return "Infeasible";
    case Errc::ContextOutOfRange: return "ContextOutOfRange";
    case Errc::LengthMismatch: return "LengthMismatch";
    case Errc::ParseError: return "ParseError";
    case Errc::OverlappingBins: return "OverlappingBins";
    case Errc::UnavailableCell: return "UnavailableCell";
    case Errc::ChecksumMismatch: return "ChecksumMismatch";
    case Errc::IoError: return "IoError";
  }
  return "Unknown";
}

/// Every failure raised by the library carries one of the codes above so
/// that callers (the CLI in particular) can map it to an exit status.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace coursedp
