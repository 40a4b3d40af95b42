#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace srpfl {

enum class Errc {
  InvalidArgument,
  DimensionMismatch,
  NotOrthonormal,
  RankDeficient,
  NotSymmetric,
  ClientOutOfRange,
  SingularGram,
  AllZeroMoments,
  NTooLarge,
  EmptyParticipants,
  IndexOutOfRange,
  ZeroGap,
  CHatOutOfRange,
  NonConvergence,
  TargetNotReached,
  ConfigError,
};

constexpr std::string_view to_string(Errc code) noexcept {
  switch (code) {
    case Errc::InvalidArgument: return "InvalidArgument";
    case Errc::DimensionMismatch: return "DimensionMismatch";
    case Errc::NotOrthonormal: return "NotOrthonormal";
    case Errc::RankDeficient: return "RankDeficient";
    case Errc::NotSymmetric: return "NotSymmetric";
    case Errc::ClientOutOfRange: return "ClientOutOfRange";
    case Errc::SingularGram: return "SingularGram";
    case Errc::AllZeroMoments: return "AllZeroMoments";
    case Errc::NTooLarge: return "NTooLarge";
    case Errc::EmptyParticipants: return "EmptyParticipants";
    case Errc::IndexOutOfRange: return "IndexOutOfRange";
    case Errc::ZeroGap: return "ZeroGap";
    case Errc::CHatOutOfRange: return "CHatOutOfRange";
    case Errc::NonConvergence: return "NonConvergence";
    case Errc::TargetNotReached: return "TargetNotReached";
    case Errc::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

/// Every failure raised by the library carries a machine-readable code; the
/// message accumulates context (client index, stage/round) as it propagates.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

  /// Re-raise with extra context prepended to the message.
  [[noreturn]] void rethrow_with(const std::string& context) const {
    throw Error(code_, context, what());
  }

 private:
  Error(Errc code, const std::string& context, const char* inner)
      : std::runtime_error(context + ": " + inner), code_(code) {}

  Errc code_;
};

}  // namespace srpfl
