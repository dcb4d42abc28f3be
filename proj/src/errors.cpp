#include "crl/errors.hpp"

namespace crl {

const char* errcName(Errc c) {
  switch (c) {
    case Errc::ConfigError: return "ConfigError";
    case Errc::InvalidRegion: return "InvalidRegion";
    case Errc::InvalidRadius: return "InvalidRadius";
    case Errc::InvalidDelta: return "InvalidDelta";
    case Errc::UnsupportedCombination: return "UnsupportedCombination";
    case Errc::CertifiedPositiveEigenvalue: return "CertifiedPositiveEigenvalue";
    case Errc::CertifiedNegativeEigenvalue: return "CertifiedNegativeEigenvalue";
    case Errc::NonIdentityBoundary: return "NonIdentityBoundary";
    case Errc::NonPositiveFactor: return "NonPositiveFactor";
    case Errc::NonPositiveEigenvalue: return "NonPositiveEigenvalue";
    case Errc::SolverDivergence: return "SolverDivergence";
    case Errc::BracketFailure: return "BracketFailure";
    case Errc::OptimizerStall: return "OptimizerStall";
    case Errc::NoValidEpsilon: return "NoValidEpsilon";
    case Errc::EmptyTWindow: return "EmptyTWindow";
    case Errc::MeanCurvatureOrderingFailed: return "MeanCurvatureOrderingFailed";
    case Errc::DeltaBudgetExceeded: return "DeltaBudgetExceeded";
    case Errc::EmptyLevelSet: return "EmptyLevelSet";
    case Errc::DisconnectedLevelSet: return "DisconnectedLevelSet";
    case Errc::NoCrossing: return "NoCrossing";
    case Errc::TruncationTooSmall: return "TruncationTooSmall";
    case Errc::IoError: return "IoError";
    case Errc::InvariantViolation: return "InvariantViolation";
  }
  return "UnknownError";
}

int exitCodeFor(Errc c) {
  switch (c) {
    case Errc::ConfigError:
    case Errc::InvalidRegion:
    case Errc::InvalidRadius:
    case Errc::InvalidDelta:
    case Errc::UnsupportedCombination:
      return 2;
    case Errc::CertifiedPositiveEigenvalue:
    case Errc::CertifiedNegativeEigenvalue:
    case Errc::NonIdentityBoundary:
    case Errc::NonPositiveFactor:
    case Errc::NonPositiveEigenvalue:
      return 3;
    default:
      return 1;
  }
}

void fail(Errc code, const std::string& what) {
  throw Error(code, std::string(errcName(code)) + ": " + what);
}

}  // namespace crl
