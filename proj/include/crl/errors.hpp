#pragma once

#include <stdexcept>
#include <string>

namespace crl {

/// Failure classes used across the library. Each maps to a process exit code:
/// configuration problems -> 2, precondition refusals -> 3, solver/assertion
/// failures -> 1.
enum class Errc {
  // configuration
  ConfigError,
  InvalidRegion,
  InvalidRadius,
  InvalidDelta,
  UnsupportedCombination,
  // precondition refusals
  CertifiedPositiveEigenvalue,
  CertifiedNegativeEigenvalue,
  NonIdentityBoundary,
  NonPositiveFactor,
  NonPositiveEigenvalue,
  // solver / pipeline failures
  SolverDivergence,
  BracketFailure,
  OptimizerStall,
  NoValidEpsilon,
  EmptyTWindow,
  MeanCurvatureOrderingFailed,
  DeltaBudgetExceeded,
  EmptyLevelSet,
  DisconnectedLevelSet,
  NoCrossing,
  TruncationTooSmall,
  IoError,
  InvariantViolation,
};

const char* errcName(Errc c);
int exitCodeFor(Errc c);

class Error : public std::runtime_error {
public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  Errc code() const { return code_; }

private:
  Errc code_;
};

[[noreturn]] void fail(Errc code, const std::string& what);

inline void require(bool ok, Errc code, const std::string& what) {
  if (!ok) fail(code, what);
}

}  // namespace crl
