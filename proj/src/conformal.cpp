#include "crl/conformal.hpp"

#include <cmath>
#include <limits>

#include "crl/errors.hpp"

namespace crl {

namespace {

constexpr double kPowerFloor = 1e-10;
constexpr double kBoundaryIdentityTol = 1e-9;

double conformalCoefficient(int n) {
  return n == 2 ? 2.0 : 4.0 * (n - 1) / (n - 2);
}

double boundaryCoefficient(int n) {
  return n == 2 ? 2.0 : 2.0 * (n - 1) / (n - 2);
}

// Lumped P1 Laplacian at interior vertices: lap f = -(K f) / m.
Eigen::VectorXd interiorLaplacian(const DiscreteDomain& d, const Eigen::VectorXd& f) {
  const Eigen::VectorXd kf = stiffnessApply(d, f);
  Eigen::VectorXd lap = Eigen::VectorXd::Zero(d.vertexCount());
  for (int v : d.interior) lap(v) = -kf(v) / d.lumpedMass(v);
  return lap;
}

}  // namespace

void checkFactor(const ConformalFactor& cf) {
  require(cf.u.domain != nullptr && cf.u.domain->finalized, Errc::ConfigError,
          "conformal factor needs a finalized domain");
  require(cf.u.values.size() == cf.u.domain->vertexCount(), Errc::ConfigError,
          "conformal factor length does not match the domain");
  require(cf.ambientDim == cf.u.domain->space.dim, Errc::ConfigError,
          "conformal factor dimension disagrees with the background");
  const bool exponential = cf.convention == Convention::Exponential;
  require(exponential == (cf.ambientDim == 2), Errc::ConfigError,
          "Exponential convention is the surface case, Power needs n >= 3");
  if (!exponential)
    require(cf.u.values.minCoeff() >= kPowerFloor, Errc::NonPositiveFactor,
            "Power conformal factor must stay positive");
}

ConformalFactor identityFactor(const DiscreteDomain& d) {
  require(d.finalized, Errc::ConfigError, "conformal factor needs a finalized domain");
  const int n = d.space.dim;
  if (n == 2)
    return {Convention::Exponential, {&d, Eigen::VectorXd::Zero(d.vertexCount())}, 2};
  return {Convention::Power, {&d, Eigen::VectorXd::Ones(d.vertexCount())}, n};
}

ConformalFactor makeFactor(const DiscreteDomain& d, Eigen::VectorXd u) {
  const int n = d.space.dim;
  ConformalFactor cf{n == 2 ? Convention::Exponential : Convention::Power,
                     {&d, std::move(u)}, n};
  checkFactor(cf);
  return cf;
}

BoundaryData makeBoundaryData(const ConformalFactor& cf, const DiscreteDomain& d,
                              const Eigen::VectorXd& backgroundMeanCurvature) {
  checkFactor(cf);
  require(cf.u.domain == &d, Errc::ConfigError,
          "conformal factor lives on a different domain");
  require(!d.boundary.empty(), Errc::ConfigError, "domain has no boundary");
  require(backgroundMeanCurvature.size() == static_cast<Eigen::Index>(d.boundary.size()),
          Errc::ConfigError, "mean-curvature samples do not match the boundary");

  BoundaryData bd;
  bd.vertices = d.boundary;
  bd.normalDerivative = boundaryNormalDerivative(d, cf.u.values);
  bd.backgroundMeanCurvature = backgroundMeanCurvature;
  bd.weights = boundaryWeights(d);
  require(bd.weights.minCoeff() > 0.0, Errc::InvariantViolation,
          "boundary quadrature weights must be positive");
  return bd;
}

BoundaryData makeBoundaryData(const ConformalFactor& cf, const DiscreteDomain& d,
                              double backgroundMeanCurvature) {
  return makeBoundaryData(
      cf, d,
      Eigen::VectorXd::Constant(static_cast<Eigen::Index>(d.boundary.size()),
                                backgroundMeanCurvature));
}

ScalarField scalarCurvature(const ConformalFactor& cf, const DiscreteDomain& d) {
  checkFactor(cf);
  require(cf.u.domain == &d, Errc::ConfigError,
          "conformal factor lives on a different domain");

  const int n = cf.ambientDim;
  const double rBar = d.space.scalarCurvature();
  const Eigen::VectorXd& u = cf.u.values;
  const Eigen::VectorXd lap = interiorLaplacian(d, u);

  ScalarField out{&d, Eigen::VectorXd::Constant(d.vertexCount(),
                                                std::numeric_limits<double>::quiet_NaN())};
  if (cf.convention == Convention::Exponential) {
    for (int v : d.interior)
      out.values(v) = std::exp(-2.0 * u(v)) * (rBar - 2.0 * lap(v));
  } else {
    const double cn = conformalCoefficient(n);
    const double expo = -(n + 2.0) / (n - 2.0);
    for (int v : d.interior)
      out.values(v) = std::pow(u(v), expo) * (rBar * u(v) - cn * lap(v));
  }
  return out;
}

Eigen::VectorXd meanCurvature(const ConformalFactor& cf, const BoundaryData& bd) {
  checkFactor(cf);
  const double identity = cf.convention == Convention::Exponential ? 0.0 : 1.0;
  for (int v : bd.vertices)
    require(std::abs(cf.u.values(v) - identity) <= kBoundaryIdentityTol,
            Errc::NonIdentityBoundary,
            "boundary formula needs the identity value on the boundary");
  const double coef = boundaryCoefficient(cf.ambientDim);
  return bd.backgroundMeanCurvature + coef * bd.normalDerivative;
}

double c0Norm(const ConformalFactor& cf) {
  checkFactor(cf);
  const double maxU = cf.u.values.maxCoeff();
  if (cf.convention == Convention::Exponential)
    return std::sqrt(2.0) * std::exp(2.0 * maxU);
  const int n = cf.ambientDim;
  return std::sqrt(static_cast<double>(n)) * std::pow(maxU, 4.0 / (n - 2));
}

double alphaThreshold(int n, double delta, double lambda1, double maxR) {
  require(n >= 2, Errc::ConfigError, "alpha threshold needs dimension >= 2");
  require(delta > 0.0 && delta < 1.0, Errc::InvalidDelta,
          "delta must lie strictly between 0 and 1");
  require(lambda1 > 0.0, Errc::NonPositiveEigenvalue,
          "alpha threshold needs a positive first eigenvalue");
  if (maxR <= 0.0) return std::numeric_limits<double>::infinity();
  const double bracket = 1.0 + (n - 1) * delta * lambda1 / maxR;
  return std::sqrt(static_cast<double>(n)) * std::pow(bracket, 4.0 / (n + 2));
}

ScalarField linearizedScalarCurvature(const ScalarField& v, const DiscreteDomain& d) {
  require(v.domain == &d && d.finalized, Errc::ConfigError,
          "field lives on a different domain");
  require(v.values.size() == d.vertexCount(), Errc::ConfigError,
          "field length does not match the domain");

  const int n = d.space.dim;
  const double coef = conformalCoefficient(n);
  const double pot = d.space.scalarCurvature() / (n - 1);
  const Eigen::VectorXd lap = interiorLaplacian(d, v.values);

  ScalarField out{&d, Eigen::VectorXd::Constant(d.vertexCount(),
                                                std::numeric_limits<double>::quiet_NaN())};
  for (int vx : d.interior)
    out.values(vx) = coef * (-lap(vx) - pot * v.values(vx));
  return out;
}

}  // namespace crl
