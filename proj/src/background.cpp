#include "crl/background.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include "crl/errors.hpp"

namespace crl {

static constexpr double kPi = std::numbers::pi;

double unitSphereArea(int m) {
  require(m >= 1, Errc::ConfigError, "unit sphere dimension must be >= 1");
  // |S^{m-1}| = 2 pi^{m/2} / Gamma(m/2)
  return 2.0 * std::pow(kPi, 0.5 * m) / std::tgamma(0.5 * m);
}

BackgroundSpace BackgroundSpace::euclidean(int n) {
  require(n >= 2, Errc::ConfigError, "space dimension must be >= 2");
  return {SpaceKind::Euclidean, n, 0};
}

BackgroundSpace BackgroundSpace::sphere(int n) {
  require(n >= 2, Errc::ConfigError, "space dimension must be >= 2");
  return {SpaceKind::Sphere, n, 0};
}

BackgroundSpace BackgroundSpace::hyperbolic(int n) {
  require(n >= 2, Errc::ConfigError, "space dimension must be >= 2");
  return {SpaceKind::Hyperbolic, n, 0};
}

BackgroundSpace BackgroundSpace::productSphereCylinder(int k) {
  require(k >= 2, Errc::ConfigError, "sphere factor dimension must be >= 2");
  return {SpaceKind::ProductSphereCylinder, k + 2, k};
}

double BackgroundSpace::scalarCurvature() const {
  switch (kind) {
    case SpaceKind::Euclidean: return 0.0;
    case SpaceKind::Sphere: return static_cast<double>(dim) * (dim - 1);
    case SpaceKind::Hyperbolic: return -static_cast<double>(dim) * (dim - 1);
    case SpaceKind::ProductSphereCylinder:
      return static_cast<double>(sphereFactorDim) * (sphereFactorDim - 1);
  }
  return 0.0;
}

double BackgroundSpace::sn(double t) const {
  switch (kind) {
    case SpaceKind::Sphere: return std::sin(t);
    case SpaceKind::Hyperbolic: return std::sinh(t);
    default: return t;
  }
}

double BackgroundSpace::snPrime(double t) const {
  switch (kind) {
    case SpaceKind::Sphere: return std::cos(t);
    case SpaceKind::Hyperbolic: return std::cosh(t);
    default: return 1.0;
  }
}

double BackgroundSpace::radialWeight(double t) const {
  if (kind == SpaceKind::ProductSphereCylinder) return 2.0 * kPi * t;
  return unitSphereArea(dim) * std::pow(sn(t), dim - 1);
}

double BackgroundSpace::ballVolume(double r) const {
  require(r > 0.0 && r <= maxRadius(), Errc::InvalidRadius, "ball radius out of range");
  switch (kind) {
    case SpaceKind::Euclidean:
      return unitSphereArea(dim) * std::pow(r, dim) / dim;
    case SpaceKind::Sphere:
      if (dim == 2) return 2.0 * kPi * (1.0 - std::cos(r));
      if (dim == 3) return 4.0 * kPi * (0.5 * (r - std::sin(r) * std::cos(r)));
      break;
    case SpaceKind::Hyperbolic:
      if (dim == 2) return 2.0 * kPi * (std::cosh(r) - 1.0);
      if (dim == 3) return 4.0 * kPi * (0.5 * (std::sinh(r) * std::cosh(r) - r));
      break;
    case SpaceKind::ProductSphereCylinder:
      // flat-factor disk volume per unit sphere factor volume
      return kPi * r * r;
  }
  // composite Simpson on the radial weight
  const int m = 512;
  const double step = r / m;
  double acc = radialWeight(0.0) + radialWeight(r);
  for (int i = 1; i < m; ++i)
    acc += radialWeight(i * step) * ((i % 2) ? 4.0 : 2.0);
  return acc * step / 3.0;
}

double BackgroundSpace::ballBoundaryMeanCurvature(double r) const {
  require(r > 0.0 && r < maxRadius(), Errc::InvalidRadius, "ball radius out of range");
  switch (kind) {
    case SpaceKind::Euclidean: return (dim - 1) / r;
    case SpaceKind::Sphere: return (dim - 1) / std::tan(r);
    case SpaceKind::Hyperbolic: return (dim - 1) / std::tanh(r);
    case SpaceKind::ProductSphereCylinder: return 1.0 / r;
  }
  return 0.0;
}

double BackgroundSpace::geodesicDistance(const Eigen::Vector3d& a,
                                         const Eigen::Vector3d& b) const {
  switch (kind) {
    case SpaceKind::Euclidean:
      return (a - b).norm();
    case SpaceKind::Sphere:
      // atan2 form is robust near coincident and antipodal points
      return std::atan2(a.cross(b).norm(), a.dot(b));
    case SpaceKind::Hyperbolic: {
      const double na = a.squaredNorm();
      const double nb = b.squaredNorm();
      require(na < 1.0 && nb < 1.0, Errc::InvalidRegion,
              "hyperbolic chart points must lie in the open unit ball");
      const double q = 1.0 + 2.0 * (a - b).squaredNorm() / ((1.0 - na) * (1.0 - nb));
      return std::acosh(q);
    }
    case SpaceKind::ProductSphereCylinder:
      fail(Errc::UnsupportedCombination,
           "no point chart on the product space; use radial profiles");
  }
  return 0.0;
}

double BackgroundSpace::maxRadius() const {
  return kind == SpaceKind::Sphere ? kPi : std::numeric_limits<double>::infinity();
}

std::string BackgroundSpace::name() const {
  switch (kind) {
    case SpaceKind::Euclidean: return "euclidean";
    case SpaceKind::Sphere: return "sphere";
    case SpaceKind::Hyperbolic: return "hyperbolic";
    case SpaceKind::ProductSphereCylinder: return "product_sphere_cylinder";
  }
  return "unknown";
}

}  // namespace crl
