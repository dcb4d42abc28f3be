#pragma once

#include <Eigen/Dense>
#include <string>

namespace crl {

enum class SpaceKind { Euclidean, Sphere, Hyperbolic, ProductSphereCylinder };

/// Constant-curvature background (E^n, S^n, H^n) or the product S^k x E^2.
/// Points are chart coordinates: Euclidean uses Cartesian coordinates,
/// Sphere uses unit vectors in R^{n+1} (only n = 2 is meshed), Hyperbolic
/// uses the Poincare ball. The product space carries no point chart here;
/// it is only used through radial profiles on the flat factor.
struct BackgroundSpace {
  SpaceKind kind = SpaceKind::Euclidean;
  int dim = 2;             // ambient dimension n (product: k + 2)
  int sphereFactorDim = 0; // k, product space only

  static BackgroundSpace euclidean(int n);
  static BackgroundSpace sphere(int n);
  static BackgroundSpace hyperbolic(int n);
  static BackgroundSpace productSphereCylinder(int k);

  /// Background scalar curvature: 0, n(n-1), -n(n-1), or k(k-1).
  double scalarCurvature() const;

  /// Warped radius of the geodesic sphere: t, sin t, sinh t. The product
  /// space reduces to its flat factor, giving t.
  double sn(double t) const;
  double snPrime(double t) const;

  /// Boundary measure density of the radial chart at distance t:
  /// |S^{n-1}| sn(t)^{n-1} on space forms, 2 pi t on the product factor.
  double radialWeight(double t) const;

  double ballVolume(double r) const;

  /// Mean curvature (trace convention) of the geodesic sphere of radius r.
  double ballBoundaryMeanCurvature(double r) const;

  double geodesicDistance(const Eigen::Vector3d& a, const Eigen::Vector3d& b) const;

  /// Largest admissible geodesic ball radius (pi on the sphere).
  double maxRadius() const;

  std::string name() const;
  bool isSpaceForm() const { return kind != SpaceKind::ProductSphereCylinder; }
};

/// Surface measure of the unit sphere S^{m-1} in R^m.
double unitSphereArea(int m);

}  // namespace crl
