#pragma once

#include <Eigen/Dense>

#include "crl/domain.hpp"

namespace crl {

/// Exponential: g = e^{2u} gbar (surfaces). Power: g = u^{4/(n-2)} gbar,
/// n >= 3, with u > 0.
enum class Convention { Exponential, Power };

struct ConformalFactor {
  Convention convention = Convention::Exponential;
  ScalarField u;
  int ambientDim = 2;
};

/// Validates the type invariants: convention matches the dimension, the
/// field lives on a finalized domain, and a Power factor stays >= 1e-10.
void checkFactor(const ConformalFactor& cf);

/// u == 0 (Exponential) or u == 1 (Power), depending on the background.
ConformalFactor identityFactor(const DiscreteDomain& d);

ConformalFactor makeFactor(const DiscreteDomain& d, Eigen::VectorXd u);

/// Per-boundary-vertex samples entering the mean-curvature and mass
/// formulas, ordered like DiscreteDomain::boundary. Weights are the
/// background boundary quadrature.
struct BoundaryData {
  std::vector<int> vertices;
  Eigen::VectorXd normalDerivative;         // outward d_nu u
  Eigen::VectorXd backgroundMeanCurvature;  // H of the background boundary
  Eigen::VectorXd weights;                  // dsigma_gbar
};

BoundaryData makeBoundaryData(const ConformalFactor& cf, const DiscreteDomain& d,
                              const Eigen::VectorXd& backgroundMeanCurvature);

/// Constant-H convenience for geodesic-sphere boundaries.
BoundaryData makeBoundaryData(const ConformalFactor& cf, const DiscreteDomain& d,
                              double backgroundMeanCurvature);

/// Pointwise scalar curvature of the conformal metric at interior vertices,
/// NaN at boundary vertices (the P1 Laplacian has no consistent boundary
/// value). R_g = e^{-2u}(Rbar - 2 lap u) on surfaces,
/// u^{-(n+2)/(n-2)}(Rbar u - c_n lap u) with c_n = 4(n-1)/(n-2) otherwise.
ScalarField scalarCurvature(const ConformalFactor& cf, const DiscreteDomain& d);

/// Boundary mean curvature H_g = Hbar + 2 d_nu u (surfaces) or
/// Hbar + (2(n-1)/(n-2)) d_nu u (n >= 3). Only valid when u restricts to
/// the identity value on the boundary; rejects otherwise.
Eigen::VectorXd meanCurvature(const ConformalFactor& cf, const BoundaryData& bd);

/// C0 operator norm of the metric: sqrt(n) (max u)^{4/(n-2)} for Power,
/// sqrt(2) e^{2 max u} for Exponential.
double c0Norm(const ConformalFactor& cf);

/// Size threshold alpha = sqrt(n)(1 + (n-1) delta lambda1 / maxR)^{4/(n+2)},
/// infinite when maxR <= 0. Requires delta in (0,1) and lambda1 > 0.
double alphaThreshold(int n, double delta, double lambda1, double maxR);

/// Derivative of the scalar-curvature map at the identity factor:
/// DR(v) = c_n (-lap v - (Rbar/(n-1)) v) at interior vertices, NaN at the
/// boundary; c_n = 4(n-1)/(n-2) for n >= 3 and 2 on surfaces.
ScalarField linearizedScalarCurvature(const ScalarField& v, const DiscreteDomain& d);

}  // namespace crl
