#pragma once

#include <Eigen/Sparse>
#include <memory>

#include <nlohmann/json.hpp>

#include "crl/domain.hpp"

namespace crl {

enum class OperatorKind { Laplacian, Schrodinger };

/// Dirichlet operator -Delta (Laplacian) or -Delta - R/(n-1) (Schrodinger)
/// over a discrete domain. The potential always equals the background
/// curvature term; the factories below fill it in.
struct OperatorSpec {
  OperatorKind kind = OperatorKind::Laplacian;
  const DiscreteDomain* domain = nullptr;
  ScalarField potential;  // R/(n-1) for Schrodinger, zero for Laplacian
};

OperatorSpec laplacianOperator(const DiscreteDomain& d);
OperatorSpec schrodingerOperator(const DiscreteDomain& d);

/// Symmetric stiffness-plus-potential form restricted to interior vertices
/// (Dirichlet rows and columns eliminated).
struct AssembledOperator {
  const DiscreteDomain* domain = nullptr;
  Eigen::SparseMatrix<double> a;  // interior x interior
  Eigen::VectorXd mass;           // lumped interior masses
  std::vector<int> reducedIndex;  // global vertex -> interior dof, or -1
};

AssembledOperator assemble(const OperatorSpec& spec);

/// Quadratic form sum w_e (f_a - f_b)^2 - sum pot_v m_v f_v^2 of a
/// full-length field whose boundary values are forced to zero.
double quadraticForm(const OperatorSpec& spec, const Eigen::VectorXd& field);

/// Rayleigh quotient of the zero-extended field; an upper bound for the
/// first Dirichlet eigenvalue whenever the field is not identically zero.
double rayleighQuotient(const OperatorSpec& spec, const Eigen::VectorXd& field);

struct SpectralResult {
  double eigenvalue = 0.0;
  ScalarField eigenfunction;  // positive interior, zero boundary, sup-norm 1
  double residualNorm = 0.0;
  int iterations = 0;
  double h = 0.0;
  /// Keeps the mesh alive when the solver built it internally (radial
  /// solves); null when the eigenfunction lives on a caller-owned domain.
  std::shared_ptr<const DiscreteDomain> ownedDomain;
};

/// First Dirichlet eigenpair by shifted inverse iteration. The first shift
/// sits below the sandwich lower bound so the factored matrix is positive
/// definite; a Rayleigh-extrapolated refactor then accelerates the tail.
/// Deterministic: all-ones start vector, fixed phase lengths.
SpectralResult firstEigenpair(const OperatorSpec& spec, double tol = 1e-8);

/// High-precision radial oracle for geodesic balls in space forms: shooting
/// with eigenvalue bisection on
///   -(sn^k phi')'/sn^k - (R/(n-1)) phi = Lambda phi,  phi'(0)=0, phi(r)=0,
/// with k = n-1. The eigenfunction is sampled on a fresh radial grid.
SpectralResult radialFirstEigenpair(const BackgroundSpace& space, double r, OperatorKind kind,
                                    int gridPoints);

/// Outward normal derivative of the eigenfunction at each boundary vertex
/// (ordered as domain.boundary). Strict negativity is the caller's check.
Eigen::VectorXd hopfBoundaryCheck(const SpectralResult& result);

nlohmann::ordered_json spectralResultToJson(const SpectralResult& r);

}  // namespace crl
