#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <vector>

#include "crl/background.hpp"

namespace crl {

struct CellGeometry {
  double measure = 0.0;                       // intrinsic area (2-D) or weighted length (1-D)
  std::array<double, 3> edgeLen{0.0, 0.0, 0.0};  // lengths opposite to local vertices 0,1,2
};

/// Piecewise-linear discretisation of a domain in a background space.
/// Two-dimensional domains are intrinsic triangle meshes; one-dimensional
/// domains are radial grids carrying the rotationally reduced measure.
/// `finalizeDomain` derives cell geometry, cotangent stiffness weights,
/// lumped masses, the topological boundary and a structural hash, and
/// checks the mesh invariants.
struct DiscreteDomain {
  BackgroundSpace space;
  int dimension = 2;   // mesh dimension (1 or 2)
  double h = 0.0;      // max cell diameter, set by finalizeDomain

  std::vector<Eigen::Vector3d> vertices;
  std::vector<std::array<int, 3>> cells;  // 1-D cells store {a, b, -1}
  std::vector<int> boundary;              // sorted boundary vertex indices

  /// Radial grids treat t = 0 as a natural (Neumann) endpoint, not boundary.
  bool radialNeumannCenter = false;

  /// Provenance for meshes produced by cutting a parent mesh.
  std::vector<int> sourceVertex;  // parent vertex index or -1 for cut vertices
  std::vector<int> parentCell;    // parent cell index or -1

  // --- derived by finalizeDomain ---
  std::vector<CellGeometry> cellGeom;
  struct Edge {
    int a, b;    // a < b
    double w;    // accumulated stiffness weight
  };
  std::vector<Edge> edges;
  Eigen::VectorXd lumpedMass;
  std::vector<char> isBoundary;
  std::vector<int> interior;
  struct BoundaryEdge {
    int a, b;     // boundary segment endpoints (1-D: a == b, single vertex)
    int cell;     // incident cell
    double len;   // segment length (1-D: boundary weight)
  };
  std::vector<BoundaryEdge> boundaryEdges;
  std::uint64_t hash = 0;
  bool finalized = false;

  int vertexCount() const { return static_cast<int>(vertices.size()); }
  int cellCount() const { return static_cast<int>(cells.size()); }
};

void finalizeDomain(DiscreteDomain& d);

struct ScalarField {
  const DiscreteDomain* domain = nullptr;
  Eigen::VectorXd values;
};

double supNorm(const ScalarField& f);

/// Stiffness action (K f)_v = sum_j w_vj (f_v - f_j); a lumped-mass division
/// gives the discrete -Laplacian.
Eigen::VectorXd stiffnessApply(const DiscreteDomain& d, const Eigen::VectorXd& f);

/// Squared P1 gradient per cell (chart-independent, from intrinsic lengths).
double cellGradientNormSq(const DiscreteDomain& d, int cell, const Eigen::VectorXd& f);

/// Measure-weighted average of incident cell gradients per vertex.
Eigen::VectorXd vertexGradientNormSq(const DiscreteDomain& d, const Eigen::VectorXd& f);

/// One-sided outward normal derivative at each boundary vertex, ordered as
/// d.boundary. Averages the P1 gradients of incident boundary cells.
Eigen::VectorXd boundaryNormalDerivative(const DiscreteDomain& d, const Eigen::VectorXd& f);

/// Sparse rows of the map f -> boundaryNormalDerivative(d, f).
std::vector<std::vector<std::pair<int, double>>> boundaryNormalOperator(const DiscreteDomain& d);

/// Boundary measure weight per boundary vertex (half-sum of incident
/// boundary segment lengths; 1-D: the reduced boundary weight itself).
Eigen::VectorXd boundaryWeights(const DiscreteDomain& d);

}  // namespace crl
