#pragma once

#include <functional>
#include <vector>

#include "crl/domain.hpp"

namespace crl {

enum class RegionShape { GeodesicBall, ComplementOfBall, SuperlevelSet };

/// Region description. Balls and complements are centred at the canonical
/// base point (origin of the chart, north pole of the sphere); the spaces
/// are homogeneous so this loses no generality.
struct RegionSpec {
  RegionShape shape = RegionShape::GeodesicBall;
  double radius = 1.0;                 // GeodesicBall / ComplementOfBall
  const ScalarField* field = nullptr;  // SuperlevelSet
  double level = 0.0;                  // SuperlevelSet
};

/// Builds a 2-D mesh of the region with mesh size at most h. Flat and
/// hyperbolic disks use structured polar meshes (self-similar under
/// refinement); sphere caps and complements are cut from icosahedral
/// subdivision meshes and their boundary vertices are projected onto the
/// exact geodesic circle.
DiscreteDomain buildDomain(const BackgroundSpace& space, const RegionSpec& region, double h);

/// 1-D radial grid on [0, radius] carrying the reduced measure
/// |S^{n-1}| sn(t)^{n-1} dt. Space forms only.
DiscreteDomain buildRadialDomain(const BackgroundSpace& space, double radius, int gridPoints);

/// 1-D radial grid for S^k x E^2 truncated at flat-factor radius `radius`,
/// carrying the flat-factor measure 2 pi t dt.
DiscreteDomain buildProductFlatRadialDomain(int k, double radius, int gridPoints);

/// Superlevel set {field > level} cut out of `base` along the interpolated
/// level polyline, with sliver crossings snapped onto the level.
DiscreteDomain superlevelDomain(const DiscreteDomain& base, const ScalarField& field,
                                double level);

/// Closed unit-sphere triangulation: icosahedron subdivided `level` times.
DiscreteDomain buildSphereSurfaceMesh(int level);
int sphereLevelForMeshSize(double h);

/// Structured polar disk mesh with `rings` concentric rings (flat or
/// hyperbolic chart). Exposed for convergence studies.
DiscreteDomain buildPolarDiskDomain(const BackgroundSpace& space, double radius, int rings);

using VertexProjector = std::function<Eigen::Vector3d(const Eigen::Vector3d&)>;

/// Embeds the level polyline of a P1 field into the mesh: crossings within
/// snapTol of an endpoint slide that endpoint onto the level, remaining
/// crossings insert new vertices, and crossed cells are split on both
/// sides. The result is a mesh of the same region whose cells do not
/// straddle the level.
struct CutResult {
  DiscreteDomain mesh;  // finalized
  struct Source {
    int a = -1, b = -1;
    double s = 0.0;  // vertex = interpolate(a -> b, s) in the input mesh
  };
  std::vector<Source> vertexSource;
  std::vector<int> cellSide;    // +1 field >= level side, -1 otherwise
  std::vector<int> parentCell;  // input cell index per output cell
  std::vector<char> onLevel;    // vertex lies exactly on the level
  Eigen::VectorXd cutField;     // snapped field, exactly `level` on the seam
};

CutResult cutAlongLevel(const DiscreteDomain& base, const Eigen::VectorXd& field, double level,
                        double snapTol, const std::vector<char>* protectedVerts = nullptr,
                        const VertexProjector& projector = nullptr);

/// Cells of one side of a cut, as an unfinalized submesh plus vertex maps.
struct SubmeshResult {
  DiscreteDomain mesh;               // not finalized
  std::vector<int> toParentVertex;   // submesh vertex -> cut mesh vertex
};
SubmeshResult extractSide(const CutResult& cut, int side);

/// Cells selected by a per-cell mask, as an unfinalized submesh plus vertex
/// map into the input mesh. `parentCell` of the result indexes the input
/// mesh's cells.
SubmeshResult extractCells(const DiscreteDomain& parent, const std::vector<char>& keep);

/// Geodesic interpolation used by the cutter: slerp between sphere surface
/// points, linear in the chart for radial meshes and flat charts.
Eigen::Vector3d interpolatePoint(const BackgroundSpace& space, const Eigen::Vector3d& a,
                                 const Eigen::Vector3d& b, double s, int dimension = 2);

/// Distance from each vertex to a chart point.
Eigen::VectorXd distanceToPoint(const DiscreteDomain& d, const Eigen::Vector3d& p);

/// Projector onto the geodesic circle of radius `arc` about `pole` (unit
/// sphere chart).
VertexProjector sphereCircleProjector(const Eigen::Vector3d& pole, double arc);

}  // namespace crl
