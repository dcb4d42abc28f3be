#include "crl/mesh_build.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <queue>

#include "crl/errors.hpp"

namespace crl {

namespace {

constexpr double kPi = std::numbers::pi;

int componentsOfCellSet(int vertexCount, const std::vector<std::array<int, 3>>& cells,
                        int verticesPerCell) {
  if (cells.empty()) return 0;
  std::vector<std::vector<int>> vertexCells(vertexCount);
  for (int ci = 0; ci < static_cast<int>(cells.size()); ++ci)
    for (int k = 0; k < verticesPerCell; ++k) vertexCells[cells[ci][k]].push_back(ci);
  std::vector<char> seen(cells.size(), 0);
  int comps = 0;
  for (int start = 0; start < static_cast<int>(cells.size()); ++start) {
    if (seen[start]) continue;
    comps++;
    std::queue<int> q;
    q.push(start);
    seen[start] = 1;
    while (!q.empty()) {
      const int ci = q.front();
      q.pop();
      for (int k = 0; k < verticesPerCell; ++k)
        for (int cj : vertexCells[cells[ci][k]])
          if (!seen[cj]) {
            seen[cj] = 1;
            q.push(cj);
          }
    }
  }
  return comps;
}

}  // namespace

Eigen::Vector3d interpolatePoint(const BackgroundSpace& space, const Eigen::Vector3d& a,
                                 const Eigen::Vector3d& b, double s, int dimension) {
  // slerp applies to surface meshes only; radial meshes store chart points
  // (r, 0, 0) whose geodesics are linear in the chart
  if (space.kind == SpaceKind::Sphere && dimension == 2) {
    const double ang = std::atan2(a.cross(b).norm(), a.dot(b));
    if (ang < 1e-12) return ((1.0 - s) * a + s * b).normalized();
    const double sa = std::sin((1.0 - s) * ang), sb = std::sin(s * ang);
    return ((sa * a + sb * b) / std::sin(ang)).normalized();
  }
  return (1.0 - s) * a + s * b;
}

Eigen::VectorXd distanceToPoint(const DiscreteDomain& d, const Eigen::Vector3d& p) {
  Eigen::VectorXd out(d.vertexCount());
  for (int v = 0; v < d.vertexCount(); ++v) out(v) = d.space.geodesicDistance(d.vertices[v], p);
  return out;
}

VertexProjector sphereCircleProjector(const Eigen::Vector3d& pole, double arc) {
  return [pole, arc](const Eigen::Vector3d& v) {
    Eigen::Vector3d e = v - v.dot(pole) * pole;
    require(e.norm() > 1e-12, Errc::InvariantViolation,
            "cannot project a pole onto a geodesic circle");
    e.normalize();
    return (std::cos(arc) * pole + std::sin(arc) * e).eval();
  };
}

DiscreteDomain buildPolarDiskDomain(const BackgroundSpace& space, double radius, int rings) {
  require(space.dim == 2, Errc::UnsupportedCombination, "polar disks are 2-D");
  require(space.kind == SpaceKind::Euclidean || space.kind == SpaceKind::Hyperbolic,
          Errc::UnsupportedCombination, "polar disks cover flat and hyperbolic charts");
  require(rings >= 1, Errc::ConfigError, "ring count must be positive");
  require(radius > 0.0, Errc::InvalidRadius, "disk radius must be positive");

  DiscreteDomain d;
  d.space = space;
  d.dimension = 2;
  d.vertices.push_back(Eigen::Vector3d::Zero());
  std::vector<int> ringStart{0};
  for (int j = 1; j <= rings; ++j) {
    const double t = radius * j / rings;
    // geodesic radius t maps to chart radius t (flat) or tanh(t/2) (Poincare)
    const double rho = space.kind == SpaceKind::Hyperbolic ? std::tanh(0.5 * t) : t;
    ringStart.push_back(d.vertexCount());
    const int m = 6 * j;
    for (int i = 0; i < m; ++i) {
      const double a = 2.0 * kPi * i / m;
      d.vertices.push_back({rho * std::cos(a), rho * std::sin(a), 0.0});
    }
  }
  // centre fan
  for (int i = 0; i < 6; ++i)
    d.cells.push_back({0, ringStart[1] + i, ringStart[1] + (i + 1) % 6});
  // stitch consecutive rings with a two-pointer walk over angular order
  for (int j = 2; j <= rings; ++j) {
    const int m1 = 6 * (j - 1), m2 = 6 * j;
    const int s1 = ringStart[j - 1], s2 = ringStart[j];
    long long i = 0, o = 0;
    while (i < m1 || o < m2) {
      bool advanceInner;
      if (i >= m1) advanceInner = false;
      else if (o >= m2) advanceInner = true;
      else advanceInner = (i + 1) * static_cast<long long>(m2) <= (o + 1) * static_cast<long long>(m1);
      if (advanceInner) {
        d.cells.push_back({s1 + static_cast<int>(i % m1), s2 + static_cast<int>(o % m2),
                           s1 + static_cast<int>((i + 1) % m1)});
        ++i;
      } else {
        d.cells.push_back({s1 + static_cast<int>(i % m1), s2 + static_cast<int>(o % m2),
                           s2 + static_cast<int>((o + 1) % m2)});
        ++o;
      }
    }
  }
  finalizeDomain(d);
  return d;
}

DiscreteDomain buildSphereSurfaceMesh(int level) {
  require(level >= 0 && level <= 9, Errc::ConfigError, "sphere subdivision level out of range");
  const double phi = (1.0 + std::sqrt(5.0)) / 2.0;
  std::vector<Eigen::Vector3d> verts = {
      {-1, phi, 0}, {1, phi, 0}, {-1, -phi, 0}, {1, -phi, 0},
      {0, -1, phi}, {0, 1, phi}, {0, -1, -phi}, {0, 1, -phi},
      {phi, 0, -1}, {phi, 0, 1}, {-phi, 0, -1}, {-phi, 0, 1}};
  for (auto& v : verts) v.normalize();
  std::vector<std::array<int, 3>> faces = {
      {0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
      {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
      {3, 9, 4},  {3, 4, 2},  {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
      {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1}};
  for (int l = 0; l < level; ++l) {
    std::map<std::pair<int, int>, int> midpoint;
    auto mid = [&](int a, int b) {
      const auto key = std::minmax(a, b);
      auto it = midpoint.find(key);
      if (it != midpoint.end()) return it->second;
      const int idx = static_cast<int>(verts.size());
      verts.push_back(((verts[a] + verts[b]) * 0.5).normalized());
      midpoint.emplace(key, idx);
      return idx;
    };
    std::vector<std::array<int, 3>> next;
    next.reserve(faces.size() * 4);
    for (const auto& f : faces) {
      const int ab = mid(f[0], f[1]), bc = mid(f[1], f[2]), ca = mid(f[2], f[0]);
      next.push_back({f[0], ab, ca});
      next.push_back({f[1], bc, ab});
      next.push_back({f[2], ca, bc});
      next.push_back({ab, bc, ca});
    }
    faces = std::move(next);
  }
  DiscreteDomain d;
  d.space = BackgroundSpace::sphere(2);
  d.dimension = 2;
  d.vertices = std::move(verts);
  d.cells = std::move(faces);
  finalizeDomain(d);
  return d;
}

int sphereLevelForMeshSize(double h) {
  require(h > 0.0, Errc::ConfigError, "mesh size must be positive");
  int level = 0;
  double edge = 1.10715;  // icosahedron arc edge on the unit sphere
  while (edge > h && level < 9) {
    edge *= 0.5;
    ++level;
  }
  return level;
}

CutResult cutAlongLevel(const DiscreteDomain& base, const Eigen::VectorXd& field, double level,
                        double snapTol, const std::vector<char>* protectedVerts,
                        const VertexProjector& projector) {
  require(base.finalized, Errc::InvariantViolation, "cut requires a finalized mesh");
  require(field.size() == base.vertexCount(), Errc::ConfigError, "field size mismatch");
  require(snapTol >= 0.0 && snapTol < 0.5, Errc::ConfigError, "snap tolerance out of range");

  const int nv = base.vertexCount();
  Eigen::VectorXd g = field.array() - level;
  std::vector<Eigen::Vector3d> pos = base.vertices;
  CutResult out;
  out.vertexSource.resize(nv);
  for (int v = 0; v < nv; ++v) out.vertexSource[v] = {v, v, 0.0};

  // snap pass: slide a vertex onto the level when a crossing cuts one of its
  // edges within snapTol of it
  std::vector<std::pair<double, int>> bestCut(nv, {1e300, -1});
  for (const auto& e : base.edges) {
    if (g(e.a) == 0.0 || g(e.b) == 0.0 || (g(e.a) > 0) == (g(e.b) > 0)) continue;
    const double span = std::abs(g(e.a) - g(e.b));
    const double sa = std::abs(g(e.a)) / span;
    const double sb = std::abs(g(e.b)) / span;
    if (sa < bestCut[e.a].first) bestCut[e.a] = {sa, e.b};
    if (sb < bestCut[e.b].first) bestCut[e.b] = {sb, e.a};
  }
  for (int v = 0; v < nv; ++v) {
    if (protectedVerts && (*protectedVerts)[v]) continue;
    if (bestCut[v].second < 0 || bestCut[v].first >= snapTol) continue;
    const int w = bestCut[v].second;
    const double s = bestCut[v].first;
    pos[v] = interpolatePoint(base.space, base.vertices[v], base.vertices[w], s, base.dimension);
    out.vertexSource[v] = {v, w, s};
    g(v) = 0.0;
  }

  // insert cut vertices on the remaining strict crossings
  std::map<std::pair<int, int>, int> cutVertex;
  for (const auto& e : base.edges) {
    if (g(e.a) == 0.0 || g(e.b) == 0.0 || (g(e.a) > 0) == (g(e.b) > 0)) continue;
    const double s = g(e.a) / (g(e.a) - g(e.b));
    const int idx = static_cast<int>(pos.size());
    pos.push_back(
        interpolatePoint(base.space, base.vertices[e.a], base.vertices[e.b], s, base.dimension));
    cutVertex.emplace(std::make_pair(e.a, e.b), idx);
    out.vertexSource.push_back({e.a, e.b, s});
  }
  auto cutOn = [&](int a, int b) {
    auto it = cutVertex.find(std::minmax(a, b));
    require(it != cutVertex.end(), Errc::InvariantViolation, "missing cut vertex");
    return it->second;
  };

  DiscreteDomain& m = out.mesh;
  m.space = base.space;
  m.dimension = base.dimension;
  m.radialNeumannCenter = base.radialNeumannCenter;
  m.vertices = std::move(pos);

  auto sgn = [&](int v) { return g(v) > 0.0 ? 1 : (g(v) < 0.0 ? -1 : 0); };
  auto emit = [&](std::array<int, 3> cell, int side, int parent) {
    m.cells.push_back(cell);
    out.cellSide.push_back(side);
    out.parentCell.push_back(parent);
  };

  if (base.dimension == 1) {
    for (int ci = 0; ci < base.cellCount(); ++ci) {
      const int a = base.cells[ci][0], b = base.cells[ci][1];
      const int sa = sgn(a), sb = sgn(b);
      require(sa != 0 || sb != 0, Errc::InvariantViolation, "cell collapsed onto the level");
      if (sa >= 0 && sb >= 0) emit({a, b, -1}, 1, ci);
      else if (sa <= 0 && sb <= 0) emit({a, b, -1}, -1, ci);
      else {
        const int mid = cutOn(a, b);
        emit({a, mid, -1}, sa, ci);
        emit({mid, b, -1}, sb, ci);
      }
    }
  } else {
    for (int ci = 0; ci < base.cellCount(); ++ci) {
      std::array<int, 3> c = base.cells[ci];
      int np = 0, nn = 0;
      for (int k = 0; k < 3; ++k) {
        np += sgn(c[k]) > 0;
        nn += sgn(c[k]) < 0;
      }
      require(np + nn > 0, Errc::InvariantViolation, "cell collapsed onto the level");
      if (nn == 0) {
        emit(c, 1, ci);
        continue;
      }
      if (np == 0) {
        emit(c, -1, ci);
        continue;
      }
      if (np == 1 && nn == 1) {
        // one seam vertex: rotate it to the back, cut the opposite edge
        while (sgn(c[2]) != 0) std::rotate(c.begin(), c.begin() + 1, c.end());
        const int mid = cutOn(c[0], c[1]);
        emit({c[0], mid, c[2]}, sgn(c[0]), ci);
        emit({mid, c[1], c[2]}, sgn(c[1]), ci);
        continue;
      }
      // one vertex against two: rotate the lone sign to the front
      const int lone = np == 1 ? 1 : -1;
      while (sgn(c[0]) != lone) std::rotate(c.begin(), c.begin() + 1, c.end());
      const int m1 = cutOn(c[0], c[1]);
      const int m2 = cutOn(c[2], c[0]);
      emit({c[0], m1, m2}, lone, ci);
      // quad (m1, c1, c2, m2) split along the shorter diagonal
      const double d1 = base.space.geodesicDistance(m.vertices[m1], m.vertices[c[2]]);
      const double d2 = base.space.geodesicDistance(m.vertices[c[1]], m.vertices[m2]);
      if (d1 <= d2) {
        emit({m1, c[1], c[2]}, -lone, ci);
        emit({m1, c[2], m2}, -lone, ci);
      } else {
        emit({m1, c[1], m2}, -lone, ci);
        emit({c[1], c[2], m2}, -lone, ci);
      }
    }
  }

  out.onLevel.assign(m.vertexCount(), 0);
  out.cutField.resize(m.vertexCount());
  for (int v = 0; v < m.vertexCount(); ++v) {
    const double gv = v < nv ? g(v) : 0.0;
    out.onLevel[v] = gv == 0.0;
    out.cutField(v) = out.onLevel[v] ? level : gv + level;
    if (out.onLevel[v] && projector) m.vertices[v] = projector(m.vertices[v]);
  }
  m.sourceVertex.resize(m.vertexCount());
  for (int v = 0; v < m.vertexCount(); ++v)
    m.sourceVertex[v] = out.vertexSource[v].s == 0.0 ? out.vertexSource[v].a : -1;
  m.parentCell = out.parentCell;
  finalizeDomain(m);
  return out;
}

SubmeshResult extractSide(const CutResult& cut, int side) {
  SubmeshResult out;
  DiscreteDomain& m = out.mesh;
  m.space = cut.mesh.space;
  m.dimension = cut.mesh.dimension;
  const int nvc = m.dimension == 1 ? 2 : 3;
  std::vector<int> newIndex(cut.mesh.vertexCount(), -1);
  for (int ci = 0; ci < cut.mesh.cellCount(); ++ci) {
    if (cut.cellSide[ci] != side) continue;
    std::array<int, 3> c = cut.mesh.cells[ci];
    for (int k = 0; k < nvc; ++k) {
      if (newIndex[c[k]] < 0) {
        newIndex[c[k]] = static_cast<int>(out.toParentVertex.size());
        out.toParentVertex.push_back(c[k]);
        m.vertices.push_back(cut.mesh.vertices[c[k]]);
        m.sourceVertex.push_back(cut.mesh.sourceVertex[c[k]]);
      }
      c[k] = newIndex[c[k]];
    }
    if (m.dimension == 1) c[2] = -1;
    m.cells.push_back(c);
    m.parentCell.push_back(cut.parentCell[ci]);
  }
  if (cut.mesh.radialNeumannCenter)
    for (int v : out.toParentVertex)
      if (std::abs(cut.mesh.vertices[v](0)) < 1e-14) m.radialNeumannCenter = true;
  return out;
}

SubmeshResult extractCells(const DiscreteDomain& parent, const std::vector<char>& keep) {
  require(parent.finalized, Errc::InvariantViolation, "cell extraction requires a finalized mesh");
  require(keep.size() == static_cast<std::size_t>(parent.cellCount()), Errc::ConfigError,
          "cell mask size mismatch");
  SubmeshResult out;
  DiscreteDomain& m = out.mesh;
  m.space = parent.space;
  m.dimension = parent.dimension;
  const int nvc = m.dimension == 1 ? 2 : 3;
  std::vector<int> newIndex(parent.vertexCount(), -1);
  for (int ci = 0; ci < parent.cellCount(); ++ci) {
    if (!keep[ci]) continue;
    std::array<int, 3> c = parent.cells[ci];
    for (int k = 0; k < nvc; ++k) {
      if (newIndex[c[k]] < 0) {
        newIndex[c[k]] = static_cast<int>(out.toParentVertex.size());
        out.toParentVertex.push_back(c[k]);
        m.vertices.push_back(parent.vertices[c[k]]);
        m.sourceVertex.push_back(c[k]);
      }
      c[k] = newIndex[c[k]];
    }
    if (m.dimension == 1) c[2] = -1;
    m.cells.push_back(c);
    m.parentCell.push_back(ci);
  }
  if (parent.radialNeumannCenter)
    for (int v : out.toParentVertex)
      if (std::abs(parent.vertices[v](0)) < 1e-14) m.radialNeumannCenter = true;
  return out;
}

DiscreteDomain superlevelDomain(const DiscreteDomain& base, const ScalarField& field,
                                double level) {
  require(base.finalized, Errc::InvariantViolation, "base domain not finalized");
  require(field.domain == &base && field.values.size() == base.vertexCount(), Errc::ConfigError,
          "field does not live on the base domain");
  require(level > 0.0, Errc::InvalidRegion, "superlevel threshold must be positive");
  const double maxv = field.values.maxCoeff();
  require(level < maxv, Errc::EmptyLevelSet, "superlevel threshold at or above the field maximum");

  if (field.values.minCoeff() > level) {
    // whole-domain case: full copy
    DiscreteDomain d;
    d.space = base.space;
    d.dimension = base.dimension;
    d.radialNeumannCenter = base.radialNeumannCenter;
    d.vertices = base.vertices;
    d.cells = base.cells;
    d.sourceVertex.resize(base.vertexCount());
    for (int v = 0; v < base.vertexCount(); ++v) d.sourceVertex[v] = v;
    d.parentCell.resize(base.cellCount());
    for (int c = 0; c < base.cellCount(); ++c) d.parentCell[c] = c;
    finalizeDomain(d);
    return d;
  }

  std::vector<char> protect(base.vertexCount(), 0);
  for (int v : base.boundary) protect[v] = 1;
  const auto cut = cutAlongLevel(base, field.values, level, 0.15, &protect);
  auto sub = extractSide(cut, 1);
  require(!sub.mesh.cells.empty(), Errc::EmptyLevelSet, "superlevel set contains no cells");
  const int comps = componentsOfCellSet(sub.mesh.vertexCount(), sub.mesh.cells,
                                        sub.mesh.dimension == 1 ? 2 : 3);
  require(comps == 1, Errc::DisconnectedLevelSet, "superlevel set is disconnected");
  finalizeDomain(sub.mesh);
  return std::move(sub.mesh);
}

namespace {

DiscreteDomain buildSphereCap(bool complement, double radius, double h) {
  const Eigen::Vector3d north(0.0, 0.0, 1.0);
  int level = sphereLevelForMeshSize(h);
  for (int attempt = 0; attempt < 3; ++attempt, ++level) {
    DiscreteDomain sphere = buildSphereSurfaceMesh(level);
    Eigen::VectorXd f = distanceToPoint(sphere, north);
    if (!complement) f = -f;
    const double lvl = complement ? radius : -radius;
    const auto cut = cutAlongLevel(sphere, f, lvl, 0.15, nullptr,
                                   sphereCircleProjector(north, radius));
    auto sub = extractSide(cut, 1);
    require(!sub.mesh.cells.empty(), Errc::InvalidRadius, "region unresolvable at this mesh size");
    finalizeDomain(sub.mesh);
    if (sub.mesh.h <= h) return std::move(sub.mesh);
  }
  fail(Errc::InvariantViolation, "mesh size target not reached");
}

}  // namespace

DiscreteDomain buildDomain(const BackgroundSpace& space, const RegionSpec& region, double h) {
  if (region.shape == RegionShape::SuperlevelSet) {
    require(region.field != nullptr && region.field->domain != nullptr, Errc::ConfigError,
            "superlevel region needs a field");
    return superlevelDomain(*region.field->domain, *region.field, region.level);
  }
  require(h > 0.0, Errc::ConfigError, "mesh size must be positive");
  require(space.dim == 2, Errc::UnsupportedCombination,
          "only 2-D regions are meshed; use buildRadialDomain for radial profiles");
  const double r = region.radius;
  if (region.shape == RegionShape::GeodesicBall) {
    require(r > 1e-6 && r < space.maxRadius() - 1e-6 && std::isfinite(r), Errc::InvalidRadius,
            "ball radius out of range");
    switch (space.kind) {
      case SpaceKind::Euclidean:
      case SpaceKind::Hyperbolic: {
        const double arc = 2.0 * kPi * space.sn(r) / 6.0;
        int rings = std::max<int>(1, static_cast<int>(std::ceil(std::max(r, arc) / (0.95 * h))));
        for (int attempt = 0; attempt < 6; ++attempt) {
          DiscreteDomain d = buildPolarDiskDomain(space, r, rings);
          if (d.h <= h) return d;
          rings = static_cast<int>(std::ceil(rings * d.h / h)) + 1;
        }
        fail(Errc::InvariantViolation, "mesh size target not reached");
      }
      case SpaceKind::Sphere:
        return buildSphereCap(false, r, h);
      case SpaceKind::ProductSphereCylinder:
        fail(Errc::UnsupportedCombination, "product space has no 2-D chart mesh");
    }
  }
  require(region.shape == RegionShape::ComplementOfBall, Errc::InvalidRegion,
          "unknown region shape");
  require(space.kind == SpaceKind::Sphere, Errc::UnsupportedCombination,
          "ball complements are compact only on the sphere");
  require(r > 1e-6 && r < kPi - 1e-6, Errc::InvalidRadius, "ball radius out of range");
  return buildSphereCap(true, r, h);
}

DiscreteDomain buildRadialDomain(const BackgroundSpace& space, double radius, int gridPoints) {
  require(space.isSpaceForm(), Errc::UnsupportedCombination,
          "radial balls live on space forms; use buildProductFlatRadialDomain");
  require(gridPoints >= 16, Errc::ConfigError, "radial grid needs at least 16 points");
  require(radius > 0.0 && radius < space.maxRadius(), Errc::InvalidRadius,
          "ball radius out of range");
  DiscreteDomain d;
  d.space = space;
  d.dimension = 1;
  d.radialNeumannCenter = true;
  for (int i = 0; i <= gridPoints; ++i)
    d.vertices.push_back({radius * i / gridPoints, 0.0, 0.0});
  for (int i = 0; i < gridPoints; ++i) d.cells.push_back({i, i + 1, -1});
  finalizeDomain(d);
  return d;
}

DiscreteDomain buildProductFlatRadialDomain(int k, double radius, int gridPoints) {
  require(gridPoints >= 16, Errc::ConfigError, "radial grid needs at least 16 points");
  require(radius > 0.0 && std::isfinite(radius), Errc::InvalidRadius, "radius out of range");
  DiscreteDomain d;
  d.space = BackgroundSpace::productSphereCylinder(k);
  d.dimension = 1;
  d.radialNeumannCenter = true;
  for (int i = 0; i <= gridPoints; ++i)
    d.vertices.push_back({radius * i / gridPoints, 0.0, 0.0});
  for (int i = 0; i < gridPoints; ++i) d.cells.push_back({i, i + 1, -1});
  finalizeDomain(d);
  return d;
}

}  // namespace crl
