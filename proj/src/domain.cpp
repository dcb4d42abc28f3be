#include "crl/domain.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <tuple>

#include "crl/errors.hpp"
#include "crl/hash.hpp"

namespace crl {

namespace {

// Numerically stable Heron area (Kahan ordering).
double triangleArea(double a, double b, double c) {
  double x = a, y = b, z = c;
  if (x < y) std::swap(x, y);
  if (y < z) std::swap(y, z);
  if (x < y) std::swap(x, y);
  const double q = (x + (y + z)) * (z - (x - y)) * (z + (x - y)) * (x + (y - z));
  if (q <= 0.0) return 0.0;
  return 0.25 * std::sqrt(q);
}

// Simpson quadrature of the radial weight times a linear hat over [ta, tb].
double hatMoment(const BackgroundSpace& space, double ta, double tb, bool hatAtA) {
  const int m = 4;
  const double len = tb - ta;
  double acc = 0.0;
  for (int i = 0; i <= 2 * m; ++i) {
    const double s = static_cast<double>(i) / (2 * m);
    const double t = ta + s * len;
    const double hat = hatAtA ? (1.0 - s) : s;
    double coef = (i == 0 || i == 2 * m) ? 1.0 : ((i % 2) ? 4.0 : 2.0);
    acc += coef * space.radialWeight(t) * hat;
  }
  return acc * len / (6.0 * m);
}

double cellMoment(const BackgroundSpace& space, double ta, double tb) {
  const int m = 4;
  const double len = tb - ta;
  double acc = 0.0;
  for (int i = 0; i <= 2 * m; ++i) {
    const double t = ta + len * i / (2 * m);
    double coef = (i == 0 || i == 2 * m) ? 1.0 : ((i % 2) ? 4.0 : 2.0);
    acc += coef * space.radialWeight(t);
  }
  return acc * len / (6.0 * m);
}

struct ChartTriangle {
  // local chart with vertex 0 at origin, vertex 1 on the x axis
  double lc, x2, y2;
};

ChartTriangle chart(const CellGeometry& g) {
  // edgeLen[i] is opposite local vertex i
  const double la = g.edgeLen[0], lb = g.edgeLen[1], lc = g.edgeLen[2];
  ChartTriangle ch;
  ch.lc = lc;
  ch.x2 = (lb * lb + lc * lc - la * la) / (2.0 * lc);
  const double q = lb * lb - ch.x2 * ch.x2;
  ch.y2 = std::sqrt(std::max(q, 0.0));
  return ch;
}

}  // namespace

void finalizeDomain(DiscreteDomain& d) {
  const int nv = d.vertexCount();
  const int nc = d.cellCount();
  require(nv >= 2 && nc >= 1, Errc::InvariantViolation, "mesh too small");
  require(d.dimension == 1 || d.dimension == 2, Errc::UnsupportedCombination,
          "mesh dimension must be 1 or 2");

  d.cellGeom.assign(nc, CellGeometry{});
  d.lumpedMass = Eigen::VectorXd::Zero(nv);
  d.edges.clear();
  d.boundaryEdges.clear();
  d.h = 0.0;

  if (d.dimension == 1) {
    std::vector<int> incidence(nv, 0);
    std::vector<int> lastCell(nv, -1);
    std::vector<std::tuple<int, int, double>> raw;
    raw.reserve(nc);
    for (int ci = 0; ci < nc; ++ci) {
      const auto& c = d.cells[ci];
      require(c[2] == -1, Errc::InvariantViolation, "1-D cell with three vertices");
      int a = c[0], b = c[1];
      require(a >= 0 && a < nv && b >= 0 && b < nv && a != b, Errc::InvariantViolation,
              "cell vertex index out of range");
      double ta = d.vertices[a](0), tb = d.vertices[b](0);
      if (ta > tb) {
        std::swap(a, b);
        std::swap(ta, tb);
      }
      const double len = tb - ta;
      require(len > 0.0, Errc::InvariantViolation, "degenerate 1-D cell");
      CellGeometry g;
      g.measure = cellMoment(d.space, ta, tb);
      g.edgeLen = {len, 0.0, 0.0};
      require(g.measure > 0.0, Errc::InvariantViolation, "nonpositive cell measure");
      d.cellGeom[ci] = g;
      d.h = std::max(d.h, len);
      d.lumpedMass(a) += hatMoment(d.space, ta, tb, true);
      d.lumpedMass(b) += hatMoment(d.space, ta, tb, false);
      raw.emplace_back(std::min(a, b), std::max(a, b), g.measure / (len * len));
      incidence[a]++;
      incidence[b]++;
      lastCell[a] = ci;
      lastCell[b] = ci;
    }
    std::sort(raw.begin(), raw.end());
    for (const auto& [a, b, w] : raw) d.edges.push_back({a, b, w});
    d.boundary.clear();
    for (int v = 0; v < nv; ++v) {
      require(incidence[v] >= 1 && incidence[v] <= 2, Errc::InvariantViolation,
              "1-D vertex incidence must be 1 or 2");
      if (incidence[v] == 1) {
        const bool center = d.radialNeumannCenter && std::abs(d.vertices[v](0)) < 1e-14;
        if (!center) {
          d.boundary.push_back(v);
          d.boundaryEdges.push_back({v, v, lastCell[v], d.space.radialWeight(d.vertices[v](0))});
        }
      }
    }
  } else {
    // intrinsic edge lengths, Heron areas, cotangent weights
    std::vector<std::tuple<int, int, double, int>> raw;  // a, b, weight, cell
    raw.reserve(3 * static_cast<std::size_t>(nc));
    for (int ci = 0; ci < nc; ++ci) {
      const auto& c = d.cells[ci];
      require(c[0] >= 0 && c[1] >= 0 && c[2] >= 0 && c[0] < nv && c[1] < nv && c[2] < nv,
              Errc::InvariantViolation, "cell vertex index out of range");
      require(c[0] != c[1] && c[1] != c[2] && c[0] != c[2], Errc::InvariantViolation,
              "degenerate cell");
      CellGeometry g;
      for (int k = 0; k < 3; ++k) {
        const int i = c[(k + 1) % 3], j = c[(k + 2) % 3];
        g.edgeLen[k] = d.space.geodesicDistance(d.vertices[i], d.vertices[j]);
        d.h = std::max(d.h, g.edgeLen[k]);
      }
      g.measure = triangleArea(g.edgeLen[0], g.edgeLen[1], g.edgeLen[2]);
      require(g.measure > 0.0, Errc::InvariantViolation, "nonpositive cell area");
      d.cellGeom[ci] = g;
      for (int k = 0; k < 3; ++k) {
        const int i = c[(k + 1) % 3], j = c[(k + 2) % 3];
        const double li = g.edgeLen[(k + 2) % 3];  // opposite j: edge (c[k], i)
        const double lj = g.edgeLen[(k + 1) % 3];
        const double lk = g.edgeLen[k];
        // cot(angle at c[k]) / 2 = (li^2 + lj^2 - lk^2) / (8 A)
        const double w = (li * li + lj * lj - lk * lk) / (8.0 * g.measure);
        raw.emplace_back(std::min(i, j), std::max(i, j), w, ci);
      }
      for (int k = 0; k < 3; ++k) d.lumpedMass(c[k]) += g.measure / 3.0;
    }
    std::sort(raw.begin(), raw.end(), [](const auto& p, const auto& q) {
      return std::tie(std::get<0>(p), std::get<1>(p)) < std::tie(std::get<0>(q), std::get<1>(q));
    });
    std::size_t i = 0;
    while (i < raw.size()) {
      std::size_t j = i;
      double w = 0.0;
      while (j < raw.size() && std::get<0>(raw[j]) == std::get<0>(raw[i]) &&
             std::get<1>(raw[j]) == std::get<1>(raw[i])) {
        w += std::get<2>(raw[j]);
        ++j;
      }
      const std::size_t mult = j - i;
      require(mult <= 2, Errc::InvariantViolation, "edge shared by more than two cells");
      d.edges.push_back({std::get<0>(raw[i]), std::get<1>(raw[i]), w});
      if (mult == 1) {
        const int a = std::get<0>(raw[i]), b = std::get<1>(raw[i]);
        const int cell = std::get<3>(raw[i]);
        d.boundaryEdges.push_back({a, b, cell,
                                   d.space.geodesicDistance(d.vertices[a], d.vertices[b])});
      }
      i = j;
    }
    d.boundary.clear();
    std::vector<char> isB(nv, 0);
    for (const auto& be : d.boundaryEdges) {
      isB[be.a] = 1;
      isB[be.b] = 1;
    }
    for (int v = 0; v < nv; ++v)
      if (isB[v]) d.boundary.push_back(v);
  }

  std::sort(d.boundary.begin(), d.boundary.end());
  d.isBoundary.assign(nv, 0);
  for (int v : d.boundary) d.isBoundary[v] = 1;
  d.interior.clear();
  for (int v = 0; v < nv; ++v)
    if (!d.isBoundary[v]) d.interior.push_back(v);

  for (int v = 0; v < nv; ++v)
    require(d.lumpedMass(v) > 0.0, Errc::InvariantViolation, "isolated vertex");

  // connectivity over the edge graph
  {
    std::vector<int> head(nv + 1, 0);
    for (const auto& e : d.edges) {
      head[e.a + 1]++;
      head[e.b + 1]++;
    }
    for (int v = 0; v < nv; ++v) head[v + 1] += head[v];
    std::vector<int> adj(2 * d.edges.size());
    std::vector<int> cursor(head.begin(), head.end() - 1);
    for (const auto& e : d.edges) {
      adj[cursor[e.a]++] = e.b;
      adj[cursor[e.b]++] = e.a;
    }
    std::vector<char> seen(nv, 0);
    std::queue<int> q;
    q.push(0);
    seen[0] = 1;
    int reached = 1;
    while (!q.empty()) {
      const int v = q.front();
      q.pop();
      for (int k = head[v]; k < head[v + 1]; ++k)
        if (!seen[adj[k]]) {
          seen[adj[k]] = 1;
          reached++;
          q.push(adj[k]);
        }
    }
    require(reached == nv, Errc::InvariantViolation, "mesh is disconnected");
  }

  // duplicate vertex check
  {
    std::vector<int> order(nv);
    for (int v = 0; v < nv; ++v) order[v] = v;
    std::sort(order.begin(), order.end(), [&](int p, int q) {
      const auto &a = d.vertices[p], &b = d.vertices[q];
      return std::tie(a(0), a(1), a(2)) < std::tie(b(0), b(1), b(2));
    });
    for (int v = 0; v + 1 < nv; ++v)
      require((d.vertices[order[v]] - d.vertices[order[v + 1]]).norm() > 1e-12,
              Errc::InvariantViolation, "duplicate vertices");
  }

  Fnv1a64 hs;
  hs.str(d.space.name());
  hs.i32(d.space.dim);
  hs.i32(d.space.sphereFactorDim);
  hs.i32(d.dimension);
  hs.i32(nv);
  hs.i32(nc);
  for (const auto& v : d.vertices) {
    hs.f64(v(0));
    hs.f64(v(1));
    hs.f64(v(2));
  }
  for (const auto& c : d.cells) {
    hs.i32(c[0]);
    hs.i32(c[1]);
    hs.i32(c[2]);
  }
  for (int v : d.boundary) hs.i32(v);
  d.hash = hs.value();
  d.finalized = true;
}

double supNorm(const ScalarField& f) {
  return f.values.size() ? f.values.cwiseAbs().maxCoeff() : 0.0;
}

Eigen::VectorXd stiffnessApply(const DiscreteDomain& d, const Eigen::VectorXd& f) {
  Eigen::VectorXd r = Eigen::VectorXd::Zero(d.vertexCount());
  for (const auto& e : d.edges) {
    const double diff = e.w * (f(e.a) - f(e.b));
    r(e.a) += diff;
    r(e.b) -= diff;
  }
  return r;
}

double cellGradientNormSq(const DiscreteDomain& d, int cell, const Eigen::VectorXd& f) {
  const auto& c = d.cells[cell];
  if (d.dimension == 1) {
    const double len = std::abs(d.vertices[c[0]](0) - d.vertices[c[1]](0));
    const double g = (f(c[1]) - f(c[0])) / (d.vertices[c[1]](0) - d.vertices[c[0]](0));
    (void)len;
    return g * g;
  }
  const auto ch = chart(d.cellGeom[cell]);
  const double gx = (f(c[1]) - f(c[0])) / ch.lc;
  const double gy = (f(c[2]) - f(c[0]) - ch.x2 * gx) / ch.y2;
  return gx * gx + gy * gy;
}

Eigen::VectorXd vertexGradientNormSq(const DiscreteDomain& d, const Eigen::VectorXd& f) {
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(d.vertexCount());
  Eigen::VectorXd wsum = Eigen::VectorXd::Zero(d.vertexCount());
  for (int ci = 0; ci < d.cellCount(); ++ci) {
    const double g = cellGradientNormSq(d, ci, f);
    const double m = d.cellGeom[ci].measure;
    const auto& c = d.cells[ci];
    const int nvc = d.dimension == 1 ? 2 : 3;
    for (int k = 0; k < nvc; ++k) {
      acc(c[k]) += m * g;
      wsum(c[k]) += m;
    }
  }
  for (int v = 0; v < d.vertexCount(); ++v)
    if (wsum(v) > 0.0) acc(v) /= wsum(v);
  return acc;
}

std::vector<std::vector<std::pair<int, double>>> boundaryNormalOperator(const DiscreteDomain& d) {
  require(d.finalized, Errc::InvariantViolation, "domain not finalized");
  const int nb = static_cast<int>(d.boundary.size());
  std::vector<int> bIndex(d.vertexCount(), -1);
  for (int i = 0; i < nb; ++i) bIndex[d.boundary[i]] = i;
  std::vector<std::vector<std::pair<int, double>>> rows(nb);
  std::vector<double> wsum(nb, 0.0);

  auto addTerm = [&](int row, int col, double coef) {
    for (auto& [c, v] : rows[row])
      if (c == col) {
        v += coef;
        return;
      }
    rows[row].emplace_back(col, coef);
  };

  if (d.dimension == 1) {
    for (const auto& be : d.boundaryEdges) {
      const auto& c = d.cells[be.cell];
      const int v = be.a;
      const int o = (c[0] == v) ? c[1] : c[0];
      // outward points away from the interior neighbour, so the unsigned
      // spacing gives the outward derivative at either end of the chart
      const double dt = std::abs(d.vertices[v](0) - d.vertices[o](0));
      const int row = bIndex[v];
      addTerm(row, v, 1.0 / dt);
      addTerm(row, o, -1.0 / dt);
      wsum[row] += 1.0;
    }
  } else {
    for (const auto& be : d.boundaryEdges) {
      const auto& c = d.cells[be.cell];
      // local indices with the boundary edge mapped to chart vertices 0,1
      int ia = -1, ib = -1, icl = -1;
      for (int k = 0; k < 3; ++k) {
        if (c[k] == be.a) ia = k;
        else if (c[k] == be.b) ib = k;
        else icl = k;
      }
      require(ia >= 0 && ib >= 0 && icl >= 0, Errc::InvariantViolation,
              "boundary edge not contained in its cell");
      const double la = d.cellGeom[be.cell].edgeLen[0];
      const double lb = d.cellGeom[be.cell].edgeLen[1];
      const double lcg = d.cellGeom[be.cell].edgeLen[2];
      auto lenOpposite = [&](int k) { return k == 0 ? la : (k == 1 ? lb : lcg); };
      const double lab = lenOpposite(icl);   // |a b|
      const double lac = lenOpposite(ib);    // |a c|
      const double lbc = lenOpposite(ia);    // |b c|
      const double x2 = (lac * lac + lab * lab - lbc * lbc) / (2.0 * lab);
      const double y2 = std::sqrt(std::max(lac * lac - x2 * x2, 1e-300));
      // outward normal of the chart edge (0,0)-(lab,0) is (0,-1)
      const double ca = (1.0 - x2 / lab) / y2;
      const double cb = (x2 / lab) / y2;
      const double cc = -1.0 / y2;
      const double wgt = 0.5 * be.len;
      for (int endVertex : {be.a, be.b}) {
        const int row = bIndex[endVertex];
        addTerm(row, be.a, wgt * ca);
        addTerm(row, be.b, wgt * cb);
        addTerm(row, c[icl], wgt * cc);
        wsum[row] += wgt;
      }
    }
  }
  for (int i = 0; i < nb; ++i) {
    require(wsum[i] > 0.0, Errc::InvariantViolation, "boundary vertex without incident cell");
    for (auto& [c, v] : rows[i]) v /= wsum[i];
    std::sort(rows[i].begin(), rows[i].end());
  }
  return rows;
}

Eigen::VectorXd boundaryNormalDerivative(const DiscreteDomain& d, const Eigen::VectorXd& f) {
  const auto op = boundaryNormalOperator(d);
  Eigen::VectorXd out(static_cast<int>(op.size()));
  for (std::size_t i = 0; i < op.size(); ++i) {
    double acc = 0.0;
    for (const auto& [c, v] : op[i]) acc += v * f(c);
    out(static_cast<int>(i)) = acc;
  }
  return out;
}

Eigen::VectorXd boundaryWeights(const DiscreteDomain& d) {
  require(d.finalized, Errc::InvariantViolation, "domain not finalized");
  const int nb = static_cast<int>(d.boundary.size());
  std::vector<int> bIndex(d.vertexCount(), -1);
  for (int i = 0; i < nb; ++i) bIndex[d.boundary[i]] = i;
  Eigen::VectorXd w = Eigen::VectorXd::Zero(nb);
  for (const auto& be : d.boundaryEdges) {
    if (d.dimension == 1) {
      w(bIndex[be.a]) += be.len;
    } else {
      w(bIndex[be.a]) += 0.5 * be.len;
      w(bIndex[be.b]) += 0.5 * be.len;
    }
  }
  return w;
}

}  // namespace crl
