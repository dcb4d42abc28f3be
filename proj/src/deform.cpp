#include "crl/deform.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <string>
#include <utility>

#include "crl/errors.hpp"
#include "crl/mass.hpp"

namespace crl {

namespace {

constexpr double kSnapTol = 0.15;
constexpr double kSupNormTol = 1e-12;
constexpr double kSeamAgreementTol = 1e-12;
constexpr double kResidualGate = 1e-6;
constexpr double kRoundoffScale = 1e-9;
constexpr int kGlueHalvings = 6;

const double kInf = std::numeric_limits<double>::infinity();

double curvatureScale(const BackgroundSpace& space) {
  return std::max(1.0, std::abs(space.scalarCurvature()));
}

// exp(-1/phi), extended by 0 across {phi <= 0}
double collarBump(double phi) { return phi > 0.0 ? std::exp(-1.0 / phi) : 0.0; }

double identityValue(int n) { return n == 2 ? 0.0 : 1.0; }

// metric factor -> convention field (log of the factor on surfaces)
Eigen::VectorXd conventionField(int n, const Eigen::VectorXd& factor) {
  if (n == 2) return factor.array().log().matrix();
  return factor;
}

double orientation(Sign s) { return s == Sign::Plus ? 1.0 : -1.0; }
double signedDirection(Sign s) { return s == Sign::Plus ? -1.0 : 1.0; }  // phi_sign = dir * psi

void checkPhi(const DiscreteDomain& omega, const ScalarField& phi) {
  require(omega.finalized, Errc::InvariantViolation, "domain not finalized");
  require(phi.domain == &omega && phi.values.size() == omega.vertexCount(), Errc::ConfigError,
          "field does not live on the given domain");
  require(!omega.boundary.empty(), Errc::ConfigError, "domain has no boundary");
  for (int v : omega.boundary)
    require(phi.values(v) == 0.0, Errc::InvariantViolation, "phi must vanish on the boundary");
  double mx = 0.0;
  for (int v : omega.interior) {
    require(phi.values(v) > 0.0, Errc::InvariantViolation, "phi must be positive inside");
    mx = std::max(mx, phi.values(v));
  }
  require(std::abs(mx - 1.0) <= kSupNormTol, Errc::InvariantViolation,
          "phi must be sup-normalised");
}

CollarMetricPair buildPairFields(const DiscreteDomain& omega, const ScalarField& phi, double eps,
                                 double margin) {
  const int nv = omega.vertexCount();
  Eigen::VectorXd wp(nv), wm(nv);
  for (int v = 0; v < nv; ++v) {
    const double b = collarBump(phi.values(v));
    wp(v) = 1.0 - b;
    wm(v) = 1.0 + b;
    require(wp(v) > 0.0 && wp(v) <= 1.0 && wm(v) >= 1.0, Errc::InvariantViolation,
            "collar factor out of range");
    // strictness is representable only once the bump clears the ulp of 1
    if (b > 1e-15)
      require(wp(v) < 1.0 && wm(v) > 1.0, Errc::InvariantViolation,
              "collar factor not strict inside");
  }
  for (int v : omega.boundary)
    require(wp(v) == 1.0 && wm(v) == 1.0, Errc::InvariantViolation,
            "collar factor must be 1 on the boundary");
  CollarMetricPair out;
  out.wPlus = {&omega, std::move(wp)};
  out.wMinus = {&omega, std::move(wm)};
  out.epsilon = eps;
  out.subharmonicityMargin = margin;
  return out;
}

// largest eps = 2^-k whose collar margin is nonnegative on {phi <= 2 eps}
// and whose core eigenvalue is negative; the margin screens candidates
// before the expensive eigensolve, and coreEigenvalue may return +inf for
// cores that fail to separate
template <class EigFn>
double selectEpsilon(const DiscreteDomain& omega, const ScalarField& phi, double lambda1,
                     int maxExponent, EigFn&& coreEigenvalue, double* marginOut) {
  const Eigen::VectorXd margin = collarMarginField(omega, phi, lambda1);
  for (int k = 1; k <= maxExponent; ++k) {
    const double eps = std::ldexp(1.0, -k);
    double m = kInf;
    for (int v = 0; v < omega.vertexCount(); ++v)
      if (phi.values(v) <= 2.0 * eps) m = std::min(m, margin(v));
    if (!(m >= 0.0)) continue;
    if (!(coreEigenvalue(eps) < 0.0)) continue;
    *marginOut = m;
    return eps;
  }
  fail(Errc::NoValidEpsilon,
       "no epsilon in the search grid combines a nonnegative collar margin with a negative "
       "core eigenvalue");
}

bool cellsConnected(const DiscreteDomain& d) {
  if (d.cellCount() == 0) return false;
  const int nvc = d.dimension == 1 ? 2 : 3;
  std::vector<std::vector<int>> vertexCells(d.vertexCount());
  for (int ci = 0; ci < d.cellCount(); ++ci)
    for (int k = 0; k < nvc; ++k) vertexCells[d.cells[ci][k]].push_back(ci);
  std::vector<char> seen(d.cellCount(), 0);
  std::queue<int> q;
  q.push(0);
  seen[0] = 1;
  int reached = 1;
  while (!q.empty()) {
    const int ci = q.front();
    q.pop();
    for (int k = 0; k < nvc; ++k)
      for (int cj : vertexCells[d.cells[ci][k]])
        if (!seen[cj]) {
          seen[cj] = 1;
          reached++;
          q.push(cj);
        }
  }
  return reached == d.cellCount();
}

template <class F>
auto runStage(const char* stage, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const Error& e) {
    throw Error(e.code(), std::string("stage ") + stage + ": " + e.what());
  }
}

}  // namespace

const char* signName(Sign s) { return s == Sign::Plus ? "plus" : "minus"; }

double cutoffProfile(double s) {
  if (s <= 0.0) return 0.0;
  if (s >= 1.0) return 1.0;
  return ((6.0 * s - 15.0) * s + 10.0) * s * s * s;
}

double matchingConstant(Sign sign, double epsilon) {
  require(epsilon > 0.0 && epsilon < 1.0, Errc::ConfigError, "epsilon out of range");
  const double b = std::exp(-1.0 / epsilon);
  return sign == Sign::Plus ? 1.0 - b : 1.0 + b;
}

double strictMarginFloor(double h, double curvatureScale) {
  require(h > 0.0 && curvatureScale > 0.0, Errc::ConfigError, "floor inputs must be positive");
  return 10.0 * h * h * curvatureScale;
}

Eigen::VectorXd collarMarginField(const DiscreteDomain& omega, const ScalarField& phi,
                                  double lambda1) {
  require(phi.domain == &omega && phi.values.size() == omega.vertexCount(), Errc::ConfigError,
          "field does not live on the given domain");
  const Eigen::VectorXd g2 = vertexGradientNormSq(omega, phi.values);
  // Delta exp(-1/phi) = exp(-1/phi) phi^-4 (|grad phi|^2 (1 - 2 phi) - lambda1 phi^3)
  return (g2.array() * (1.0 - 2.0 * phi.values.array()) - lambda1 * phi.values.array().cube())
      .matrix();
}

CollarMetricPair buildCollarMetrics(const DiscreteDomain& omega, const ScalarField& phi,
                                    double lambda1) {
  checkPhi(omega, phi);
  require(lambda1 > 0.0, Errc::NonPositiveEigenvalue,
          "the Dirichlet Laplacian eigenvalue must be positive");
  auto coreEigenvalue = [&](double eps) {
    try {
      const DiscreteDomain core = superlevelDomain(omega, phi, eps);
      return firstEigenpair(schrodingerOperator(core)).eigenvalue;
    } catch (const Error& e) {
      if (e.code() == Errc::EmptyLevelSet || e.code() == Errc::DisconnectedLevelSet) return kInf;
      throw;
    }
  };
  double margin = 0.0;
  const double eps = selectEpsilon(omega, phi, lambda1, 12, coreEigenvalue, &margin);
  return buildPairFields(omega, phi, eps, margin);
}

MarginProbe perturbationMargins(const DiscreteDomain& core, const ScalarField& psi, Sign sign,
                                double t, double matchConstant) {
  require(psi.domain == &core && psi.values.size() == core.vertexCount(), Errc::ConfigError,
          "field does not live on the given domain");
  require(t >= 0.0, Errc::ConfigError, "amplitude must be nonnegative");
  require(matchConstant > 0.0, Errc::ConfigError, "match constant must be positive");
  require(!core.interior.empty(), Errc::ConfigError, "core has no interior vertices");

  const int n = core.space.dim;
  const Eigen::VectorXd factor =
      (matchConstant * (1.0 + (t * signedDirection(sign)) * psi.values.array())).matrix();
  require(factor.minCoeff() > 0.0, Errc::NonPositiveFactor, "perturbation factor lost positivity");
  const ConformalFactor cf = makeFactor(core, conventionField(n, factor));
  const ScalarField rg = scalarCurvature(cf, core);
  const double rbar = core.space.scalarCurvature();
  const double orient = orientation(sign);

  MarginProbe probe{kInf, -kInf};
  for (int v : core.interior) {
    const double m = orient * (rg.values(v) - rbar);
    probe.minMargin = std::min(probe.minMargin, m);
    probe.maxMargin = std::max(probe.maxMargin, m);
  }
  return probe;
}

PerturbationSpec buildPerturbation(const DiscreteDomain& core, const SpectralResult& psi,
                                   Sign sign, double tMax, const MatchingContext& ctx) {
  require(psi.eigenfunction.domain == &core, Errc::ConfigError,
          "eigenfunction does not live on the core");
  require(psi.eigenvalue < 0.0, Errc::CertifiedPositiveEigenvalue,
          "the core operator eigenvalue is nonnegative; rigidity applies");
  require(psi.residualNorm <= kResidualGate, Errc::InvariantViolation,
          "eigenpair residual too large");
  require(tMax > 0.0, Errc::ConfigError, "tMax must be positive");
  require(ctx.epsilon > 0.0 && ctx.ambientH > 0.0, Errc::ConfigError,
          "matching context incomplete");
  require(ctx.minusDnuPhiOuter.size() == static_cast<Eigen::Index>(core.boundary.size()),
          Errc::ConfigError, "seam slope data does not match the core boundary");

  const double c = matchingConstant(sign, ctx.epsilon);
  const Eigen::VectorXd dnuPsi = boundaryNormalDerivative(core, psi.eigenfunction.values);

  // the seam ordering t (-dnu psi) > (e^{-1/eps} / (eps^2 c)) (-dnu phi) is
  // linear in t, so its lower end is a max over seam vertices
  const double bumpRatio = std::exp(-1.0 / ctx.epsilon) / (ctx.epsilon * ctx.epsilon * c);
  double tLow = 0.0;
  for (Eigen::Index i = 0; i < dnuPsi.size(); ++i) {
    const double slopePsi = -dnuPsi(i);
    require(slopePsi > 0.0, Errc::MeanCurvatureOrderingFailed,
            "psi has a nonnegative outward slope on the seam");
    const double rhs = bumpRatio * ctx.minusDnuPhiOuter(i);
    if (rhs > 0.0) tLow = std::max(tLow, rhs / slopePsi);
  }
  tLow = std::max(tLow * (1.0 + 1e-9), 1e-12);

  auto admissible = [&](double t) {
    const double dir = signedDirection(sign);
    double umin = kInf;
    for (int v = 0; v < core.vertexCount(); ++v)
      umin = std::min(umin, 1.0 + t * dir * psi.eigenfunction.values(v));
    if (!(umin > 0.5)) return false;
    return perturbationMargins(core, psi.eigenfunction, sign, t, c).minMargin > 0.0;
  };

  require(admissible(0.0), Errc::EmptyTWindow, "matched metric inadmissible even at t = 0");
  double tHigh = tMax;
  if (!admissible(tMax)) {
    double lo = 0.0, hi = tMax;
    for (int it = 0; it < 50; ++it) {
      const double mid = 0.5 * (lo + hi);
      (admissible(mid) ? lo : hi) = mid;
    }
    tHigh = lo;
  }
  require(tLow <= tHigh, Errc::EmptyTWindow,
          "amplitude window is empty: the seam ordering needs t >= " + std::to_string(tLow) +
              " but admissibility caps t at " + std::to_string(tHigh));

  // the blended seam jump grows with t - tLow, so the amplitude sits just
  // above the matching threshold rather than deep inside the window
  double t = std::min(tLow * 1.25, 0.5 * (tLow + tHigh));
  for (int it = 0; it < 30 && !admissible(t); ++it) t = 0.5 * (t + tLow);
  require(admissible(t), Errc::EmptyTWindow,
          "no admissible amplitude just above the seam threshold");

  PerturbationSpec out;
  out.t = t;
  out.psi = psi.eigenfunction;
  out.sign = sign;
  out.eigenvalue = psi.eigenvalue;
  out.residual = psi.residualNorm;
  out.tLow = tLow;
  out.tHigh = tHigh;
  return out;
}

ConformalFactor applyMatching(const PerturbationSpec& pert, const DiscreteDomain& core,
                              const MatchingContext& ctx) {
  require(pert.psi.domain == &core && pert.psi.values.size() == core.vertexCount(),
          Errc::ConfigError, "perturbation does not live on the core");
  require(pert.t > 0.0, Errc::ConfigError, "amplitude must be positive");
  require(ctx.minusDnuPhiOuter.size() == static_cast<Eigen::Index>(core.boundary.size()),
          Errc::ConfigError, "seam slope data does not match the core boundary");
  const double c = matchingConstant(pert.sign, ctx.epsilon);

  const Eigen::VectorXd dnuPsi = boundaryNormalDerivative(core, pert.psi.values);
  const double bumpRatio = std::exp(-1.0 / ctx.epsilon) / (ctx.epsilon * ctx.epsilon * c);
  for (Eigen::Index i = 0; i < dnuPsi.size(); ++i) {
    const double lhs = pert.t * (-dnuPsi(i));
    const double rhs = bumpRatio * ctx.minusDnuPhiOuter(i);
    require(lhs > rhs, Errc::MeanCurvatureOrderingFailed,
            "seam slope ordering fails at boundary vertex " +
                std::to_string(core.boundary[static_cast<std::size_t>(i)]) + ": " +
                std::to_string(lhs) + " <= " + std::to_string(rhs));
  }

  const Eigen::VectorXd factor =
      (c * (1.0 + (pert.t * signedDirection(pert.sign)) * pert.psi.values.array())).matrix();
  require(factor.minCoeff() > 0.5 * c, Errc::InvariantViolation, "matched factor dips below c/2");
  return makeFactor(core, conventionField(core.space.dim, factor));
}

GlueResult glue(const ConformalFactor& inner, const ConformalFactor& outer, Sign sign,
                const GlueSpec& spec, const ScalarField& phi, double epsilon) {
  const DiscreteDomain* d = inner.u.domain;
  require(d != nullptr && d == outer.u.domain && d == phi.domain, Errc::ConfigError,
          "glue operands must share one mesh");
  require(inner.convention == outer.convention && inner.ambientDim == outer.ambientDim,
          Errc::ConfigError, "glue operands must share one convention");
  require(spec.cutoffOrder == 5, Errc::ConfigError, "only the quintic cutoff keeps C^2 ends");
  require(spec.deltaBudget > 0.0, Errc::InvalidDelta, "delta budget must be positive");
  require(spec.collarWidth > 0.0, Errc::ConfigError, "collar width must be positive");
  require(epsilon > 0.0, Errc::ConfigError, "epsilon must be positive");

  const Eigen::VectorXd g2 = vertexGradientNormSq(*d, phi.values);
  double gradScale = kInf;
  int seamCount = 0;
  for (int v = 0; v < d->vertexCount(); ++v) {
    if (phi.values(v) != epsilon) continue;
    seamCount++;
    gradScale = std::min(gradScale, std::sqrt(g2(v)));
    require(std::abs(inner.u.values(v) - outer.u.values(v)) <= kSeamAgreementTol,
            Errc::InvariantViolation, "inner and outer factors disagree on the seam");
  }
  require(seamCount > 0, Errc::ConfigError, "no seam vertices at the given level");
  require(gradScale > 0.0, Errc::InvariantViolation, "degenerate seam slope");

  const double rbar = d->space.scalarCurvature();
  const double orient = orientation(sign);
  const ScalarField rIn = scalarCurvature(inner, *d);
  const ScalarField rOut = scalarCurvature(outer, *d);

  double width = spec.collarWidth;
  double lastDelta = -1.0;
  for (int attempt = 0; attempt <= kGlueHalvings; ++attempt, width *= 0.5) {
    const double hw = 0.5 * width * gradScale;
    if (hw >= epsilon) continue;  // band must stay inside {0 < phi < 2 eps}

    GlueResult res;
    res.collarWidth = width;
    res.band.assign(d->vertexCount(), 0);
    Eigen::VectorXd u(d->vertexCount());
    for (int v = 0; v < d->vertexCount(); ++v) {
      const double ui = inner.u.values(v), uo = outer.u.values(v);
      const double p = phi.values(v);
      if (ui == uo) u(v) = ui;
      else if (p >= epsilon + hw) u(v) = ui;
      else if (p <= epsilon - hw) u(v) = uo;
      else {
        const double chi = cutoffProfile((p - (epsilon - hw)) / (2.0 * hw));
        u(v) = chi * ui + (1.0 - chi) * uo;
        res.band[v] = 1;
      }
    }
    res.factor = makeFactor(*d, std::move(u));

    // the dip is read on the band plus its one-ring, everywhere the blend
    // can still move the discrete curvature
    std::vector<char> measure = res.band;
    for (const auto& e : d->edges) {
      if (res.band[e.a]) measure[e.b] = 1;
      if (res.band[e.b]) measure[e.a] = 1;
    }
    const ScalarField rGlued = scalarCurvature(res.factor, *d);
    double inputsWorst = kInf, gluedWorst = kInf;
    bool any = false;
    for (int v = 0; v < d->vertexCount(); ++v) {
      if (!measure[v] || d->isBoundary[v]) continue;
      any = true;
      inputsWorst = std::min(inputsWorst, std::min(orient * (rIn.values(v) - rbar),
                                                   orient * (rOut.values(v) - rbar)));
      gluedWorst = std::min(gluedWorst, orient * (rGlued.values(v) - rbar));
    }
    res.achievedDelta = any ? std::max(0.0, inputsWorst - gluedWorst) : 0.0;
    lastDelta = res.achievedDelta;
    if (res.achievedDelta <= spec.deltaBudget) return res;
  }
  if (lastDelta < 0.0)
    fail(Errc::ConfigError, "blend band never fit inside the collar at the given width");
  fail(Errc::DeltaBudgetExceeded,
       "collar blending dips the curvature by " + std::to_string(lastDelta) +
           " against a budget of " + std::to_string(spec.deltaBudget) + " after " +
           std::to_string(kGlueHalvings) + " width halvings");
}

struct DeformationContext {
  BackgroundSpace space;
  double radius = 0.0;
  DeformationBudgets budgets;

  std::shared_ptr<DiscreteDomain> ambient;  // both seams embedded
  std::shared_ptr<DiscreteDomain> core;     // {phi > eps}
  std::shared_ptr<DiscreteDomain> omega;    // the full region
  std::vector<int> coreToAmbient;
  std::vector<int> omegaToAmbient;

  Eigen::VectorXd phi;  // on ambient: exactly eps on the seam, 0 outside Omega
  Eigen::VectorXd psi;  // on ambient: 0 outside the core

  std::vector<char> insideVert;   // touches core cells only
  std::vector<char> outsideVert;  // touches no Omega cell

  SpectralResult psiPair;  // on core
  MatchingContext matching;

  double epsilon = 0.0;
  double subharmonicityMargin = 0.0;
  double lambda1Omega = 0.0;
  double bigLambda1Omega = 0.0;
  double seamSlopeMin = 0.0;  // min |grad phi| over the seam
};

namespace {

// ambient manifold piece holding the region with room for the collar
DiscreteDomain buildAmbient(const BackgroundSpace& space, double r, const DeformationBudgets& b) {
  if (space.kind == SpaceKind::Sphere && space.dim == 2)
    return buildSphereSurfaceMesh(sphereLevelForMeshSize(b.h));
  if (space.kind == SpaceKind::ProductSphereCylinder)
    return buildProductFlatRadialDomain(space.sphereFactorDim, 1.3 * r, b.gridPoints);
  const double outer = std::min(1.3 * r, 0.5 * (r + space.maxRadius()));
  return buildRadialDomain(space, outer, b.gridPoints);
}

Eigen::VectorXd regionDistanceField(const DiscreteDomain& m) {
  if (m.dimension == 1) {
    Eigen::VectorXd f(m.vertexCount());
    for (int v = 0; v < m.vertexCount(); ++v) f(v) = m.vertices[v](0);
    return f;
  }
  return distanceToPoint(m, Eigen::Vector3d(0.0, 0.0, 1.0));
}

}  // namespace

std::shared_ptr<const DeformationContext> prepareDeformation(const BackgroundSpace& space,
                                                             const RegionSpec& region,
                                                             const DeformationBudgets& budgets) {
  require(region.shape == RegionShape::GeodesicBall, Errc::UnsupportedCombination,
          "deformations are built on geodesic balls");
  require(space.kind == SpaceKind::Sphere || space.kind == SpaceKind::ProductSphereCylinder,
          Errc::CertifiedPositiveEigenvalue,
          "the background curvature term is nonpositive, so the first eigenvalue is positive "
          "and rigidity applies");
  const double r = region.radius;
  require(r > 0.0 && std::isfinite(r) && r < space.maxRadius(), Errc::InvalidRadius,
          "ball radius out of range");
  require(budgets.h > 0.0 && budgets.gridPoints >= 16 && budgets.tMax > 0.0 &&
              budgets.deltaBudgetFraction > 0.0 && budgets.epsilonMaxExponent >= 1 &&
              budgets.solverTol > 0.0,
          Errc::ConfigError, "invalid deformation budgets");

  auto ctx = std::make_shared<DeformationContext>();
  ctx->space = space;
  ctx->radius = r;
  ctx->budgets = budgets;

  // region boundary embedded into the ambient mesh
  const CutResult cut1 = runStage("region cut", [&] {
    const DiscreteDomain ambient0 = buildAmbient(space, r, budgets);
    const Eigen::VectorXd dist = regionDistanceField(ambient0);
    VertexProjector projector;
    if (ambient0.dimension == 2)
      projector = sphereCircleProjector(Eigen::Vector3d(0.0, 0.0, 1.0), r);
    return cutAlongLevel(ambient0, dist, r, kSnapTol, nullptr, projector);
  });

  // Laplacian ground state of the region
  SubmeshResult omega1 = extractSide(cut1, -1);
  require(!omega1.mesh.cells.empty(), Errc::InvalidRadius,
          "region unresolvable at this mesh size");
  finalizeDomain(omega1.mesh);
  const SpectralResult phiPair = runStage("region eigenpair", [&] {
    return firstEigenpair(laplacianOperator(omega1.mesh), budgets.solverTol);
  });
  ctx->lambda1Omega = phiPair.eigenvalue;
  const double potential = space.scalarCurvature() / (space.dim - 1);
  ctx->bigLambda1Omega = phiPair.eigenvalue - potential;
  require(ctx->bigLambda1Omega < 0.0, Errc::CertifiedPositiveEigenvalue,
          "the region's eigenvalue " + std::to_string(ctx->bigLambda1Omega) +
              " is nonnegative; rigidity applies and no deformation exists");

  Eigen::VectorXd phi1 = Eigen::VectorXd::Zero(cut1.mesh.vertexCount());
  for (int i = 0; i < omega1.mesh.vertexCount(); ++i)
    phi1(omega1.toParentVertex[i]) = phiPair.eigenfunction.values(i);

  // core threshold: collar margin first (cheap), then one eigensolve per
  // surviving candidate; the successful candidate's cut, core and eigenpair
  // are retained
  std::vector<char> coreCellMask;
  runStage("core selection", [&] {
    std::vector<char> protect(cut1.mesh.vertexCount(), 0);
    for (int v = 0; v < cut1.mesh.vertexCount(); ++v) protect[v] = cut1.onLevel[v];
    auto coreEigenvalue = [&](double eps) {
      CutResult cut2 = cutAlongLevel(cut1.mesh, phi1, eps, kSnapTol, &protect);
      SubmeshResult coreSub = extractSide(cut2, 1);
      if (coreSub.mesh.cells.empty() || !cellsConnected(coreSub.mesh)) return kInf;
      finalizeDomain(coreSub.mesh);
      require(!coreSub.mesh.boundary.empty(), Errc::InvariantViolation, "core has no seam");
      SpectralResult cand = firstEigenpair(schrodingerOperator(coreSub.mesh), budgets.solverTol);
      const double ev = cand.eigenvalue;
      if (ev < 0.0) {
        coreCellMask.assign(cut2.mesh.cellCount(), 0);
        std::vector<char> omegaCell(cut2.mesh.cellCount(), 0);
        for (int c = 0; c < cut2.mesh.cellCount(); ++c) {
          coreCellMask[c] = cut2.cellSide[c] == 1;
          omegaCell[c] = cut1.cellSide[cut2.parentCell[c]] == -1;
        }
        ctx->ambient = std::make_shared<DiscreteDomain>(std::move(cut2.mesh));
        ctx->core = std::make_shared<DiscreteDomain>(std::move(coreSub.mesh));
        ctx->coreToAmbient = std::move(coreSub.toParentVertex);
        ctx->phi = std::move(cut2.cutField);
        ctx->psiPair = std::move(cand);
        ctx->psiPair.eigenfunction.domain = ctx->core.get();

        const int nvc = ctx->ambient->dimension == 1 ? 2 : 3;
        std::vector<char> touchesOmega(ctx->ambient->vertexCount(), 0);
        std::vector<char> touchesCore(ctx->ambient->vertexCount(), 0);
        std::vector<char> touchesNonCore(ctx->ambient->vertexCount(), 0);
        for (int c = 0; c < ctx->ambient->cellCount(); ++c)
          for (int k = 0; k < nvc; ++k) {
            const int v = ctx->ambient->cells[c][k];
            if (omegaCell[c]) touchesOmega[v] = 1;
            if (coreCellMask[c]) touchesCore[v] = 1;
            else touchesNonCore[v] = 1;
          }
        ctx->insideVert.assign(ctx->ambient->vertexCount(), 0);
        ctx->outsideVert.assign(ctx->ambient->vertexCount(), 0);
        for (int v = 0; v < ctx->ambient->vertexCount(); ++v) {
          ctx->insideVert[v] = touchesCore[v] && !touchesNonCore[v];
          ctx->outsideVert[v] = !touchesOmega[v];
        }

        SubmeshResult omegaSub = extractCells(*ctx->ambient, omegaCell);
        finalizeDomain(omegaSub.mesh);
        ctx->omega = std::make_shared<DiscreteDomain>(std::move(omegaSub.mesh));
        ctx->omegaToAmbient = std::move(omegaSub.toParentVertex);
      }
      return ev;
    };
    const ScalarField phiField{&omega1.mesh, phiPair.eigenfunction.values};
    ctx->epsilon = selectEpsilon(omega1.mesh, phiField, ctx->lambda1Omega,
                                 budgets.epsilonMaxExponent, coreEigenvalue,
                                 &ctx->subharmonicityMargin);
    return 0;
  });

  // psi extended by zero outside the core
  ctx->psi = Eigen::VectorXd::Zero(ctx->ambient->vertexCount());
  for (int i = 0; i < ctx->core->vertexCount(); ++i)
    ctx->psi(ctx->coreToAmbient[i]) = ctx->psiPair.eigenfunction.values(i);

  // collar-side seam slope of phi, read off the complement submesh and
  // aligned with the core boundary: complement-outward is core-inward
  runStage("seam slopes", [&] {
    std::vector<char> complementCell(ctx->ambient->cellCount(), 0);
    for (int c = 0; c < ctx->ambient->cellCount(); ++c) complementCell[c] = !coreCellMask[c];
    SubmeshResult comp = extractCells(*ctx->ambient, complementCell);
    finalizeDomain(comp.mesh);
    Eigen::VectorXd phiComp(comp.mesh.vertexCount());
    for (int i = 0; i < comp.mesh.vertexCount(); ++i)
      phiComp(i) = ctx->phi(comp.toParentVertex[i]);
    const Eigen::VectorXd dnu = boundaryNormalDerivative(comp.mesh, phiComp);
    std::vector<double> bySeamVertex(ctx->ambient->vertexCount(),
                                     std::numeric_limits<double>::quiet_NaN());
    for (std::size_t i = 0; i < comp.mesh.boundary.size(); ++i)
      bySeamVertex[comp.toParentVertex[comp.mesh.boundary[i]]] = dnu(static_cast<Eigen::Index>(i));

    ctx->matching.epsilon = ctx->epsilon;
    ctx->matching.ambientH = ctx->ambient->h;
    ctx->matching.minusDnuPhiOuter.resize(static_cast<Eigen::Index>(ctx->core->boundary.size()));
    for (std::size_t i = 0; i < ctx->core->boundary.size(); ++i) {
      const double slope = bySeamVertex[ctx->coreToAmbient[ctx->core->boundary[i]]];
      require(std::isfinite(slope), Errc::InvariantViolation,
              "core seam vertex missing from the complement boundary");
      ctx->matching.minusDnuPhiOuter(static_cast<Eigen::Index>(i)) = slope;
    }
    return 0;
  });

  const Eigen::VectorXd g2 = vertexGradientNormSq(*ctx->ambient, ctx->phi);
  double seamSlope = kInf;
  for (int v = 0; v < ctx->ambient->vertexCount(); ++v)
    if (ctx->phi(v) == ctx->epsilon) seamSlope = std::min(seamSlope, std::sqrt(g2(v)));
  require(std::isfinite(seamSlope) && seamSlope > 0.0, Errc::InvariantViolation,
          "degenerate seam slope");
  ctx->seamSlopeMin = seamSlope;

  return ctx;
}

DeformationReport completeDeformation(const DeformationContext& ctx, Sign sign,
                                      const DeformationBudgets& budgets) {
  const DiscreteDomain& m = *ctx.ambient;
  const int n = ctx.space.dim;
  const double rbar = ctx.space.scalarCurvature();
  const double orient = orientation(sign);
  const double scale = curvatureScale(ctx.space);
  const double idv = identityValue(n);

  const PerturbationSpec pert = runStage("perturbation", [&] {
    return buildPerturbation(*ctx.core, ctx.psiPair, sign, budgets.tMax, ctx.matching);
  });
  runStage("matching", [&] { return applyMatching(pert, *ctx.core, ctx.matching); });
  const double c = matchingConstant(sign, ctx.epsilon);
  const MarginProbe probe =
      perturbationMargins(*ctx.core, ctx.psiPair.eigenfunction, sign, pert.t, c);
  require(probe.minMargin > 0.0, Errc::InvariantViolation, "selected amplitude lost its margin");

  // inner and outer factors over the whole ambient mesh; the inner repeats
  // the matched core arithmetic so the seam values agree bitwise
  const double dir = signedDirection(sign);
  Eigen::VectorXd innerFactor(m.vertexCount()), outerFactor(m.vertexCount());
  for (int v = 0; v < m.vertexCount(); ++v) {
    innerFactor(v) = c * (1.0 + (pert.t * dir) * ctx.psi(v));
    const double b = collarBump(ctx.phi(v));
    outerFactor(v) = sign == Sign::Plus ? 1.0 - b : 1.0 + b;
  }
  const ConformalFactor inner = makeFactor(m, conventionField(n, innerFactor));
  const ConformalFactor outer = makeFactor(m, conventionField(n, outerFactor));
  const ScalarField phiField{&m, ctx.phi};

  // the collar metric never undercuts its conformal floor
  runStage("collar verification", [&] {
    const ScalarField rOut = scalarCurvature(outer, m);
    const double powExp = n == 2 ? -2.0 : -4.0 / (n - 2);
    for (int v = 0; v < m.vertexCount(); ++v) {
      if (m.isBoundary[v] || !(ctx.phi(v) > 0.0 && ctx.phi(v) <= 2.0 * ctx.epsilon)) continue;
      const double floor = std::pow(outerFactor(v), powExp) * rbar;
      require(orient * (rOut.values(v) - floor) >= -kRoundoffScale * scale,
              Errc::InvariantViolation,
              "collar metric undercuts its conformal floor at vertex " + std::to_string(v));
    }
    return 0;
  });

  const double deltaBudget = budgets.deltaBudgetFraction * probe.minMargin;
  // the bump's convexity across a wide band defeats the seam cancellation:
  // the blend has to live below the bump's own variation scale, a band of
  // phi-halfwidth near eps/10, and the width halvings then reach the
  // sub-grid limit where the blend degenerates to the matched corner
  double width = budgets.collarWidth > 0.0
                     ? budgets.collarWidth
                     : std::min(16.0 * m.h, 0.2 * ctx.epsilon / ctx.seamSlopeMin);

  GlueResult glued;
  bool ok = false;
  std::string failure;
  for (int attempt = 0; attempt <= kGlueHalvings && !ok; ++attempt, width *= 0.5) {
    GlueSpec gspec;
    gspec.collarWidth = width;
    gspec.deltaBudget = deltaBudget;
    glued =
        runStage("glue", [&] { return glue(inner, outer, sign, gspec, phiField, ctx.epsilon); });
    // the blend must not eat the strict core margin
    const ScalarField rg = scalarCurvature(glued.factor, m);
    ok = true;
    for (int v = 0; v < m.vertexCount() && ok; ++v)
      if (ctx.insideVert[v] && !m.isBoundary[v] && !(orient * (rg.values(v) - rbar) > 0.0)) {
        ok = false;
        failure = "blending destroyed the core margin at vertex " + std::to_string(v);
      }
  }
  require(ok, Errc::DeltaBudgetExceeded, failure + " after band halvings");

  DeformationReport rep;
  rep.sign = sign;
  rep.mesh = ctx.ambient;
  rep.factor = glued.factor;
  rep.achievedDelta = glued.achievedDelta;
  rep.collarWidth = glued.collarWidth;

  double cert = 0.0;
  for (int v = 0; v < m.vertexCount(); ++v)
    if (ctx.outsideVert[v]) cert = std::max(cert, std::abs(rep.factor.u.values(v) - idv));
  rep.supportCertificate = cert;
  require(cert == 0.0, Errc::InvariantViolation,
          "the factor moved outside the region: support certificate " + std::to_string(cert));

  runStage("margin report", [&] {
    const ScalarField rg = scalarCurvature(rep.factor, m);
    auto& mg = rep.margins;
    mg = CurvatureMargins{kInf, -kInf, kInf, -kInf, kInf, -kInf};
    for (int v = 0; v < m.vertexCount(); ++v) {
      if (m.isBoundary[v]) continue;
      const double diff = rg.values(v) - rbar;
      if (ctx.insideVert[v]) {
        mg.insideMin = std::min(mg.insideMin, diff);
        mg.insideMax = std::max(mg.insideMax, diff);
      } else if (ctx.outsideVert[v]) {
        mg.outsideMin = std::min(mg.outsideMin, diff);
        mg.outsideMax = std::max(mg.outsideMax, diff);
      } else {
        mg.collarMin = std::min(mg.collarMin, diff);
        mg.collarMax = std::max(mg.collarMax, diff);
      }
    }
    const double worstInside = sign == Sign::Plus ? mg.insideMin : -mg.insideMax;
    require(worstInside > 0.0, Errc::InvariantViolation, "core margin lost after gluing");
    require(std::min(orient * mg.collarMin, orient * mg.collarMax) >=
                -rep.achievedDelta - kRoundoffScale * scale,
            Errc::InvariantViolation, "collar margin dips below the achieved delta");
    require(mg.outsideMin == 0.0 && mg.outsideMax == 0.0, Errc::InvariantViolation,
            "curvature moved outside the region");
    return 0;
  });

  runStage("boundary mass", [&] {
    Eigen::VectorXd uo(ctx.omega->vertexCount());
    for (int i = 0; i < ctx.omega->vertexCount(); ++i)
      uo(i) = rep.factor.u.values(ctx.omegaToAmbient[i]);
    rep.omegaFactor = makeFactor(*ctx.omega, std::move(uo));
    rep.omegaMesh = ctx.omega;
    rep.omegaToMesh = ctx.omegaToAmbient;
    const BoundaryData bd = makeBoundaryData(rep.omegaFactor, *ctx.omega,
                                             ctx.space.ballBoundaryMeanCurvature(ctx.radius));
    rep.brownYorkMass = brownYorkMass(rep.omegaFactor, *ctx.omega, bd).value;
    return 0;
  });

  double sup = 0.0;
  for (int v = 0; v < m.vertexCount(); ++v) {
    const double f = n == 2 ? std::exp(rep.factor.u.values(v)) : rep.factor.u.values(v);
    sup = std::max(sup, std::abs(f - 1.0));
  }
  rep.supDeformation = sup;
  require(sup > 0.0, Errc::InvariantViolation, "deformation is trivial");

  rep.epsilon = ctx.epsilon;
  rep.t = pert.t;
  rep.lambda1Omega = ctx.lambda1Omega;
  rep.bigLambda1Omega = ctx.bigLambda1Omega;
  rep.bigLambda1Core = ctx.psiPair.eigenvalue;
  rep.subharmonicityMargin = ctx.subharmonicityMargin;
  rep.strictFloor = strictMarginFloor(m.h, scale);
  rep.h = m.h;
  rep.meshHash = m.hash;
  return rep;
}

DeformationReport buildDeformation(const BackgroundSpace& space, const RegionSpec& region,
                                   Sign sign, const DeformationBudgets& budgets) {
  const auto ctx = prepareDeformation(space, region, budgets);
  return completeDeformation(*ctx, sign, budgets);
}

nlohmann::ordered_json deformationReportToJson(const DeformationReport& r) {
  nlohmann::ordered_json j;
  j["sign"] = signName(r.sign);
  j["epsilon"] = r.epsilon;
  j["t"] = r.t;
  j["collarWidth"] = r.collarWidth;
  j["achievedDelta"] = r.achievedDelta;
  j["supportCertificate"] = r.supportCertificate;
  j["brownYorkMass"] = r.brownYorkMass;
  j["margins"] = {{"insideMin", r.margins.insideMin},   {"insideMax", r.margins.insideMax},
                  {"collarMin", r.margins.collarMin},   {"collarMax", r.margins.collarMax},
                  {"outsideMin", r.margins.outsideMin}, {"outsideMax", r.margins.outsideMax}};
  j["lambda1Omega"] = r.lambda1Omega;
  j["bigLambda1Omega"] = r.bigLambda1Omega;
  j["bigLambda1Core"] = r.bigLambda1Core;
  j["subharmonicityMargin"] = r.subharmonicityMargin;
  j["strictFloor"] = r.strictFloor;
  j["supDeformation"] = r.supDeformation;
  j["h"] = r.h;
  j["meshHash"] = r.meshHash;
  return j;
}

}  // namespace crl
