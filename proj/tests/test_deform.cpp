#include <doctest.h>

#include <cmath>
#include <deque>
#include <limits>
#include <string>

#include "crl/background.hpp"
#include "crl/conformal.hpp"
#include "crl/deform.hpp"
#include "crl/domain.hpp"
#include "crl/errors.hpp"
#include "crl/mesh_build.hpp"
#include "crl/spectral.hpp"
#include "oracles.hpp"

using namespace crl;

namespace {

// hop count to the nearest boundary vertex
std::vector<int> boundaryDistance(const DiscreteDomain& d) {
  std::vector<int> dist(static_cast<std::size_t>(d.vertexCount()), -1);
  std::deque<int> queue;
  for (int v : d.boundary) {
    dist[static_cast<std::size_t>(v)] = 0;
    queue.push_back(v);
  }
  while (!queue.empty()) {
    const int v = queue.front();
    queue.pop_front();
    for (const auto& e : d.edges) {
      const int other = e.a == v ? e.b : (e.b == v ? e.a : -1);
      if (other >= 0 && dist[static_cast<std::size_t>(other)] < 0) {
        dist[static_cast<std::size_t>(other)] = dist[static_cast<std::size_t>(v)] + 1;
        queue.push_back(other);
      }
    }
  }
  return dist;
}

}  // namespace

TEST_CASE("cutoff profile is a monotone C2 step") {
  CHECK(cutoffProfile(0.0) == 0.0);
  CHECK(cutoffProfile(1.0) == 1.0);
  CHECK(cutoffProfile(-3.5) == 0.0);
  CHECK(cutoffProfile(2.0) == 1.0);
  CHECK(cutoffProfile(0.5) == 0.5);  // all dyadic, exact in doubles

  double prev = 0.0;
  for (int i = 0; i <= 100; ++i) {
    const double s = i / 100.0;
    const double c = cutoffProfile(s);
    CHECK(c >= prev);
    CHECK(std::abs(c + cutoffProfile(1.0 - s) - 1.0) <= 4e-15);
    prev = c;
  }
  // end derivatives vanish: one step inside moves the value by O(step^3)
  CHECK(cutoffProfile(1e-4) <= 1.1e-11);
  CHECK(1.0 - cutoffProfile(1.0 - 1e-4) <= 1.1e-11);
}

TEST_CASE("matching constants and the strict floor match closed forms") {
  CHECK(matchingConstant(Sign::Plus, 0.25) == doctest::Approx(0.9816843611112658).epsilon(1e-15));
  CHECK(matchingConstant(Sign::Minus, 0.25) == doctest::Approx(1.0183156388887342).epsilon(1e-15));
  CHECK(matchingConstant(Sign::Plus, 0.25) == 1.0 - std::exp(-4.0));
  CHECK(matchingConstant(Sign::Plus, 0.125) + matchingConstant(Sign::Minus, 0.125) == 2.0);
  CHECK(signName(Sign::Plus) == std::string("plus"));
  CHECK(signName(Sign::Minus) == std::string("minus"));

  CHECK(strictMarginFloor(0.5, 2.0) == 5.0);
  CHECK(strictMarginFloor(0.1, 2.0) == doctest::Approx(0.2).epsilon(1e-15));

  CHECK_THROWS_WITH_AS(matchingConstant(Sign::Plus, 0.0), doctest::Contains("ConfigError"),
                       Error);
  CHECK_THROWS_WITH_AS(matchingConstant(Sign::Plus, 1.0), doctest::Contains("ConfigError"),
                       Error);
  CHECK_THROWS_WITH_AS(strictMarginFloor(0.0, 1.0), doctest::Contains("ConfigError"), Error);
}

TEST_CASE("collar margin field evaluates its formula on exact inputs") {
  const auto cap =
      buildDomain(BackgroundSpace::sphere(2), {RegionShape::GeodesicBall, 2.0}, 0.3);

  // constant field: the gradient term vanishes bitwise, margin = -lambda c^3
  ScalarField flat{&cap, Eigen::VectorXd::Constant(cap.vertexCount(), 0.25)};
  const Eigen::VectorXd margin = collarMarginField(cap, flat, 3.0);
  for (int v = 0; v < cap.vertexCount(); ++v) CHECK(margin(v) == -0.046875);

  // linear radial profile: |grad|^2 = 1 exactly on interior vertices
  const auto ball = buildRadialDomain(BackgroundSpace::euclidean(3), 1.0, 101);
  Eigen::VectorXd lin(ball.vertexCount());
  for (int v = 0; v < ball.vertexCount(); ++v) lin(v) = 1.0 - ball.vertices[v](0);
  ScalarField linf{&ball, lin};
  const Eigen::VectorXd rm = collarMarginField(ball, linf, 2.0);
  for (int v : ball.interior) {
    const double phi = lin(v);
    CHECK(rm(v) ==
          doctest::Approx((1.0 - 2.0 * phi) - 2.0 * phi * phi * phi).epsilon(1e-12));
  }
}

TEST_CASE("epsilon search rejects a flat interior plateau at every level") {
  const auto cap =
      buildDomain(BackgroundSpace::sphere(2), {RegionShape::GeodesicBall, 2.0}, 0.3);
  const auto dist = boundaryDistance(cap);

  // zero slope three rings in: the margin's gradient term dies there while
  // phi is still below every candidate threshold
  Eigen::VectorXd plateau(cap.vertexCount());
  bool hasDeep = false;
  for (int v = 0; v < cap.vertexCount(); ++v) {
    if (cap.isBoundary[v])
      plateau(v) = 0.0;
    else if (dist[static_cast<std::size_t>(v)] <= 3)
      plateau(v) = std::ldexp(1.0, -13);
    else {
      plateau(v) = 1.0;
      hasDeep = true;
    }
  }
  REQUIRE(hasDeep);
  ScalarField phi{&cap, plateau};
  CHECK_THROWS_WITH_AS(buildCollarMetrics(cap, phi, 1.0), doctest::Contains("NoValidEpsilon"),
                       Error);
}

TEST_CASE("collar metric builder validates its inputs") {
  const auto cap =
      buildDomain(BackgroundSpace::sphere(2), {RegionShape::GeodesicBall, 2.0}, 0.3);
  const SpectralResult eig = firstEigenpair(laplacianOperator(cap), 1e-8);

  CHECK_THROWS_WITH_AS(buildCollarMetrics(cap, eig.eigenfunction, 0.0),
                       doctest::Contains("NonPositiveEigenvalue"), Error);

  ScalarField bad = eig.eigenfunction;
  bad.values(cap.boundary.front()) = 0.5;
  CHECK_THROWS_WITH_AS(buildCollarMetrics(cap, bad, eig.eigenvalue),
                       doctest::Contains("InvariantViolation"), Error);

  ScalarField scaled = eig.eigenfunction;
  scaled.values *= 0.7;
  CHECK_THROWS_WITH_AS(buildCollarMetrics(cap, scaled, eig.eigenvalue),
                       doctest::Contains("InvariantViolation"), Error);
}

TEST_CASE("collar pair on the wide cap certifies its inequalities") {
  const auto cap =
      buildDomain(BackgroundSpace::sphere(2), {RegionShape::GeodesicBall, 2.0}, 0.12);
  const SpectralResult eig = firstEigenpair(laplacianOperator(cap), 1e-8);
  REQUIRE(eig.eigenvalue < 2.0);  // the deformation window is open

  const CollarMetricPair pair = buildCollarMetrics(cap, eig.eigenfunction, eig.eigenvalue);
  CHECK(pair.epsilon == 0.125);
  CHECK(pair.subharmonicityMargin >= 0.0);

  for (int v = 0; v < cap.vertexCount(); ++v) {
    const double wp = pair.wPlus.values(v), wm = pair.wMinus.values(v);
    if (cap.isBoundary[v]) {
      CHECK(wp == 1.0);
      CHECK(wm == 1.0);
      continue;
    }
    const double phi = eig.eigenfunction.values(v);
    const double bump = std::exp(-1.0 / phi);
    CHECK(wp > 0.0);
    CHECK(wp <= 1.0);
    CHECK(wm >= 1.0);
    if (bump > 1e-15) {
      CHECK(wp < 1.0);
      CHECK(wm > 1.0);
    }
    // (1 - b)(1 + b) = 1 - b^2
    CHECK(std::abs(wp * wm - (1.0 - std::exp(-2.0 / phi))) <= 1e-14);
  }
}

TEST_CASE("perturbation margins mirror at small amplitude") {
  const auto cap =
      buildDomain(BackgroundSpace::sphere(2), {RegionShape::GeodesicBall, 2.0}, 0.3);
  const SpectralResult eig = firstEigenpair(schrodingerOperator(cap), 1e-10);
  REQUIRE(eig.eigenvalue < 0.0);
  const ScalarField& psi = eig.eigenfunction;

  const MarginProbe zero = perturbationMargins(cap, psi, Sign::Plus, 0.0, 1.0);
  CHECK(zero.minMargin == 0.0);
  CHECK(zero.maxMargin == 0.0);

  const double t = 0.05;
  const MarginProbe plus = perturbationMargins(cap, psi, Sign::Plus, t, 1.0);
  const MarginProbe minus = perturbationMargins(cap, psi, Sign::Minus, t, 1.0);
  CHECK(plus.minMargin > 0.0);
  // oriented probes agree to first order in t where the eigenfunction peaks
  CHECK(std::abs(plus.maxMargin - minus.maxMargin) <= 0.1 * plus.maxMargin + 1e-12);
  // near the seam the quadratic gradient term works against the Minus sign
  // and for the Plus sign, so the unmatched Minus floor sits lower
  CHECK(minus.minMargin < plus.minMargin);

  // the matching constant restores a uniform floor for both signs at
  // threshold-scale amplitudes
  const double ts = 0.01;
  const MarginProbe mp =
      perturbationMargins(cap, psi, Sign::Plus, ts, matchingConstant(Sign::Plus, 0.125));
  const MarginProbe mm =
      perturbationMargins(cap, psi, Sign::Minus, ts, matchingConstant(Sign::Minus, 0.125));
  CHECK(mp.minMargin > 0.0);
  CHECK(mm.minMargin > 0.0);
  CHECK(std::abs(mp.minMargin - mm.minMargin) <= 0.25 * mp.minMargin + 1e-12);

  CHECK_THROWS_WITH_AS(perturbationMargins(cap, psi, Sign::Plus, 2.0, 1.0),
                       doctest::Contains("NonPositiveFactor"), Error);
  CHECK_THROWS_WITH_AS(perturbationMargins(cap, psi, Sign::Plus, -0.1, 1.0),
                       doctest::Contains("ConfigError"), Error);
}

TEST_CASE("amplitude search hugs the seam threshold") {
  const auto core =
      buildDomain(BackgroundSpace::sphere(2), {RegionShape::GeodesicBall, 1.9}, 0.3);
  const SpectralResult psi = firstEigenpair(schrodingerOperator(core), 1e-8);
  REQUIRE(psi.eigenvalue < 0.0);

  MatchingContext mctx;
  mctx.epsilon = 0.125;
  mctx.ambientH = core.h;
  mctx.minusDnuPhiOuter =
      Eigen::VectorXd::Constant(static_cast<Eigen::Index>(core.boundary.size()), 0.45);

  const PerturbationSpec pert = buildPerturbation(core, psi, Sign::Plus, 0.45, mctx);
  CHECK(pert.tLow > 0.0);
  CHECK(pert.t >= pert.tLow);
  CHECK(pert.t <= pert.tHigh);
  CHECK(pert.t <= 1.25 * pert.tLow * (1.0 + 1e-9));
  CHECK(pert.sign == Sign::Plus);
  CHECK(pert.eigenvalue == psi.eigenvalue);

  // the matched factor takes the constant value exactly on the seam
  const ConformalFactor matched = applyMatching(pert, core, mctx);
  const double logc = std::log(matchingConstant(Sign::Plus, mctx.epsilon));
  for (int b : core.boundary) CHECK(matched.u.values(b) == logc);

  PerturbationSpec below = pert;
  below.t = 0.5 * pert.tLow;
  CHECK_THROWS_WITH_AS(applyMatching(below, core, mctx),
                       doctest::Contains("MeanCurvatureOrderingFailed"), Error);

  MatchingContext steep = mctx;
  steep.minusDnuPhiOuter =
      Eigen::VectorXd::Constant(static_cast<Eigen::Index>(core.boundary.size()), 1e12);
  CHECK_THROWS_WITH_AS(buildPerturbation(core, psi, Sign::Plus, 0.45, steep),
                       doctest::Contains("EmptyTWindow"), Error);

  SpectralResult fake = psi;
  fake.eigenvalue = 0.5;
  CHECK_THROWS_WITH_AS(buildPerturbation(core, fake, Sign::Plus, 0.45, mctx),
                       doctest::Contains("CertifiedPositiveEigenvalue"), Error);

  SpectralResult sloppy = psi;
  sloppy.residualNorm = 1.0;
  CHECK_THROWS_WITH_AS(buildPerturbation(core, sloppy, Sign::Plus, 0.45, mctx),
                       doctest::Contains("InvariantViolation"), Error);
}

TEST_CASE("glue copies agreeing fields bitwise and validates its spec") {
  const auto cap =
      buildDomain(BackgroundSpace::sphere(2), {RegionShape::GeodesicBall, 2.0}, 0.3);
  const SpectralResult eig = firstEigenpair(laplacianOperator(cap), 1e-8);

  // a seam the band can anchor on: any interior level value hit exactly
  int mid = cap.interior.front();
  for (int v : cap.interior)
    if (std::abs(eig.eigenfunction.values(v) - 0.3) <
        std::abs(eig.eigenfunction.values(mid) - 0.3))
      mid = v;
  const double eps = eig.eigenfunction.values(mid);

  const ConformalFactor id1 = identityFactor(cap);
  const ConformalFactor id2 = identityFactor(cap);
  GlueSpec spec;
  spec.collarWidth = 0.5;
  spec.deltaBudget = 1e-6;

  const GlueResult res = glue(id1, id2, Sign::Plus, spec, eig.eigenfunction, eps);
  CHECK(res.achievedDelta == 0.0);
  for (int v = 0; v < cap.vertexCount(); ++v) {
    CHECK(res.factor.u.values(v) == id1.u.values(v));
    CHECK(res.band[v] == 0);
  }

  GlueSpec cubic = spec;
  cubic.cutoffOrder = 3;
  CHECK_THROWS_WITH_AS(glue(id1, id2, Sign::Plus, cubic, eig.eigenfunction, eps),
                       doctest::Contains("ConfigError"), Error);

  GlueSpec broke = spec;
  broke.deltaBudget = 0.0;
  CHECK_THROWS_WITH_AS(glue(id1, id2, Sign::Plus, broke, eig.eigenfunction, eps),
                       doctest::Contains("InvalidDelta"), Error);

  GlueSpec thin = spec;
  thin.collarWidth = 0.0;
  CHECK_THROWS_WITH_AS(glue(id1, id2, Sign::Plus, thin, eig.eigenfunction, eps),
                       doctest::Contains("ConfigError"), Error);

  CHECK_THROWS_WITH_AS(glue(id1, id2, Sign::Plus, spec, eig.eigenfunction, 0.77777),
                       doctest::Contains("no seam vertices"), Error);

  const auto other =
      buildDomain(BackgroundSpace::sphere(2), {RegionShape::GeodesicBall, 2.0}, 0.5);
  CHECK_THROWS_WITH_AS(glue(id1, identityFactor(other), Sign::Plus, spec, eig.eigenfunction, eps),
                       doctest::Contains("ConfigError"), Error);
}

TEST_CASE("full pipeline pushes curvature both ways on the wide cap") {
  const BackgroundSpace sp = BackgroundSpace::sphere(2);
  DeformationBudgets bud;
  bud.h = 0.04;
  const auto ctx = prepareDeformation(sp, {RegionShape::GeodesicBall, 2.0}, bud);

  const DeformationReport rp = completeDeformation(*ctx, Sign::Plus, bud);
  const DeformationReport rm = completeDeformation(*ctx, Sign::Minus, bud);

  for (const DeformationReport* r : {&rp, &rm}) {
    CHECK(r->epsilon == 0.125);
    CHECK(r->supportCertificate == 0.0);
    // the collar bump tail at the first interior ring keeps the mass a few
    // ulps from zero at this resolution; it vanishes identically once the
    // ring is close enough to the boundary for the bump to underflow
    CHECK(std::abs(r->brownYorkMass) <= 1e-12);
    CHECK(r->margins.outsideMin == 0.0);
    CHECK(r->margins.outsideMax == 0.0);
    CHECK(r->supDeformation > 0.0);
    // threshold scale: the seam ordering puts t near b(eps)/eps^2, far above
    // any degenerate floor
    CHECK(r->t > 1e-3);
    CHECK(r->collarWidth > 0.0);
    CHECK(r->achievedDelta >= 0.0);
    CHECK(r->bigLambda1Omega < 0.0);
    CHECK(r->bigLambda1Core < 0.0);
    CHECK(r->subharmonicityMargin >= 0.0);
  }

  CHECK(rp.margins.insideMin > 0.0);
  CHECK(rm.margins.insideMax < 0.0);
  CHECK(rp.margins.collarMin >= -rp.achievedDelta - 1e-8);
  CHECK(rm.margins.collarMax <= rm.achievedDelta + 1e-8);
  CHECK(rp.meshHash == rm.meshHash);

  // mesh eigenvalue against the independent radial solver
  const SpectralResult rad = radialFirstEigenpair(sp, 2.0, OperatorKind::Laplacian, 4096);
  CHECK(rp.lambda1Omega == doctest::Approx(rad.eigenvalue).epsilon(1e-2));

  const auto j1 = deformationReportToJson(rp);
  const auto j2 = deformationReportToJson(rp);
  CHECK(j1.dump() == j2.dump());
  CHECK(j1.contains("brownYorkMass"));
  CHECK(j1.contains("margins"));
  CHECK(j1["sign"] == "plus");
}

TEST_CASE("pipeline refuses rigid and malformed configurations") {
  DeformationBudgets bud;
  bud.h = 0.25;

  CHECK_THROWS_WITH_AS(
      prepareDeformation(BackgroundSpace::euclidean(3), {RegionShape::GeodesicBall, 1.0}, bud),
      doctest::Contains("CertifiedPositiveEigenvalue"), Error);
  CHECK_THROWS_WITH_AS(
      prepareDeformation(BackgroundSpace::hyperbolic(3), {RegionShape::GeodesicBall, 1.0}, bud),
      doctest::Contains("CertifiedPositiveEigenvalue"), Error);
  CHECK_THROWS_WITH_AS(
      prepareDeformation(BackgroundSpace::sphere(2), {RegionShape::ComplementOfBall, 2.0}, bud),
      doctest::Contains("UnsupportedCombination"), Error);
  CHECK_THROWS_WITH_AS(
      prepareDeformation(BackgroundSpace::sphere(2), {RegionShape::GeodesicBall, 3.2}, bud),
      doctest::Contains("InvalidRadius"), Error);
  CHECK_THROWS_WITH_AS(
      prepareDeformation(BackgroundSpace::sphere(2), {RegionShape::GeodesicBall, 0.0}, bud),
      doctest::Contains("InvalidRadius"), Error);

  DeformationBudgets broken = bud;
  broken.h = 0.0;
  CHECK_THROWS_WITH_AS(
      prepareDeformation(BackgroundSpace::sphere(2), {RegionShape::GeodesicBall, 2.0}, broken),
      doctest::Contains("ConfigError"), Error);

  // sub-hemisphere cap: Laplacian eigenvalue above the curvature potential
  CHECK_THROWS_WITH_AS(
      prepareDeformation(BackgroundSpace::sphere(2), {RegionShape::GeodesicBall, 1.0}, bud),
      doctest::Contains("CertifiedPositiveEigenvalue"), Error);
}

TEST_CASE("product cylinder pipeline runs the power convention") {
  const BackgroundSpace sp = BackgroundSpace::productSphereCylinder(2);
  DeformationBudgets bud;
  bud.gridPoints = 2048;
  const auto ctx = prepareDeformation(sp, {RegionShape::GeodesicBall, 6.0}, bud);

  const DeformationReport rp = completeDeformation(*ctx, Sign::Plus, bud);
  const DeformationReport rm = completeDeformation(*ctx, Sign::Minus, bud);

  const double lamExpect = oracle::j01Squared / 36.0;
  CHECK(rp.lambda1Omega == doctest::Approx(lamExpect).epsilon(1e-3));
  CHECK(rp.bigLambda1Omega == doctest::Approx(lamExpect - 2.0 / 3.0).epsilon(1e-2));

  for (const DeformationReport* r : {&rp, &rm}) {
    CHECK(r->supportCertificate == 0.0);
    CHECK(r->brownYorkMass == 0.0);
    CHECK(r->margins.outsideMin == 0.0);
    CHECK(r->margins.outsideMax == 0.0);
    CHECK(r->epsilon > 0.0);
    CHECK(r->epsilon <= 0.25);
    CHECK(r->t > 1e-3);
    // the power convention keeps the factor near one
    CHECK(r->factor.u.values.minCoeff() > 0.5);
    CHECK(r->factor.u.values.maxCoeff() < 1.5);
  }
  CHECK(rp.margins.insideMin > 0.0);
  CHECK(rm.margins.insideMax < 0.0);
}

TEST_CASE("three sphere radial pipeline deforms both ways") {
  const BackgroundSpace sp = BackgroundSpace::sphere(3);
  DeformationBudgets bud;
  bud.gridPoints = 2048;
  const auto ctx = prepareDeformation(sp, {RegionShape::GeodesicBall, 2.0}, bud);

  const DeformationReport rp = completeDeformation(*ctx, Sign::Plus, bud);
  const DeformationReport rm = completeDeformation(*ctx, Sign::Minus, bud);

  // cap eigenvalue of the screened radial operator
  CHECK(rm.lambda1Omega == doctest::Approx(oracle::piSquared / 4.0 - 1.0).epsilon(1e-3));
  CHECK(rm.bigLambda1Omega < 0.0);

  CHECK(rp.margins.insideMin > 0.0);
  CHECK(rm.margins.insideMax < 0.0);
  CHECK(rp.t > 1e-3);
  CHECK(rm.t > 1e-3);
  CHECK(rp.supportCertificate == 0.0);
  CHECK(rm.supportCertificate == 0.0);
  CHECK(rp.brownYorkMass == 0.0);
  CHECK(rm.brownYorkMass == 0.0);
}
