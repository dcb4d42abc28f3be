#include <doctest.h>

#include <cmath>
#include <limits>

#include "crl/background.hpp"
#include "crl/conformal.hpp"
#include "crl/domain.hpp"
#include "crl/errors.hpp"
#include "crl/mesh_build.hpp"
#include "crl/spectral.hpp"
#include "oracles.hpp"

using namespace crl;

namespace {

Eigen::VectorXd chartRadiusSq(const DiscreteDomain& d) {
  Eigen::VectorXd r2(d.vertexCount());
  for (int v = 0; v < d.vertexCount(); ++v) r2(v) = d.vertices[v].squaredNorm();
  return r2;
}

}  // namespace

TEST_CASE("identity factors reproduce the background curvature bitwise") {
  const auto flat = buildPolarDiskDomain(BackgroundSpace::euclidean(2), 1.0, 24);
  const auto cap = buildDomain(BackgroundSpace::sphere(2), {RegionShape::GeodesicBall, 2.0}, 0.1);
  const auto hyp3 = buildRadialDomain(BackgroundSpace::hyperbolic(3), 1.0, 64);
  const auto prod = buildProductFlatRadialDomain(2, 3.0, 64);

  for (const DiscreteDomain* d : {&flat, &cap, &hyp3, &prod}) {
    const auto rg = scalarCurvature(identityFactor(*d), *d);
    const double want = d->space.scalarCurvature();
    for (int v : d->interior) CHECK(rg.values(v) == want);
    for (int b : d->boundary) CHECK(std::isnan(rg.values(b)));
  }
  CHECK(hyp3.space.scalarCurvature() == -6.0);
  CHECK(prod.space.scalarCurvature() == 2.0);
}

TEST_CASE("constant factor rescales the closed sphere curvature") {
  const auto s2 = buildSphereSurfaceMesh(3);
  const double c = 0.7;
  const auto cf = makeFactor(s2, Eigen::VectorXd::Constant(s2.vertexCount(), c));
  const auto rg = scalarCurvature(cf, s2);
  CHECK(s2.boundary.empty());
  for (int v = 0; v < s2.vertexCount(); ++v)
    CHECK(rg.values(v) == doctest::Approx(0.493193927883213).epsilon(1e-14));
}

TEST_CASE("quadratic factor on the flat disk has closed-form curvature") {
  const double t = 0.3;

  // radial reduction: the lumped operator is exact for quadratics away
  // from the axis vertex, whose row carries the known (n+1)/(2n) bias
  const auto ball = buildRadialDomain(BackgroundSpace::euclidean(2), 1.0, 512);
  {
    Eigen::VectorXd u = (1.0 - chartRadiusSq(ball).array()) * t;
    const auto rg = scalarCurvature(makeFactor(ball, u), ball);
    for (int v : ball.interior) {
      if (ball.vertices[v].norm() == 0.0) {
        CHECK(rg.values(v) > 0.0);
        continue;
      }
      CHECK(rg.values(v) ==
            doctest::Approx(8.0 * t * std::exp(-2.0 * u(v))).epsilon(1e-10));
    }
  }

  // triangulated disk: positivity everywhere, closed form under refinement
  double errCoarse = 0.0, errFine = 0.0;
  for (int rings : {24, 48}) {
    const auto disk = buildPolarDiskDomain(BackgroundSpace::euclidean(2), 1.0, rings);
    Eigen::VectorXd u = (1.0 - chartRadiusSq(disk).array()) * t;
    const auto rg = scalarCurvature(makeFactor(disk, u), disk);
    double num = 0.0, den = 0.0;
    for (int v : disk.interior) {
      CHECK(rg.values(v) > 0.0);
      const double want = 8.0 * t * std::exp(-2.0 * u(v));
      num += disk.lumpedMass(v) * std::pow(rg.values(v) - want, 2);
      den += disk.lumpedMass(v) * want * want;
    }
    (rings == 24 ? errCoarse : errFine) = std::sqrt(num / den);
  }
  CHECK(errCoarse < 0.05);
  CHECK(errFine < errCoarse);
}

TEST_CASE("boundary mean curvature follows the normal derivative") {
  const auto disk = buildPolarDiskDomain(BackgroundSpace::euclidean(2), 1.0, 64);

  // Neumann-trivial case: H_g equals the background value exactly
  {
    const auto id = identityFactor(disk);
    const auto bd = makeBoundaryData(id, disk, 1.0);
    const auto hg = meanCurvature(id, bd);
    for (int i = 0; i < hg.size(); ++i) CHECK(hg(i) == 1.0);
  }

  // u = t(1 - rho^2): d_nu u = -2t, so H_g = 1 - 4t on the unit circle
  {
    const double t = 0.2;
    Eigen::VectorXd u = (1.0 - chartRadiusSq(disk).array()) * t;
    const auto cf = makeFactor(disk, u);
    const auto hg = meanCurvature(cf, makeBoundaryData(cf, disk, 1.0));
    for (int i = 0; i < hg.size(); ++i)
      CHECK(hg(i) == doctest::Approx(1.0 - 4.0 * t).epsilon(0.03));
  }

  // n = 3 unit ball, u = 1 + t(1 - rho^2): H_g = 2 - 8t
  {
    const double t = 0.1;
    const auto ball = buildRadialDomain(BackgroundSpace::euclidean(3), 1.0, 2048);
    Eigen::VectorXd u =
        1.0 + ((1.0 - chartRadiusSq(ball).array()) * t).array();
    const auto cf = makeFactor(ball, u);
    const auto hg = meanCurvature(cf, makeBoundaryData(cf, ball, 2.0));
    REQUIRE(hg.size() == 1);
    CHECK(hg(0) == doctest::Approx(2.0 - 8.0 * t).epsilon(1e-3));
  }
}

TEST_CASE("mean curvature refuses non-identity boundary values") {
  const auto disk = buildPolarDiskDomain(BackgroundSpace::euclidean(2), 1.0, 16);
  auto cf = makeFactor(disk, Eigen::VectorXd::Constant(disk.vertexCount(), 0.5));
  const auto bd = makeBoundaryData(cf, disk, 1.0);
  CHECK_THROWS_WITH_AS(meanCurvature(cf, bd), doctest::Contains("NonIdentityBoundary"),
                       Error);

  const auto ball = buildRadialDomain(BackgroundSpace::euclidean(3), 1.0, 32);
  auto big = makeFactor(ball, Eigen::VectorXd::Constant(ball.vertexCount(), 2.0));
  CHECK_THROWS_WITH_AS(meanCurvature(big, makeBoundaryData(big, ball, 2.0)),
                       doctest::Contains("NonIdentityBoundary"), Error);
  CHECK(exitCodeFor(Errc::NonIdentityBoundary) == 3);

  // boundary within the 1e-9 gate passes
  Eigen::VectorXd u = Eigen::VectorXd::Ones(ball.vertexCount());
  u(ball.boundary[0]) += 5e-10;
  const auto near = makeFactor(ball, u);
  CHECK_NOTHROW(meanCurvature(near, makeBoundaryData(near, ball, 2.0)));
}

TEST_CASE("conformal factor invariants are enforced") {
  const auto disk = buildPolarDiskDomain(BackgroundSpace::euclidean(2), 1.0, 8);
  const auto ball = buildRadialDomain(BackgroundSpace::euclidean(3), 1.0, 32);

  // convention must match the dimension
  ConformalFactor wrong{Convention::Power, {&disk, Eigen::VectorXd::Ones(disk.vertexCount())}, 2};
  CHECK_THROWS_WITH_AS(checkFactor(wrong), doctest::Contains("ConfigError"), Error);
  ConformalFactor wrong3{Convention::Exponential,
                         {&ball, Eigen::VectorXd::Zero(ball.vertexCount())}, 3};
  CHECK_THROWS_WITH_AS(checkFactor(wrong3), doctest::Contains("ConfigError"), Error);

  // Power factors need a positive margin
  Eigen::VectorXd tiny = Eigen::VectorXd::Ones(ball.vertexCount());
  tiny(3) = 1e-12;
  CHECK_THROWS_WITH_AS(makeFactor(ball, tiny), doctest::Contains("NonPositiveFactor"), Error);
  tiny(3) = -0.5;
  CHECK_THROWS_WITH_AS(makeFactor(ball, tiny), doctest::Contains("NonPositiveFactor"), Error);
  CHECK(exitCodeFor(Errc::NonPositiveFactor) == 3);

  // length mismatch
  ConformalFactor shortField{Convention::Power, {&ball, Eigen::VectorXd::Ones(3)}, 3};
  CHECK_THROWS_WITH_AS(checkFactor(shortField), doctest::Contains("ConfigError"), Error);
}

TEST_CASE("c0 norm evaluates the operator-norm formulas") {
  const auto ball = buildRadialDomain(BackgroundSpace::euclidean(3), 1.0, 32);
  CHECK(c0Norm(identityFactor(ball)) == doctest::Approx(1.7320508075688772).epsilon(1e-15));

  Eigen::VectorXd u = Eigen::VectorXd::Ones(ball.vertexCount());
  u(0) = 2.0;
  CHECK(c0Norm(makeFactor(ball, u)) == doctest::Approx(27.712812921102035).epsilon(1e-14));

  const auto ball5 = buildRadialDomain(BackgroundSpace::euclidean(5), 1.0, 32);
  CHECK(c0Norm(identityFactor(ball5)) == doctest::Approx(2.23606797749979).epsilon(1e-15));

  const auto disk = buildPolarDiskDomain(BackgroundSpace::euclidean(2), 1.0, 8);
  Eigen::VectorXd w = Eigen::VectorXd::Zero(disk.vertexCount());
  w(5) = 0.5;
  CHECK(c0Norm(makeFactor(disk, w)) == doctest::Approx(3.844231028159117).epsilon(1e-14));
  CHECK(c0Norm(identityFactor(disk)) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-15));
}

TEST_CASE("alpha threshold matches the closed form and guards its inputs") {
  CHECK(alphaThreshold(3, 0.5, 2.0, 6.0) == doctest::Approx(2.1802767151387017).epsilon(1e-14));
  CHECK(alphaThreshold(3, 0.5, 2.0, 6.0) == doctest::Approx(2.1803).epsilon(1e-4));

  CHECK(std::isinf(alphaThreshold(3, 0.5, 2.0, -1.0)));
  CHECK(std::isinf(alphaThreshold(4, 0.1, 5.0, 0.0)));
  CHECK(alphaThreshold(3, 1e-14, 2.0, 6.0) == doctest::Approx(std::sqrt(3.0)).epsilon(1e-12));

  for (double bad : {0.0, 1.0, -0.5, 2.0})
    CHECK_THROWS_WITH_AS(alphaThreshold(3, bad, 2.0, 6.0), doctest::Contains("InvalidDelta"),
                         Error);
  for (double bad : {0.0, -3.0})
    CHECK_THROWS_WITH_AS(alphaThreshold(3, 0.5, bad, 6.0),
                         doctest::Contains("NonPositiveEigenvalue"), Error);
  CHECK_THROWS_WITH_AS(alphaThreshold(1, 0.5, 2.0, 6.0), doctest::Contains("ConfigError"),
                       Error);
  CHECK(exitCodeFor(Errc::InvalidDelta) == 2);
  CHECK(exitCodeFor(Errc::NonPositiveEigenvalue) == 3);
}

TEST_CASE("linearized curvature is the finite difference of the curvature map") {
  const double t = 1e-4;

  // n = 3 radial unit ball, Power convention u = 1 +- t v
  {
    const auto ball = buildRadialDomain(BackgroundSpace::euclidean(3), 1.0, 512);
    Eigen::VectorXd v =
        (1.0 - chartRadiusSq(ball).array()).square();
    const auto dr = linearizedScalarCurvature({&ball, v}, ball);
    const auto plus = scalarCurvature(makeFactor(ball, 1.0 + t * v.array()), ball);
    const auto minus = scalarCurvature(makeFactor(ball, 1.0 - t * v.array()), ball);
    double scale = 0.0;
    for (int i : ball.interior) scale = std::max(scale, std::abs(dr.values(i)));
    for (int i : ball.interior) {
      const double fd = (plus.values(i) - minus.values(i)) / (2.0 * t);
      CHECK(std::abs(fd - dr.values(i)) < 1e-5 * scale);
    }
  }

  // n = 2 disk, Exponential convention u = +- t v
  {
    const auto disk = buildPolarDiskDomain(BackgroundSpace::euclidean(2), 1.0, 24);
    Eigen::VectorXd v =
        (1.0 - chartRadiusSq(disk).array()).square();
    const auto dr = linearizedScalarCurvature({&disk, v}, disk);
    const auto plus = scalarCurvature(makeFactor(disk, (t * v).eval()), disk);
    const auto minus = scalarCurvature(makeFactor(disk, (-t * v).eval()), disk);
    double scale = 0.0;
    for (int i : disk.interior) scale = std::max(scale, std::abs(dr.values(i)));
    for (int i : disk.interior) {
      const double fd = (plus.values(i) - minus.values(i)) / (2.0 * t);
      CHECK(std::abs(fd - dr.values(i)) < 1e-5 * scale);
    }
  }
}

TEST_CASE("linearized curvature of an eigenfunction is the eigenvalue multiple") {
  const auto cap = buildDomain(BackgroundSpace::sphere(2), {RegionShape::GeodesicBall, 2.0}, 0.1);
  const auto res = firstEigenpair(schrodingerOperator(cap));
  REQUIRE(res.eigenvalue < 0.0);

  const auto dr = linearizedScalarCurvature(res.eigenfunction, cap);
  const double coef = 2.0;
  double scale = 0.0;
  for (int v : cap.interior) scale = std::max(scale, std::abs(dr.values(v)));
  for (int v : cap.interior)
    CHECK(std::abs(dr.values(v) - coef * res.eigenvalue * res.eigenfunction.values(v)) <
          1e-6 * scale);

  // flipping the eigenfunction sign makes the linearized curvature positive
  const ScalarField phiPlus{&cap, -res.eigenfunction.values};
  const auto drPlus = linearizedScalarCurvature(phiPlus, cap);
  for (int v : cap.interior) CHECK(drPlus.values(v) > 0.0);

  const ScalarField zero{&cap, Eigen::VectorXd::Zero(cap.vertexCount())};
  const auto drZero = linearizedScalarCurvature(zero, cap);
  for (int v : cap.interior) CHECK(drZero.values(v) == 0.0);
  for (int b : cap.boundary) CHECK(std::isnan(drZero.values(b)));
}

TEST_CASE("boundary data carries positive weights summing to the boundary length") {
  const auto disk = buildPolarDiskDomain(BackgroundSpace::euclidean(2), 1.0, 32);
  const auto bd = makeBoundaryData(identityFactor(disk), disk, 1.0);
  CHECK(bd.weights.minCoeff() > 0.0);
  CHECK(bd.weights.sum() == doctest::Approx(2.0 * oracle::pi).epsilon(2e-3));
  CHECK(bd.vertices.size() == disk.boundary.size());
  CHECK(bd.normalDerivative.size() == static_cast<Eigen::Index>(disk.boundary.size()));

  const auto hyp = buildPolarDiskDomain(BackgroundSpace::hyperbolic(2), 1.0, 32);
  const auto bh = makeBoundaryData(identityFactor(hyp), hyp,
                                   hyp.space.ballBoundaryMeanCurvature(1.0));
  CHECK(bh.weights.sum() == doctest::Approx(7.384006872882645).epsilon(1e-3));

  CHECK_THROWS_WITH_AS(
      makeBoundaryData(identityFactor(disk), disk, Eigen::VectorXd::Ones(3)),
      doctest::Contains("ConfigError"), Error);
}
