#include <doctest.h>

#include <cmath>

#include "crl/background.hpp"
#include "crl/conformal.hpp"
#include "crl/domain.hpp"
#include "crl/errors.hpp"
#include "crl/mass.hpp"
#include "crl/mesh_build.hpp"
#include "oracles.hpp"

using namespace crl;

namespace {

Eigen::VectorXd chartRadiusSq(const DiscreteDomain& d) {
  Eigen::VectorXd r2(d.vertexCount());
  for (int v = 0; v < d.vertexCount(); ++v) r2(v) = d.vertices[v].squaredNorm();
  return r2;
}

MassReport diskMass(const DiscreteDomain& disk, double t) {
  Eigen::VectorXd u = (1.0 - chartRadiusSq(disk).array()) * t;
  const auto cf = makeFactor(disk, u);
  return brownYorkMass(cf, disk, makeBoundaryData(cf, disk, 1.0));
}

}  // namespace

TEST_CASE("identity factor has zero mass exactly") {
  const auto disk = buildPolarDiskDomain(BackgroundSpace::euclidean(2), 1.0, 24);
  const auto ball = buildRadialDomain(BackgroundSpace::hyperbolic(3), 1.0, 128);
  for (const DiscreteDomain* d : {&disk, &ball}) {
    const auto id = identityFactor(*d);
    const auto bd =
        makeBoundaryData(id, *d, d->space.ballBoundaryMeanCurvature(1.0));
    const auto report = brownYorkMass(id, *d, bd);
    CHECK(report.value == 0.0);
    CHECK(report.boundaryIntegrandSamples.cwiseAbs().maxCoeff() == 0.0);
    CHECK(report.domainHash == d->hash);
  }
}

TEST_CASE("flat disk quadratic factor carries mass 8 pi t") {
  const auto disk =
      buildDomain(BackgroundSpace::euclidean(2), {RegionShape::GeodesicBall, 1.0}, 0.02);
  REQUIRE(disk.h <= 0.02);
  const double t = 0.15;

  const auto plus = diskMass(disk, t);
  CHECK(plus.value == doctest::Approx(8.0 * oracle::pi * t).epsilon(0.01));
  CHECK(plus.boundaryMeasureTotal == doctest::Approx(2.0 * oracle::pi).epsilon(1e-3));

  // t < 0 flips the mass sign while the interior curvature drops below the
  // background: the flexible sign pattern
  const auto minus = diskMass(disk, -t);
  CHECK(minus.value == doctest::Approx(-8.0 * oracle::pi * t).epsilon(0.01));
  Eigen::VectorXd u = (1.0 - chartRadiusSq(disk).array()) * (-t);
  const auto rg = scalarCurvature(makeFactor(disk, u), disk);
  for (int v : disk.interior) CHECK(rg.values(v) < 0.0);
}

TEST_CASE("radial ball mass matches the normal-derivative closed form") {
  const auto ball = buildRadialDomain(BackgroundSpace::euclidean(3), 1.0, 2048);
  const double t = 0.05;
  Eigen::VectorXd u = 1.0 + ((1.0 - chartRadiusSq(ball).array()) * t).array();
  const auto cf = makeFactor(ball, u);
  const auto report = brownYorkMass(cf, ball, makeBoundaryData(cf, ball, 2.0));
  // -(2(n-1)/(n-2)) * (-2t) * 4 pi = 32 pi t
  CHECK(report.value == doctest::Approx(32.0 * oracle::pi * t).epsilon(0.01));
}

TEST_CASE("mass equals both boundary-integral forms") {
  const auto disk = buildPolarDiskDomain(BackgroundSpace::euclidean(2), 1.0, 32);
  const double t = 0.2;
  Eigen::VectorXd u = (1.0 - chartRadiusSq(disk).array()) * t;
  const auto cf = makeFactor(disk, u);
  const auto bd = makeBoundaryData(cf, disk, 1.0);
  const auto report = brownYorkMass(cf, disk, bd);

  // recomputable identity against the published samples
  double recomputed = 0.0;
  for (int i = 0; i < bd.weights.size(); ++i)
    recomputed += bd.weights(i) * report.boundaryIntegrandSamples(i);
  CHECK(report.value == doctest::Approx(recomputed).epsilon(1e-14));

  // normal-derivative form, assembled independently of the report
  const double viaNormal = -2.0 * bd.weights.dot(bd.normalDerivative);
  CHECK(std::abs(report.value - viaNormal) <= 1e-10 * std::max(1.0, std::abs(viaNormal)));
}

TEST_CASE("mass of u = 1 + t v is exactly linear in t") {
  const auto ball = buildRadialDomain(BackgroundSpace::euclidean(3), 1.0, 256);
  Eigen::VectorXd v = (1.0 - chartRadiusSq(ball).array()).square();
  auto massAt = [&](double t) {
    const auto cf = makeFactor(ball, (1.0 + t * v.array()).matrix());
    return brownYorkMass(cf, ball, makeBoundaryData(cf, ball, 2.0)).value;
  };
  const double m1 = massAt(0.01), m2 = massAt(0.02), m3 = massAt(-0.01);
  CHECK(m2 == doctest::Approx(2.0 * m1).epsilon(1e-12));
  CHECK(m3 == doctest::Approx(-m1).epsilon(1e-12));
}

TEST_CASE("interior-supported factors have vanishing mass") {
  const auto disk = buildPolarDiskDomain(BackgroundSpace::euclidean(2), 1.0, 24);
  Eigen::VectorXd u = Eigen::VectorXd::Zero(disk.vertexCount());
  for (int vtx = 0; vtx < disk.vertexCount(); ++vtx) {
    const double rho2 = disk.vertices[vtx].squaredNorm();
    if (rho2 < 0.09) u(vtx) = 0.4 * (0.09 - rho2);
  }
  REQUIRE(u.maxCoeff() > 0.0);
  const auto cf = makeFactor(disk, u);
  const auto report = brownYorkMass(cf, disk, makeBoundaryData(cf, disk, 1.0));
  CHECK(std::abs(report.value) <= 1e-12);
}

TEST_CASE("mass rejects factors that move the boundary metric") {
  const auto ball = buildRadialDomain(BackgroundSpace::euclidean(3), 1.0, 64);
  const auto cf = makeFactor(ball, Eigen::VectorXd::Constant(ball.vertexCount(), 1.1));
  const auto bd = makeBoundaryData(cf, ball, 2.0);
  CHECK_THROWS_WITH_AS(brownYorkMass(cf, ball, bd), doctest::Contains("NonIdentityBoundary"),
                       Error);
}

TEST_CASE("mass report serializes with its domain hash") {
  const auto disk = buildPolarDiskDomain(BackgroundSpace::euclidean(2), 1.0, 16);
  const auto report = diskMass(disk, 0.1);
  const auto j = massReportToJson(report);
  CHECK(j["domainHash"].get<std::uint64_t>() == disk.hash);
  CHECK(j["value"].get<double>() == report.value);
  CHECK(j["boundaryIntegrandSamples"].size() == disk.boundary.size());
  const std::vector<std::string> keys = {"value", "boundaryIntegrandSamples",
                                         "boundaryMeasureTotal", "domainHash"};
  std::size_t i = 0;
  for (auto it = j.begin(); it != j.end(); ++it, ++i) CHECK(it.key() == keys[i]);
}
