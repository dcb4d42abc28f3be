#include <doctest.h>

#include <cmath>

#include "crl/background.hpp"
#include "crl/domain.hpp"
#include "crl/errors.hpp"
#include "crl/mesh_build.hpp"
#include "crl/spectral.hpp"
#include "oracles.hpp"

using namespace crl;

namespace {

double aitken(double a, double b, double c) {
  const double d = (c - b) - (b - a);
  return d == 0.0 ? c : c - (c - b) * (c - b) / d;
}

}  // namespace

TEST_CASE("assembly is stiffness minus potential mass") {
  const auto d = buildDomain(BackgroundSpace::sphere(2), {RegionShape::GeodesicBall, 1.0}, 0.2);
  const auto lap = assemble(laplacianOperator(d));
  const auto sch = assemble(schrodingerOperator(d));
  const double pot = d.space.scalarCurvature() / (d.space.dim - 1);
  Eigen::SparseMatrix<double> diff = sch.a - lap.a;
  for (int k = 0; k < diff.outerSize(); ++k)
    for (Eigen::SparseMatrix<double>::InnerIterator it(diff, k); it; ++it) {
      if (it.row() == it.col())
        CHECK(it.value() == doctest::Approx(-pot * lap.mass(it.row())).epsilon(1e-14));
      else
        CHECK(std::abs(it.value()) == 0.0);
    }
  // zero potential: positive semi-definite quadratic form
  const auto spec = laplacianOperator(d);
  for (int seed = 1; seed <= 4; ++seed) {
    Eigen::VectorXd f(d.vertexCount());
    for (int v = 0; v < d.vertexCount(); ++v) f(v) = std::sin(seed * (v + 1) * 0.7);
    CHECK(quadraticForm(spec, f) >= -1e-12);
  }
  // symmetry of the reduced matrix
  Eigen::SparseMatrix<double> asym = sch.a - Eigen::SparseMatrix<double>(sch.a.transpose());
  CHECK(asym.coeffs().cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("hemisphere quadratic form vanishes at the critical eigenfunction") {
  const auto s2 = BackgroundSpace::sphere(2);
  const auto hemi = buildDomain(s2, {RegionShape::ComplementOfBall, oracle::pi / 2}, 0.05);
  Eigen::VectorXd f(hemi.vertexCount());
  for (int v = 0; v < hemi.vertexCount(); ++v) f(v) = -hemi.vertices[v](2);
  const auto spec = schrodingerOperator(hemi);
  // both energy terms are ~4.19; their difference vanishes to O(h^2)
  CHECK(std::abs(quadraticForm(spec, f)) < 0.02);
}

TEST_CASE("flat disk ground state matches the Bessel oracle") {
  const auto flat = BackgroundSpace::euclidean(2);
  const auto disk = buildDomain(flat, {RegionShape::GeodesicBall, 1.0}, 0.02);
  const auto res = firstEigenpair(laplacianOperator(disk));
  CHECK(res.residualNorm <= 1e-8);
  CHECK(res.eigenvalue == doctest::Approx(oracle::j01Squared).epsilon(0.01));

  // eigenfunction profile follows J0(j01 rho) after sup-normalization
  for (int v = 0; v < disk.vertexCount(); v += 37) {
    const double rho = disk.vertices[v].norm();
    CHECK(res.eigenfunction.values(v) ==
          doctest::Approx(std::cyl_bessel_j(0, oracle::j01 * rho)).epsilon(0.02));
  }

  // Richardson extrapolation over three structured meshes reaches 0.1%
  double lam[3];
  for (int k = 0; k < 3; ++k) {
    const auto dk = buildPolarDiskDomain(flat, 1.0, 16 << k);
    lam[k] = firstEigenpair(laplacianOperator(dk)).eigenvalue;
  }
  const double extrap = aitken(lam[0], lam[1], lam[2]);
  CHECK(extrap == doctest::Approx(oracle::j01Squared).epsilon(1e-3));
  // observed convergence order of the FEM eigenvalue is at least 1.7
  const double e0 = std::abs(lam[0] - oracle::j01Squared);
  const double e1 = std::abs(lam[1] - oracle::j01Squared);
  const double e2 = std::abs(lam[2] - oracle::j01Squared);
  CHECK(oracle::observedOrder(e0, e1) > 1.7);
  CHECK(oracle::observedOrder(e1, e2) > 1.7);
}

TEST_CASE("eigenfunction structure invariants") {
  const auto flat = BackgroundSpace::euclidean(2);
  const auto disk = buildPolarDiskDomain(flat, 1.0, 24);
  const auto res = firstEigenpair(laplacianOperator(disk));
  CHECK(res.eigenfunction.values.maxCoeff() == 1.0);
  for (int v : disk.boundary) CHECK(res.eigenfunction.values(v) == 0.0);
  for (int v : disk.interior) CHECK(res.eigenfunction.values(v) > 0.0);
  CHECK(res.h == disk.h);

  // deterministic: bitwise identical rerun
  const auto rerun = firstEigenpair(laplacianOperator(disk));
  CHECK(rerun.eigenvalue == res.eigenvalue);
  CHECK((rerun.eigenfunction.values - res.eigenfunction.values).lpNorm<Eigen::Infinity>() == 0.0);
}

TEST_CASE("hemisphere is the critical domain of the sphere operator") {
  const auto s2 = BackgroundSpace::sphere(2);
  const auto hemi = buildDomain(s2, {RegionShape::ComplementOfBall, oracle::pi / 2}, 0.02);
  const auto lap = firstEigenpair(laplacianOperator(hemi));
  CHECK(lap.eigenvalue == doctest::Approx(2.0).epsilon(2.5e-3));
  const auto sch = firstEigenpair(schrodingerOperator(hemi));
  CHECK(std::abs(sch.eigenvalue) < 5e-3);
  // sandwich equality for constant curvature: Lambda_1 = lambda_1 - R/(n-1)
  CHECK(sch.eigenvalue - (lap.eigenvalue - 2.0) == doctest::Approx(0.0).epsilon(1e-7));

  // the equatorial normal derivative of cos(theta) is -1
  const auto dn = hopfBoundaryCheck(lap);
  for (int i = 0; i < dn.size(); ++i) CHECK(dn(i) == doctest::Approx(-1.0).epsilon(0.02));
}

TEST_CASE("caps beyond the hemisphere have negative operator eigenvalue") {
  const auto s2 = BackgroundSpace::sphere(2);
  const auto cap = buildDomain(s2, {RegionShape::GeodesicBall, 2.0}, 0.05);
  const auto sch = firstEigenpair(schrodingerOperator(cap));
  CHECK(sch.eigenvalue < -0.5);
  // cross-check against the radial oracle at O(h^2)
  const auto oracleRes = radialFirstEigenpair(s2, 2.0, OperatorKind::Schrodinger, 512);
  CHECK(sch.eigenvalue == doctest::Approx(oracleRes.eigenvalue).epsilon(0.01));
}

TEST_CASE("radial oracle reproduces closed-form eigenvalues") {
  const auto e3 = radialFirstEigenpair(BackgroundSpace::euclidean(3), 1.0,
                                       OperatorKind::Laplacian, 512);
  CHECK(std::abs(e3.eigenvalue - oracle::piSquared) < 1e-7);
  // profile sin(pi t)/t against samples
  for (int v = 64; v < 512; v += 64) {
    const double t = e3.eigenfunction.domain->vertices[v](0);
    const double ref = std::sin(oracle::pi * t) / (oracle::pi * t);
    CHECK(e3.eigenfunction.values(v) == doctest::Approx(ref).epsilon(1e-5));
  }

  const auto s2 = radialFirstEigenpair(BackgroundSpace::sphere(2), oracle::pi / 2,
                                       OperatorKind::Schrodinger, 512);
  CHECK(std::abs(s2.eigenvalue) < 1e-7);

  const auto e2 = radialFirstEigenpair(BackgroundSpace::euclidean(2), 1.0,
                                       OperatorKind::Laplacian, 512);
  CHECK(std::abs(e2.eigenvalue - oracle::j01Squared) < 1e-7);

  // flat scaling law: lambda_1(B_2) = lambda_1(B_1)/4
  const auto b2 = radialFirstEigenpair(BackgroundSpace::euclidean(2), 2.0,
                                       OperatorKind::Laplacian, 512);
  CHECK(4.0 * b2.eigenvalue == doctest::Approx(e2.eigenvalue).epsilon(1e-7));

  // Hopf derivative of the disk ground state: -j01 J1(j01)
  const auto dn = hopfBoundaryCheck(e2);
  REQUIRE(dn.size() == 1);
  CHECK(dn(0) == doctest::Approx(-oracle::j01 * oracle::j1AtJ01).epsilon(0.02));
}

TEST_CASE("one dimensional assembly agrees with the shooting oracle") {
  const auto s2 = BackgroundSpace::sphere(2);
  const auto grid = buildRadialDomain(s2, oracle::pi / 2, 512);
  const auto fem = firstEigenpair(schrodingerOperator(grid));
  const auto shootRes = radialFirstEigenpair(s2, oracle::pi / 2, OperatorKind::Schrodinger, 512);
  CHECK(std::abs(fem.eigenvalue - shootRes.eigenvalue) < 5e-4);

  // product background, radial in the flat factor: Bessel ground state
  const auto prod = buildProductFlatRadialDomain(2, 6.0, 2048);
  const auto lam = firstEigenpair(laplacianOperator(prod));
  CHECK(lam.eigenvalue == doctest::Approx(oracle::j01Squared / 36.0).epsilon(1e-3));
  const auto sch = firstEigenpair(schrodingerOperator(prod));
  CHECK(sch.eigenvalue - (lam.eigenvalue - 2.0 / 3.0) == doctest::Approx(0.0).epsilon(1e-7));
  CHECK(sch.eigenvalue < -0.5);
}

TEST_CASE("domain monotonicity of first eigenvalues") {
  const auto flat = BackgroundSpace::euclidean(2);
  const auto disk = buildPolarDiskDomain(flat, 1.0, 32);
  const auto inner = firstEigenpair(laplacianOperator(disk));

  ScalarField prof{&disk, inner.eigenfunction.values};
  const auto sub = superlevelDomain(disk, prof, 0.3);
  const auto subRes = firstEigenpair(laplacianOperator(sub));
  CHECK(subRes.eigenvalue > inner.eigenvalue);

  // radial route, both operator kinds, on sphere caps
  const auto s2 = BackgroundSpace::sphere(2);
  const auto small = radialFirstEigenpair(s2, 1.8, OperatorKind::Schrodinger, 256);
  const auto large = radialFirstEigenpair(s2, 2.0, OperatorKind::Schrodinger, 256);
  CHECK(small.eigenvalue > large.eigenvalue);
}

TEST_CASE("hopf sign property across tested domains") {
  const auto flat = BackgroundSpace::euclidean(2);
  const auto hyp = BackgroundSpace::hyperbolic(2);
  const auto domains = {buildPolarDiskDomain(flat, 1.0, 20), buildPolarDiskDomain(hyp, 1.0, 20)};
  for (const auto& d : domains) {
    const auto res = firstEigenpair(laplacianOperator(d));
    const auto dn = hopfBoundaryCheck(res);
    for (int i = 0; i < dn.size(); ++i) CHECK(dn(i) < 0.0);
  }
  const auto radial = radialFirstEigenpair(hyp, 1.5, OperatorKind::Schrodinger, 256);
  const auto dn = hopfBoundaryCheck(radial);
  CHECK(dn(0) < 0.0);
}

TEST_CASE("solver input validation") {
  const auto flat = BackgroundSpace::euclidean(2);
  const auto disk = buildPolarDiskDomain(flat, 1.0, 8);
  CHECK_THROWS_WITH_AS(firstEigenpair(laplacianOperator(disk), 1e-2),
                       doctest::Contains("ConfigError"), Error);
  CHECK_THROWS_WITH_AS(firstEigenpair(laplacianOperator(disk), 1e-13),
                       doctest::Contains("ConfigError"), Error);
  CHECK_THROWS_AS(radialFirstEigenpair(BackgroundSpace::productSphereCylinder(2), 1.0,
                                       OperatorKind::Laplacian, 256),
                  Error);
  // a mismatched potential violates the operator invariant
  OperatorSpec bad = schrodingerOperator(disk);
  bad.potential.values(3) += 1.0;
  CHECK_THROWS_WITH_AS(assemble(bad), doctest::Contains("InvariantViolation"), Error);
}
