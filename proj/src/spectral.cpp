#include "crl/spectral.hpp"

#include <Eigen/SparseCholesky>
#include <algorithm>
#include <cmath>

#include "crl/errors.hpp"
#include "crl/mesh_build.hpp"
#include "crl/mesh_io.hpp"

namespace crl {

namespace {

void checkSpec(const OperatorSpec& spec) {
  require(spec.domain != nullptr && spec.domain->finalized, Errc::ConfigError,
          "operator needs a finalized domain");
  require(spec.potential.values.size() == spec.domain->vertexCount(), Errc::ConfigError,
          "potential length does not match the domain");
  const double expected = spec.kind == OperatorKind::Schrodinger
                              ? spec.domain->space.scalarCurvature() / (spec.domain->space.dim - 1)
                              : 0.0;
  require((spec.potential.values.array() == expected).all(), Errc::InvariantViolation,
          "potential disagrees with the background curvature term");
}

Eigen::VectorXd zeroBoundary(const DiscreteDomain& d, Eigen::VectorXd f) {
  for (int v : d.boundary) f(v) = 0.0;
  return f;
}

}  // namespace

OperatorSpec laplacianOperator(const DiscreteDomain& d) {
  require(d.finalized, Errc::ConfigError, "operator needs a finalized domain");
  return {OperatorKind::Laplacian, &d, {&d, Eigen::VectorXd::Zero(d.vertexCount())}};
}

OperatorSpec schrodingerOperator(const DiscreteDomain& d) {
  require(d.finalized, Errc::ConfigError, "operator needs a finalized domain");
  const double pot = d.space.scalarCurvature() / (d.space.dim - 1);
  return {OperatorKind::Schrodinger, &d, {&d, Eigen::VectorXd::Constant(d.vertexCount(), pot)}};
}

AssembledOperator assemble(const OperatorSpec& spec) {
  checkSpec(spec);
  const DiscreteDomain& d = *spec.domain;
  require(!d.interior.empty(), Errc::ConfigError, "domain has no interior vertices");

  AssembledOperator out;
  out.domain = &d;
  out.reducedIndex.assign(d.vertexCount(), -1);
  for (int i = 0; i < static_cast<int>(d.interior.size()); ++i)
    out.reducedIndex[d.interior[i]] = i;
  const int m = static_cast<int>(d.interior.size());

  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(d.edges.size() * 4 + m);
  Eigen::VectorXd diag = Eigen::VectorXd::Zero(m);
  for (const auto& e : d.edges) {
    const int ia = out.reducedIndex[e.a], ib = out.reducedIndex[e.b];
    if (ia >= 0) diag(ia) += e.w;
    if (ib >= 0) diag(ib) += e.w;
    if (ia >= 0 && ib >= 0) {
      trips.emplace_back(ia, ib, -e.w);
      trips.emplace_back(ib, ia, -e.w);
    }
  }
  out.mass.resize(m);
  for (int i = 0; i < m; ++i) {
    const int v = d.interior[i];
    out.mass(i) = d.lumpedMass(v);
    trips.emplace_back(i, i, diag(i) - spec.potential.values(v) * d.lumpedMass(v));
  }
  out.a.resize(m, m);
  out.a.setFromTriplets(trips.begin(), trips.end());
  out.a.makeCompressed();
  return out;
}

double quadraticForm(const OperatorSpec& spec, const Eigen::VectorXd& field) {
  checkSpec(spec);
  const DiscreteDomain& d = *spec.domain;
  require(field.size() == d.vertexCount(), Errc::ConfigError, "field length mismatch");
  const Eigen::VectorXd f = zeroBoundary(d, field);
  double form = 0.0;
  for (const auto& e : d.edges) {
    const double df = f(e.a) - f(e.b);
    form += e.w * df * df;
  }
  form -= (spec.potential.values.array() * d.lumpedMass.array() * f.array().square()).sum();
  return form;
}

double rayleighQuotient(const OperatorSpec& spec, const Eigen::VectorXd& field) {
  checkSpec(spec);
  const DiscreteDomain& d = *spec.domain;
  require(field.size() == d.vertexCount(), Errc::ConfigError, "field length mismatch");
  const Eigen::VectorXd f = zeroBoundary(d, field);
  const double m2 = (d.lumpedMass.array() * f.array().square()).sum();
  require(m2 > 0.0, Errc::ConfigError, "trial field vanishes on the interior");
  return quadraticForm(spec, f) / m2;
}

SpectralResult firstEigenpair(const OperatorSpec& spec, double tol) {
  require(tol >= 1e-12 && tol <= 1e-4, Errc::ConfigError, "tolerance out of range");
  const AssembledOperator op = assemble(spec);
  const DiscreteDomain& d = *spec.domain;
  const int m = static_cast<int>(op.mass.size());
  const Eigen::VectorXd& mass = op.mass;

  double maxPot = 0.0;
  for (int v : d.interior) maxPot = std::max(maxPot, spec.potential.values(v));

  auto mNormalize = [&](Eigen::VectorXd& x) {
    x /= std::sqrt(x.dot((mass.array() * x.array()).matrix()));
  };
  auto rayleigh = [&](const Eigen::VectorXd& x) {
    return x.dot(op.a * x) / x.dot((mass.array() * x.array()).matrix());
  };
  auto shifted = [&](double sigma) {
    Eigen::SparseMatrix<double> s = op.a;
    for (int i = 0; i < m; ++i) s.coeffRef(i, i) -= sigma * mass(i);
    return s;
  };

  // phase 1: shift below the sandwich lower bound, so the matrix is SPD
  const double sigma0 = -maxPot - 1.0;
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver;
  solver.compute(shifted(sigma0));
  require(solver.info() == Eigen::Success, Errc::SolverDivergence,
          "factorization failed at the safe shift");

  Eigen::VectorXd x = Eigen::VectorXd::Ones(m);
  mNormalize(x);
  double rhoPrev2 = 0.0, rhoPrev = 0.0, rho = rayleigh(x);
  int iterations = 0;
  const int phase1 = 12;
  for (int k = 0; k < phase1; ++k) {
    const Eigen::VectorXd rhs = (mass.array() * x.array()).matrix();
    x = solver.solve(rhs);
    mNormalize(x);
    rhoPrev2 = rhoPrev;
    rhoPrev = rho;
    rho = rayleigh(x);
    ++iterations;
  }

  // phase 2: refactor just below the Aitken-extrapolated limit
  double rhoInf = rho;
  double tail = std::abs(rho - rhoPrev);
  const double denom = rhoPrev - rhoPrev2;
  if (denom != 0.0) {
    const double q = (rho - rhoPrev) / denom;
    if (std::abs(q) < 1.0) {
      const double corr = (rho - rhoPrev) * q / (1.0 - q);
      rhoInf = rho + corr;
      tail = 3.0 * std::abs(corr);
    }
  }
  const double scale = std::max(1.0, std::abs(rhoInf));
  double sigma1 = rhoInf - std::max(tail, 1e-9 * scale);
  sigma1 = std::min(sigma1, rho);
  solver.compute(shifted(sigma1));
  require(solver.info() == Eigen::Success, Errc::SolverDivergence,
          "factorization failed at the refined shift");

  double residual = 1e300;
  for (int k = 0; k < 40; ++k) {
    const Eigen::VectorXd rhs = (mass.array() * x.array()).matrix();
    x = solver.solve(rhs);
    mNormalize(x);
    rho = rayleigh(x);
    ++iterations;
    const Eigen::VectorXd r = op.a * x - rho * (mass.array() * x.array()).matrix();
    const Eigen::VectorXd rd = solver.solve(r);
    residual = std::sqrt(std::max(0.0, r.dot(rd)));
    if (residual <= tol) break;
  }
  require(residual <= tol, Errc::SolverDivergence,
          "eigensolver missed tolerance, last residual " + formatG17(residual));

  if (x.sum() < 0.0) x = -x;
  require(x.minCoeff() > 0.0, Errc::InvariantViolation,
          "computed ground state is not single-signed");

  SpectralResult res;
  res.eigenvalue = rho;
  res.residualNorm = residual;
  res.iterations = iterations;
  res.h = d.h;
  res.eigenfunction.domain = &d;
  res.eigenfunction.values = Eigen::VectorXd::Zero(d.vertexCount());
  for (int i = 0; i < m; ++i) res.eigenfunction.values(d.interior[i]) = x(i);
  res.eigenfunction.values /= res.eigenfunction.values.maxCoeff();
  return res;
}

namespace {

struct ShootOutcome {
  bool crossed;    // hit zero before or at r
  double endValue; // phi(r)
};

/// RK4 integration of u'' + k (sn'/sn) u' + (pot + lambda) u = 0 from the
/// regular singular point, reporting whether u crosses zero on (0, r].
ShootOutcome shoot(const BackgroundSpace& space, double r, double pot, double lambda, int steps,
                   Eigen::VectorXd* samples = nullptr, int sampleEvery = 0) {
  const int k = space.dim - 1;
  const double q = pot + lambda;
  const double h = r / steps;

  // series start: u = 1 - q t^2 / (2(k+1)) + O(t^4)
  double t = h;
  double u = 1.0 - q * h * h / (2.0 * (k + 1));
  double v = -q * h / (k + 1);
  bool crossed = false;
  if (samples) {
    (*samples)(0) = 1.0;
    if (sampleEvery == 1) (*samples)(1) = u;
  }
  auto deriv = [&](double tt, double uu, double vv, double& du, double& dv) {
    du = vv;
    dv = -k * (space.snPrime(tt) / space.sn(tt)) * vv - q * uu;
  };
  for (int i = 1; i < steps; ++i) {
    double k1u, k1v, k2u, k2v, k3u, k3v, k4u, k4v;
    deriv(t, u, v, k1u, k1v);
    deriv(t + h / 2, u + h / 2 * k1u, v + h / 2 * k1v, k2u, k2v);
    deriv(t + h / 2, u + h / 2 * k2u, v + h / 2 * k2v, k3u, k3v);
    deriv(t + h, u + h * k3u, v + h * k3v, k4u, k4v);
    u += h / 6 * (k1u + 2 * k2u + 2 * k3u + k4u);
    v += h / 6 * (k1v + 2 * k2v + 2 * k3v + k4v);
    t += h;
    if (u <= 0.0) crossed = true;
    if (samples && (i + 1) % sampleEvery == 0) (*samples)((i + 1) / sampleEvery) = u;
  }
  return {crossed, u};
}

}  // namespace

SpectralResult radialFirstEigenpair(const BackgroundSpace& space, double r, OperatorKind kind,
                                    int gridPoints) {
  require(space.isSpaceForm(), Errc::UnsupportedCombination,
          "radial shooting covers space forms only");
  require(gridPoints >= 16, Errc::ConfigError, "radial grid needs at least 16 points");
  require(r > 0.0 && r < space.maxRadius(), Errc::InvalidRadius, "ball radius out of range");

  const double pot =
      kind == OperatorKind::Schrodinger ? space.scalarCurvature() / (space.dim - 1) : 0.0;
  const int refine = (2048 + gridPoints - 1) / gridPoints;
  const int steps = gridPoints * refine;

  // an eigenvalue above Lambda_1 makes the solution cross zero before r
  auto tooHigh = [&](double lambda) { return shoot(space, r, pot, lambda, steps).crossed; };

  const double absR = std::abs(space.scalarCurvature());
  double lo = -10.0 * absR - 100.0 / (r * r);
  double hi = 100.0 / (r * r) + 10.0 * absR;
  require(!tooHigh(lo) && tooHigh(hi), Errc::BracketFailure,
          "no eigenvalue bracketed in the search interval");
  int iterations = 0;
  while (hi - lo > 1e-9 * std::max(1.0, std::abs(lo)) && iterations < 200) {
    const double mid = 0.5 * (lo + hi);
    (tooHigh(mid) ? hi : lo) = mid;
    ++iterations;
  }
  const double lambda = 0.5 * (lo + hi);

  auto domain = std::make_shared<DiscreteDomain>(buildRadialDomain(space, r, gridPoints));
  Eigen::VectorXd samples(gridPoints + 1);
  shoot(space, r, pot, lo, steps, &samples, refine);
  samples(gridPoints) = 0.0;
  require(samples.head(gridPoints).minCoeff() > 0.0, Errc::InvariantViolation,
          "radial ground state is not single-signed");
  samples /= samples.maxCoeff();

  SpectralResult res;
  res.eigenvalue = lambda;
  res.residualNorm = hi - lo;
  res.iterations = iterations;
  res.h = domain->h;
  res.ownedDomain = domain;
  res.eigenfunction.domain = domain.get();
  res.eigenfunction.values = samples;
  return res;
}

Eigen::VectorXd hopfBoundaryCheck(const SpectralResult& result) {
  require(result.eigenfunction.domain != nullptr, Errc::ConfigError,
          "result carries no eigenfunction");
  return boundaryNormalDerivative(*result.eigenfunction.domain, result.eigenfunction.values);
}

nlohmann::ordered_json spectralResultToJson(const SpectralResult& r) {
  nlohmann::ordered_json j;
  j["eigenvalue"] = r.eigenvalue;
  j["residual"] = r.residualNorm;
  j["iterations"] = r.iterations;
  j["h"] = r.h;
  j["field"] = fieldToJson(r.eigenfunction);
  return j;
}

}  // namespace crl
