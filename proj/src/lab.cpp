#include "crl/lab.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <memory>
#include <random>
#include <utility>

#include "crl/deform.hpp"
#include "crl/errors.hpp"
#include "crl/hash.hpp"
#include "crl/mesh_build.hpp"
#include "crl/mesh_io.hpp"
#include "crl/spectral.hpp"

namespace crl {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kHalfPi = 1.5707963267948966;

// Runner check tolerances; each check row records the bound it used.
constexpr double kFlatSlopeTol = 0.01;
constexpr double kCriticalRadiusTol = 1e-5;
constexpr double kCrossingBisectTol = 1e-6;
constexpr double kHemisphereEigTol = 5e-3;
constexpr double kOracleRelTol = 0.02;
constexpr double kEigenCrossCheckSlack = 1e-6;
constexpr double kMassFloor = -1e-6;
constexpr double kIdentityDistanceTol = 1e-4;
constexpr double kWitnessMassTol = 1e-9;
constexpr double kCollarRoundoff = 1e-9;

double supAbs(const Eigen::VectorXd& u) {
  return u.size() ? u.cwiseAbs().maxCoeff() : 0.0;
}

nlohmann::ordered_json sweepRowsToJson(const std::vector<SweepRow>& rows) {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const SweepRow& r : rows) {
    nlohmann::ordered_json o;
    o["parameter"] = r.parameter;
    o["value"] = r.value;
    o["meshSize"] = r.meshSize;
    o["residual"] = r.residual;
    arr.push_back(o);
  }
  return arr;
}

// Ramp of the product demo: 1 on [0, L/2], linear to 0 at L, |phi'| = 2/L.
Eigen::VectorXd flatFactorRamp(const DiscreteDomain& grid, double radius) {
  Eigen::VectorXd ramp(grid.vertexCount());
  for (int v = 0; v < grid.vertexCount(); ++v) {
    ramp[v] = std::clamp(2.0 * (1.0 - grid.vertices[v][0] / radius), 0.0, 1.0);
  }
  return ramp;
}

// --- penalized mass descent -------------------------------------------------

struct RigidityProblem {
  const DiscreteDomain* d = nullptr;
  Eigen::VectorXd massForm;  // mass(u) = massForm . u for identity boundaries
  double rbar = 0.0;
  double scale = 1.0;  // max(1, |Rbar|), the unit of curvature tolerances
  AssembledOperator lap;  // interior stiffness, for feasibility restoration
  std::unique_ptr<Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>>> lapSolver;
};

RigidityProblem makeProblem(const DiscreteDomain& d, bool withSolver) {
  RigidityProblem p;
  p.d = &d;
  p.rbar = d.space.scalarCurvature();
  p.scale = std::max(1.0, std::abs(p.rbar));
  // m(u) = -2 sum_b w_b (d_nu u)_b, assembled as one linear form over vertices
  p.massForm = Eigen::VectorXd::Zero(d.vertexCount());
  const auto rows = boundaryNormalOperator(d);
  const Eigen::VectorXd bw = boundaryWeights(d);
  for (std::size_t b = 0; b < rows.size(); ++b) {
    for (const auto& [col, coeff] : rows[b]) {
      p.massForm[col] -= 2.0 * bw[static_cast<Eigen::Index>(b)] * coeff;
    }
  }
  if (withSolver) {
    p.lap = assemble(laplacianOperator(d));
    p.lapSolver = std::make_unique<Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>>>();
    p.lapSolver->compute(p.lap.a);
    require(p.lapSolver->info() == Eigen::Success, Errc::SolverDivergence,
            "stiffness factorization failed");
  }
  return p;
}

// Feasibility restoration. Writing G(u) = K u - mu Rbar (e^{2u} - 1)/2 over
// interior vertices, the deficit identity (Rbar - Rg) = -(2/mu) e^{-2u} G
// makes {G >= 0} the feasible set. Each sweep solves K w = G_- and steps
// u -> u - w; the correction -w is superharmonic and vanishes on the
// boundary, so it is nonnegative and can only add mass. Flat backgrounds
// restore in one sweep; curved ones contract by ~Rbar/lambda1 per sweep.
// Returns false when the sweep budget runs out (negative-eigenvalue domains
// need not contract); the caller screens the point either way.
bool restoreFeasibility(const RigidityProblem& p, double targetDeficit, Eigen::VectorXd& u) {
  const DiscreteDomain& d = *p.d;
  for (int sweep = 0; sweep < 40; ++sweep) {
    const Eigen::VectorXd ku = stiffnessApply(d, u);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(p.lap.mass.size());
    bool done = true;
    for (int v : d.interior) {
      const double e2u = std::exp(2.0 * u[v]);
      const double g = ku[v] - 0.5 * d.lumpedMass[v] * p.rbar * (e2u - 1.0);
      if (!(g >= -0.5 * targetDeficit * d.lumpedMass[v] * e2u)) done = false;
      if (g < 0.0) rhs[p.lap.reducedIndex[v]] = g;
    }
    if (done) return true;
    const Eigen::VectorXd w = p.lapSolver->solve(rhs);
    if (!w.allFinite() || supAbs(w) > 1.0) return false;
    for (int v : d.interior) u[v] -= w[p.lap.reducedIndex[v]];
  }
  return false;
}

struct Evaluation {
  double mass = 0.0;
  double penalty = 0.0;     // sum_i mu_i (Rbar - Rg_i)_+^2 over interior vertices
  double deficitSup = 0.0;  // sup_i (Rbar - Rg_i)_+
  double value = 0.0;       // mass + weight * penalty
  Eigen::VectorXd grad;     // filled on request, zero on boundary rows
};

// Objective and exact discrete gradient. With Rg = e^{-2u}(Rbar + 2 (K u)/mu)
// and q = (Rbar - Rg)_+, dP/du_j = 4 mu_j q_j Rg_j - 4 (K (q e^{-2u}))_j by
// symmetry of the stiffness matrix K. Any non-finite curvature value poisons
// the evaluation (value and deficit become +inf) so line searches reject it.
Evaluation evaluateObjective(const RigidityProblem& p, const Eigen::VectorXd& u, double weight,
                             bool wantGrad) {
  const DiscreteDomain& d = *p.d;
  Evaluation out;
  out.mass = p.massForm.dot(u);

  const ScalarField rg = scalarCurvature(makeFactor(d, u), d);
  Eigen::VectorXd q = Eigen::VectorXd::Zero(d.vertexCount());
  Eigen::VectorXd qe = Eigen::VectorXd::Zero(d.vertexCount());
  bool poisoned = false;
  for (int v : d.interior) {
    const double rgv = rg.values[v];
    if (!std::isfinite(rgv)) {
      poisoned = true;
      continue;
    }
    const double deficit = p.rbar - rgv;
    if (deficit > 0.0) {
      q[v] = deficit;
      qe[v] = deficit * std::exp(-2.0 * u[v]);
      out.penalty += d.lumpedMass[v] * deficit * deficit;
      out.deficitSup = std::max(out.deficitSup, deficit);
    }
  }
  out.value = out.mass + weight * out.penalty;
  if (poisoned) {
    out.deficitSup = std::numeric_limits<double>::infinity();
    out.value = std::numeric_limits<double>::infinity();
  }
  if (wantGrad) {
    out.grad = Eigen::VectorXd::Zero(d.vertexCount());
    if (!poisoned) {
      const Eigen::VectorXd kqe = stiffnessApply(d, qe);
      for (int v : d.interior) {
        const double penaltyGrad = (q[v] > 0.0 ? 4.0 * d.lumpedMass[v] * q[v] * rg.values[v] : 0.0) -
                                   4.0 * kqe[v];
        out.grad[v] = p.massForm[v] + weight * penaltyGrad;
      }
    }
  }
  return out;
}

// Least feasible mass seen anywhere in the search; the identity is seeded
// first, so displacing it takes a strictly better feasible point.
struct Incumbent {
  double mass = 0.0;
  double distance = 0.0;
  int feasibleCount = 0;
};

void considerFeasible(const RigidityProblem& p, const RigiditySearchConfig& cfg,
                      const Evaluation& ev, const Eigen::VectorXd& u, Incumbent& inc) {
  if (!(ev.deficitSup <= cfg.feasibilityTol * p.scale)) return;
  ++inc.feasibleCount;
  const double dist = supAbs(u);
  if (ev.mass < inc.mass || (ev.mass == inc.mass && dist < inc.distance)) {
    inc.mass = ev.mass;
    inc.distance = dist;
  }
}

struct DescentOutcome {
  Eigen::VectorXd u;
  long long iterations = 0;
  bool exhausted = false;  // final penalty loop ran out of iterations
};

// Penalty-scheduled projected gradient descent with Armijo backtracking.
// Every evaluated point, accepted or rejected, is screened for feasibility.
DescentOutcome descend(const RigidityProblem& p, const RigiditySearchConfig& cfg,
                       Eigen::VectorXd u, Incumbent& inc) {
  DescentOutcome out;
  double weight = cfg.penalty0;
  double stepMemory = 0.5;
  Evaluation ev = evaluateObjective(p, u, weight, true);
  considerFeasible(p, cfg, ev, u, inc);
  for (int loop = 0; loop < cfg.outerLoops; ++loop) {
    if (loop > 0) {
      weight *= 10.0;
      ev = evaluateObjective(p, u, weight, true);  // same point, new weight
    }
    bool converged = false;
    for (int iter = 0; iter < cfg.maxInnerIterations; ++iter) {
      const double gradSup = supAbs(ev.grad);
      if (gradSup <= 1e-12 * (1.0 + weight * p.scale)) {
        converged = true;
        break;
      }
      const double gradSq = ev.grad.squaredNorm();
      double s = std::min(2.0 * stepMemory, 1.0);
      bool accepted = false;
      for (int halving = 0; halving < 60; ++halving, s *= 0.5) {
        const Eigen::VectorXd trial = u - s * ev.grad;
        const Evaluation evTrial = evaluateObjective(p, trial, weight, false);
        if (evTrial.value <= ev.value - 1e-4 * s * gradSq) {
          u = trial;
          ev = evaluateObjective(p, u, weight, true);
          considerFeasible(p, cfg, ev, u, inc);
          stepMemory = s;
          accepted = true;
          break;
        }
        considerFeasible(p, cfg, evTrial, trial, inc);
      }
      if (!accepted) {  // no descent direction survives at double precision
        converged = true;
        break;
      }
      ++out.iterations;
    }
    if (loop == cfg.outerLoops - 1 && !converged) out.exhausted = true;
  }
  out.u = std::move(u);
  return out;
}

void requireSearchDomain(const DiscreteDomain& d) {
  require(d.finalized, Errc::InvalidRegion, "domain must be finalized");
  require(d.dimension == 2 && d.space.dim == 2, Errc::UnsupportedCombination,
          "the mass search runs on surface meshes");
  require(!d.interior.empty(), Errc::InvalidRegion, "domain has no interior vertices");
  require(!d.boundary.empty(), Errc::InvalidRegion, "the mass needs a boundary");
}

}  // namespace

// --- sweeps -----------------------------------------------------------------

RadiusScalingReport radiusScalingSweep(const BackgroundSpace& space, double rMin, double rMax,
                                       int points, int gridPoints) {
  require(space.isSpaceForm(), Errc::UnsupportedCombination,
          "the radius sweep runs on space forms");
  require(points >= 2, Errc::ConfigError, "the radius sweep needs at least two radii");
  require(rMin > 0.0 && rMin < rMax, Errc::InvalidRadius, "need 0 < rMin < rMax");
  require(rMax < space.maxRadius(), Errc::InvalidRadius, "rMax reaches the diameter bound");

  RadiusScalingReport rep;
  rep.space = space;
  rep.gridPoints = gridPoints;

  const double logMin = std::log(rMin);
  const double logMax = std::log(rMax);
  Fnv1a64 digest;
  for (int i = 0; i < points; ++i) {
    const double s = static_cast<double>(i) / (points - 1);
    const double r = i + 1 == points ? rMax : std::exp(logMin + s * (logMax - logMin));
    const SpectralResult lam = radialFirstEigenpair(space, r, OperatorKind::Laplacian, gridPoints);
    const SpectralResult big =
        radialFirstEigenpair(space, r, OperatorKind::Schrodinger, gridPoints);
    rep.rows.push_back({r, lam.eigenvalue, lam.h, std::max(lam.residualNorm, big.residualNorm)});
    rep.bigLambda1.push_back(big.eigenvalue);
    digest.u64(lam.ownedDomain->hash);
    digest.u64(big.ownedDomain->hash);
  }
  rep.meshDigest = digest.value();

  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  for (const SweepRow& row : rep.rows) {
    const double x = std::log(row.parameter);
    const double y = std::log(row.value);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double n = static_cast<double>(points);
  rep.fittedSlope = (n * sxy - sx * sy) / (n * sxx - sx * sx);

  for (std::size_t i = 0; i + 1 < rep.bigLambda1.size(); ++i) {
    if (!(rep.bigLambda1[i] > 0.0 && rep.bigLambda1[i + 1] <= 0.0)) continue;
    double lo = rep.rows[i].parameter;
    double hi = rep.rows[i + 1].parameter;
    while (hi - lo > kCrossingBisectTol) {
      const double mid = 0.5 * (lo + hi);
      const double bigMid =
          radialFirstEigenpair(space, mid, OperatorKind::Schrodinger, gridPoints).eigenvalue;
      (bigMid > 0.0 ? lo : hi) = mid;
    }
    rep.hasCrossing = true;
    rep.criticalRadius = 0.5 * (lo + hi);
    break;
  }
  return rep;
}

ComplementSweepReport complementEigenvalueSweep(double rMin, double rMax, int points, double h,
                                                double tol) {
  require(points >= 2, Errc::ConfigError, "the complement sweep needs at least two radii");
  require(rMin > 0.0 && rMin < rMax, Errc::InvalidRadius, "need 0 < rMin < rMax");
  require(rMax <= kHalfPi + 1e-12, Errc::InvalidRadius,
          "the complement sweep is studied up to the hemisphere radius");
  require(h > 0.0, Errc::ConfigError, "mesh size must be positive");

  const BackgroundSpace space = BackgroundSpace::sphere(2);
  const Eigen::Vector3d pole(0.0, 0.0, 1.0);
  ComplementSweepReport rep;
  Fnv1a64 digest;
  for (int i = 0; i < points; ++i) {
    const double r = rMin + (rMax - rMin) * static_cast<double>(i) / (points - 1);
    RegionSpec region;
    region.shape = RegionShape::ComplementOfBall;
    region.radius = r;
    const DiscreteDomain omega = buildDomain(space, region, h);
    digest.u64(omega.hash);
    const OperatorSpec lap = laplacianOperator(omega);
    const SpectralResult fem = firstEigenpair(lap, tol);
    rep.rows.push_back({r, fem.eigenvalue, omega.h, fem.residualNorm});
    rep.h = std::max(rep.h, omega.h);

    // ramp: 0 on the cut circle, slope 1/r, capped at 1 past twice the radius
    const Eigen::VectorXd dist = distanceToPoint(omega, pole);
    Eigen::VectorXd ramp(omega.vertexCount());
    for (int v = 0; v < omega.vertexCount(); ++v) {
      ramp[v] = std::clamp((dist[v] - r) / r, 0.0, 1.0);
    }
    rep.rampQuotient.push_back(rayleighQuotient(lap, ramp));

    // the complement of B_r about the pole is the ball B_{pi-r} about the antipode
    rep.radialOracle.push_back(
        radialFirstEigenpair(space, kPi - r, OperatorKind::Laplacian, 2048).eigenvalue);
  }
  rep.meshDigest = digest.value();
  return rep;
}

ProductGrowthReport productVolumeGrowthDemo(int k, double truncation, int gridPoints) {
  require(k >= 2, Errc::UnsupportedCombination,
          "the sphere factor needs k >= 2 to carry positive curvature");
  require(truncation > 0.0 && std::isfinite(truncation), Errc::InvalidRadius,
          "truncation must be positive");

  const BackgroundSpace space = BackgroundSpace::productSphereCylinder(k);
  ProductGrowthReport rep;
  rep.k = k;
  rep.truncation = truncation;
  rep.curvatureTerm = space.scalarCurvature() / (space.dim - 1);  // k(k-1)/(k+1)

  Fnv1a64 digest;
  const DiscreteDomain grid = buildProductFlatRadialDomain(k, truncation, gridPoints);
  digest.u64(grid.hash);
  rep.rampQuotient = rayleighQuotient(laplacianOperator(grid), flatFactorRamp(grid, truncation));

  // The quotient scales like 1/L^2 while the potential term is constant, so a
  // large enough truncation always clears the threshold; failing it means the
  // tube is too short to see the volume-growth mechanism, not a broken run.
  const double threshold = 0.5 * rep.curvatureTerm;
  require(rep.rampQuotient < threshold, Errc::TruncationTooSmall,
          "ramp quotient " + formatG17(rep.rampQuotient) + " misses the threshold " +
              formatG17(threshold) + "; enlarge the truncation");
  rep.certifiedBound = rep.rampQuotient - rep.curvatureTerm;

  const SpectralResult lam = firstEigenpair(laplacianOperator(grid));
  const SpectralResult big = firstEigenpair(schrodingerOperator(grid));
  rep.lambda1 = lam.eigenvalue;
  rep.bigLambda1 = big.eigenvalue;

  for (const double radius : {0.5 * truncation, truncation, 2.0 * truncation}) {
    const DiscreteDomain g = buildProductFlatRadialDomain(k, radius, gridPoints);
    digest.u64(g.hash);
    const double q = rayleighQuotient(laplacianOperator(g), flatFactorRamp(g, radius));
    rep.rows.push_back({radius, q, g.h, 0.0});
  }
  rep.meshDigest = digest.value();
  return rep;
}

// --- rigidity search ----------------------------------------------------------

double penalizedMassObjective(const DiscreteDomain& d, const Eigen::VectorXd& u, double weight,
                              Eigen::VectorXd* grad, double* deficitSup, double* mass) {
  requireSearchDomain(d);
  require(u.size() == d.vertexCount(), Errc::ConfigError, "field length mismatch");
  require(weight >= 0.0, Errc::ConfigError, "penalty weight must be nonnegative");
  for (int b : d.boundary) {
    require(u[b] == 0.0, Errc::NonIdentityBoundary,
            "the objective is defined for fields vanishing on the boundary");
  }
  const RigidityProblem p = makeProblem(d, false);
  const Evaluation ev = evaluateObjective(p, u, weight, grad != nullptr);
  if (grad) *grad = ev.grad;
  if (deficitSup) *deficitSup = ev.deficitSup;
  if (mass) *mass = ev.mass;
  return ev.value;
}

RigidityReport rigiditySearch(const DiscreteDomain& d, const RigiditySearchConfig& cfg) {
  requireSearchDomain(d);
  require(cfg.restarts >= 0, Errc::ConfigError, "restarts must be nonnegative");
  require(cfg.outerLoops >= 1 && cfg.maxInnerIterations >= 1, Errc::ConfigError,
          "descent budgets must be positive");
  require(cfg.penalty0 > 0.0, Errc::ConfigError, "initial penalty weight must be positive");
  require(cfg.startAmplitude > 0.0, Errc::ConfigError, "start amplitude must be positive");
  require(cfg.feasibilityTol > 0.0, Errc::ConfigError, "feasibility tolerance must be positive");
  require(cfg.warmStartSlack >= 0.0, Errc::ConfigError, "warm start slack must be nonnegative");

  RigidityReport rep;
  rep.seed = cfg.seed;
  rep.domainHash = d.hash;
  rep.bigLambda1 = std::isfinite(cfg.knownBigLambda1)
                       ? cfg.knownBigLambda1
                       : firstEigenpair(schrodingerOperator(d), cfg.solverTol).eigenvalue;
  require(cfg.control || rep.bigLambda1 > 0.0, Errc::CertifiedNegativeEigenvalue,
          "first eigenvalue of -Delta - R/(n-1) is " + formatG17(rep.bigLambda1) +
              "; the search expects a positive-eigenvalue domain (control mode admits this)");

  const RigidityProblem problem = makeProblem(d, true);
  Incumbent inc;
  {
    const Eigen::VectorXd zero = Eigen::VectorXd::Zero(d.vertexCount());
    const Evaluation ev = evaluateObjective(problem, zero, cfg.penalty0, false);
    considerFeasible(problem, cfg, ev, zero, inc);
  }

  if (cfg.warmStart != nullptr) {
    const ConformalFactor& cf = *cfg.warmStart;
    checkFactor(cf);
    require(cf.convention == Convention::Exponential, Errc::UnsupportedCombination,
            "warm starts must be exponential factors");
    require(cf.u.domain == &d || cf.u.domain->hash == d.hash, Errc::UnsupportedCombination,
            "warm start lives on a different domain");
    const Eigen::VectorXd& w = cf.u.values;
    for (int b : d.boundary) {
      require(w[b] == 0.0, Errc::NonIdentityBoundary, "warm starts must fix the boundary");
    }
    const Evaluation ev = evaluateObjective(problem, w, cfg.penalty0, false);
    rep.warmStartMass = ev.mass;
    rep.warmStartDeficit = ev.deficitSup;
    rep.warmStartDistance = supAbs(w);
    considerFeasible(problem, cfg, ev, w, inc);
    rep.nontrivialFeasible =
        ev.deficitSup <= cfg.feasibilityTol * problem.scale + cfg.warmStartSlack &&
        rep.warmStartDistance > 0.0 && std::abs(rep.warmStartMass) <= kWitnessMassTol;
  }

  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int restart = 0; restart < cfg.restarts; ++restart) {
    Eigen::VectorXd u0 = Eigen::VectorXd::Zero(d.vertexCount());
    double sup = 0.0;
    for (int v : d.interior) {
      u0[v] = gauss(rng);
      sup = std::max(sup, std::abs(u0[v]));
    }
    if (sup > 0.0) u0 *= cfg.startAmplitude / sup;
    DescentOutcome end = descend(problem, cfg, std::move(u0), inc);
    restoreFeasibility(problem, 0.5 * cfg.feasibilityTol * problem.scale, end.u);
    const Evaluation ev = evaluateObjective(problem, end.u, cfg.penalty0, false);
    considerFeasible(problem, cfg, ev, end.u, inc);
    rep.iterations += end.iterations;
    if (end.exhausted) rep.stalled = true;
    rep.restartRows.push_back({restart, ev.mass, ev.deficitSup, supAbs(end.u), end.iterations});
  }

  rep.bestObjective = inc.mass;
  rep.finalFactorDistanceFromIdentity = inc.distance;
  rep.feasibleCount = inc.feasibleCount;
  return rep;
}

// --- reports ------------------------------------------------------------------

nlohmann::ordered_json radiusScalingReportToJson(const RadiusScalingReport& r) {
  nlohmann::ordered_json j;
  j["space"] = r.space.name();
  j["rows"] = sweepRowsToJson(r.rows);
  j["bigLambda1"] = r.bigLambda1;
  j["fittedSlope"] = r.fittedSlope;
  j["hasCrossing"] = r.hasCrossing;
  j["criticalRadius"] = r.criticalRadius;
  j["gridPoints"] = r.gridPoints;
  j["meshDigest"] = r.meshDigest;
  return j;
}

nlohmann::ordered_json complementSweepReportToJson(const ComplementSweepReport& r) {
  nlohmann::ordered_json j;
  j["rows"] = sweepRowsToJson(r.rows);
  j["rampQuotient"] = r.rampQuotient;
  j["radialOracle"] = r.radialOracle;
  j["h"] = r.h;
  j["meshDigest"] = r.meshDigest;
  return j;
}

nlohmann::ordered_json productGrowthReportToJson(const ProductGrowthReport& r) {
  nlohmann::ordered_json j;
  j["k"] = r.k;
  j["truncation"] = r.truncation;
  j["curvatureTerm"] = r.curvatureTerm;
  j["rampQuotient"] = r.rampQuotient;
  j["certifiedBound"] = r.certifiedBound;
  j["lambda1"] = r.lambda1;
  j["bigLambda1"] = r.bigLambda1;
  j["rows"] = sweepRowsToJson(r.rows);
  j["meshDigest"] = r.meshDigest;
  return j;
}

nlohmann::ordered_json rigidityReportToJson(const RigidityReport& r) {
  nlohmann::ordered_json j;
  j["bestObjective"] = r.bestObjective;
  j["finalFactorDistanceFromIdentity"] = r.finalFactorDistanceFromIdentity;
  j["iterations"] = r.iterations;
  j["stalled"] = r.stalled;
  j["bigLambda1"] = r.bigLambda1;
  j["feasibleCount"] = r.feasibleCount;
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (const RestartRow& row : r.restartRows) {
    nlohmann::ordered_json o;
    o["restart"] = row.restart;
    o["mass"] = row.mass;
    o["deficit"] = row.deficit;
    o["distance"] = row.distance;
    o["iterations"] = row.iterations;
    rows.push_back(o);
  }
  j["restartRows"] = rows;
  j["nontrivialFeasible"] = r.nontrivialFeasible;
  j["warmStartMass"] = r.warmStartMass;
  j["warmStartDeficit"] = r.warmStartDeficit;
  j["warmStartDistance"] = r.warmStartDistance;
  j["seed"] = r.seed;
  j["domainHash"] = r.domainHash;
  return j;
}

// --- experiment runner ----------------------------------------------------------

BackgroundSpace spaceFromConfig(const std::string& name, int dimension) {
  if (name == "euclidean") return BackgroundSpace::euclidean(dimension);
  if (name == "sphere") return BackgroundSpace::sphere(dimension);
  if (name == "hyperbolic") return BackgroundSpace::hyperbolic(dimension);
  if (name == "product") return BackgroundSpace::productSphereCylinder(dimension);
  fail(Errc::ConfigError, "unknown space '" + name + "'");
}

ExperimentConfig experimentConfigFromJson(const nlohmann::ordered_json& j) {
  require(j.is_object(), Errc::ConfigError, "experiment config must be a JSON object");
  const auto asString = [](const nlohmann::ordered_json& v, const char* key) {
    require(v.is_string(), Errc::ConfigError, std::string("'") + key + "' must be a string");
    return v.get<std::string>();
  };
  const auto asInt = [](const nlohmann::ordered_json& v, const char* key) {
    require(v.is_number_integer(), Errc::ConfigError,
            std::string("'") + key + "' must be an integer");
    return v.get<int>();
  };
  const auto asU64 = [](const nlohmann::ordered_json& v, const char* key) {
    require(v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0),
            Errc::ConfigError, std::string("'") + key + "' must be a nonnegative integer");
    return v.get<std::uint64_t>();
  };
  const auto asDouble = [](const nlohmann::ordered_json& v, const char* key) {
    require(v.is_number(), Errc::ConfigError, std::string("'") + key + "' must be a number");
    return v.get<double>();
  };
  const auto asBool = [](const nlohmann::ordered_json& v, const char* key) {
    require(v.is_boolean(), Errc::ConfigError, std::string("'") + key + "' must be a boolean");
    return v.get<bool>();
  };

  ExperimentConfig c;
  bool haveName = false;
  for (const auto& [key, value] : j.items()) {
    if (key == "name") {
      c.name = asString(value, "name");
      haveName = true;
    } else if (key == "space") {
      c.spaceName = asString(value, "space");
    } else if (key == "dimension") {
      c.dimension = asInt(value, "dimension");
    } else if (key == "radius") {
      c.radius = asDouble(value, "radius");
    } else if (key == "h") {
      c.h = asDouble(value, "h");
    } else if (key == "gridPoints") {
      c.gridPoints = asInt(value, "gridPoints");
    } else if (key == "sweepPoints") {
      c.sweepPoints = asInt(value, "sweepPoints");
    } else if (key == "rMin") {
      c.rMin = asDouble(value, "rMin");
    } else if (key == "rMax") {
      c.rMax = asDouble(value, "rMax");
    } else if (key == "solverTol") {
      c.solverTol = asDouble(value, "solverTol");
    } else if (key == "restarts") {
      c.restarts = asInt(value, "restarts");
    } else if (key == "startAmplitude") {
      c.startAmplitude = asDouble(value, "startAmplitude");
    } else if (key == "feasibilityTol") {
      c.feasibilityTol = asDouble(value, "feasibilityTol");
    } else if (key == "seed") {
      c.seed = asU64(value, "seed");
    } else if (key == "control") {
      c.control = asBool(value, "control");
    } else if (key == "expectCrossing") {
      c.expectCrossing = asBool(value, "expectCrossing");
    } else {
      fail(Errc::ConfigError, "unknown config key '" + key + "'");
    }
  }
  require(haveName, Errc::ConfigError, "config needs a 'name'");

  spaceFromConfig(c.spaceName, c.dimension);  // validates the pair
  require(c.solverTol > 0.0, Errc::ConfigError, "'solverTol' must be positive");
  if (c.name == "radius-scaling") {
    require(c.rMin > 0.0 && c.rMax > c.rMin, Errc::ConfigError,
            "radius-scaling needs 0 < rMin < rMax");
    require(c.sweepPoints >= 8, Errc::ConfigError, "radius-scaling needs at least 8 sweep points");
    require(c.gridPoints >= 64, Errc::ConfigError, "'gridPoints' too small");
  } else if (c.name == "complement-decay") {
    require(c.spaceName == "sphere" && c.dimension == 2, Errc::ConfigError,
            "complement-decay runs on the 2-sphere");
    require(c.rMin > 0.0 && c.rMax > c.rMin, Errc::ConfigError,
            "complement-decay needs 0 < rMin < rMax");
    require(c.sweepPoints >= 2, Errc::ConfigError, "complement-decay needs at least 2 radii");
    require(c.h > 0.0, Errc::ConfigError, "'h' must be positive");
  } else if (c.name == "product-growth") {
    require(c.spaceName == "product", Errc::ConfigError,
            "product-growth runs on the sphere-cylinder product");
    require(c.dimension >= 2, Errc::ConfigError, "the sphere factor needs dimension >= 2");
    require(c.radius > 0.0, Errc::ConfigError, "'radius' (the truncation) must be positive");
    require(c.gridPoints >= 64, Errc::ConfigError, "'gridPoints' too small");
  } else if (c.name == "rigidity-search") {
    require(c.radius > 0.0, Errc::ConfigError, "'radius' must be positive");
    require(c.h > 0.0, Errc::ConfigError, "'h' must be positive");
    require(c.restarts >= 0, Errc::ConfigError, "'restarts' must be nonnegative");
    require(c.startAmplitude > 0.0, Errc::ConfigError, "'startAmplitude' must be positive");
    require(c.feasibilityTol > 0.0, Errc::ConfigError, "'feasibilityTol' must be positive");
    if (c.control) {
      require(c.spaceName == "sphere" && c.dimension == 2, Errc::ConfigError,
              "control runs build their witness on a 2-sphere cap");
    }
  } else {
    fail(Errc::ConfigError, "unknown experiment '" + c.name + "'");
  }
  return c;
}

nlohmann::ordered_json experimentConfigToJson(const ExperimentConfig& c) {
  nlohmann::ordered_json j;
  j["name"] = c.name;
  j["space"] = c.spaceName;
  j["dimension"] = c.dimension;
  j["radius"] = c.radius;
  j["h"] = c.h;
  j["gridPoints"] = c.gridPoints;
  j["sweepPoints"] = c.sweepPoints;
  j["rMin"] = c.rMin;
  j["rMax"] = c.rMax;
  j["solverTol"] = c.solverTol;
  j["restarts"] = c.restarts;
  j["startAmplitude"] = c.startAmplitude;
  j["feasibilityTol"] = c.feasibilityTol;
  j["seed"] = c.seed;
  j["control"] = c.control;
  j["expectCrossing"] = c.expectCrossing;
  return j;
}

std::uint64_t experimentConfigHash(const ExperimentConfig& c) {
  Fnv1a64 f;
  f.str(c.name);
  f.str(c.spaceName);
  f.i32(c.dimension);
  f.f64(c.radius);
  f.f64(c.h);
  f.i32(c.gridPoints);
  f.i32(c.sweepPoints);
  f.f64(c.rMin);
  f.f64(c.rMax);
  f.f64(c.solverTol);
  f.i32(c.restarts);
  f.f64(c.startAmplitude);
  f.f64(c.feasibilityTol);
  f.u64(c.seed);
  f.u64(c.control ? 1 : 0);
  f.u64(c.expectCrossing ? 1 : 0);
  return f.value();
}

namespace {

struct CheckList {
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  bool allPass = true;

  void add(const std::string& name, bool pass, double value, double bound) {
    nlohmann::ordered_json c;
    c["name"] = name;
    c["pass"] = pass;
    c["value"] = value;
    c["bound"] = bound;
    rows.push_back(c);
    allPass = allPass && pass;
  }
};

void runRadiusScaling(const ExperimentConfig& cfg, nlohmann::ordered_json& report,
                      std::vector<std::vector<double>>& rows, CheckList& checks) {
  const BackgroundSpace space = spaceFromConfig(cfg.spaceName, cfg.dimension);
  const RadiusScalingReport rep =
      radiusScalingSweep(space, cfg.rMin, cfg.rMax, cfg.sweepPoints, cfg.gridPoints);
  report["result"] = radiusScalingReportToJson(rep);
  report["meshHash"] = rep.meshDigest;
  for (std::size_t i = 0; i < rep.rows.size(); ++i) {
    rows.push_back({rep.rows[i].parameter, rep.rows[i].value, rep.bigLambda1[i],
                    rep.rows[i].meshSize, rep.rows[i].residual});
  }

  checks.add("smallRadiusOperatorPositive", rep.bigLambda1.front() > 0.0, rep.bigLambda1.front(),
             0.0);
  if (cfg.spaceName == "euclidean") {
    checks.add("flatQuadraticScaling", std::abs(rep.fittedSlope + 2.0) <= kFlatSlopeTol,
               rep.fittedSlope, kFlatSlopeTol);
  }
  if (cfg.expectCrossing) {
    checks.add("crossingLocated", rep.hasCrossing, rep.hasCrossing ? 1.0 : 0.0, 1.0);
    if (cfg.spaceName == "sphere" && rep.hasCrossing) {
      checks.add("criticalRadiusAtHemisphere",
                 std::abs(rep.criticalRadius - kHalfPi) <= kCriticalRadiusTol, rep.criticalRadius,
                 kCriticalRadiusTol);
    }
  } else {
    checks.add("staysOneSigned", !rep.hasCrossing, rep.hasCrossing ? 1.0 : 0.0, 0.0);
  }
}

void runComplementDecay(const ExperimentConfig& cfg, nlohmann::ordered_json& report,
                        std::vector<std::vector<double>>& rows, CheckList& checks) {
  const ComplementSweepReport rep =
      complementEigenvalueSweep(cfg.rMin, cfg.rMax, cfg.sweepPoints, cfg.h, cfg.solverTol);
  report["result"] = complementSweepReportToJson(rep);
  report["meshHash"] = rep.meshDigest;
  for (std::size_t i = 0; i < rep.rows.size(); ++i) {
    rows.push_back({rep.rows[i].parameter, rep.rows[i].value, rep.rampQuotient[i],
                    rep.radialOracle[i], rep.rows[i].meshSize, rep.rows[i].residual});
  }

  bool monotone = true;
  double worstGap = std::numeric_limits<double>::max();
  for (std::size_t i = 0; i + 1 < rep.rows.size(); ++i) {
    const double gap = rep.rows[i + 1].value - rep.rows[i].value;
    monotone = monotone && gap > 0.0;
    worstGap = std::min(worstGap, gap);
  }
  checks.add("monotoneInRadius", monotone, worstGap, 0.0);

  bool anyInside = false;
  double maxInside = 0.0;
  for (const SweepRow& row : rep.rows) {
    if (row.parameter < kHalfPi - 1e-9) {
      maxInside = anyInside ? std::max(maxInside, row.value) : row.value;
      anyInside = true;
    }
  }
  checks.add("belowHemisphereValue", !anyInside || maxInside < 2.0, maxInside, 2.0);

  if (std::abs(rep.rows.back().parameter - kHalfPi) <= 1e-9) {
    checks.add("hemisphereEigenvalue",
               std::abs(rep.rows.back().value - 2.0) <= kHemisphereEigTol, rep.rows.back().value,
               kHemisphereEigTol);
  }

  bool belowRamp = true;
  double worstExcess = 0.0;
  double worstRel = 0.0;
  for (std::size_t i = 0; i < rep.rows.size(); ++i) {
    const double excess = rep.rows[i].value - rep.rampQuotient[i];
    belowRamp = belowRamp && excess <= 1e-9 * (1.0 + std::abs(rep.rampQuotient[i]));
    worstExcess = std::max(worstExcess, excess);
    worstRel = std::max(worstRel,
                        std::abs(rep.rows[i].value - rep.radialOracle[i]) / rep.radialOracle[i]);
  }
  checks.add("rampUpperBound", belowRamp, worstExcess, 0.0);
  checks.add("radialOracleAgreement", worstRel <= kOracleRelTol, worstRel, kOracleRelTol);
}

void runProductGrowth(const ExperimentConfig& cfg, nlohmann::ordered_json& report,
                      std::vector<std::vector<double>>& rows, CheckList& checks) {
  const ProductGrowthReport rep =
      productVolumeGrowthDemo(cfg.dimension, cfg.radius, cfg.gridPoints);
  report["result"] = productGrowthReportToJson(rep);
  report["meshHash"] = rep.meshDigest;
  for (const SweepRow& row : rep.rows) {
    rows.push_back({row.parameter, row.value, row.meshSize, row.residual});
  }

  const double threshold = 0.5 * rep.curvatureTerm;
  checks.add("quotientClearsThreshold", rep.rampQuotient < threshold, rep.rampQuotient, threshold);
  checks.add("eigenvalueBelowQuotient",
             rep.lambda1 <= rep.rampQuotient + kEigenCrossCheckSlack, rep.lambda1,
             rep.rampQuotient);
  checks.add("certificateNegative", rep.certifiedBound < -threshold, rep.certifiedBound,
             -threshold);
  checks.add("eigensolveWithinCertificate",
             rep.bigLambda1 <= rep.certifiedBound + kEigenCrossCheckSlack, rep.bigLambda1,
             rep.certifiedBound);
  bool decays = true;
  for (std::size_t i = 0; i + 1 < rep.rows.size(); ++i) {
    decays = decays && rep.rows[i + 1].value < rep.rows[i].value;
  }
  checks.add("quotientDecaysWithTruncation", decays, rep.rows.back().value,
             rep.rows.front().value);
}

void runRigiditySearch(const ExperimentConfig& cfg, nlohmann::ordered_json& report,
                       std::vector<std::vector<double>>& rows, CheckList& checks) {
  const BackgroundSpace space = spaceFromConfig(cfg.spaceName, cfg.dimension);
  RegionSpec region;
  region.shape = RegionShape::GeodesicBall;
  region.radius = cfg.radius;

  RigiditySearchConfig rc;
  rc.restarts = cfg.restarts;
  rc.startAmplitude = cfg.startAmplitude;
  rc.feasibilityTol = cfg.feasibilityTol;
  rc.solverTol = cfg.solverTol;
  rc.seed = cfg.seed;
  rc.control = cfg.control;

  RigidityReport rep;
  if (cfg.control) {
    DeformationBudgets budgets;
    budgets.h = cfg.h;
    budgets.solverTol = cfg.solverTol;
    const DeformationReport dep = buildDeformation(space, region, Sign::Plus, budgets);
    report["deformation"] = deformationReportToJson(dep);
    rc.warmStart = &dep.omegaFactor;
    rc.warmStartSlack = dep.achievedDelta + kCollarRoundoff * std::max(1.0, std::abs(space.scalarCurvature()));
    rc.knownBigLambda1 = dep.bigLambda1Omega;
    rep = rigiditySearch(*dep.omegaMesh, rc);
  } else {
    const DiscreteDomain mesh = buildDomain(space, region, cfg.h);
    rep = rigiditySearch(mesh, rc);
  }
  report["result"] = rigidityReportToJson(rep);
  report["meshHash"] = rep.domainHash;
  for (const RestartRow& row : rep.restartRows) {
    rows.push_back({static_cast<double>(row.restart), row.mass, row.deficit, row.distance,
                    static_cast<double>(row.iterations)});
  }

  if (cfg.control) {
    checks.add("witnessFeasibleNontrivial", rep.nontrivialFeasible,
               rep.nontrivialFeasible ? 1.0 : 0.0, 1.0);
    checks.add("witnessMassVanishes", std::abs(rep.warmStartMass) <= kWitnessMassTol,
               rep.warmStartMass, kWitnessMassTol);
    checks.add("witnessMovesTheMetric", rep.warmStartDistance > 0.0, rep.warmStartDistance, 0.0);
  } else {
    checks.add("operatorEigenvaluePositive", rep.bigLambda1 > 0.0, rep.bigLambda1, 0.0);
    checks.add("noFeasibleNegativeMass", rep.bestObjective >= kMassFloor, rep.bestObjective,
               kMassFloor);
    checks.add("bestPointCollapsesToIdentity",
               rep.finalFactorDistanceFromIdentity < kIdentityDistanceTol,
               rep.finalFactorDistanceFromIdentity, kIdentityDistanceTol);
  }
}

std::vector<std::string> csvHeaderFor(const std::string& name) {
  if (name == "radius-scaling") return {"radius", "lambda1", "bigLambda1", "h", "residual"};
  if (name == "complement-decay")
    return {"radius", "lambda1", "rampQuotient", "radialOracle", "h", "residual"};
  if (name == "product-growth") return {"truncation", "rampQuotient", "h", "residual"};
  return {"restart", "mass", "deficit", "distance", "iterations"};
}

nlohmann::ordered_json errorJson(const char* code, const std::string& what) {
  nlohmann::ordered_json err;
  err["code"] = code;
  err["what"] = what;
  return err;
}

}  // namespace

int runExperiment(const ExperimentConfig& cfg, const std::string& outDir) {
  namespace fs = std::filesystem;
  nlohmann::ordered_json report;
  report["experiment"] = cfg.name;
  report["config"] = experimentConfigToJson(cfg);
  report["configHash"] = experimentConfigHash(cfg);
  report["seed"] = cfg.seed;

  const std::vector<std::string> header = csvHeaderFor(cfg.name);
  std::vector<std::vector<double>> rows;
  CheckList checks;
  int code = 0;
  try {
    if (cfg.name == "radius-scaling") {
      runRadiusScaling(cfg, report, rows, checks);
    } else if (cfg.name == "complement-decay") {
      runComplementDecay(cfg, report, rows, checks);
    } else if (cfg.name == "product-growth") {
      runProductGrowth(cfg, report, rows, checks);
    } else if (cfg.name == "rigidity-search") {
      runRigiditySearch(cfg, report, rows, checks);
    } else {
      fail(Errc::ConfigError, "unknown experiment '" + cfg.name + "'");
    }
    report["checks"] = checks.rows;
    code = checks.allPass ? 0 : 1;
  } catch (const Error& e) {
    report["checks"] = checks.rows;
    report["error"] = errorJson(errcName(e.code()), e.what());
    code = exitCodeFor(e.code());
  } catch (const std::exception& e) {
    report["checks"] = checks.rows;
    report["error"] = errorJson(errcName(Errc::InvariantViolation), e.what());
    code = exitCodeFor(Errc::InvariantViolation);
  }

  try {
    fs::create_directories(fs::path(outDir));
    writeJsonFile(report, (fs::path(outDir) / "report.json").string());
    writeCsv((fs::path(outDir) / "rows.csv").string(), header, rows);
  } catch (const std::exception&) {
    if (code == 0) code = exitCodeFor(Errc::IoError);
  }
  return code;
}

int runExperiment(const std::string& configPath, const std::string& outDir) {
  namespace fs = std::filesystem;
  ExperimentConfig cfg;
  try {
    cfg = experimentConfigFromJson(readJsonFile(configPath));
  } catch (const std::exception& e) {
    nlohmann::ordered_json report;
    report["configPath"] = configPath;
    report["error"] = errorJson(errcName(Errc::ConfigError), e.what());
    try {
      fs::create_directories(fs::path(outDir));
      writeJsonFile(report, (fs::path(outDir) / "report.json").string());
    } catch (const std::exception&) {
    }
    return exitCodeFor(Errc::ConfigError);
  }
  return runExperiment(cfg, outDir);
}

}  // namespace crl
