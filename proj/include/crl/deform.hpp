#pragma once

#include <Eigen/Dense>
#include <memory>
#include <vector>

#include <nlohmann/json.hpp>

#include "crl/conformal.hpp"
#include "crl/domain.hpp"
#include "crl/mesh_build.hpp"
#include "crl/spectral.hpp"

namespace crl {

/// Orientation of a compactly supported curvature deformation: Plus pushes
/// the scalar curvature up inside the core, Minus pushes it down.
enum class Sign { Plus, Minus };
const char* signName(Sign s);

/// Collar factors w+ = 1 - exp(-1/phi) and w- = 1 + exp(-1/phi) built from
/// the first Dirichlet eigenfunction phi of the Laplacian on Omega. Both
/// extend by 1 across the boundary; the core threshold epsilon marks the
/// level {phi = epsilon} the construction glues along.
struct CollarMetricPair {
  ScalarField wPlus;   // metric factor, not the convention field
  ScalarField wMinus;
  double epsilon = 0.0;
  double subharmonicityMargin = 0.0;
};

/// Pointwise certificate that exp(-1/phi) is subharmonic where phi <= 2 eps:
/// |grad phi|^2 (1 - 2 phi) - lambda1 phi^3 per vertex, which carries the
/// sign of Delta exp(-1/phi) once Delta phi = -lambda1 phi.
Eigen::VectorXd collarMarginField(const DiscreteDomain& omega, const ScalarField& phi,
                                  double lambda1);

/// Chooses the largest epsilon in {2^-k} whose collar margin is nonnegative
/// and whose core {phi > epsilon} still has a negative first eigenvalue of
/// -Delta - R/(n-1), then builds the collar pair. Fails with NoValidEpsilon
/// when the grid is exhausted.
CollarMetricPair buildCollarMetrics(const DiscreteDomain& omega, const ScalarField& phi,
                                    double lambda1);

/// Seam data consumed by the perturbation search and the matching step:
/// the core threshold, the ambient mesh size governing the strict margin
/// floor, and the collar-side outward slope of phi per core boundary vertex.
struct MatchingContext {
  double epsilon = 0.0;
  double ambientH = 0.0;
  Eigen::VectorXd minusDnuPhiOuter;  // -(d_nu phi), ordered as the core boundary
};

/// Perturbation factor data on the core: u_t = 1 + t phi_sign with
/// phi_plus = -psi, phi_minus = +psi for the positive first eigenfunction
/// psi of -Delta - R/(n-1) on the core.
struct PerturbationSpec {
  double t = 0.0;
  ScalarField psi;
  Sign sign = Sign::Plus;
  double eigenvalue = 0.0;   // first eigenvalue of the core, certified < 0
  double residual = 0.0;
  double tLow = 0.0;         // admissible window found by the search
  double tHigh = 0.0;
};

/// Oriented curvature margins of the matched core metric with factor
/// c (1 + t phi_sign): min/max over interior vertices of s (R_g - R_bar)
/// where s = +1 for Plus and -1 for Minus, so positive values are good for
/// either sign. matchConstant = 1 probes the raw, unmatched metric.
struct MarginProbe {
  double minMargin = 0.0;
  double maxMargin = 0.0;
};
MarginProbe perturbationMargins(const DiscreteDomain& core, const ScalarField& psi, Sign sign,
                                double t, double matchConstant);

/// Matching multiplier c = 1 -+ exp(-1/epsilon) applied to the core factor.
double matchingConstant(Sign sign, double epsilon);

/// Mesh-scale floor certifying strict curvature inequalities: 10 h^2 scale.
double strictMarginFloor(double h, double curvatureScale);

/// Selects the deformation amplitude t: a deterministic search over the
/// window whose lower end is forced by the seam slope ordering and whose
/// upper end keeps u_t > 1/2 and the matched discrete curvature margin
/// positive at every interior core vertex. Within the window the reported
/// t sits just above the seam threshold, keeping the inner and outer seam
/// slopes close so the later blend disturbs curvature least. Fails with
/// EmptyTWindow when the window is empty.
PerturbationSpec buildPerturbation(const DiscreteDomain& core, const SpectralResult& psi,
                                   Sign sign, double tMax, const MatchingContext& ctx);

/// Applies the matching multiplier and asserts the strict seam-slope
/// ordering t (-d_nu psi) > (exp(-1/eps) / (eps^2 c)) (-d_nu phi) at every
/// core boundary vertex; this is the discrete form of the mean-curvature
/// comparison that makes the glued metric's distributional curvature
/// favourable. Fails with MeanCurvatureOrderingFailed otherwise.
ConformalFactor applyMatching(const PerturbationSpec& pert, const DiscreteDomain& core,
                              const MatchingContext& ctx);

/// C^2 cutoff profile 6 s^5 - 15 s^4 + 10 s^3 clamped to [0, 1].
double cutoffProfile(double s);

struct GlueSpec {
  double collarWidth = 0.0;  // blend band width in background distance units
  int cutoffOrder = 5;       // only the quintic keeps C^2 ends
  double deltaBudget = 0.0;  // admissible curvature dip introduced by blending
};

struct GlueResult {
  ConformalFactor factor;
  double achievedDelta = 0.0;
  double collarWidth = 0.0;   // final width after halvings
  std::vector<char> band;     // vertices whose value was blended
};

/// Blends the convention fields of two factors on a common mesh across the
/// band {|phi - epsilon| < halfwidth} using the quintic profile of the
/// phi-coordinate. Vertices outside the band, and vertices where the two
/// fields agree bitwise, copy their input unchanged. achievedDelta measures
/// the oriented curvature dip of the blend against both inputs over the
/// band; the width is halved (up to 6 times) until the dip fits the budget,
/// else DeltaBudgetExceeded.
GlueResult glue(const ConformalFactor& inner, const ConformalFactor& outer, Sign sign,
                const GlueSpec& spec, const ScalarField& phi, double epsilon);

struct DeformationBudgets {
  double h = 0.02;                  // target mesh size (2-D regions)
  int gridPoints = 2048;            // 1-D radial grids
  double tMax = 0.45;
  double collarWidth = 0.0;         // 0: auto from epsilon and the seam slope
  double deltaBudgetFraction = 0.1; // of the minimal interior margin
  int epsilonMaxExponent = 12;      // search grid {2^-1 ... 2^-kmax}
  double solverTol = 1e-8;
};

struct CurvatureMargins {
  double insideMin = 0.0, insideMax = 0.0;   // core interior {phi > eps}
  double collarMin = 0.0, collarMax = 0.0;   // 0 < phi <= eps
  double outsideMin = 0.0, outsideMax = 0.0; // phi = 0
};

struct DeformationReport {
  Sign sign = Sign::Plus;
  std::shared_ptr<const DiscreteDomain> mesh;  // ambient mesh with both seams embedded
  ConformalFactor factor;                      // identity outside Omega by construction
  double supportCertificate = 0.0;  // max |factor - identity| outside Omega (must be 0)
  CurvatureMargins margins;         // of R_g - R_bar per region
  double achievedDelta = 0.0;
  double brownYorkMass = 0.0;
  double epsilon = 0.0;
  double t = 0.0;
  double collarWidth = 0.0;
  double lambda1Omega = 0.0;          // Laplacian eigenvalue on Omega
  double bigLambda1Omega = 0.0;       // -Delta - R/(n-1) eigenvalue on Omega
  double bigLambda1Core = 0.0;        // same on the core {phi > eps}
  double subharmonicityMargin = 0.0;
  double strictFloor = 0.0;           // 10 h^2 scale used for the inside margins
  double supDeformation = 0.0;        // max |metric factor - 1|
  double h = 0.0;
  std::uint64_t meshHash = 0;

  // Omega restriction for mass checks and warm starts.
  std::shared_ptr<const DiscreteDomain> omegaMesh;
  ConformalFactor omegaFactor;
  std::vector<int> omegaToMesh;
};

/// Shared sign-independent pipeline state: ambient mesh with the boundary
/// circle and the core seam embedded, the two eigenpairs, the collar pair
/// and the seam slopes. Build once, complete per sign.
struct DeformationContext;

std::shared_ptr<const DeformationContext> prepareDeformation(const BackgroundSpace& space,
                                                             const RegionSpec& region,
                                                             const DeformationBudgets& budgets);

DeformationReport completeDeformation(const DeformationContext& ctx, Sign sign,
                                      const DeformationBudgets& budgets);

/// Full pipeline: mesh the region inside its ambient manifold, certify
/// Lambda_1(Omega) < 0, build the collar pair, select the amplitude, match,
/// glue and verify. The report's factor is supported in Omega with the
/// curvature pushed strictly up (Plus) or down (Minus) on the core.
DeformationReport buildDeformation(const BackgroundSpace& space, const RegionSpec& region,
                                   Sign sign, const DeformationBudgets& budgets);

nlohmann::ordered_json deformationReportToJson(const DeformationReport& r);

}  // namespace crl
