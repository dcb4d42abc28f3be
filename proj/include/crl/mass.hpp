#pragma once

#include <Eigen/Dense>
#include <cstdint>

#include "crl/conformal.hpp"
#include "crl/domain.hpp"
#include "crl/mesh_io.hpp"

namespace crl {

struct MassReport {
  double value = 0.0;                       // integral of (Hbar - H_g) dsigma
  Eigen::VectorXd boundaryIntegrandSamples; // Hbar - H_g per boundary vertex
  double boundaryMeasureTotal = 0.0;
  std::uint64_t domainHash = 0;
};

/// Brown-York mass of the conformal metric relative to the background,
/// m = int_{boundary} (Hbar - H_g) dsigma. Requires the factor to restrict
/// to the identity on the boundary (so the two metrics agree there); the
/// quadrature value is cross-checked against the equivalent normal-derivative
/// form -(2(n-1)/(n-2)) int d_nu u dsigma (n = 2: -2 int d_nu u dsigma).
MassReport brownYorkMass(const ConformalFactor& cf, const DiscreteDomain& d,
                         const BoundaryData& bd);

nlohmann::ordered_json massReportToJson(const MassReport& report);

}  // namespace crl
