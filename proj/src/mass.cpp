#include "crl/mass.hpp"

#include <cmath>

#include "crl/errors.hpp"

namespace crl {

MassReport brownYorkMass(const ConformalFactor& cf, const DiscreteDomain& d,
                         const BoundaryData& bd) {
  checkFactor(cf);
  require(cf.u.domain == &d, Errc::ConfigError,
          "conformal factor lives on a different domain");
  require(bd.vertices == d.boundary, Errc::ConfigError,
          "boundary data does not belong to this domain");

  const Eigen::VectorXd hg = meanCurvature(cf, bd);

  MassReport report;
  report.boundaryIntegrandSamples = bd.backgroundMeanCurvature - hg;
  report.boundaryMeasureTotal = bd.weights.sum();
  report.domainHash = d.hash;
  report.value = bd.weights.dot(report.boundaryIntegrandSamples);

  // the same integral in terms of the normal derivative of the factor
  const int n = cf.ambientDim;
  const double coef = n == 2 ? 2.0 : 2.0 * (n - 1) / (n - 2);
  const double viaNormal = -coef * bd.weights.dot(bd.normalDerivative);
  const double scale =
      std::max(1.0, bd.weights.dot(bd.normalDerivative.cwiseAbs()) * coef);
  require(std::abs(report.value - viaNormal) <= 1e-10 * scale, Errc::InvariantViolation,
          "boundary-integral forms of the mass disagree");
  return report;
}

nlohmann::ordered_json massReportToJson(const MassReport& report) {
  nlohmann::ordered_json j;
  j["value"] = report.value;
  j["boundaryIntegrandSamples"] = std::vector<double>(
      report.boundaryIntegrandSamples.begin(), report.boundaryIntegrandSamples.end());
  j["boundaryMeasureTotal"] = report.boundaryMeasureTotal;
  j["domainHash"] = report.domainHash;
  return j;
}

}  // namespace crl
