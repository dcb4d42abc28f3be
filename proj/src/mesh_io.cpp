#include "crl/mesh_io.hpp"

#include <cstdio>
#include <fstream>

#include "crl/errors.hpp"
#include "crl/hash.hpp"

namespace crl {

namespace {

BackgroundSpace spaceFromJson(const nlohmann::ordered_json& j) {
  const std::string name = j.at("space").get<std::string>();
  const int n = j.at("n").get<int>();
  if (name == "euclidean") return BackgroundSpace::euclidean(n);
  if (name == "sphere") return BackgroundSpace::sphere(n);
  if (name == "hyperbolic") return BackgroundSpace::hyperbolic(n);
  if (name == "product_sphere_cylinder")
    return BackgroundSpace::productSphereCylinder(j.at("sphereFactorDim").get<int>());
  fail(Errc::ConfigError, "unknown space name '" + name + "'");
}

}  // namespace

nlohmann::ordered_json meshToJson(const DiscreteDomain& d) {
  require(d.finalized, Errc::InvariantViolation, "cannot serialize an unfinalized mesh");
  nlohmann::ordered_json j;
  j["space"] = d.space.name();
  j["n"] = d.space.dim;
  j["dimension"] = d.dimension;
  auto& vs = j["vertices"] = nlohmann::ordered_json::array();
  for (const auto& v : d.vertices) vs.push_back({v(0), v(1), v(2)});
  auto& cs = j["cells"] = nlohmann::ordered_json::array();
  for (const auto& c : d.cells) {
    if (d.dimension == 1) cs.push_back({c[0], c[1]});
    else cs.push_back({c[0], c[1], c[2]});
  }
  j["boundary"] = d.boundary;
  j["h"] = d.h;
  if (d.space.kind == SpaceKind::ProductSphereCylinder)
    j["sphereFactorDim"] = d.space.sphereFactorDim;
  if (d.dimension == 1) j["radialNeumannCenter"] = d.radialNeumannCenter;
  j["hash"] = hashHex(d.hash);
  return j;
}

DiscreteDomain meshFromJson(const nlohmann::ordered_json& j) {
  DiscreteDomain d;
  d.space = spaceFromJson(j);
  d.dimension = j.at("dimension").get<int>();
  require(d.dimension == 1 || d.dimension == 2, Errc::ConfigError, "mesh dimension must be 1 or 2");
  if (d.dimension == 1 && j.contains("radialNeumannCenter"))
    d.radialNeumannCenter = j.at("radialNeumannCenter").get<bool>();
  for (const auto& v : j.at("vertices")) {
    require(v.size() == 3, Errc::ConfigError, "vertex entries carry three coordinates");
    d.vertices.push_back({v[0].get<double>(), v[1].get<double>(), v[2].get<double>()});
  }
  const size_t nvc = d.dimension == 1 ? 2 : 3;
  for (const auto& c : j.at("cells")) {
    require(c.size() == nvc, Errc::ConfigError, "cell arity does not match mesh dimension");
    std::array<int, 3> cell{-1, -1, -1};
    for (size_t k = 0; k < nvc; ++k) {
      cell[k] = c[k].get<int>();
      require(cell[k] >= 0 && cell[k] < d.vertexCount(), Errc::ConfigError,
              "cell index out of range");
    }
    d.cells.push_back(cell);
  }
  finalizeDomain(d);
  if (j.contains("boundary")) {
    const auto stored = j.at("boundary").get<std::vector<int>>();
    require(stored == d.boundary, Errc::ConfigError,
            "stored boundary disagrees with the rebuilt mesh");
  }
  if (j.contains("hash")) {
    require(j.at("hash").get<std::string>() == hashHex(d.hash), Errc::ConfigError,
            "stored hash disagrees with the rebuilt mesh");
  }
  return d;
}

void writeMesh(const DiscreteDomain& d, const std::string& path) {
  writeJsonFile(meshToJson(d), path);
}

DiscreteDomain readMesh(const std::string& path) { return meshFromJson(readJsonFile(path)); }

nlohmann::ordered_json fieldToJson(const ScalarField& f) {
  require(f.domain != nullptr && f.domain->finalized, Errc::InvariantViolation,
          "field has no finalized domain");
  nlohmann::ordered_json j;
  j["domainHash"] = hashHex(f.domain->hash);
  j["values"] = std::vector<double>(f.values.data(), f.values.data() + f.values.size());
  return j;
}

ScalarField fieldFromJson(const nlohmann::ordered_json& j, const DiscreteDomain& domain) {
  require(domain.finalized, Errc::InvariantViolation, "field target domain not finalized");
  require(j.at("domainHash").get<std::string>() == hashHex(domain.hash), Errc::ConfigError,
          "field was recorded on a different mesh");
  const auto values = j.at("values").get<std::vector<double>>();
  require(static_cast<int>(values.size()) == domain.vertexCount(), Errc::ConfigError,
          "field length does not match the mesh");
  ScalarField f{&domain, Eigen::Map<const Eigen::VectorXd>(values.data(), values.size())};
  return f;
}

void writeField(const ScalarField& f, const std::string& path) {
  writeJsonFile(fieldToJson(f), path);
}

ScalarField readField(const std::string& path, const DiscreteDomain& domain) {
  return fieldFromJson(readJsonFile(path), domain);
}

std::string formatG17(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

void writeCsv(const std::string& path, const std::vector<std::string>& header,
              const std::vector<std::vector<double>>& rows) {
  std::ofstream out(path);
  require(out.good(), Errc::IoError, "cannot open '" + path + "' for writing");
  for (size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
  out << "\n";
  for (const auto& row : rows) {
    require(row.size() == header.size(), Errc::InvariantViolation, "csv row width mismatch");
    for (size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << formatG17(row[i]);
    out << "\n";
  }
  require(out.good(), Errc::IoError, "failed while writing '" + path + "'");
}

void writeJsonFile(const nlohmann::ordered_json& j, const std::string& path) {
  std::ofstream out(path);
  require(out.good(), Errc::IoError, "cannot open '" + path + "' for writing");
  out << j.dump(2) << "\n";
  require(out.good(), Errc::IoError, "failed while writing '" + path + "'");
}

nlohmann::ordered_json readJsonFile(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), Errc::IoError, "cannot open '" + path + "'");
  nlohmann::ordered_json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    fail(Errc::ConfigError, std::string("invalid JSON in '") + path + "': " + e.what());
  }
  return j;
}

}  // namespace crl
