#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "crl/domain.hpp"

namespace crl {

// Meshes serialize to JSON with 0-based indices. Readers rebuild the domain,
// re-run finalization, and reject files whose recorded boundary or hash does
// not match what the rebuilt mesh produces.
nlohmann::ordered_json meshToJson(const DiscreteDomain& d);
DiscreteDomain meshFromJson(const nlohmann::ordered_json& j);
void writeMesh(const DiscreteDomain& d, const std::string& path);
DiscreteDomain readMesh(const std::string& path);

// Fields carry the hash of the domain they live on.
nlohmann::ordered_json fieldToJson(const ScalarField& f);
ScalarField fieldFromJson(const nlohmann::ordered_json& j, const DiscreteDomain& domain);
void writeField(const ScalarField& f, const std::string& path);
ScalarField readField(const std::string& path, const DiscreteDomain& domain);

std::string formatG17(double x);
void writeCsv(const std::string& path, const std::vector<std::string>& header,
              const std::vector<std::vector<double>>& rows);

void writeJsonFile(const nlohmann::ordered_json& j, const std::string& path);
nlohmann::ordered_json readJsonFile(const std::string& path);

}  // namespace crl
