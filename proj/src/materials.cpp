#include "cadloop/materials.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "cadloop/embedded_data.hpp"
#include "cadloop/error.hpp"

namespace cadloop {

using nlohmann::json;

void validate(const MaterialProps& p) {
  auto fail = [&](const char* what) {
    throw Error(ErrorCode::kParse, "material '" + p.name + "': " + what);
  };
  if (p.name.empty()) fail("empty name");
  if (!(p.young_modulus > 0.0) || !std::isfinite(p.young_modulus)) fail("E must be > 0");
  if (!(p.poisson_ratio > 0.0 && p.poisson_ratio < 0.5)) fail("nu must lie in (0, 0.5)");
  if (!(p.density > 0.0) || !std::isfinite(p.density)) fail("density must be > 0");
  if (!(p.unit_price >= 0.0) || !std::isfinite(p.unit_price)) fail("price must be >= 0");
  if (!(p.allowable_stress > 0.0) || !std::isfinite(p.allowable_stress)) {
    fail("allowable stress must be > 0");
  }
}

MaterialLibrary::MaterialLibrary(std::vector<MaterialProps> materials)
    : materials_(std::move(materials)) {
  for (std::size_t i = 0; i < materials_.size(); ++i) {
    validate(materials_[i]);
    if (!index_.emplace(materials_[i].name, i).second) {
      throw Error(ErrorCode::kParse, "duplicate material name '" + materials_[i].name + "'");
    }
  }
}

MaterialLibrary MaterialLibrary::from_json(const json& records) {
  if (!records.is_array()) {
    throw Error(ErrorCode::kParse, "material library must be a JSON array");
  }
  std::vector<MaterialProps> out;
  out.reserve(records.size());
  try {
    for (const auto& r : records) {
      MaterialProps p;
      p.name = r.at("name").get<std::string>();
      p.young_modulus = r.at("E_mpa").get<double>();
      p.poisson_ratio = r.at("nu").get<double>();
      p.density = r.at("rho_kg_m3").get<double>();
      p.unit_price = r.at("price_per_kg").get<double>();
      p.allowable_stress = r.at("sigma_allow_mpa").get<double>();
      out.push_back(std::move(p));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParse, std::string("material library: ") + e.what());
  }
  return MaterialLibrary(std::move(out));
}

MaterialLibrary MaterialLibrary::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open material library '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParse, "material library '" + path + "': " + e.what());
  }
  return from_json(j);
}

const MaterialLibrary& MaterialLibrary::default_library() {
  static const MaterialLibrary lib = from_json(json::parse(embedded::kMaterialsJson));
  return lib;
}

const MaterialProps* MaterialLibrary::find(std::string_view name) const noexcept {
  auto it = index_.find(std::string(name));
  return it == index_.end() ? nullptr : &materials_[it->second];
}

const MaterialProps& MaterialLibrary::lookup(std::string_view name) const {
  if (const auto* p = find(name)) return *p;
  throw Error(ErrorCode::kUnknownMaterial, "unknown material '" + std::string(name) + "'");
}

std::vector<std::string> MaterialLibrary::list_materials() const {
  std::vector<std::string> names;
  names.reserve(materials_.size());
  for (const auto& m : materials_) names.push_back(m.name);
  return names;
}

json MaterialLibrary::to_json() const {
  json arr = json::array();
  for (const auto& m : materials_) {
    arr.push_back({{"name", m.name},
                   {"E_mpa", m.young_modulus},
                   {"nu", m.poisson_ratio},
                   {"rho_kg_m3", m.density},
                   {"price_per_kg", m.unit_price},
                   {"sigma_allow_mpa", m.allowable_stress}});
  }
  return arr;
}

}  // namespace cadloop
