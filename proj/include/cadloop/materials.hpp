#pragma once

#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "json.hpp"

namespace cadloop {

// Linear-elastic isotropic material with cost data. Units: MPa, kg/m^3,
// currency units per kg.
struct MaterialProps {
  std::string name;
  double young_modulus = 0.0;
  double poisson_ratio = 0.0;
  double density = 0.0;
  double unit_price = 0.0;
  double allowable_stress = 0.0;
};

void validate(const MaterialProps& props);

// Immutable, ordered collection of materials keyed by unique name.
class MaterialLibrary {
 public:
  MaterialLibrary() = default;
  explicit MaterialLibrary(std::vector<MaterialProps> materials);

  // Parses the library file format: a JSON array of records with fields
  // name, E_mpa, nu, rho_kg_m3, price_per_kg, sigma_allow_mpa.
  static MaterialLibrary from_json(const nlohmann::json& records);
  static MaterialLibrary from_file(const std::string& path);

  // The five-material library shipped in data/materials.json.
  static const MaterialLibrary& default_library();

  const MaterialProps& lookup(std::string_view name) const;
  const MaterialProps* find(std::string_view name) const noexcept;
  std::vector<std::string> list_materials() const;

  const std::vector<MaterialProps>& materials() const noexcept { return materials_; }
  bool empty() const noexcept { return materials_.empty(); }
  std::size_t size() const noexcept { return materials_.size(); }

  nlohmann::json to_json() const;

 private:
  std::vector<MaterialProps> materials_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace cadloop
