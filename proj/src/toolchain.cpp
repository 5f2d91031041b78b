#include "cadloop/toolchain.hpp"

namespace cadloop {

MetricTriple evaluate_design(const std::string& category_id, const DesignProposal& design,
                             const SimSettings& settings, const MaterialLibrary& library,
                             const ToolchainConfig& config) {
  const MaterialProps& material = library.lookup(design.material);
  const SolidModel solid = generate_solid(category_id, design.params, config.mesh_density);
  const ResultField result = solve_static(solid, material, settings, config.solver);
  return {displacement_max(result), stress_max(result), cost(solid_volume(solid), material)};
}

}  // namespace cadloop
