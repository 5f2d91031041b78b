#pragma once

// The geometry -> FEM -> metrics pipeline run end to end in-process.

#include <string>

#include "cadloop/fem.hpp"
#include "cadloop/geometry.hpp"
#include "cadloop/materials.hpp"
#include "cadloop/metrics.hpp"

namespace cadloop {

struct ToolchainConfig {
  int mesh_density = 2;
  SolverOptions solver;
};

// A design state: geometric parameters plus a material choice.
struct DesignProposal {
  ParamVector params;
  std::string material;

  bool operator==(const DesignProposal&) const = default;
};

// Runs generate_solid, solve_static and the metric extraction once.
// Propagates geometry, meshing and solver errors.
MetricTriple evaluate_design(const std::string& category_id, const DesignProposal& design,
                             const SimSettings& settings, const MaterialLibrary& library,
                             const ToolchainConfig& config);

}  // namespace cadloop
