#include "cadloop/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "cadloop/error.hpp"

namespace cadloop {

double displacement_max(std::span<const Vec3> displacements) {
  if (displacements.empty()) throw Error(ErrorCode::kEmptyField, "no nodal displacements");
  double m = 0.0;
  for (const auto& u : displacements) {
    m = std::max(m, std::sqrt(u[0] * u[0] + u[1] * u[1] + u[2] * u[2]));
  }
  return m;
}

double displacement_max(const ResultField& result) {
  if (!result.converged) throw Error(ErrorCode::kEmptyField, "result field did not converge");
  return displacement_max(std::span<const Vec3>(result.nodal_displacements));
}

double von_mises(const StressTensor& s) {
  const double dxy = s[0] - s[1], dyz = s[1] - s[2], dzx = s[2] - s[0];
  const double normal = dxy * dxy + dyz * dyz + dzx * dzx;
  const double shear = s[3] * s[3] + s[4] * s[4] + s[5] * s[5];
  return std::sqrt(0.5 * normal + 3.0 * shear);
}

double stress_max(std::span<const StressTensor> stresses) {
  if (stresses.empty()) throw Error(ErrorCode::kEmptyField, "no stress evaluation points");
  double m = 0.0;
  for (const auto& s : stresses) m = std::max(m, von_mises(s));
  return m;
}

double stress_max(const ResultField& result) {
  if (!result.converged) throw Error(ErrorCode::kEmptyField, "result field did not converge");
  return stress_max(std::span<const StressTensor>(result.stress_tensors));
}

CostBreakdown cost_breakdown(double volume_mm3, const MaterialProps& material) {
  CostBreakdown c;
  // Products are formed in mm^3 and divided once by 1e9 so that decimal
  // inputs round once (0.001 m^3 of A105 costs exactly 47.4).
  c.volume_m3 = volume_mm3 / 1e9;
  c.mass_kg = material.density * volume_mm3 / 1e9;
  c.cost = material.density * material.unit_price * volume_mm3 / 1e9;
  return c;
}

Feasibility check_feasibility(const MetricTriple& t, const TaskInstance& task,
                              const MaterialProps& material) {
  return {t.u_max <= task.delta_mm, t.sigma_max <= stress_bound(task, material),
          t.cost <= task.kappa};
}

}  // namespace cadloop
