#pragma once

#include <span>

#include "cadloop/fem.hpp"
#include "cadloop/materials.hpp"
#include "cadloop/task.hpp"

namespace cadloop {

// (u_max [mm], sigma_max [MPa], cost [currency units])
struct MetricTriple {
  double u_max = 0.0;
  double sigma_max = 0.0;
  double cost = 0.0;

  bool operator==(const MetricTriple&) const = default;
};

struct Feasibility {
  bool displacement = false;
  bool stress = false;
  bool cost = false;

  bool all() const { return displacement && stress && cost; }
  int count() const { return int(displacement) + int(stress) + int(cost); }
};

inline double mm_to_um(double mm) { return mm * 1000.0; }

// max_i |u_i|; throws kEmptyField on an empty or unconverged field.
double displacement_max(std::span<const Vec3> displacements);
double displacement_max(const ResultField& result);

double von_mises(const StressTensor& s);

double stress_max(std::span<const StressTensor> stresses);
double stress_max(const ResultField& result);

struct CostBreakdown {
  double volume_m3 = 0.0;
  double mass_kg = 0.0;
  double cost = 0.0;
};

CostBreakdown cost_breakdown(double volume_mm3, const MaterialProps& material);
inline double cost(double volume_mm3, const MaterialProps& material) {
  return cost_breakdown(volume_mm3, material).cost;
}

inline double stress_bound(const TaskInstance& task, const MaterialProps& material) {
  return task.stress_scale * material.allowable_stress;
}

// Inclusive comparisons against delta, the scaled allowable stress and kappa.
Feasibility check_feasibility(const MetricTriple& triple, const TaskInstance& task,
                              const MaterialProps& material);

}  // namespace cadloop
