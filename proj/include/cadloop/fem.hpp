#pragma once

// Small-strain isotropic linear elasticity on trilinear hexahedra.
// Units: mm, N, MPa.

#include <array>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "cadloop/geometry.hpp"
#include "cadloop/materials.hpp"

namespace cadloop {

using StressTensor = std::array<double, 6>;  // xx, yy, zz, xy, yz, zx
using SparseMatrix = Eigen::SparseMatrix<double>;

struct SimSettings {
  // Uniform pressure on faces matched by load anchors; positive pushes along
  // the inward normal.
  double pressure_mpa = 0.0;
  // Faces matched by anchors with these roles are fully clamped.
  std::set<AnchorRole> fixed_roles{AnchorRole::kFixed};
};

struct SolverOptions {
  double relative_tolerance = 1e-8;
  // <= 0 selects 20 * sqrt(free dofs) + 1000.
  int max_iterations = 0;
  // <= 0 selects 1e-6 * bounding-box diagonal.
  double epsilon = 0.0;
};

struct ResultField {
  std::vector<Vec3> nodal_displacements;
  std::vector<StressTensor> stress_tensors;  // per element, per Gauss point
  std::string solver_log;
  bool converged = false;
  int iterations = 0;
  double relative_residual = 0.0;
};

int default_iteration_cap(std::size_t free_dofs);
double default_epsilon(const SolidModel& solid);

// Euclidean distance from q to the closest point of a boundary quad, taken
// over its two triangles (exact for planar quads).
double point_face_distance(const Vec3& q, const Mesh& mesh, const BoundaryFace& face);

// Indices into solid.boundary_faces selected by the anchors of `role`,
// expanded to the whole template face (same tag, edge-contiguous).
// Throws kNoFaceMatched when no anchor of that role is within epsilon.
std::vector<int> match_faces(const SolidModel& solid, AnchorRole role, double epsilon);

Eigen::Matrix<double, 6, 6> elasticity_matrix(double young_modulus, double poisson_ratio);

// Unconstrained global stiffness, 3 dofs per node (x, y, z interleaved).
SparseMatrix assemble_stiffness(const Mesh& mesh, const MaterialProps& material);

// Consistent nodal forces of a uniform pressure on the given faces.
Eigen::VectorXd pressure_load(const Mesh& mesh, const std::vector<BoundaryFace>& faces,
                              double pressure_mpa);

// Consistent nodal forces of a constant traction vector (MPa) on the faces.
Eigen::VectorXd traction_load(const Mesh& mesh, const std::vector<BoundaryFace>& faces,
                              const Vec3& traction);

struct PcgResult {
  Eigen::VectorXd x;
  int iterations = 0;
  double relative_residual = 0.0;
  bool converged = false;
};

// Jacobi-preconditioned conjugate gradients from a zero initial guess.
PcgResult solve_pcg(const SparseMatrix& a, const Eigen::VectorXd& b, double relative_tolerance,
                    int max_iterations);

// Solves K u = f with the flagged dofs held at zero by elimination.
// Throws kSingularSystem, kNonConvergence or kMeshingFailure.
ResultField solve_linear_static(const Mesh& mesh, const MaterialProps& material,
                                const std::vector<bool>& constrained_dofs,
                                const Eigen::VectorXd& load, const SolverOptions& options = {});

// Anchor-driven boundary conditions followed by solve_linear_static.
ResultField solve_static(const SolidModel& solid, const MaterialProps& material,
                         const SimSettings& settings, const SolverOptions& options = {});

// Gauss-point stresses for a full displacement vector.
std::vector<StressTensor> compute_stresses(const Mesh& mesh, const MaterialProps& material,
                                           const Eigen::VectorXd& u);

Eigen::VectorXd flatten(const std::vector<Vec3>& displacements);

// Result file ("cadloop-result 1"); see docs/file_formats.md.
void write_result_file(const ResultField& result, const std::string& path);
ResultField read_result_file(const std::string& path);

}  // namespace cadloop
