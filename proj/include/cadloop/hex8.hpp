#pragma once

// Trilinear 8-node hexahedron kinematics shared by mesh validation and the
// finite-element assembly.
//
// Local node order: 0..3 on the zeta = -1 face counter-clockwise seen from
// +zeta, 4..7 directly above them.

#include <array>
#include <span>

#include <Eigen/Dense>

namespace cadloop::hex8 {

using Vec3 = std::array<double, 3>;

inline constexpr std::array<std::array<double, 3>, 8> kNodeNatural{{
    {-1, -1, -1}, {1, -1, -1}, {1, 1, -1}, {-1, 1, -1},
    {-1, -1, 1},  {1, -1, 1},  {1, 1, 1},  {-1, 1, 1},
}};

// Local faces, ordered so the right-hand normal points out of a positively
// oriented element.
inline constexpr std::array<std::array<int, 4>, 6> kFaces{{
    {0, 3, 2, 1},  // zeta = -1
    {4, 5, 6, 7},  // zeta = +1
    {0, 1, 5, 4},  // eta = -1
    {1, 2, 6, 5},  // xi = +1
    {2, 3, 7, 6},  // eta = +1
    {3, 0, 4, 7},  // xi = -1
}};

struct GaussPoint {
  double xi, eta, zeta, weight;
};

// 2x2x2 Gauss-Legendre rule.
const std::array<GaussPoint, 8>& gauss_points();

std::array<double, 8> shape_values(double xi, double eta, double zeta);

// dN_a/d(xi, eta, zeta), one row per node.
Eigen::Matrix<double, 8, 3> shape_gradients(double xi, double eta, double zeta);

using NodeCoords = Eigen::Matrix<double, 8, 3>;

NodeCoords gather(std::span<const Vec3> nodes, const std::array<int, 8>& conn);

// J_ij = d x_j / d xi_i
Eigen::Matrix3d jacobian(const NodeCoords& x, const Eigen::Matrix<double, 8, 3>& dn);

// Smallest Jacobian determinant over the Gauss points.
double min_gauss_jacobian(const NodeCoords& x);

double element_volume(const NodeCoords& x);

}  // namespace cadloop::hex8
