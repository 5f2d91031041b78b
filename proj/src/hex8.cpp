#include "cadloop/hex8.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace cadloop::hex8 {

const std::array<GaussPoint, 8>& gauss_points() {
  static const std::array<GaussPoint, 8> pts = [] {
    const double g = 1.0 / std::sqrt(3.0);
    std::array<GaussPoint, 8> out{};
    for (int a = 0; a < 8; ++a) {
      out[a] = {g * kNodeNatural[a][0], g * kNodeNatural[a][1], g * kNodeNatural[a][2], 1.0};
    }
    return out;
  }();
  return pts;
}

std::array<double, 8> shape_values(double xi, double eta, double zeta) {
  std::array<double, 8> n{};
  for (int a = 0; a < 8; ++a) {
    const auto& c = kNodeNatural[a];
    n[a] = 0.125 * (1 + c[0] * xi) * (1 + c[1] * eta) * (1 + c[2] * zeta);
  }
  return n;
}

Eigen::Matrix<double, 8, 3> shape_gradients(double xi, double eta, double zeta) {
  Eigen::Matrix<double, 8, 3> d;
  for (int a = 0; a < 8; ++a) {
    const auto& c = kNodeNatural[a];
    d(a, 0) = 0.125 * c[0] * (1 + c[1] * eta) * (1 + c[2] * zeta);
    d(a, 1) = 0.125 * c[1] * (1 + c[0] * xi) * (1 + c[2] * zeta);
    d(a, 2) = 0.125 * c[2] * (1 + c[0] * xi) * (1 + c[1] * eta);
  }
  return d;
}

NodeCoords gather(std::span<const Vec3> nodes, const std::array<int, 8>& conn) {
  NodeCoords x;
  for (int a = 0; a < 8; ++a) {
    const auto& p = nodes[static_cast<std::size_t>(conn[a])];
    x(a, 0) = p[0];
    x(a, 1) = p[1];
    x(a, 2) = p[2];
  }
  return x;
}

Eigen::Matrix3d jacobian(const NodeCoords& x, const Eigen::Matrix<double, 8, 3>& dn) {
  return dn.transpose() * x;
}

double min_gauss_jacobian(const NodeCoords& x) {
  double det_min = std::numeric_limits<double>::infinity();
  for (const auto& gp : gauss_points()) {
    det_min = std::min(det_min, jacobian(x, shape_gradients(gp.xi, gp.eta, gp.zeta)).determinant());
  }
  return det_min;
}

double element_volume(const NodeCoords& x) {
  double v = 0.0;
  for (const auto& gp : gauss_points()) {
    v += gp.weight * jacobian(x, shape_gradients(gp.xi, gp.eta, gp.zeta)).determinant();
  }
  return v;
}

}  // namespace cadloop::hex8
