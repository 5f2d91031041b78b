#include "cadloop/fem.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include "cadloop/error.hpp"
#include "cadloop/hex8.hpp"

namespace cadloop {

namespace {

using Mat6 = Eigen::Matrix<double, 6, 6>;
using BMatrix = Eigen::Matrix<double, 6, 24>;

Eigen::Vector3d to_eigen(const Vec3& v) { return {v[0], v[1], v[2]}; }

// Closest-point distance from p to triangle abc.
double point_triangle_distance(const Eigen::Vector3d& p, const Eigen::Vector3d& a,
                               const Eigen::Vector3d& b, const Eigen::Vector3d& c) {
  const Eigen::Vector3d ab = b - a, ac = c - a, ap = p - a;
  const double d1 = ab.dot(ap), d2 = ac.dot(ap);
  if (d1 <= 0 && d2 <= 0) return (p - a).norm();
  const Eigen::Vector3d bp = p - b;
  const double d3 = ab.dot(bp), d4 = ac.dot(bp);
  if (d3 >= 0 && d4 <= d3) return (p - b).norm();
  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0 && d1 >= 0 && d3 <= 0) return (p - (a + d1 / (d1 - d3) * ab)).norm();
  const Eigen::Vector3d cp = p - c;
  const double d5 = ab.dot(cp), d6 = ac.dot(cp);
  if (d6 >= 0 && d5 <= d6) return (p - c).norm();
  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0 && d2 >= 0 && d6 <= 0) return (p - (a + d2 / (d2 - d6) * ac)).norm();
  const double va = d3 * d6 - d5 * d4;
  if (va <= 0 && (d4 - d3) >= 0 && (d5 - d6) >= 0) {
    return (p - (b + (d4 - d3) / ((d4 - d3) + (d5 - d6)) * (c - b))).norm();
  }
  const double denom = 1.0 / (va + vb + vc);
  return (p - (a + ab * (vb * denom) + ac * (vc * denom))).norm();
}

BMatrix strain_displacement(const Eigen::Matrix<double, 8, 3>& dndx) {
  BMatrix b = BMatrix::Zero();
  for (int a = 0; a < 8; ++a) {
    const double nx = dndx(a, 0), ny = dndx(a, 1), nz = dndx(a, 2);
    const int c = 3 * a;
    b(0, c) = nx;
    b(1, c + 1) = ny;
    b(2, c + 2) = nz;
    b(3, c) = ny;
    b(3, c + 1) = nx;
    b(4, c + 1) = nz;
    b(4, c + 2) = ny;
    b(5, c) = nz;
    b(5, c + 2) = nx;
  }
  return b;
}

// Physical shape gradients at a Gauss point; returns det J through `det`.
Eigen::Matrix<double, 8, 3> physical_gradients(const hex8::NodeCoords& x, double xi, double eta,
                                               double zeta, double& det) {
  const auto dn = hex8::shape_gradients(xi, eta, zeta);
  const Eigen::Matrix3d j = hex8::jacobian(x, dn);
  det = j.determinant();
  // dN/dx = dN/dxi * J^-1 with J_ij = dx_j/dxi_i
  return dn * j.inverse().transpose();
}

void check_elements(const Mesh& mesh) {
  for (std::size_t e = 0; e < mesh.elements.size(); ++e) {
    if (!(hex8::min_gauss_jacobian(hex8::gather(mesh.nodes, mesh.elements[e])) > 0.0)) {
      throw Error(ErrorCode::kMeshingFailure,
                  "element " + std::to_string(e) + " has a non-positive Jacobian determinant");
    }
  }
}

template <typename Integrand>
void integrate_faces(const Mesh& mesh, const std::vector<BoundaryFace>& faces,
                     Integrand&& add) {
  const double g = 1.0 / std::sqrt(3.0);
  static constexpr std::array<std::array<double, 2>, 4> kCorners{
      {{-1, -1}, {1, -1}, {1, 1}, {-1, 1}}};
  for (const auto& f : faces) {
    std::array<Eigen::Vector3d, 4> p;
    for (int a = 0; a < 4; ++a) p[a] = to_eigen(mesh.nodes[f.nodes[a]]);
    for (const auto& gp : kCorners) {
      const double s = g * gp[0], t = g * gp[1];
      Eigen::Vector3d xs = Eigen::Vector3d::Zero(), xt = Eigen::Vector3d::Zero();
      std::array<double, 4> n{};
      for (int a = 0; a < 4; ++a) {
        const double sa = kCorners[a][0], ta = kCorners[a][1];
        n[a] = 0.25 * (1 + sa * s) * (1 + ta * t);
        xs += 0.25 * sa * (1 + ta * t) * p[a];
        xt += 0.25 * ta * (1 + sa * s) * p[a];
      }
      const Eigen::Vector3d area_normal = xs.cross(xt);  // outward, |.| = dA
      for (int a = 0; a < 4; ++a) add(f.nodes[a], n[a], area_normal);
    }
  }
}

}  // namespace

int default_iteration_cap(std::size_t free_dofs) {
  return static_cast<int>(20.0 * std::sqrt(static_cast<double>(free_dofs))) + 1000;
}

double default_epsilon(const SolidModel& solid) {
  return 1e-6 * bounding_box_diagonal(solid.mesh);
}

double point_face_distance(const Vec3& q, const Mesh& mesh, const BoundaryFace& face) {
  const Eigen::Vector3d p = to_eigen(q);
  const auto a = to_eigen(mesh.nodes[face.nodes[0]]);
  const auto b = to_eigen(mesh.nodes[face.nodes[1]]);
  const auto c = to_eigen(mesh.nodes[face.nodes[2]]);
  const auto d = to_eigen(mesh.nodes[face.nodes[3]]);
  return std::min(point_triangle_distance(p, a, b, c), point_triangle_distance(p, a, c, d));
}

std::vector<int> match_faces(const SolidModel& solid, AnchorRole role, double epsilon) {
  const auto& faces = solid.boundary_faces;
  std::vector<char> selected(faces.size(), 0);
  std::deque<int> queue;
  for (const auto& anchor : solid.anchors) {
    if (anchor.role != role) continue;
    for (std::size_t j = 0; j < faces.size(); ++j) {
      if (!selected[j] && point_face_distance(anchor.position, solid.mesh, faces[j]) <= epsilon) {
        selected[j] = 1;
        queue.push_back(static_cast<int>(j));
      }
    }
  }
  if (queue.empty()) {
    throw Error(ErrorCode::kNoFaceMatched,
                std::string("no boundary face within epsilon of a '") +
                    std::string(role_name(role)) + "' anchor");
  }

  std::map<std::pair<int, int>, std::vector<int>> edge_faces;
  for (std::size_t j = 0; j < faces.size(); ++j) {
    for (int k = 0; k < 4; ++k) {
      int a = faces[j].nodes[k], b = faces[j].nodes[(k + 1) % 4];
      if (a > b) std::swap(a, b);
      edge_faces[{a, b}].push_back(static_cast<int>(j));
    }
  }
  while (!queue.empty()) {
    const int j = queue.front();
    queue.pop_front();
    for (int k = 0; k < 4; ++k) {
      int a = faces[j].nodes[k], b = faces[j].nodes[(k + 1) % 4];
      if (a > b) std::swap(a, b);
      for (int nb : edge_faces[{a, b}]) {
        if (!selected[nb] && faces[nb].tag == faces[j].tag) {
          selected[nb] = 1;
          queue.push_back(nb);
        }
      }
    }
  }
  std::vector<int> out;
  for (std::size_t j = 0; j < faces.size(); ++j) {
    if (selected[j]) out.push_back(static_cast<int>(j));
  }
  return out;
}

Eigen::Matrix<double, 6, 6> elasticity_matrix(double e, double nu) {
  const double lambda = e * nu / ((1 + nu) * (1 - 2 * nu));
  const double mu = e / (2 * (1 + nu));
  Mat6 d = Mat6::Zero();
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) d(i, j) = lambda;
    d(i, i) = lambda + 2 * mu;
    d(i + 3, i + 3) = mu;
  }
  return d;
}

SparseMatrix assemble_stiffness(const Mesh& mesh, const MaterialProps& material) {
  const Mat6 d = elasticity_matrix(material.young_modulus, material.poisson_ratio);
  const auto ndof = static_cast<Eigen::Index>(3 * mesh.nodes.size());
  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(mesh.elements.size() * 576);
  for (const auto& conn : mesh.elements) {
    const auto x = hex8::gather(mesh.nodes, conn);
    Eigen::Matrix<double, 24, 24> ke = Eigen::Matrix<double, 24, 24>::Zero();
    for (const auto& gp : hex8::gauss_points()) {
      double det = 0;
      const BMatrix b = strain_displacement(physical_gradients(x, gp.xi, gp.eta, gp.zeta, det));
      ke.noalias() += b.transpose() * d * b * (det * gp.weight);
    }
    for (int a = 0; a < 8; ++a) {
      for (int i = 0; i < 3; ++i) {
        for (int bn = 0; bn < 8; ++bn) {
          for (int j = 0; j < 3; ++j) {
            triplets.emplace_back(3 * conn[a] + i, 3 * conn[bn] + j, ke(3 * a + i, 3 * bn + j));
          }
        }
      }
    }
  }
  SparseMatrix k(ndof, ndof);
  k.setFromTriplets(triplets.begin(), triplets.end());
  return k;
}

Eigen::VectorXd pressure_load(const Mesh& mesh, const std::vector<BoundaryFace>& faces,
                              double pressure_mpa) {
  Eigen::VectorXd f = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(3 * mesh.nodes.size()));
  integrate_faces(mesh, faces, [&](int node, double n, const Eigen::Vector3d& area_normal) {
    f.segment<3>(3 * node) -= pressure_mpa * n * area_normal;
  });
  return f;
}

Eigen::VectorXd traction_load(const Mesh& mesh, const std::vector<BoundaryFace>& faces,
                              const Vec3& traction) {
  Eigen::VectorXd f = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(3 * mesh.nodes.size()));
  const Eigen::Vector3d t = to_eigen(traction);
  integrate_faces(mesh, faces, [&](int node, double n, const Eigen::Vector3d& area_normal) {
    f.segment<3>(3 * node) += n * area_normal.norm() * t;
  });
  return f;
}

PcgResult solve_pcg(const SparseMatrix& a, const Eigen::VectorXd& b, double tol,
                    int max_iterations) {
  PcgResult res;
  res.x = Eigen::VectorXd::Zero(b.size());
  const double bnorm = b.norm();
  if (bnorm == 0.0) {
    res.converged = true;
    return res;
  }
  Eigen::VectorXd inv_diag = a.diagonal();
  for (Eigen::Index i = 0; i < inv_diag.size(); ++i) {
    inv_diag[i] = inv_diag[i] > 0 ? 1.0 / inv_diag[i] : 1.0;
  }
  Eigen::VectorXd r = b;
  Eigen::VectorXd z = inv_diag.cwiseProduct(r);
  Eigen::VectorXd p = z;
  Eigen::VectorXd ap(b.size());
  double rz = r.dot(z);
  for (int it = 1; it <= max_iterations; ++it) {
    ap.noalias() = a * p;
    const double pap = p.dot(ap);
    if (!(pap > 0.0)) {
      throw Error(ErrorCode::kSingularSystem, "conjugate gradients hit a non-positive curvature");
    }
    const double alpha = rz / pap;
    res.x += alpha * p;
    r -= alpha * ap;
    res.iterations = it;
    res.relative_residual = r.norm() / bnorm;
    if (res.relative_residual <= tol) {
      res.converged = true;
      return res;
    }
    z = inv_diag.cwiseProduct(r);
    const double rz_next = r.dot(z);
    p = z + (rz_next / rz) * p;
    rz = rz_next;
  }
  return res;
}

std::vector<StressTensor> compute_stresses(const Mesh& mesh, const MaterialProps& material,
                                           const Eigen::VectorXd& u) {
  const Mat6 d = elasticity_matrix(material.young_modulus, material.poisson_ratio);
  std::vector<StressTensor> out;
  out.reserve(mesh.elements.size() * 8);
  for (const auto& conn : mesh.elements) {
    const auto x = hex8::gather(mesh.nodes, conn);
    Eigen::Matrix<double, 24, 1> ue;
    for (int a = 0; a < 8; ++a) ue.segment<3>(3 * a) = u.segment<3>(3 * conn[a]);
    for (const auto& gp : hex8::gauss_points()) {
      double det = 0;
      const BMatrix b = strain_displacement(physical_gradients(x, gp.xi, gp.eta, gp.zeta, det));
      const Eigen::Matrix<double, 6, 1> s = d * (b * ue);
      out.push_back({s[0], s[1], s[2], s[3], s[4], s[5]});
    }
  }
  return out;
}

Eigen::VectorXd flatten(const std::vector<Vec3>& displacements) {
  Eigen::VectorXd u(static_cast<Eigen::Index>(3 * displacements.size()));
  for (std::size_t i = 0; i < displacements.size(); ++i) {
    for (int k = 0; k < 3; ++k) u[static_cast<Eigen::Index>(3 * i + k)] = displacements[i][k];
  }
  return u;
}

ResultField solve_linear_static(const Mesh& mesh, const MaterialProps& material,
                                const std::vector<bool>& constrained, const Eigen::VectorXd& load,
                                const SolverOptions& options) {
  const std::size_t ndof = 3 * mesh.nodes.size();
  if (constrained.size() != ndof || static_cast<std::size_t>(load.size()) != ndof) {
    throw Error(ErrorCode::kMismatchedInputs, "constraint/load vectors do not match the mesh");
  }
  if (std::none_of(constrained.begin(), constrained.end(), [](bool c) { return c; })) {
    throw Error(ErrorCode::kSingularSystem, "no constrained degrees of freedom");
  }
  check_elements(mesh);

  std::vector<int> free_index(ndof, -1);
  int nfree = 0;
  for (std::size_t i = 0; i < ndof; ++i) {
    if (!constrained[i]) free_index[i] = nfree++;
  }
  const SparseMatrix k = assemble_stiffness(mesh, material);

  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<std::size_t>(k.nonZeros()));
  for (int col = 0; col < k.outerSize(); ++col) {
    if (free_index[col] < 0) continue;
    for (SparseMatrix::InnerIterator it(k, col); it; ++it) {
      if (free_index[it.row()] >= 0) {
        trip.emplace_back(free_index[it.row()], free_index[col], it.value());
      }
    }
  }
  SparseMatrix kff(nfree, nfree);
  kff.setFromTriplets(trip.begin(), trip.end());
  Eigen::VectorXd ff(nfree);
  for (std::size_t i = 0; i < ndof; ++i) {
    if (free_index[i] >= 0) ff[free_index[i]] = load[static_cast<Eigen::Index>(i)];
  }

  const int cap = options.max_iterations > 0 ? options.max_iterations
                                             : default_iteration_cap(static_cast<std::size_t>(nfree));
  const PcgResult pcg = solve_pcg(kff, ff, options.relative_tolerance, cap);

  std::ostringstream log;
  log << std::setprecision(6);
  log << "linear static: nodes " << mesh.nodes.size() << ", elements " << mesh.elements.size()
      << ", dofs " << ndof << ", free " << nfree << "\n";
  log << "pcg(jacobi): iterations " << pcg.iterations << ", relative residual "
      << pcg.relative_residual << ", tolerance " << options.relative_tolerance << ", cap " << cap
      << "\n";
  if (!pcg.converged) {
    log << "status: not converged\n";
    throw Error(ErrorCode::kNonConvergence,
                "conjugate gradients did not converge within " + std::to_string(cap) +
                    " iterations (relative residual " + std::to_string(pcg.relative_residual) +
                    ")");
  }
  log << "status: converged\n";

  ResultField res;
  res.converged = true;
  res.iterations = pcg.iterations;
  res.relative_residual = pcg.relative_residual;
  res.nodal_displacements.assign(mesh.nodes.size(), Vec3{0, 0, 0});
  Eigen::VectorXd u = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(ndof));
  for (std::size_t i = 0; i < ndof; ++i) {
    if (free_index[i] >= 0) {
      u[static_cast<Eigen::Index>(i)] = pcg.x[free_index[i]];
      res.nodal_displacements[i / 3][i % 3] = pcg.x[free_index[i]];
    }
  }
  res.stress_tensors = compute_stresses(mesh, material, u);
  res.solver_log = log.str();
  return res;
}

ResultField solve_static(const SolidModel& solid, const MaterialProps& material,
                         const SimSettings& settings, const SolverOptions& options) {
  if (!std::isfinite(settings.pressure_mpa)) {
    throw Error(ErrorCode::kMalformedArgs, "pressure must be finite");
  }
  if (settings.fixed_roles.empty()) {
    throw Error(ErrorCode::kSingularSystem, "no fixed roles requested");
  }
  const double eps = options.epsilon > 0 ? options.epsilon : default_epsilon(solid);

  std::vector<bool> constrained(3 * solid.mesh.nodes.size(), false);
  std::size_t n_fixed_faces = 0;
  for (AnchorRole role : settings.fixed_roles) {
    std::vector<int> fixed;
    try {
      fixed = match_faces(solid, role, eps);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::kNoFaceMatched) {
        throw Error(ErrorCode::kSingularSystem, std::string("no fixed faces matched: ") + e.what());
      }
      throw;
    }
    n_fixed_faces += fixed.size();
    for (int j : fixed) {
      for (int n : solid.boundary_faces[j].nodes) {
        for (int k = 0; k < 3; ++k) constrained[3 * n + k] = true;
      }
    }
  }
  std::vector<BoundaryFace> load_faces;
  for (int j : match_faces(solid, AnchorRole::kLoad, eps)) {
    load_faces.push_back(solid.boundary_faces[j]);
  }
  const Eigen::VectorXd f = pressure_load(solid.mesh, load_faces, settings.pressure_mpa);

  ResultField res = solve_linear_static(solid.mesh, material, constrained, f, options);
  std::ostringstream head;
  head << "category " << solid.category_id << ", material " << material.name << ", pressure "
       << settings.pressure_mpa << " MPa, fixed faces " << n_fixed_faces << ", load faces "
       << load_faces.size() << ", epsilon " << eps << " mm\n";
  res.solver_log = head.str() + res.solver_log;
  return res;
}

void write_result_file(const ResultField& r, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIo, "cannot write result file '" + path + "'");
  out << std::setprecision(17);
  out << "cadloop-result 1\n";
  out << "converged " << (r.converged ? 1 : 0) << "\n";
  out << "iterations " << r.iterations << "\n";
  out << "relative_residual " << r.relative_residual << "\n";
  out << "displacements " << r.nodal_displacements.size() << "\n";
  for (const auto& u : r.nodal_displacements) out << u[0] << " " << u[1] << " " << u[2] << "\n";
  out << "stresses " << r.stress_tensors.size() << "\n";
  for (const auto& s : r.stress_tensors) {
    for (int k = 0; k < 6; ++k) out << s[k] << (k == 5 ? "\n" : " ");
  }
  std::size_t lines = 0;
  for (char c : r.solver_log) lines += c == '\n' ? 1 : 0;
  if (!r.solver_log.empty() && r.solver_log.back() != '\n') ++lines;
  out << "log " << lines << "\n" << r.solver_log;
  if (!r.solver_log.empty() && r.solver_log.back() != '\n') out << "\n";
  out << "end\n";
  if (!out) throw Error(ErrorCode::kIo, "error while writing result file '" + path + "'");
}

ResultField read_result_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open result file '" + path + "'");
  auto expect = [&](const std::string& keyword) {
    std::string word;
    if (!(in >> word) || word != keyword) {
      throw Error(ErrorCode::kParse, path + ": expected '" + keyword + "', got '" + word + "'");
    }
  };
  ResultField r;
  int version = 0, conv = 0;
  expect("cadloop-result");
  in >> version;
  if (version != 1) throw Error(ErrorCode::kParse, path + ": unsupported result version");
  expect("converged");
  in >> conv;
  r.converged = conv != 0;
  expect("iterations");
  in >> r.iterations;
  expect("relative_residual");
  in >> r.relative_residual;
  std::size_t n = 0;
  expect("displacements");
  in >> n;
  r.nodal_displacements.resize(n);
  for (auto& u : r.nodal_displacements) in >> u[0] >> u[1] >> u[2];
  expect("stresses");
  in >> n;
  r.stress_tensors.resize(n);
  for (auto& s : r.stress_tensors) {
    for (int k = 0; k < 6; ++k) in >> s[k];
  }
  expect("log");
  in >> n;
  std::string line;
  std::getline(in, line);
  for (std::size_t i = 0; i < n && std::getline(in, line); ++i) r.solver_log += line + "\n";
  expect("end");
  if (!in) throw Error(ErrorCode::kParse, path + ": truncated result file");
  return r;
}

}  // namespace cadloop
