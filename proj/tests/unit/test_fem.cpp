#include <cmath>
#include <filesystem>

#include "doctest.h"

#include "cadloop/error.hpp"
#include "cadloop/fem.hpp"
#include "cadloop/geometry.hpp"
#include "cadloop/metrics.hpp"

using namespace cadloop;

namespace {

const MaterialProps& steel() {
  return MaterialLibrary::default_library().lookup("Carbon Steel - ASTM A105");
}

std::vector<BoundaryFace> faces_tagged(const SolidModel& s, const std::string& tag) {
  std::vector<BoundaryFace> out;
  for (const auto& f : s.boundary_faces) {
    if (f.tag == tag) out.push_back(f);
  }
  return out;
}

int node_at(const Mesh& mesh, const Vec3& p) {
  for (std::size_t i = 0; i < mesh.nodes.size(); ++i) {
    const auto& n = mesh.nodes[i];
    if (std::abs(n[0] - p[0]) + std::abs(n[1] - p[1]) + std::abs(n[2] - p[2]) < 1e-9) return int(i);
  }
  FAIL("node not found");
  return -1;
}

}  // namespace

TEST_CASE("stiffness matrix is symmetric with a rigid-body null space") {
  const SolidModel s = make_box_solid(30, 20, 10, 3, 2, 2);
  const SparseMatrix k = assemble_stiffness(s.mesh, steel());
  const Eigen::MatrixXd dense(k);
  CHECK((dense - dense.transpose()).norm() <= 1e-10 * dense.norm());

  const int n = int(s.mesh.nodes.size());
  for (int axis = 0; axis < 3; ++axis) {
    Eigen::VectorXd t = Eigen::VectorXd::Zero(3 * n);
    for (int i = 0; i < n; ++i) t[3 * i + axis] = 1.0;
    CHECK((k * t).norm() <= 1e-8 * dense.norm());
  }
  // Infinitesimal rotation about z: u = -y, v = x.
  Eigen::VectorXd r = Eigen::VectorXd::Zero(3 * n);
  for (int i = 0; i < n; ++i) {
    r[3 * i] = -s.mesh.nodes[i][1];
    r[3 * i + 1] = s.mesh.nodes[i][0];
  }
  CHECK(r.dot(k * r) <= 1e-9 * dense.norm() * r.squaredNorm());

  Eigen::VectorXd stretch = Eigen::VectorXd::Zero(3 * n);
  for (int i = 0; i < n; ++i) stretch[3 * i] = s.mesh.nodes[i][0];
  CHECK(stretch.dot(k * stretch) > 0.0);
}

TEST_CASE("elasticity matrix for isotropic steel") {
  const auto d = elasticity_matrix(210000.0, 0.3);
  const double lambda = 210000.0 * 0.3 / (1.3 * 0.4);
  const double mu = 210000.0 / 2.6;
  CHECK(d(0, 0) == doctest::Approx(lambda + 2 * mu));
  CHECK(d(0, 1) == doctest::Approx(lambda));
  CHECK(d(3, 3) == doctest::Approx(mu));
  CHECK((d - d.transpose()).norm() == 0.0);
}

TEST_CASE("uniaxial patch test reproduces F/A and FL/(EA)") {
  const double length = 100.0, width = 10.0, height = 10.0, p = 50.0;
  const SolidModel s = make_box_solid(length, width, height, 10, 2, 2);
  std::vector<bool> c(3 * s.mesh.nodes.size(), false);
  for (const auto& f : faces_tagged(s, "x0")) {
    for (int n : f.nodes) c[3 * n] = true;
  }
  const int origin = node_at(s.mesh, {0, 0, 0});
  c[3 * origin + 1] = c[3 * origin + 2] = true;
  c[3 * node_at(s.mesh, {0, width, 0}) + 2] = true;

  const auto load = pressure_load(s.mesh, faces_tagged(s, "x1"), p);
  const ResultField r = solve_linear_static(s.mesh, steel(), c, load, SolverOptions{1e-12});
  REQUIRE(r.converged);

  const double tip = p * length / steel().young_modulus;
  for (std::size_t i = 0; i < s.mesh.nodes.size(); ++i) {
    const double x = s.mesh.nodes[i][0];
    CHECK(-r.nodal_displacements[i][0] == doctest::Approx(tip * x / length).epsilon(1e-6));
  }
  for (const auto& t : r.stress_tensors) {
    CHECK(t[0] == doctest::Approx(-p).epsilon(1e-6));
    CHECK(std::abs(t[1]) <= 1e-6 * p);
    CHECK(std::abs(t[3]) <= 1e-6 * p);
  }
  CHECK(stress_max(r) == doctest::Approx(p).epsilon(1e-6));
  CHECK(displacement_max(r) >= tip * (1 - 1e-6));
}

TEST_CASE("pressure load sums to p times area along the inward normal") {
  const SolidModel s = make_box_solid(40, 20, 10, 4, 3, 2);
  const auto top = faces_tagged(s, "z1");
  const Eigen::VectorXd f = pressure_load(s.mesh, top, 3.0);
  Vec3 total{0, 0, 0};
  for (std::size_t i = 0; i < s.mesh.nodes.size(); ++i) {
    for (int k = 0; k < 3; ++k) total[k] += f[3 * i + k];
  }
  CHECK(total[2] == doctest::Approx(-3.0 * 40 * 20));
  CHECK(std::abs(total[0]) <= 1e-9);
  CHECK(std::abs(total[1]) <= 1e-9);

  const Eigen::VectorXd t = traction_load(s.mesh, top, {1.0, 0.0, 0.0});
  double tx = 0.0;
  for (std::size_t i = 0; i < s.mesh.nodes.size(); ++i) tx += t[3 * i];
  CHECK(tx == doctest::Approx(800.0));
}

TEST_CASE("anchors select whole template faces") {
  const SolidModel s = generate_solid("flat_plate", ParamVector{{200, 50, 10}}, 2);
  const double eps = default_epsilon(s);
  CHECK(eps == doctest::Approx(1e-6 * bounding_box_diagonal(s.mesh)));
  const auto fixed = match_faces(s, AnchorRole::kFixed, eps);
  const auto loaded = match_faces(s, AnchorRole::kLoad, eps);
  CHECK(!fixed.empty());
  CHECK(!loaded.empty());
  for (int i : fixed) CHECK(s.boundary_faces[i].tag == "root_end");
  double area = 0.0;
  for (int i : loaded) {
    CHECK(s.boundary_faces[i].tag == "top");
    CHECK(s.boundary_faces[i].normal[2] == doctest::Approx(1.0));
  }
  const auto& all = s.boundary_faces;
  std::vector<BoundaryFace> faces;
  for (int i : loaded) faces.push_back(all[i]);
  const Eigen::VectorXd f = pressure_load(s.mesh, faces, 1.0);
  for (Eigen::Index i = 2; i < f.size(); i += 3) area -= f[i];
  CHECK(area == doctest::Approx(200.0 * 50.0));

  SolidModel moved = s;
  for (auto& a : moved.anchors) a.position[2] += 5.0;
  CHECK_THROWS_AS(match_faces(moved, AnchorRole::kLoad, eps), Error);
}

TEST_CASE("solve_static on a template") {
  const SolidModel s = generate_solid("flat_plate", ParamVector{{200, 50, 10}}, 2);
  SimSettings settings;
  settings.pressure_mpa = 0.5;
  const ResultField r = solve_static(s, steel(), settings);
  CHECK(r.converged);
  CHECK(r.iterations > 0);
  CHECK(r.relative_residual <= 1e-8);
  CHECK(displacement_max(r) > 0.0);
  CHECK(r.nodal_displacements.size() == s.mesh.nodes.size());
  CHECK(r.stress_tensors.size() == 8 * s.mesh.elements.size());

  settings.pressure_mpa = 1.0;
  const ResultField r2 = solve_static(s, steel(), settings);
  CHECK(displacement_max(r2) == doctest::Approx(2 * displacement_max(r)).epsilon(1e-6));

  settings.pressure_mpa = 0.0;
  const ResultField zero = solve_static(s, steel(), settings);
  CHECK(displacement_max(zero) == 0.0);
  CHECK(stress_max(zero) == 0.0);
}

TEST_CASE("unconstrained system is singular") {
  const SolidModel s = make_box_solid(10, 10, 10, 1, 1, 1);
  const std::vector<bool> c(3 * s.mesh.nodes.size(), false);
  const auto load = pressure_load(s.mesh, faces_tagged(s, "x1"), 1.0);
  try {
    solve_linear_static(s.mesh, steel(), c, load);
    FAIL("expected singular_system");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kSingularSystem);
  }
}

TEST_CASE("iteration cap and non-convergence") {
  CHECK(default_iteration_cap(100) == 1200);
  const SolidModel s = make_box_solid(100, 10, 10, 10, 2, 2);
  std::vector<bool> c(3 * s.mesh.nodes.size(), false);
  for (const auto& f : faces_tagged(s, "x0")) {
    for (int n : f.nodes) c[3 * n] = c[3 * n + 1] = c[3 * n + 2] = true;
  }
  const auto load = traction_load(s.mesh, faces_tagged(s, "x1"), {0, 0, -1});
  SolverOptions opts;
  opts.max_iterations = 2;
  try {
    solve_linear_static(s.mesh, steel(), c, load, opts);
    FAIL("expected non_convergence");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kNonConvergence);
  }
}

TEST_CASE("result file round trip") {
  const SolidModel s = generate_solid("l_bracket", ParamVector{{120, 100, 40, 10}}, 1);
  SimSettings settings;
  settings.pressure_mpa = 1.0;
  const ResultField r = solve_static(s, steel(), settings);
  const auto path = std::filesystem::temp_directory_path() / "cadloop_fem_test.result";
  write_result_file(r, path.string());
  const ResultField back = read_result_file(path.string());
  std::filesystem::remove(path);
  CHECK(back.converged == r.converged);
  CHECK(back.iterations == r.iterations);
  CHECK(back.nodal_displacements == r.nodal_displacements);
  CHECK(back.stress_tensors == r.stress_tensors);
  CHECK(displacement_max(back) == displacement_max(r));
  CHECK_THROWS_AS(read_result_file("/nonexistent.result"), Error);
}
