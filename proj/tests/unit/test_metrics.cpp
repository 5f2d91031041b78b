#include <cmath>
#include <random>

#include "doctest.h"

#include "cadloop/error.hpp"
#include "cadloop/metrics.hpp"

using namespace cadloop;

namespace {

// Principal-stress form: sqrt(((s1-s2)^2 + (s2-s3)^2 + (s3-s1)^2) / 2) on the
// eigenvalues of the symmetric tensor.
double von_mises_principal(const StressTensor& s) {
  Eigen::Matrix3d m;
  m << s[0], s[3], s[5], s[3], s[1], s[4], s[5], s[4], s[2];
  const Eigen::Vector3d e = Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d>(m).eigenvalues();
  const double a = e[0] - e[1], b = e[1] - e[2], c = e[2] - e[0];
  return std::sqrt(0.5 * (a * a + b * b + c * c));
}

}  // namespace

TEST_CASE("von Mises closed forms") {
  CHECK(von_mises({100, 0, 0, 0, 0, 0}) == 100.0);
  CHECK(von_mises({0, -250, 0, 0, 0, 0}) == 250.0);
  CHECK(von_mises({0, 0, 0, 10, 0, 0}) == doctest::Approx(10 * std::sqrt(3.0)).epsilon(1e-15));
  CHECK(von_mises({70, 70, 70, 0, 0, 0}) == 0.0);
  CHECK(von_mises({50, -50, 0, 0, 0, 0}) == doctest::Approx(50 * std::sqrt(3.0)).epsilon(1e-15));
}

TEST_CASE("von Mises agrees with the principal-stress form") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-300, 300);
  for (int i = 0; i < 2000; ++i) {
    StressTensor s;
    for (double& v : s) v = u(rng);
    CHECK(von_mises(s) == doctest::Approx(von_mises_principal(s)).epsilon(1e-9));
  }
}

TEST_CASE("von Mises invariants on random tensors") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-1000, 1000), pos(0.0, 50.0);
  for (int i = 0; i < 10000; ++i) {
    StressTensor s;
    for (double& v : s) v = u(rng);
    const double vm = von_mises(s);
    CHECK(vm >= 0.0);

    const double p = u(rng);
    StressTensor h = s;
    h[0] += p;
    h[1] += p;
    h[2] += p;
    CHECK(std::abs(von_mises(h) - vm) <= 1e-9);

    const double k = pos(rng);
    StressTensor scaled = s;
    for (double& v : scaled) v *= k;
    CHECK(std::abs(von_mises(scaled) - k * vm) <= 1e-12 * k * vm);

    StressTensor neg = s;
    for (double& v : neg) v = -v;
    CHECK(von_mises(neg) == vm);

    const double a = u(rng);
    CHECK(von_mises({a, 0, 0, 0, 0, 0}) == std::abs(a));
  }
}

TEST_CASE("displacement_max is the largest magnitude") {
  const std::vector<Vec3> u{{0, 0, 0}, {3, 4, 0}, {-1, -1, -1}, {0, 0, -4.5}};
  CHECK(displacement_max(u) == 5.0);
  CHECK_THROWS_AS(displacement_max(std::span<const Vec3>()), Error);
  ResultField r;
  r.nodal_displacements = u;
  r.converged = false;
  CHECK_THROWS_AS(displacement_max(r), Error);
}

TEST_CASE("stress_max picks the largest equivalent stress") {
  const std::vector<StressTensor> s{{10, 0, 0, 0, 0, 0}, {0, 0, 0, 0, 20, 0}, {5, 5, 5, 0, 0, 0}};
  CHECK(stress_max(s) == doctest::Approx(20 * std::sqrt(3.0)));
  try {
    stress_max(std::span<const StressTensor>());
    FAIL("expected empty_field");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kEmptyField);
  }
}

TEST_CASE("feasibility comparisons are inclusive") {
  const auto& m = MaterialLibrary::default_library().lookup("Carbon Steel - ASTM A105");
  TaskInstance task;
  task.delta_mm = 0.1;
  task.kappa = 20.0;
  task.stress_scale = 0.9;
  const double bound = 0.9 * 167.0;
  CHECK(stress_bound(task, m) == bound);

  Feasibility f = check_feasibility({0.1, bound, 20.0}, task, m);
  CHECK(f.all());
  CHECK(f.count() == 3);

  f = check_feasibility({0.2, bound * 1.01, 19.0}, task, m);
  CHECK(!f.displacement);
  CHECK(!f.stress);
  CHECK(f.cost);
  CHECK(f.count() == 1);

  CHECK(mm_to_um(0.092) == doctest::Approx(92.0));
}
