#include "cadloop/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <random>
#include <sstream>
#include <thread>

#include "cadloop/error.hpp"
#include "cadloop/fem.hpp"
#include "cadloop/geometry.hpp"

namespace cadloop {

using nlohmann::json;
namespace fs = std::filesystem;

Reproduction reproduce_final(const json& final, const TaskInstance& task,
                             const MaterialLibrary& library, const ToolchainConfig& config) {
  Reproduction out;
  try {
    if (final.value("category", std::string()) != task.category_id) {
      throw Error(ErrorCode::kMalformedArgs, "final category does not match the task");
    }
    const PartCategory& cat = find_category(task.category_id);
    DesignProposal d;
    d.params = params_from_json(cat, final.at("parameters"));
    d.material = final.at("material").get<std::string>();
    out.triple = evaluate_design(task.category_id, d, task.sim_settings, library, config);
  } catch (const Error& ex) {
    out.failure = std::string(error_code_name(ex.code()));
  } catch (const json::exception&) {
    out.failure = std::string(error_code_name(ErrorCode::kMalformedArgs));
  }
  return out;
}

namespace {

InstanceRecord evaluate_instance(const LabeledTask& lt, const RolloutLog& log,
                                 const MaterialLibrary& library, const ToolchainConfig& config) {
  InstanceRecord r;
  r.task_id = lt.id;
  r.tool_calls = count_tool_calls(log);
  r.score = score_rollout(log, lt.task, library);
  r.final = final_json(log);
  r.parsed = r.final.has_value();
  if (!r.parsed) {
    r.failure = "unparsable_final_output";
    return r;
  }
  const Reproduction rep = reproduce_final(*r.final, lt.task, library, config);
  r.reverified = rep.triple;
  r.failure = rep.failure;
  if (rep.triple) {
    r.satisfied = check_feasibility(*rep.triple, lt.task,
                                    library.lookup(r.final->at("material").get<std::string>()));
  }
  return r;
}

}  // namespace

EvalReport evaluate_run(const std::vector<LabeledTask>& tasks, const std::vector<RolloutLog>& logs,
                        const MaterialLibrary& library, const ToolchainConfig& config) {
  if (tasks.size() != logs.size()) {
    throw Error(ErrorCode::kMismatchedInputs, std::to_string(tasks.size()) + " tasks but " +
                                                  std::to_string(logs.size()) + " logs");
  }
  EvalReport rep;
  rep.n_instances = static_cast<int>(tasks.size());
  rep.records.resize(tasks.size());

  const unsigned workers =
      std::max(1u, std::min<unsigned>(std::thread::hardware_concurrency(), tasks.size()));
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < tasks.size(); i += workers) {
        rep.records[i] = evaluate_instance(tasks[i], logs[i], library, config);
      }
    });
  }
  for (auto& t : pool) t.join();

  if (rep.n_instances == 0) return rep;
  const double n = rep.n_instances;
  for (const auto& r : rep.records) {
    rep.fsr += r.satisfied.all();
    rep.dsr += r.satisfied.displacement;
    rep.ssr += r.satisfied.stress;
    rep.csr += r.satisfied.cost;
    rep.meo += r.parsed;
    rep.as += r.score.r;
    rep.atc += r.tool_calls;
  }
  rep.fsr /= n;
  rep.dsr /= n;
  rep.ssr /= n;
  rep.csr /= n;
  rep.meo /= n;
  rep.as /= n;
  rep.atc /= n;
  return rep;
}

json report_to_json(const EvalReport& rep) {
  json records = json::array();
  for (const auto& r : rep.records) {
    json j{{"task_id", r.task_id},
           {"parsed", r.parsed},
           {"final", r.final ? *r.final : json(nullptr)},
           {"failure", r.failure.empty() ? json(nullptr) : json(r.failure)},
           {"displacement_ok", r.satisfied.displacement},
           {"stress_ok", r.satisfied.stress},
           {"cost_ok", r.satisfied.cost},
           {"tool_calls", r.tool_calls},
           {"score", score_to_json(r.score)}};
    j["reverified"] = r.reverified ? json{{"u_max", r.reverified->u_max},
                                          {"sigma_max", r.reverified->sigma_max},
                                          {"cost", r.reverified->cost}}
                                   : json(nullptr);
    records.push_back(std::move(j));
  }
  return {{"n_instances", rep.n_instances},
          {"FSR", rep.fsr},
          {"DSR", rep.dsr},
          {"SSR", rep.ssr},
          {"CSR", rep.csr},
          {"MEO", rep.meo},
          {"AS", rep.as},
          {"ATC", rep.atc},
          {"instances", std::move(records)}};
}

std::string report_table(const EvalReport& rep) {
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "instances %d\n"
                "  FSR  %6.3f\n  DSR  %6.3f\n  SSR  %6.3f\n  CSR  %6.3f\n"
                "  MEO  %6.3f\n  AS   %6.4f\n  ATC  %6.2f\n",
                rep.n_instances, rep.fsr, rep.dsr, rep.ssr, rep.csr, rep.meo, rep.as, rep.atc);
  return buf;
}

std::vector<LabeledTask> load_task_dir(const std::string& dir) {
  if (!fs::is_directory(dir)) throw Error(ErrorCode::kIo, "not a directory: " + dir);
  std::vector<fs::path> files;
  for (const auto& entry : fs::recursive_directory_iterator(dir)) {
    if (!entry.is_regular_file() || entry.path().extension() != ".json") continue;
    if (entry.path().filename() == "manifest.json") continue;
    files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<LabeledTask> out;
  for (const auto& f : files) {
    auto rel = fs::relative(f, dir);
    rel.replace_extension();
    out.push_back({rel.generic_string(), read_task_file(f.string())});
  }
  return out;
}

std::string log_path_for(const std::string& logs_dir, const std::string& task_id) {
  return (fs::path(logs_dir) / (task_id + ".jsonl")).string();
}

// ---- analytical oracle suite ----------------------------------------------

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void fix(std::vector<bool>& c, int node, int dof) { c[3 * node + dof] = true; }

int node_at(const Mesh& mesh, const Vec3& p) {
  for (std::size_t i = 0; i < mesh.nodes.size(); ++i) {
    const auto& q = mesh.nodes[i];
    if (std::abs(q[0] - p[0]) < 1e-9 && std::abs(q[1] - p[1]) < 1e-9 && std::abs(q[2] - p[2]) < 1e-9)
      return static_cast<int>(i);
  }
  throw Error(ErrorCode::kMalformedArgs, "no node at the requested position");
}

std::vector<OracleCheck> patch_checks() {
  const MaterialProps& mat = MaterialLibrary::default_library().lookup("Carbon Steel - ASTM A105");
  const double length = 100.0, width = 10.0, height = 10.0, p = 50.0;
  const int d = 2;
  const auto t0 = std::chrono::steady_clock::now();
  const SolidModel s = make_box_solid(length, width, height, 5 * d, d, d);
  std::vector<bool> c(3 * s.mesh.nodes.size(), false);
  std::vector<BoundaryFace> end;
  for (const auto& f : s.boundary_faces) {
    if (f.tag == "x0") for (int n : f.nodes) fix(c, n, 0);
    if (f.tag == "x1") end.push_back(f);
  }
  const int origin = node_at(s.mesh, {0, 0, 0});
  fix(c, origin, 1);
  fix(c, origin, 2);
  fix(c, node_at(s.mesh, {0, width, 0}), 2);
  const ResultField r =
      solve_linear_static(s.mesh, mat, c, pressure_load(s.mesh, end, p), SolverOptions{1e-12});
  const double secs = seconds_since(t0);

  const double area = width * height, force = p * area;
  const double sigma_expected = force / area;
  const double tip_expected = force * length / (mat.young_modulus * area);
  double tip_err = 0.0, tip = 0.0;
  for (std::size_t i = 0; i < s.mesh.nodes.size(); ++i) {
    if (std::abs(s.mesh.nodes[i][0] - length) > 1e-9) continue;
    tip = -r.nodal_displacements[i][0];
    tip_err = std::max(tip_err, std::abs(tip - tip_expected) / tip_expected);
  }
  const double sigma = stress_max(r);
  const double sigma_err = std::abs(sigma - sigma_expected) / sigma_expected;
  return {
      {"patch_sigma_max", sigma_err <= 1e-6, sigma, sigma_expected, sigma_err, 1e-6, secs},
      {"patch_tip_displacement", tip_err <= 1e-6, tip, tip_expected, tip_err, 1e-6, secs},
      {"patch_runtime", secs < 1.0, secs, 1.0, 0.0, 0.0, secs},
  };
}

std::vector<OracleCheck> beam_checks() {
  const MaterialProps& mat = MaterialLibrary::default_library().lookup("Carbon Steel - ASTM A105");
  const double length = 100.0, width = 10.0, height = 10.0, load = 100.0;
  const double inertia = width * height * height * height / 12.0;
  const double expected = load * length * length * length / (3.0 * mat.young_modulus * inertia);
  std::vector<OracleCheck> out;
  std::vector<double> errors;
  double total = 0.0;
  for (int d : {2, 4, 8}) {
    const auto t0 = std::chrono::steady_clock::now();
    const SolidModel s = make_box_solid(length, width, height, 10 * d, d, d);
    std::vector<bool> c(3 * s.mesh.nodes.size(), false);
    std::vector<BoundaryFace> tip_faces;
    for (const auto& f : s.boundary_faces) {
      if (f.tag == "x0") for (int n : f.nodes) for (int k = 0; k < 3; ++k) fix(c, n, k);
      if (f.tag == "x1") tip_faces.push_back(f);
    }
    const auto f = traction_load(s.mesh, tip_faces, {0.0, 0.0, -load / (width * height)});
    const ResultField r = solve_linear_static(s.mesh, mat, c, f);
    double sum = 0.0;
    int count = 0;
    for (std::size_t i = 0; i < s.mesh.nodes.size(); ++i) {
      if (std::abs(s.mesh.nodes[i][0] - length) > 1e-9) continue;
      sum += -r.nodal_displacements[i][2];
      ++count;
    }
    const double tip = sum / count;
    const double secs = seconds_since(t0);
    total += secs;
    const double err = std::abs(tip - expected) / expected;
    errors.push_back(err);
    out.push_back({"beam_tip_density_" + std::to_string(d), d != 8 || err <= 0.08, tip, expected,
                   err, d == 8 ? 0.08 : 0.0, secs});
  }
  const bool monotone = errors[1] < errors[0] && errors[2] < errors[1];
  out.push_back({"beam_monotone_convergence", monotone, errors[2], 0.0, errors[2], 0.0, total});
  out.push_back({"beam_runtime", total < 30.0, total, 30.0, 0.0, 0.0, total});
  return out;
}

std::vector<OracleCheck> von_mises_checks() {
  std::mt19937_64 rng(20240607);
  std::uniform_real_distribution<double> comp(-500.0, 500.0), scale(0.0, 10.0);
  double hydro = 0.0, homog = 0.0, uniax = 0.0;
  for (int i = 0; i < 10000; ++i) {
    StressTensor s;
    for (double& v : s) v = comp(rng);
    const double vm = von_mises(s);
    const double p = comp(rng);
    StressTensor shifted = s;
    for (int k = 0; k < 3; ++k) shifted[k] += p;
    hydro = std::max(hydro, std::abs(von_mises(shifted) - vm));
    const double lambda = scale(rng);
    StressTensor scaled = s;
    for (double& v : scaled) v *= lambda;
    if (vm > 0) homog = std::max(homog, std::abs(von_mises(scaled) - lambda * vm) / (lambda * vm));
    const double a = comp(rng);
    uniax = std::max(uniax, std::abs(von_mises({a, 0, 0, 0, 0, 0}) - std::abs(a)));
  }
  return {
      {"von_mises_hydrostatic", hydro <= 1e-9, hydro, 0.0, hydro, 1e-9, 0.0},
      {"von_mises_homogeneity", homog <= 1e-12, homog, 0.0, homog, 1e-12, 0.0},
      {"von_mises_uniaxial", uniax == 0.0, uniax, 0.0, uniax, 0.0, 0.0},
  };
}

}  // namespace

std::vector<OracleCheck> verify_fem_suite() {
  std::vector<OracleCheck> all = patch_checks();
  for (auto& c : beam_checks()) all.push_back(std::move(c));
  for (auto& c : von_mises_checks()) all.push_back(std::move(c));
  return all;
}

json oracle_checks_to_json(const std::vector<OracleCheck>& checks) {
  json arr = json::array();
  bool all = true;
  for (const auto& c : checks) {
    all = all && c.pass;
    arr.push_back({{"name", c.name},
                   {"pass", c.pass},
                   {"value", c.value},
                   {"expected", c.expected},
                   {"error", c.error},
                   {"tolerance", c.tolerance},
                   {"seconds", c.seconds}});
  }
  return {{"all_pass", all}, {"checks", std::move(arr)}};
}

}  // namespace cadloop
