#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "cadloop/error.hpp"
#include "cadloop/harness.hpp"
#include "cadloop/metrics.hpp"
#include "cadloop/policies.hpp"
#include "cadloop/reward.hpp"
#include "cadloop/taskgen.hpp"
#include "cadloop/toolchain.hpp"
#include "cadloop/toolserver.hpp"
#include "cadloop/wire.hpp"

namespace py = pybind11;
using nlohmann::json;

namespace {

const cadloop::MaterialLibrary& lib() { return cadloop::MaterialLibrary::default_library(); }

cadloop::ToolchainConfig toolchain(int density) {
  cadloop::ToolchainConfig c;
  c.mesh_density = density;
  return c;
}

std::string evaluate_initial(const std::string& task_json, int density) {
  const cadloop::TaskInstance t = cadloop::task_from_json(json::parse(task_json));
  const cadloop::MetricTriple m = cadloop::evaluate_design(
      t.category_id, {t.initial_params, t.initial_material}, t.sim_settings, lib(), toolchain(density));
  return json{{"u_max_mm", m.u_max}, {"sigma_max_mpa", m.sigma_max}, {"cost", m.cost}}.dump();
}

std::string score(const std::string& log_jsonl, const std::string& task_json) {
  const cadloop::RolloutLog log = cadloop::parse_jsonl(log_jsonl);
  const cadloop::TaskInstance t = cadloop::task_from_json(json::parse(task_json));
  return cadloop::score_to_json(cadloop::score_rollout(log, t, lib())).dump();
}

py::tuple run_episode(const std::string& task_json, const std::string& policy_name,
                      std::uint64_t seed, int density, const std::string& failures) {
  const cadloop::TaskInstance t = cadloop::task_from_json(json::parse(task_json));
  cadloop::ServerConfig cfg;
  cfg.toolchain = toolchain(density);
  cadloop::ToolServer server(lib(), cfg);
  cadloop::InProcessClient client(server);
  auto policy = cadloop::make_policy(policy_name, seed);
  const auto run = cadloop::run_policy(*policy, t, client, cadloop::parse_failures(failures), lib());
  return py::make_tuple(cadloop::to_jsonl(run.log), run.final_text);
}

int export_dataset(const std::string& out_dir, int n_train, int n_test, int n_general,
                   std::uint64_t seed, int density) {
  cadloop::DatasetOptions o;
  o.n_train = n_train;
  o.n_test = n_test;
  o.n_general = n_general;
  o.seed = seed;
  o.toolchain = toolchain(density);
  return static_cast<int>(cadloop::export_dataset(o, lib(), out_dir).size());
}

std::string evaluate_dir(const std::string& tasks_dir, const std::string& logs_dir, int density) {
  const auto tasks = cadloop::load_task_dir(tasks_dir);
  std::vector<cadloop::RolloutLog> logs;
  for (const auto& t : tasks) logs.push_back(cadloop::read_log_file(cadloop::log_path_for(logs_dir, t.id)));
  return cadloop::report_to_json(cadloop::evaluate_run(tasks, logs, lib(), toolchain(density))).dump();
}

}  // namespace

PYBIND11_MODULE(_cadloop, m) {
  py::register_exception<cadloop::Error>(m, "CadloopError", PyExc_RuntimeError);

  m.def("von_mises", [](const std::array<double, 6>& s) { return cadloop::von_mises(s); }, py::arg("stress"));
  m.def("materials_json", [] { return lib().to_json().dump(); });
  m.def("protocol_descriptor_json", [] { return cadloop::protocol_descriptor().dump(); });
  m.def("cost", [](double volume_mm3, const std::string& material) {
    return cadloop::cost(volume_mm3, lib().lookup(material));
  }, py::arg("volume_mm3"), py::arg("material"));
  m.def("evaluate_initial", &evaluate_initial, py::arg("task_json"), py::arg("mesh_density") = 2,
        py::call_guard<py::gil_scoped_release>());
  m.def("score_rollout", &score, py::arg("log_jsonl"), py::arg("task_json"));
  m.def("run_episode", &run_episode, py::arg("task_json"), py::arg("policy") = "heuristic",
        py::arg("seed") = 0, py::arg("mesh_density") = 2, py::arg("failures") = "0,0,0");
  m.def("export_dataset", &export_dataset, py::arg("out_dir"), py::arg("n_train"), py::arg("n_test"),
        py::arg("n_general"), py::arg("seed") = 42, py::arg("mesh_density") = 2,
        py::call_guard<py::gil_scoped_release>());
  m.def("evaluate", &evaluate_dir, py::arg("tasks_dir"), py::arg("logs_dir"), py::arg("mesh_density") = 2,
        py::call_guard<py::gil_scoped_release>());
  m.def("verify_fem_json", [] { return cadloop::oracle_checks_to_json(cadloop::verify_fem_suite()).dump(); },
        py::call_guard<py::gil_scoped_release>());
}
