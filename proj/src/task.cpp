#include "cadloop/task.hpp"

#include <cmath>
#include <fstream>

#include "cadloop/error.hpp"

namespace cadloop {

using nlohmann::json;

void validate(const TaskInstance& t) {
  auto bad = [](const std::string& what) { throw Error(ErrorCode::kMalformedArgs, "task: " + what); };
  const auto& cat = find_category(t.category_id);
  if (t.initial_params.values.size() != cat.parameters.size()) bad("parameter count mismatch");
  if (!(t.delta_mm > 0) || !std::isfinite(t.delta_mm)) bad("delta_mm must be > 0");
  if (!(t.kappa > 0) || !std::isfinite(t.kappa)) bad("kappa must be > 0");
  if (!(t.stress_scale > 0 && t.stress_scale <= 1)) bad("stress_scale must lie in (0, 1]");
  if (!std::isfinite(t.sim_settings.pressure_mpa)) bad("pressure must be finite");
  if (t.max_rounds < 1 || t.max_tool_calls < 1 || t.max_retries < 0) bad("budgets must be positive");
}

json task_to_json(const TaskInstance& t) {
  const auto& cat = find_category(t.category_id);
  json j;
  j["category"] = t.category_id;
  j["initial_params"] = params_to_json(cat, t.initial_params);
  j["initial_material"] = t.initial_material;
  j["pressure_mpa"] = t.sim_settings.pressure_mpa;
  j["delta_mm"] = t.delta_mm;
  j["kappa"] = t.kappa;
  j["stress_scale"] = t.stress_scale;
  j["max_rounds"] = t.max_rounds;
  j["max_tool_calls"] = t.max_tool_calls;
  j["seed"] = t.seed;
  return j;
}

TaskInstance task_from_json(const json& j) {
  TaskInstance t;
  try {
    t.category_id = j.at("category").get<std::string>();
    const auto& cat = find_category(t.category_id);
    t.initial_params = params_from_json(cat, j.at("initial_params"));
    t.initial_material = j.at("initial_material").get<std::string>();
    t.sim_settings.pressure_mpa = j.at("pressure_mpa").get<double>();
    t.delta_mm = j.at("delta_mm").get<double>();
    t.kappa = j.at("kappa").get<double>();
    t.stress_scale = j.at("stress_scale").get<double>();
    t.max_rounds = j.value("max_rounds", kDefaultMaxRounds);
    t.max_tool_calls = j.value("max_tool_calls", kDefaultMaxToolCalls);
    t.seed = j.value("seed", std::uint64_t{0});
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kMalformedArgs, std::string("task: ") + e.what());
  }
  validate(t);
  return t;
}

TaskInstance read_task_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open task file '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParse, path + ": " + e.what());
  }
  return task_from_json(j);
}

void write_task_file(const TaskInstance& task, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIo, "cannot write task file '" + path + "'");
  out << task_to_json(task).dump(2) << "\n";
}

}  // namespace cadloop
