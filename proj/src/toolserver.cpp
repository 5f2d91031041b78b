#include "cadloop/toolserver.hpp"

#include <cstdio>
#include <filesystem>
#include <random>
#include <sstream>

#include "cadloop/fem.hpp"
#include "cadloop/geometry.hpp"
#include "cadloop/metrics.hpp"

namespace cadloop {

using nlohmann::json;

void validate(const FailureConfig& f) {
  for (double p : {f.p_regen_fail, f.p_mesh_fail, f.p_solver_fail}) {
    if (!(p >= 0.0 && p <= 1.0)) {
      throw Error(ErrorCode::kMalformedArgs, "failure probabilities must lie in [0, 1]");
    }
  }
}

FailureConfig parse_failures(std::string_view text) {
  FailureConfig f;
  double* slots[] = {&f.p_regen_fail, &f.p_mesh_fail, &f.p_solver_fail};
  std::stringstream ss{std::string(text)};
  std::string item;
  int n = 0;
  while (std::getline(ss, item, ',')) {
    if (n == 3) break;
    try {
      std::size_t used = 0;
      *slots[n] = std::stod(item, &used);
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw Error(ErrorCode::kMalformedArgs, "bad failure probability '" + item + "'");
    }
    ++n;
  }
  if (n != 3 || std::getline(ss, item, ',')) {
    throw Error(ErrorCode::kMalformedArgs, "expected p_regen,p_mesh,p_solver");
  }
  validate(f);
  return f;
}

json failures_to_json(const FailureConfig& f) {
  json j{{"p_regen", f.p_regen_fail}, {"p_mesh", f.p_mesh_fail}, {"p_solver", f.p_solver_fail}};
  if (f.seed) j["seed"] = *f.seed;
  return j;
}

FailureConfig failures_from_json(const json& j) {
  FailureConfig f;
  if (j.is_null()) return f;
  if (!j.is_object()) throw Error(ErrorCode::kMalformedArgs, "failures must be an object");
  try {
    f.p_regen_fail = j.value("p_regen", 0.0);
    f.p_mesh_fail = j.value("p_mesh", 0.0);
    f.p_solver_fail = j.value("p_solver", 0.0);
    if (j.contains("seed")) f.seed = j["seed"].get<std::uint64_t>();
  } catch (const json::exception& ex) {
    throw Error(ErrorCode::kMalformedArgs, std::string("bad failures: ") + ex.what());
  }
  validate(f);
  return f;
}

std::string_view episode_state_name(EpisodeState state) {
  switch (state) {
    case EpisodeState::kOpen: return "open";
    case EpisodeState::kFinalized: return "finalized";
    case EpisodeState::kBudgetExhausted: return "budget_exhausted";
  }
  return "open";
}

const std::vector<std::string>& tool_names() {
  static const std::vector<std::string> names{kToolGenerateCad, kToolRunCae, kToolExtractResults,
                                              kToolComputeCost};
  return names;
}

namespace {

struct StoredResult {
  std::string geometry_id;
  std::string material;
  ResultField field;
};

ToolResponse failure(ErrorCode code, std::string message, bool injected = false) {
  ToolResponse r;
  r.error_code = std::string(error_code_name(code));
  r.message = std::move(message);
  r.injected = injected;
  return r;
}

ToolResponse success(json payload) {
  ToolResponse r;
  r.success = true;
  r.payload = std::move(payload);
  return r;
}

const std::string& string_arg(const json& args, const char* key) {
  if (!args.is_object() || !args.contains(key) || !args[key].is_string()) {
    throw Error(ErrorCode::kMalformedArgs, std::string("argument '") + key + "' must be a string");
  }
  return args[key].get_ref<const std::string&>();
}

json vec_json(const Vec3& v) { return json::array({v[0], v[1], v[2]}); }

}  // namespace

struct ToolServer::Episode {
  std::mutex mutex;
  std::string id;
  TaskInstance task;
  FailureConfig failures;
  std::mt19937_64 rng;
  EpisodeState state = EpisodeState::kOpen;
  int tool_calls = 0;
  int rounds = 0;
  int next_call = 1;
  int next_geometry = 1;
  int next_result = 1;
  RolloutLog log;
  std::map<std::string, std::shared_ptr<const SolidModel>> geometries;
  std::map<std::string, std::shared_ptr<const StoredResult>> results;

  void append(EventKind kind, std::string tool, json payload, bool ok) {
    Event e;
    e.t = static_cast<int>(log.events.size());
    e.kind = kind;
    e.tool = std::move(tool);
    e.payload = std::move(payload);
    e.success = ok;
    log.events.push_back(std::move(e));
  }

  bool draw(double p) {
    if (p <= 0.0) return false;
    return std::uniform_real_distribution<double>(0.0, 1.0)(rng) < p;
  }
};

ToolServer::ToolServer(MaterialLibrary library, ServerConfig config)
    : library_(std::move(library)), config_(std::move(config)) {}

ToolServer::~ToolServer() = default;

std::string ToolServer::open_episode(const TaskInstance& task, const FailureConfig& failures) {
  validate(task);
  validate(failures);
  find_category(task.category_id);
  auto ep = std::make_shared<Episode>();
  ep->task = task;
  ep->failures = failures;
  ep->rng.seed(failures.seed.value_or(task.seed));
  std::lock_guard lock(mutex_);
  char buf[32];
  std::snprintf(buf, sizeof buf, "ep-%06llu", static_cast<unsigned long long>(next_episode_++));
  ep->id = buf;
  episodes_[ep->id] = ep;
  return ep->id;
}

std::shared_ptr<ToolServer::Episode> ToolServer::find(const std::string& episode_id) const {
  std::lock_guard lock(mutex_);
  const auto it = episodes_.find(episode_id);
  if (it == episodes_.end()) {
    throw Error(ErrorCode::kUnknownEpisode, "unknown episode '" + episode_id + "'");
  }
  return it->second;
}

ToolResponse ToolServer::call_tool(const std::string& episode_id, const std::string& tool,
                                   const json& args, std::string call_id) {
  const auto ep = find(episode_id);
  std::lock_guard lock(ep->mutex);
  if (ep->state == EpisodeState::kFinalized) {
    return failure(ErrorCode::kEpisodeFinalized, "episode already finalized");
  }
  if (ep->state == EpisodeState::kBudgetExhausted) {
    return failure(ErrorCode::kBudgetExhausted, "budget exhausted");
  }
  const bool is_round = tool == kToolGenerateCad;
  const char* reason = nullptr;
  if (ep->tool_calls >= ep->task.max_tool_calls) reason = "max_tool_calls";
  else if (is_round && ep->rounds >= ep->task.max_rounds) reason = "max_rounds";
  if (reason) {
    ep->state = EpisodeState::kBudgetExhausted;
    ep->append(EventKind::kTerminal, {}, {{"reason", reason}}, false);
    return failure(ErrorCode::kBudgetExhausted, std::string("budget exhausted: ") + reason);
  }

  ++ep->tool_calls;
  if (is_round) ++ep->rounds;
  if (call_id.empty()) call_id = "c-" + std::to_string(ep->next_call);
  ++ep->next_call;
  ep->append(EventKind::kToolCall, tool, {{"call_id", call_id}, {"args", args}}, true);

  const TaskInstance& task = ep->task;
  const auto artifact_path = [&](const std::string& handle, const char* ext) -> std::string {
    if (config_.artifact_dir.empty()) return {};
    const auto dir = std::filesystem::path(config_.artifact_dir) / ep->id;
    std::filesystem::create_directories(dir);
    return (dir / (handle + ext)).string();
  };

  ToolResponse resp;
  try {
    if (tool == kToolGenerateCad) {
      const std::string& category_id = string_arg(args, "category");
      const PartCategory& cat = find_category(category_id);
      if (!args.contains("parameters")) {
        throw Error(ErrorCode::kMalformedArgs, "argument 'parameters' is required");
      }
      const ParamVector params = params_from_json(cat, args["parameters"]);
      if (ep->draw(ep->failures.p_regen_fail)) {
        resp = failure(ErrorCode::kRegenerationFailure, "injected: CAD regeneration failed", true);
      } else {
        auto solid = std::make_shared<SolidModel>(
            generate_solid(cat, params, config_.toolchain.mesh_density));
        const std::string handle = "geom-" + std::to_string(ep->next_geometry++);
        json anchors = json::array();
        for (const auto& a : solid->anchors) {
          anchors.push_back({{"role", role_name(a.role)},
                             {"face_tag", a.face_tag},
                             {"position", vec_json(a.position)}});
        }
        json payload{{"geometry_id", handle},
                     {"category", cat.id},
                     {"anchors", anchors},
                     {"volume_mm3", solid->volume_mm3},
                     {"n_nodes", solid->mesh.nodes.size()},
                     {"n_elements", solid->mesh.elements.size()}};
        if (const auto path = artifact_path(handle, ".mesh"); !path.empty()) {
          write_mesh_file(*solid, path);
          payload["path"] = path;
        }
        ep->geometries[handle] = std::move(solid);
        resp = success(std::move(payload));
      }
    } else if (tool == kToolRunCae) {
      const std::string& geometry_id = string_arg(args, "geometry_id");
      const std::string& material_name = string_arg(args, "material");
      const auto g = ep->geometries.find(geometry_id);
      if (g == ep->geometries.end()) {
        throw Error(ErrorCode::kMalformedArgs, "unknown geometry_id '" + geometry_id + "'");
      }
      const MaterialProps& material = library_.lookup(material_name);
      if (ep->draw(ep->failures.p_mesh_fail)) {
        resp = failure(ErrorCode::kMeshingFailure, "injected: meshing failed", true);
      } else if (ep->draw(ep->failures.p_solver_fail)) {
        resp = failure(ErrorCode::kNonConvergence, "injected: solver did not converge", true);
      } else {
        auto stored = std::make_shared<StoredResult>();
        stored->geometry_id = geometry_id;
        stored->material = material.name;
        stored->field = solve_static(*g->second, material, task.sim_settings,
                                     config_.toolchain.solver);
        const std::string handle = "res-" + std::to_string(ep->next_result++);
        json payload{{"result_id", handle},
                     {"geometry_id", geometry_id},
                     {"material", material.name},
                     {"converged", stored->field.converged},
                     {"iterations", stored->field.iterations},
                     {"log", stored->field.solver_log}};
        if (const auto path = artifact_path(handle, ".result"); !path.empty()) {
          write_result_file(stored->field, path);
          payload["path"] = path;
        }
        ep->results[handle] = std::move(stored);
        resp = success(std::move(payload));
      }
    } else if (tool == kToolExtractResults) {
      const std::string& result_id = string_arg(args, "result_id");
      const auto r = ep->results.find(result_id);
      if (r == ep->results.end()) {
        throw Error(ErrorCode::kMalformedArgs, "unknown result_id '" + result_id + "'");
      }
      resp = success({{"result_id", result_id},
                      {"u_max", displacement_max(r->second->field)},
                      {"sigma_max", stress_max(r->second->field)}});
    } else if (tool == kToolComputeCost) {
      const std::string& geometry_id = string_arg(args, "geometry_id");
      const std::string& material_name = string_arg(args, "material");
      const auto g = ep->geometries.find(geometry_id);
      if (g == ep->geometries.end()) {
        throw Error(ErrorCode::kMalformedArgs, "unknown geometry_id '" + geometry_id + "'");
      }
      const MaterialProps& material = library_.lookup(material_name);
      const CostBreakdown c = cost_breakdown(g->second->volume_mm3, material);
      resp = success({{"geometry_id", geometry_id},
                      {"material", material.name},
                      {"cost", c.cost},
                      {"mass_kg", c.mass_kg},
                      {"volume_m3", c.volume_m3}});
    } else {
      resp = failure(ErrorCode::kUnknownTool, "unknown tool '" + tool + "'");
    }
  } catch (const Error& ex) {
    resp = failure(ex.code(), ex.what());
    if (ex.code() == ErrorCode::kMalformedArgs) resp.payload["args"] = args;
  }

  json payload{{"call_id", call_id}};
  if (resp.success) {
    payload["result"] = resp.payload;
  } else {
    payload["error"] = {{"code", resp.error_code}, {"message", resp.message}};
    payload["injected"] = resp.injected;
    if (resp.payload.contains("args")) payload["args"] = resp.payload["args"];
  }
  ep->append(EventKind::kToolResponse, tool, std::move(payload), resp.success);
  return resp;
}

json ToolServer::submit_final(const std::string& episode_id, const std::string& text) {
  const auto ep = find(episode_id);
  std::lock_guard lock(ep->mutex);
  if (ep->state == EpisodeState::kFinalized) {
    return {{"accepted", false}, {"parsed", false}, {"final", nullptr}};
  }
  const auto final_json = extract_final_json(text);
  const json final_value = final_json ? *final_json : json(nullptr);
  ep->append(EventKind::kFinalOutput, {},
             {{"text", text}, {"parsed", final_json.has_value()}, {"final", final_value}},
             final_json.has_value());
  ep->state = EpisodeState::kFinalized;
  return {{"accepted", true}, {"parsed", final_json.has_value()}, {"final", final_value}};
}

RolloutLog ToolServer::get_rollout_log(const std::string& episode_id) const {
  const auto ep = find(episode_id);
  std::lock_guard lock(ep->mutex);
  return ep->log;
}

EpisodeState ToolServer::state(const std::string& episode_id) const {
  const auto ep = find(episode_id);
  std::lock_guard lock(ep->mutex);
  return ep->state;
}

int ToolServer::tool_call_count(const std::string& episode_id) const {
  const auto ep = find(episode_id);
  std::lock_guard lock(ep->mutex);
  return ep->tool_calls;
}

TaskInstance ToolServer::task(const std::string& episode_id) const {
  const auto ep = find(episode_id);
  std::lock_guard lock(ep->mutex);
  return ep->task;
}

void ToolServer::close_episode(const std::string& episode_id) {
  std::lock_guard lock(mutex_);
  if (episodes_.erase(episode_id) == 0) {
    throw Error(ErrorCode::kUnknownEpisode, "unknown episode '" + episode_id + "'");
  }
}

}  // namespace cadloop
