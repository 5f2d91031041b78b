#include "cadloop/reward.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace cadloop {

using nlohmann::json;

namespace {

const json* find_string(const json& obj, const char* key) {
  if (!obj.is_object()) return nullptr;
  const auto it = obj.find(key);
  return it != obj.end() && it->is_string() ? &*it : nullptr;
}

const json* find_number(const json& obj, const char* key) {
  if (!obj.is_object()) return nullptr;
  const auto it = obj.find(key);
  return it != obj.end() && it->is_number() ? &*it : nullptr;
}

bool same_call(const Event& call, const Event& resp) {
  if (resp.kind != EventKind::kToolResponse || resp.tool != call.tool) return false;
  const auto a = call.payload.find("call_id");
  const auto b = resp.payload.find("call_id");
  if (a == call.payload.end() || b == resp.payload.end()) return false;
  return *a == *b;
}

bool values_close(double a, double b) {
  if (a == b) return true;
  return std::abs(a - b) <= kParamRelTolerance * std::max(std::abs(a), std::abs(b));
}

}  // namespace

std::vector<TripleRecord> parse_triples(const RolloutLog& log) {
  struct Design {
    std::string geometry_id;
    std::string category;
    json parameters;
  };
  struct Extract {
    std::string material;
    double u_max, sigma_max;
  };
  struct Cost {
    std::string material;
    double cost;
  };
  std::optional<Design> design;
  std::map<std::string, std::string> result_material;
  std::optional<Extract> extract;
  std::optional<Cost> cost;
  std::vector<TripleRecord> out;

  const auto& ev = log.events;
  for (std::size_t i = 0; i + 1 < ev.size(); ++i) {
    const Event& call = ev[i];
    if (call.kind != EventKind::kToolCall) continue;
    const Event& resp = ev[i + 1];
    if (!same_call(call, resp)) continue;
    ++i;
    const json args = call.payload.value("args", json::object());
    const json result = resp.payload.value("result", json::object());

    if (call.tool == "generate_cad") {
      design.reset();
      result_material.clear();
      extract.reset();
      cost.reset();
      if (!resp.success) continue;
      const json* id = find_string(result, "geometry_id");
      const json* cat = find_string(args, "category");
      if (!id || !cat || !args.contains("parameters") || !args["parameters"].is_object()) continue;
      design = Design{id->get<std::string>(), cat->get<std::string>(), args["parameters"]};
      continue;
    }
    if (!resp.success || !design) continue;

    bool completing = false;
    if (call.tool == "run_cae") {
      const json* geom = find_string(args, "geometry_id");
      const json* mat = find_string(args, "material");
      const json* rid = find_string(result, "result_id");
      if (geom && mat && rid && *geom == design->geometry_id) {
        result_material[rid->get<std::string>()] = mat->get<std::string>();
      }
    } else if (call.tool == "extract_results") {
      const json* rid = find_string(args, "result_id");
      const json* u = find_number(result, "u_max");
      const json* s = find_number(result, "sigma_max");
      if (rid && u && s) {
        const auto it = result_material.find(rid->get<std::string>());
        if (it != result_material.end()) {
          extract = Extract{it->second, u->get<double>(), s->get<double>()};
          completing = true;
        }
      }
    } else if (call.tool == "compute_cost") {
      const json* geom = find_string(args, "geometry_id");
      const json* mat = find_string(args, "material");
      const json* c = find_number(result, "cost");
      if (geom && mat && c && *geom == design->geometry_id) {
        cost = Cost{mat->get<std::string>(), c->get<double>()};
        completing = true;
      }
    }
    if (completing && extract && cost && extract->material == cost->material) {
      TripleRecord r;
      r.t = resp.t;
      r.triple = {extract->u_max, extract->sigma_max, cost->cost};
      r.category = design->category;
      r.material = extract->material;
      r.parameters = design->parameters;
      out.push_back(std::move(r));
    }
  }
  return out;
}

int constraint_count(const TripleRecord& record, const TaskInstance& task,
                     const MaterialLibrary& library) {
  int n = 0;
  n += record.triple.u_max <= task.delta_mm ? 1 : 0;
  n += record.triple.cost <= task.kappa ? 1 : 0;
  if (const MaterialProps* m = library.find(record.material)) {
    n += record.triple.sigma_max <= task.stress_scale * m->allowable_stress ? 1 : 0;
  }
  return n;
}

double cons_value(int satisfied) {
  switch (satisfied) {
    case 1: return 0.20;
    case 2: return 0.50;
    case 3: return 1.00;
    default: return 0.00;
  }
}

double stop_value(int k) { return -std::min(kStopLambda * k, kStopLambdaMax); }

std::optional<json> final_json(const RolloutLog& log) {
  for (auto it = log.events.rbegin(); it != log.events.rend(); ++it) {
    if (it->kind != EventKind::kFinalOutput) continue;
    const json* text = find_string(it->payload, "text");
    if (!text) return std::nullopt;
    return extract_final_json(text->get<std::string>());
  }
  return std::nullopt;
}

bool final_matches(const json& final, const TripleRecord& record) {
  const json* cat = find_string(final, "category");
  const json* mat = find_string(final, "material");
  if (!cat || !mat || *cat != record.category || *mat != record.material) return false;
  const auto pit = final.find("parameters");
  if (pit == final.end() || !pit->is_object()) return false;
  const json& fp = *pit;
  const json& rp = record.parameters;
  if (fp.size() != rp.size()) return false;
  for (auto it = rp.begin(); it != rp.end(); ++it) {
    const auto f = fp.find(it.key());
    if (f == fp.end() || !f->is_number() || !it->is_number()) return false;
    if (!values_close(f->get<double>(), it->get<double>())) return false;
  }
  return true;
}

RewardScore score_rollout(const RolloutLog& log, const TaskInstance& task,
                          const MaterialLibrary& library) {
  RewardScore s;
  const auto triples = parse_triples(log);
  if (!triples.empty()) {
    s.has_triple = true;
    s.n_last = constraint_count(triples.back(), task, library);
    s.r_cons = cons_value(s.n_last);
    for (const auto& r : triples) {
      if (constraint_count(r, task, library) == 3) {
        s.t_feas = r.t;
        break;
      }
    }
    if (const auto f = final_json(log); f && final_matches(*f, triples.back())) {
      s.r_fmt = kFormatReward;
    }
  }
  if (s.t_feas) {
    for (const auto& e : log.events) {
      if (e.t > *s.t_feas &&
          (e.kind == EventKind::kToolCall || e.kind == EventKind::kToolResponse)) {
        ++s.k;
      }
    }
    s.r_stop = stop_value(s.k);
  }
  s.r = s.r_cons + s.r_stop + s.r_fmt;
  return s;
}

double reward_cons(const RolloutLog& log, const TaskInstance& task, const MaterialLibrary& library) {
  return score_rollout(log, task, library).r_cons;
}

double reward_stop(const RolloutLog& log, const TaskInstance& task, const MaterialLibrary& library) {
  return score_rollout(log, task, library).r_stop;
}

double reward_fmt(const RolloutLog& log, const TaskInstance& task, const MaterialLibrary& library) {
  return score_rollout(log, task, library).r_fmt;
}

double total_reward(const RolloutLog& log, const TaskInstance& task,
                    const MaterialLibrary& library) {
  return score_rollout(log, task, library).r;
}

json score_to_json(const RewardScore& s) {
  return {{"R_cons", s.r_cons},
          {"R_stop", s.r_stop},
          {"R_fmt", s.r_fmt},
          {"R", s.r},
          {"N_last", s.has_triple ? json(s.n_last) : json(nullptr)},
          {"t_feas", s.t_feas ? json(*s.t_feas) : json(nullptr)},
          {"K", s.k}};
}

}  // namespace cadloop
