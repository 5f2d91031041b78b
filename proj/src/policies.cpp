#include "cadloop/policies.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cadloop/error.hpp"
#include "cadloop/geometry.hpp"

namespace cadloop {

using nlohmann::json;

// ---- clients ---------------------------------------------------------------

std::string InProcessClient::open_episode(const TaskInstance& task, const FailureConfig& failures) {
  return server_.open_episode(task, failures);
}

ToolResponse InProcessClient::call_tool(const std::string& episode_id, const std::string& tool,
                                        const json& args) {
  return server_.call_tool(episode_id, tool, args);
}

json InProcessClient::submit_final(const std::string& episode_id, const std::string& text) {
  return server_.submit_final(episode_id, text);
}

RolloutLog InProcessClient::rollout_log(const std::string& episode_id) {
  return server_.get_rollout_log(episode_id);
}

void InProcessClient::close_episode(const std::string& episode_id) {
  server_.close_episode(episode_id);
}

json WireClient::exchange(const json& request) {
  const std::string reply = transport_(request.dump());
  json resp = json::parse(reply, nullptr, false);
  if (resp.is_discarded() || !resp.is_object() || !resp.contains("success")) {
    throw Error(ErrorCode::kParse, "malformed response: " + reply);
  }
  return resp;
}

json WireClient::control(const std::string& episode_id, const std::string& tool, const json& args) {
  json req{{"call_id", "ctl-" + std::to_string(next_call_++)}, {"tool", tool}, {"args", args}};
  if (!episode_id.empty()) req["episode_id"] = episode_id;
  const json resp = exchange(req);
  if (!resp["success"].get<bool>()) {
    const json& err = resp.at("error");
    throw Error(ErrorCode::kMalformedArgs, tool + " failed: " + err.value("code", "") + ": " +
                                               err.value("message", ""));
  }
  return resp.at("payload");
}

std::string WireClient::open_episode(const TaskInstance& task, const FailureConfig& failures) {
  return control({}, "open_episode",
                 {{"task", task_to_json(task)}, {"failures", failures_to_json(failures)}})
      .at("episode_id")
      .get<std::string>();
}

ToolResponse WireClient::call_tool(const std::string& episode_id, const std::string& tool,
                                   const json& args) {
  const json resp = exchange({{"episode_id", episode_id},
                              {"call_id", "c-" + std::to_string(next_call_++)},
                              {"tool", tool},
                              {"args", args}});
  ToolResponse r;
  r.success = resp["success"].get<bool>();
  if (r.success) {
    r.payload = resp.value("payload", json::object());
  } else {
    const json err = resp.value("error", json::object());
    r.error_code = err.value("code", "");
    r.message = err.value("message", "");
    r.injected = err.value("injected", false);
  }
  return r;
}

json WireClient::submit_final(const std::string& episode_id, const std::string& text) {
  return control(episode_id, "submit_final", {{"text", text}});
}

RolloutLog WireClient::rollout_log(const std::string& episode_id) {
  RolloutLog log;
  const json payload = control(episode_id, "get_rollout_log", json::object());
  for (const auto& e : payload.at("events")) {
    log.events.push_back(event_from_json(e));
  }
  return log;
}

void WireClient::close_episode(const std::string& episode_id) {
  control(episode_id, "close_episode", json::object());
}

// ---- policies --------------------------------------------------------------

DesignProposal Policy::start(const TaskInstance& task, const MaterialLibrary& library) {
  task_ = &task;
  library_ = &library;
  return {task.initial_params, task.initial_material};
}

double constraint_penalty(const MetricTriple& t, const TaskInstance& task,
                          const MaterialProps& material) {
  const auto excess = [](double metric, double threshold) {
    return std::max(0.0, metric / threshold - 1.0);
  };
  return excess(t.u_max, task.delta_mm) + excess(t.sigma_max, stress_bound(task, material)) +
         excess(t.cost, task.kappa);
}

namespace {

// Aim slightly inside each bound so repeated corrections do not creep up on it.
constexpr double kTargetMargin = 0.97;

double cost_per_volume(const MaterialProps& m) { return m.density * m.unit_price; }

void clamp_params(const PartCategory& cat, ParamVector& p) {
  for (std::size_t i = 0; i < cat.parameters.size(); ++i) {
    p.values[i] = std::clamp(p.values[i], cat.parameters[i].lower, cat.parameters[i].upper);
  }
}

bool has_role(const PartCategory& cat, ParamRole role) {
  return std::any_of(cat.parameters.begin(), cat.parameters.end(),
                     [&](const ParamSpec& s) { return s.role == role; });
}

void scale_role(const PartCategory& cat, ParamVector& p, ParamRole role, double factor) {
  for (std::size_t i = 0; i < cat.parameters.size(); ++i) {
    if (cat.parameters[i].role == role) p.values[i] *= factor;
  }
}

}  // namespace

std::optional<DesignProposal> heuristic_step(const TaskInstance& task,
                                             const MaterialLibrary& library,
                                             const DesignProposal& last,
                                             const MetricTriple& triple) {
  const PartCategory& cat = find_category(task.category_id);
  const MaterialProps& mat = library.lookup(last.material);
  const Feasibility f = check_feasibility(triple, task, mat);
  if (f.all()) return std::nullopt;

  DesignProposal next = last;
  bool switched = false;
  if (!f.displacement) {
    const double ratio = triple.u_max / (kTargetMargin * task.delta_mm);
    scale_role(cat, next.params, ParamRole::kStiffness, std::min(std::cbrt(ratio), 1.5));
    scale_role(cat, next.params, ParamRole::kCompliance, 1.0 / std::min(ratio, 1.5));
  }
  if (!f.cost) {
    const MaterialProps* cheaper = nullptr;
    for (const auto& m : library.materials()) {
      if (cost_per_volume(m) >= cost_per_volume(mat)) continue;
      if (task.stress_scale * m.allowable_stress < 1.1 * triple.sigma_max) continue;
      if (!cheaper || cost_per_volume(m) < cost_per_volume(*cheaper)) cheaper = &m;
    }
    if (cheaper) {
      next.material = cheaper->name;
      switched = true;
    } else {
      const double k = std::cbrt(kTargetMargin * task.kappa / triple.cost);
      scale_role(cat, next.params,
                 has_role(cat, ParamRole::kBulk) ? ParamRole::kBulk : ParamRole::kCompliance, k);
    }
  }
  if (!f.stress) {
    const MaterialProps* strongest = &library.materials().front();
    for (const auto& m : library.materials()) {
      if (m.allowable_stress > strongest->allowable_stress) strongest = &m;
    }
    if (!switched && strongest->name != last.material) {
      next.material = strongest->name;
    } else {
      const double k =
          std::min(std::sqrt(triple.sigma_max / (kTargetMargin * stress_bound(task, mat))), 1.5);
      scale_role(cat, next.params, ParamRole::kStiffness, k);
    }
  }
  clamp_params(cat, next.params);

  if (next == last && !f.displacement) {
    // Geometry saturated: fall back to the stiffest material.
    const MaterialProps* stiffest = &library.materials().front();
    for (const auto& m : library.materials()) {
      if (m.young_modulus > stiffest->young_modulus) stiffest = &m;
    }
    next.material = stiffest->name;
  }
  if (next == last) return std::nullopt;
  return next;
}

DesignProposal HeuristicPolicy::start(const TaskInstance& task, const MaterialLibrary& library) {
  retries_ = 0;
  return Policy::start(task, library);
}

std::optional<DesignProposal> HeuristicPolicy::next(const DesignProposal& last,
                                                    const Outcome& outcome) {
  if (outcome.ok) {
    retries_ = 0;
    return heuristic_step(*task_, *library_, last, outcome.triple);
  }
  if (retries_ < 1) {
    ++retries_;
    return last;
  }
  retries_ = 0;
  const PartCategory& cat = find_category(task_->category_id);
  DesignProposal p = last;
  std::bernoulli_distribution sign(0.5);
  for (double& v : p.params.values) v *= sign(rng_) ? 1.01 : 0.99;
  clamp_params(cat, p.params);
  return p;
}

std::optional<DesignProposal> RandomSearchPolicy::next(const DesignProposal& last,
                                                       const Outcome& outcome) {
  if (outcome.ok &&
      check_feasibility(outcome.triple, *task_, library_->lookup(last.material)).all()) {
    return std::nullopt;
  }
  const PartCategory& cat = find_category(task_->category_id);
  DesignProposal p;
  for (const auto& s : cat.parameters) {
    p.params.values.push_back(std::uniform_real_distribution<double>(s.lower, s.upper)(rng_));
  }
  const auto& mats = library_->materials();
  p.material = mats[std::uniform_int_distribution<std::size_t>(0, mats.size() - 1)(rng_)].name;
  return p;
}

// ---- Nelder-Mead -----------------------------------------------------------

NelderMead::NelderMead(std::vector<double> x0, double step) {
  const std::size_t n = x0.size();
  for (double& v : x0) v = std::clamp(v, 0.0, 1.0);
  simplex_.push_back(x0);
  for (std::size_t i = 0; i < n; ++i) {
    auto x = x0;
    x[i] = x[i] + step <= 1.0 ? x[i] + step : x[i] - step;
    simplex_.push_back(std::move(x));
  }
  values_.assign(n + 1, 0.0);
  pending_ = simplex_[0];
}

void NelderMead::order() {
  std::vector<std::size_t> idx(simplex_.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return values_[a] < values_[b]; });
  std::vector<std::vector<double>> s;
  std::vector<double> v;
  for (std::size_t i : idx) {
    s.push_back(simplex_[i]);
    v.push_back(values_[i]);
  }
  simplex_ = std::move(s);
  values_ = std::move(v);
}

std::vector<double> NelderMead::centroid() const {
  const std::size_t n = simplex_.size() - 1;
  std::vector<double> c(simplex_[0].size(), 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < c.size(); ++j) c[j] += simplex_[i][j] / double(n);
  }
  return c;
}

std::vector<double> NelderMead::along(const std::vector<double>& from,
                                      const std::vector<double>& to, double t) const {
  std::vector<double> x(from.size());
  for (std::size_t j = 0; j < x.size(); ++j) {
    x[j] = std::clamp(from[j] + t * (to[j] - from[j]), 0.0, 1.0);
  }
  return x;
}

void NelderMead::begin_reflect() {
  order();
  phase_ = Phase::kReflect;
  pending_ = along(centroid(), simplex_.back(), -1.0);
}

void NelderMead::tell(double value) {
  ++evaluations_;
  const std::size_t n = simplex_.size() - 1;
  switch (phase_) {
    case Phase::kInit:
      values_[index_] = value;
      if (++index_ <= n) {
        pending_ = simplex_[index_];
      } else {
        begin_reflect();
      }
      return;
    case Phase::kReflect: {
      reflected_ = pending_;
      reflected_value_ = value;
      const auto c = centroid();
      if (value < values_.front()) {
        phase_ = Phase::kExpand;
        pending_ = along(c, reflected_, 2.0);
      } else if (value < values_[n - 1]) {
        simplex_.back() = reflected_;
        values_.back() = value;
        begin_reflect();
      } else if (value < values_.back()) {
        phase_ = Phase::kContractOutside;
        pending_ = along(c, reflected_, 0.5);
      } else {
        phase_ = Phase::kContractInside;
        pending_ = along(c, simplex_.back(), 0.5);
      }
      return;
    }
    case Phase::kExpand:
      if (value < reflected_value_) {
        simplex_.back() = pending_;
        values_.back() = value;
      } else {
        simplex_.back() = reflected_;
        values_.back() = reflected_value_;
      }
      begin_reflect();
      return;
    case Phase::kContractOutside:
    case Phase::kContractInside: {
      const double reference =
          phase_ == Phase::kContractOutside ? reflected_value_ : values_.back();
      if (value <= reference) {
        simplex_.back() = pending_;
        values_.back() = value;
        begin_reflect();
      } else {
        phase_ = Phase::kShrink;
        for (std::size_t i = 1; i <= n; ++i) simplex_[i] = along(simplex_[0], simplex_[i], 0.5);
        index_ = 1;
        pending_ = simplex_[1];
      }
      return;
    }
    case Phase::kShrink:
      values_[index_] = value;
      if (++index_ <= n) {
        pending_ = simplex_[index_];
      } else {
        begin_reflect();
      }
      return;
  }
}

std::vector<double> NelderMeadPolicy::encode(const ParamVector& params) const {
  const auto& specs = find_category(task_->category_id).parameters;
  std::vector<double> x;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    x.push_back((params.values[i] - specs[i].lower) / (specs[i].upper - specs[i].lower));
  }
  return x;
}

DesignProposal NelderMeadPolicy::decode(const std::vector<double>& x) const {
  const auto& specs = find_category(task_->category_id).parameters;
  DesignProposal d;
  d.material = materials_[material_index_];
  for (std::size_t i = 0; i < specs.size(); ++i) {
    d.params.values.push_back(specs[i].lower + x[i] * (specs[i].upper - specs[i].lower));
  }
  return d;
}

DesignProposal NelderMeadPolicy::start(const TaskInstance& task, const MaterialLibrary& library) {
  const DesignProposal first = Policy::start(task, library);
  materials_ = {task.initial_material};
  std::vector<const MaterialProps*> rest;
  for (const auto& m : library.materials()) {
    if (m.name != task.initial_material) rest.push_back(&m);
  }
  std::stable_sort(rest.begin(), rest.end(), [](const MaterialProps* a, const MaterialProps* b) {
    return cost_per_volume(*a) < cost_per_volume(*b);
  });
  for (const auto* m : rest) materials_.push_back(m->name);
  material_index_ = 0;
  search_.emplace(encode(first.params), 0.15);
  return decode(search_->ask());
}

std::optional<DesignProposal> NelderMeadPolicy::next(const DesignProposal& last,
                                                     const Outcome& outcome) {
  double value = 1e6;
  if (outcome.ok) {
    value = constraint_penalty(outcome.triple, *task_, library_->lookup(last.material));
    if (value == 0.0) return std::nullopt;
  }
  search_->tell(value);
  if (search_->evaluations() >= per_material_) {
    if (++material_index_ >= materials_.size()) material_index_ = 0;
    const std::vector<double> x = search_->best();
    search_.emplace(x, 0.15);
  }
  return decode(search_->ask());
}

std::unique_ptr<Policy> make_policy(const std::string& name, std::uint64_t seed) {
  if (name == "heuristic") return std::make_unique<HeuristicPolicy>(seed);
  if (name == "random") return std::make_unique<RandomSearchPolicy>(seed);
  if (name == "nelder-mead") return std::make_unique<NelderMeadPolicy>();
  if (name == "submit-initial") return std::make_unique<SubmitInitialPolicy>();
  throw Error(ErrorCode::kMalformedArgs, "unknown policy '" + name + "'");
}

// ---- episode driver --------------------------------------------------------

std::string final_answer_text(const TaskInstance& task, const DesignProposal& design) {
  const json j{{"category", task.category_id},
               {"material", design.material},
               {"parameters", params_to_json(find_category(task.category_id), design.params)}};
  return "Final design:\n" + j.dump();
}

EpisodeRun run_policy(Policy& policy, const TaskInstance& task, ToolClient& client,
                      const FailureConfig& failures, const MaterialLibrary& library,
                      const RunOptions& options) {
  EpisodeRun run;
  run.episode_id = client.open_episode(task, failures);
  const PartCategory& cat = find_category(task.category_id);

  struct Executed {
    DesignProposal design;
    int satisfied;
    double penalty;
  };
  std::optional<Executed> best, last_done;

  DesignProposal proposal = policy.start(task, library);
  if (policy.explores()) {
    for (;;) {
      Outcome outcome;
      const auto call = [&](const char* tool, const json& args) {
        ToolResponse r = client.call_tool(run.episode_id, tool, args);
        if (!r.success && r.error_code == error_code_name(ErrorCode::kBudgetExhausted)) {
          run.budget_exhausted = true;
        }
        if (!r.success) outcome.error_code = r.error_code;
        return r;
      };
      const ToolResponse g = call(kToolGenerateCad, {{"category", task.category_id},
                                                     {"parameters", params_to_json(cat, proposal.params)}});
      if (g.success) {
        const std::string geom = g.payload.at("geometry_id").get<std::string>();
        const ToolResponse c = call(kToolRunCae, {{"geometry_id", geom}, {"material", proposal.material}});
        if (c.success) {
          const ToolResponse x =
              call(kToolExtractResults, {{"result_id", c.payload.at("result_id")}});
          if (x.success) {
            const ToolResponse k = call(kToolComputeCost, {{"geometry_id", geom}, {"material", proposal.material}});
            if (k.success) {
              outcome.ok = true;
              outcome.triple = {x.payload.at("u_max").get<double>(),
                                x.payload.at("sigma_max").get<double>(),
                                k.payload.at("cost").get<double>()};
            }
          }
        }
      }
      if (run.budget_exhausted) break;
      if (outcome.ok) {
        ++run.executed_designs;
        const MaterialProps& m = library.lookup(proposal.material);
        Executed e{proposal, check_feasibility(outcome.triple, task, m).count(),
                   constraint_penalty(outcome.triple, task, m)};
        if (!best || e.satisfied > best->satisfied ||
            (e.satisfied == best->satisfied && e.penalty < best->penalty)) {
          best = e;
        }
        last_done = e;
      }
      const auto next = policy.next(proposal, outcome);
      if (!next) break;
      proposal = *next;
    }
  }

  const auto& chosen = options.final_choice == FinalChoice::kBestSoFar ? best : last_done;
  run.final_design = chosen ? chosen->design : DesignProposal{task.initial_params, task.initial_material};
  run.final_text = final_answer_text(task, run.final_design);
  client.submit_final(run.episode_id, run.final_text);
  run.log = client.rollout_log(run.episode_id);
  if (options.close_episode) client.close_episode(run.episode_id);
  return run;
}

}  // namespace cadloop
