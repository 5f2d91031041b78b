#pragma once

// Rollout scoring: R = R_cons + R_stop + R_fmt computed from the log alone.
// Depends on the log, the task thresholds and the material library; nothing
// here touches geometry or the solver.

#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "cadloop/materials.hpp"
#include "cadloop/metrics.hpp"
#include "cadloop/rollout.hpp"
#include "cadloop/task.hpp"

namespace cadloop {

inline constexpr double kStopLambda = 0.02;
inline constexpr double kStopLambdaMax = 0.10;
inline constexpr double kFormatReward = 0.10;
inline constexpr double kParamRelTolerance = 1e-6;

struct TripleRecord {
  int t = 0;  // index of the completing event
  MetricTriple triple;
  std::string category;
  std::string material;
  nlohmann::json parameters = nlohmann::json::object();
};

// A triple completes once, after a successful generate_cad G, a successful
// extract_results chained to G through run_cae and a successful compute_cost
// on G with the same material have both been seen. Any generate_cad response
// starts a new design.
std::vector<TripleRecord> parse_triples(const RolloutLog& log);

// Unknown materials fail the stress indicator.
int constraint_count(const TripleRecord& record, const TaskInstance& task,
                     const MaterialLibrary& library);

// 0 -> 0.00, 1 -> 0.20, 2 -> 0.50, 3 -> 1.00
double cons_value(int satisfied);
// -min(lambda K, lambda_max)
double stop_value(int k);

double reward_cons(const RolloutLog& log, const TaskInstance& task, const MaterialLibrary& library);
double reward_stop(const RolloutLog& log, const TaskInstance& task, const MaterialLibrary& library);
double reward_fmt(const RolloutLog& log, const TaskInstance& task, const MaterialLibrary& library);
double total_reward(const RolloutLog& log, const TaskInstance& task,
                    const MaterialLibrary& library);

// Final JSON from the last final_output event, re-extracted from its text.
std::optional<nlohmann::json> final_json(const RolloutLog& log);

// Same category and material strings, same parameter names, values equal
// within kParamRelTolerance relative.
bool final_matches(const nlohmann::json& final, const TripleRecord& record);

struct RewardScore {
  double r_cons = 0.0;
  double r_stop = 0.0;
  double r_fmt = 0.0;
  double r = 0.0;
  int n_last = 0;                 // 0 also when no triple exists
  bool has_triple = false;
  std::optional<int> t_feas;
  int k = 0;
};

RewardScore score_rollout(const RolloutLog& log, const TaskInstance& task,
                          const MaterialLibrary& library);

// {R_cons, R_stop, R_fmt, R, N_last, t_feas, K}; t_feas and N_last are null
// when undefined.
nlohmann::json score_to_json(const RewardScore& score);

}  // namespace cadloop
