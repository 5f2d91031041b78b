#pragma once

// Evaluation: re-run final answers through the toolchain, aggregate the
// seven run metrics, and the analytical FEM verification suite.

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "cadloop/materials.hpp"
#include "cadloop/metrics.hpp"
#include "cadloop/reward.hpp"
#include "cadloop/rollout.hpp"
#include "cadloop/task.hpp"
#include "cadloop/toolchain.hpp"

namespace cadloop {

struct Reproduction {
  std::optional<MetricTriple> triple;
  std::string failure;  // error code name when the design could not be evaluated
};

// Parses the final JSON against the task's category and evaluates it with
// no failure injection.
Reproduction reproduce_final(const nlohmann::json& final, const TaskInstance& task,
                             const MaterialLibrary& library, const ToolchainConfig& config);

struct InstanceRecord {
  std::string task_id;
  bool parsed = false;
  std::optional<nlohmann::json> final;
  std::optional<MetricTriple> reverified;
  std::string failure;
  Feasibility satisfied;
  int tool_calls = 0;
  RewardScore score;
};

struct EvalReport {
  double fsr = 0.0, dsr = 0.0, ssr = 0.0, csr = 0.0, meo = 0.0, as = 0.0, atc = 0.0;
  int n_instances = 0;
  std::vector<InstanceRecord> records;
};

struct LabeledTask {
  std::string id;
  TaskInstance task;
};

// Throws kMismatchedInputs when the sizes differ.
EvalReport evaluate_run(const std::vector<LabeledTask>& tasks, const std::vector<RolloutLog>& logs,
                        const MaterialLibrary& library, const ToolchainConfig& config);

nlohmann::json report_to_json(const EvalReport& report);
std::string report_table(const EvalReport& report);

// Every *.json below `dir` except manifest.json, sorted; the id is the path
// relative to dir without the extension.
std::vector<LabeledTask> load_task_dir(const std::string& dir);
std::string log_path_for(const std::string& logs_dir, const std::string& task_id);

struct OracleCheck {
  std::string name;
  bool pass = false;
  double value = 0.0;
  double expected = 0.0;
  double error = 0.0;
  double tolerance = 0.0;
  double seconds = 0.0;
};

// Patch test, cantilever convergence and von Mises invariants.
std::vector<OracleCheck> verify_fem_suite();
nlohmann::json oracle_checks_to_json(const std::vector<OracleCheck>& checks);

}  // namespace cadloop
