#pragma once

// Episode-scoped tool server: generate_cad, run_cae, extract_results and
// compute_cost over the embedded toolchain, with budgets, failure injection
// and rollout logging.

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "cadloop/error.hpp"
#include "cadloop/materials.hpp"
#include "cadloop/rollout.hpp"
#include "cadloop/task.hpp"
#include "cadloop/toolchain.hpp"

namespace cadloop {

struct FailureConfig {
  double p_regen_fail = 0.0;
  double p_mesh_fail = 0.0;
  double p_solver_fail = 0.0;
  // Injection stream seed; unset uses the task seed.
  std::optional<std::uint64_t> seed;

  bool any() const { return p_regen_fail > 0 || p_mesh_fail > 0 || p_solver_fail > 0; }
};

void validate(const FailureConfig& failures);
// "p_regen,p_mesh,p_solver", e.g. "0,0,0.2".
FailureConfig parse_failures(std::string_view text);
nlohmann::json failures_to_json(const FailureConfig& failures);
FailureConfig failures_from_json(const nlohmann::json& j);

enum class EpisodeState { kOpen, kFinalized, kBudgetExhausted };
std::string_view episode_state_name(EpisodeState state);

struct ToolResponse {
  bool success = false;
  nlohmann::json payload = nlohmann::json::object();
  std::string error_code;  // snake_case ErrorCode name when !success
  std::string message;
  bool injected = false;
};

struct ServerConfig {
  ToolchainConfig toolchain;
  // Non-empty: meshes and results are also written under <dir>/<episode>/.
  std::string artifact_dir;
};

inline constexpr const char* kToolGenerateCad = "generate_cad";
inline constexpr const char* kToolRunCae = "run_cae";
inline constexpr const char* kToolExtractResults = "extract_results";
inline constexpr const char* kToolComputeCost = "compute_cost";

const std::vector<std::string>& tool_names();

class ToolServer {
 public:
  explicit ToolServer(MaterialLibrary library = MaterialLibrary::default_library(),
                      ServerConfig config = {});
  ~ToolServer();
  ToolServer(const ToolServer&) = delete;
  ToolServer& operator=(const ToolServer&) = delete;

  std::string open_episode(const TaskInstance& task, const FailureConfig& failures = {});

  // Throws kUnknownEpisode; every other failure is a ToolResponse. An empty
  // call_id is replaced by a per-episode counter.
  ToolResponse call_tool(const std::string& episode_id, const std::string& tool,
                         const nlohmann::json& args, std::string call_id = {});

  // Records final_output and finalizes. Returns {accepted, parsed, final};
  // accepted is false when the episode was already finalized.
  nlohmann::json submit_final(const std::string& episode_id, const std::string& text);

  RolloutLog get_rollout_log(const std::string& episode_id) const;
  EpisodeState state(const std::string& episode_id) const;
  int tool_call_count(const std::string& episode_id) const;
  TaskInstance task(const std::string& episode_id) const;
  void close_episode(const std::string& episode_id);

  const MaterialLibrary& library() const { return library_; }
  const ServerConfig& config() const { return config_; }

 private:
  struct Episode;
  std::shared_ptr<Episode> find(const std::string& episode_id) const;

  MaterialLibrary library_;
  ServerConfig config_;
  mutable std::mutex mutex_;
  std::map<std::string, std::shared_ptr<Episode>> episodes_;
  std::uint64_t next_episode_ = 1;
};

}  // namespace cadloop
