#pragma once

#include <cstdint>
#include <string>

#include "json.hpp"

#include "cadloop/fem.hpp"
#include "cadloop/geometry.hpp"

namespace cadloop {

inline constexpr int kDefaultMaxRounds = 15;
inline constexpr int kDefaultMaxToolCalls = 60;
inline constexpr int kDefaultMaxRetries = 2;

// One optimization episode's specification.
struct TaskInstance {
  std::string category_id;
  ParamVector initial_params;
  std::string initial_material;
  SimSettings sim_settings;
  double delta_mm = 0.0;     // displacement bound
  double kappa = 0.0;        // cost bound
  double stress_scale = 1.0; // stress bound = stress_scale * sigma_allow(material)
  int max_rounds = kDefaultMaxRounds;
  int max_tool_calls = kDefaultMaxToolCalls;
  int max_retries = kDefaultMaxRetries;
  std::uint64_t seed = 0;
};

// Throws kMalformedArgs on a violated invariant.
void validate(const TaskInstance& task);

// Task file: category, initial_params, initial_material, pressure_mpa,
// delta_mm, kappa, stress_scale, max_rounds, max_tool_calls, seed.
nlohmann::json task_to_json(const TaskInstance& task);
TaskInstance task_from_json(const nlohmann::json& j);

TaskInstance read_task_file(const std::string& path);
void write_task_file(const TaskInstance& task, const std::string& path);

}  // namespace cadloop
