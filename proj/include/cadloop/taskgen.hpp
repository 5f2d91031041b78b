#pragma once

// Task synthesis: baseline simulation, randomized threshold reduction,
// feasibility screening, prompt assembly and dataset export.

#include <array>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "cadloop/materials.hpp"
#include "cadloop/metrics.hpp"
#include "cadloop/task.hpp"
#include "cadloop/toolchain.hpp"

namespace cadloop {

enum class ConstraintItem { kDisplacement = 0, kCost = 1, kStress = 2 };

struct ReductionPolicy {
  double standard_lower = 0.05;
  double standard_upper = 0.10;
  double extreme_value = 0.30;
  double extreme_fraction = 0.10;
  // 1, 2 or 3 to fix the count; 0 draws it uniformly from {1, 2, 3}.
  int items_to_reduce = 0;
};

struct ThresholdAnnotation {
  double delta_mm = 0.0;
  double kappa = 0.0;
  double stress_scale = 1.0;
  bool extreme = false;
  std::array<bool, 3> reduced{};     // indexed by ConstraintItem
  std::array<double, 3> ratio{};     // reduction r per item, 0 if not reduced
};

// Which items get tightened and by how much, drawn before any simulation.
struct ReductionDraw {
  bool extreme = false;
  std::array<bool, 3> reduced{};
  std::array<double, 3> ratio{};
};

ReductionDraw draw_reduction(const ReductionPolicy& policy, std::mt19937_64& rng);

// Applies a draw to the ground-truth metrics of the initial design.
ThresholdAnnotation apply_reduction(const MetricTriple& baseline, const ReductionDraw& draw);

ThresholdAnnotation annotate_thresholds(const MetricTriple& baseline,
                                        const ReductionPolicy& policy, std::mt19937_64& rng);

MetricTriple baseline_metrics(const std::string& category_id, const ParamVector& params,
                              const MaterialProps& material, const SimSettings& settings,
                              const ToolchainConfig& config);

struct FeasibilityResult {
  bool feasible = false;
  int evaluations = 0;  // FEM solves spent
  std::optional<DesignProposal> witness;
};

// Grid search (5 levels per parameter x every library material) in an order
// shuffled by `order_seed`. Candidates failing the cost bound are rejected
// from the analytic volume without a solve; at most `search_budget` solves.
FeasibilityResult feasibility_search(const TaskInstance& task, const MaterialLibrary& library,
                                     const ToolchainConfig& config, int search_budget,
                                     std::uint64_t order_seed);

bool feasibility_check(const TaskInstance& task, const MaterialLibrary& library,
                       const ToolchainConfig& config, int search_budget);

// Four-part prompt. Parts 1 and 3 are chosen among 10 variants each by
// variant_seed. Throws kMissingTemplate for categories without a template.
std::string build_prompt(const TaskInstance& task, const MaterialLibrary& library,
                         std::uint64_t variant_seed);

inline constexpr int kPromptVariants = 10;

struct DatasetOptions {
  int n_train = 100;
  int n_test = 20;
  int n_general = 10;
  std::uint64_t seed = 42;
  ReductionPolicy policy;
  ToolchainConfig toolchain;
  int search_budget = 150;
  int max_attempts = 60;  // design resamples per task slot
  // Empty selects the registry split (held_out flag).
  std::vector<std::string> main_categories;
  std::vector<std::string> held_out_categories;
};

struct GeneratedTask {
  std::string split;  // train | test | general
  std::string id;     // e.g. train/task_00003
  TaskInstance task;
  ThresholdAnnotation annotation;
  MetricTriple baseline;
  int attempts = 0;
};

// Derives the per-slot seed from the dataset seed and the global slot index.
std::uint64_t task_seed(std::uint64_t dataset_seed, std::uint64_t index);

// Builds one feasible task for a slot; throws if max_attempts run out.
GeneratedTask generate_task(const DatasetOptions& options, const MaterialLibrary& library,
                            const std::string& split, std::uint64_t index,
                            const std::vector<std::string>& categories);

std::vector<GeneratedTask> generate_dataset(const DatasetOptions& options,
                                            const MaterialLibrary& library);

// Writes <dir>/<split>/task_NNNNN.json and .prompt.txt plus manifest.json.
// Throws kInsufficientCategories when fewer than two categories exist.
std::vector<GeneratedTask> export_dataset(const DatasetOptions& options,
                                          const MaterialLibrary& library,
                                          const std::string& out_dir);

}  // namespace cadloop
