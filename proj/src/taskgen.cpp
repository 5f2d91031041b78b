#include "cadloop/taskgen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "cadloop/error.hpp"

namespace cadloop {

using nlohmann::json;

namespace {

double round_significant(double x, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, x);
  return std::strtod(buf, nullptr);
}

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

std::size_t pick(std::mt19937_64& rng, std::size_t n) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

bool geometry_valid(const std::string& category_id, const ParamVector& params) {
  try {
    analytic_volume(category_id, params);
    return true;
  } catch (const Error&) {
    return false;
  }
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

ReductionDraw draw_reduction(const ReductionPolicy& policy, std::mt19937_64& rng) {
  ReductionDraw d;
  int k = policy.items_to_reduce;
  if (k == 0) k = std::uniform_int_distribution<int>(1, 3)(rng);
  if (k < 1 || k > 3) throw Error(ErrorCode::kMalformedArgs, "items_to_reduce must be 1, 2 or 3");
  std::array<int, 3> order{0, 1, 2};
  for (int i = 2; i > 0; --i) {
    std::swap(order[i], order[std::uniform_int_distribution<int>(0, i)(rng)]);
  }
  d.extreme = std::bernoulli_distribution(policy.extreme_fraction)(rng);
  for (int i = 0; i < k; ++i) {
    const int item = order[i];
    d.reduced[item] = true;
    d.ratio[item] = d.extreme ? policy.extreme_value
                              : uniform(rng, policy.standard_lower, policy.standard_upper);
  }
  return d;
}

ThresholdAnnotation apply_reduction(const MetricTriple& baseline, const ReductionDraw& draw) {
  ThresholdAnnotation a;
  a.extreme = draw.extreme;
  a.reduced = draw.reduced;
  a.ratio = draw.ratio;
  const auto factor = [&](ConstraintItem item) {
    const auto i = static_cast<std::size_t>(item);
    return draw.reduced[i] ? 1.0 - draw.ratio[i] : 1.0;
  };
  a.delta_mm = baseline.u_max * factor(ConstraintItem::kDisplacement);
  a.kappa = baseline.cost * factor(ConstraintItem::kCost);
  a.stress_scale = factor(ConstraintItem::kStress);
  return a;
}

ThresholdAnnotation annotate_thresholds(const MetricTriple& baseline,
                                        const ReductionPolicy& policy, std::mt19937_64& rng) {
  return apply_reduction(baseline, draw_reduction(policy, rng));
}

MetricTriple baseline_metrics(const std::string& category_id, const ParamVector& params,
                              const MaterialProps& material, const SimSettings& settings,
                              const ToolchainConfig& config) {
  const SolidModel solid = generate_solid(category_id, params, config.mesh_density);
  const ResultField result = solve_static(solid, material, settings, config.solver);
  return {displacement_max(result), stress_max(result), cost(solid_volume(solid), material)};
}

FeasibilityResult feasibility_search(const TaskInstance& task, const MaterialLibrary& library,
                                     const ToolchainConfig& config, int search_budget,
                                     std::uint64_t order_seed) {
  constexpr int kLevels = 5;
  const auto& cat = find_category(task.category_id);
  const std::size_t dims = cat.parameters.size();

  std::size_t grid_size = library.size();
  for (std::size_t i = 0; i < dims; ++i) grid_size *= kLevels;
  std::vector<std::size_t> order(grid_size);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(order_seed);
  for (std::size_t i = grid_size; i > 1; --i) {
    std::swap(order[i - 1], order[pick(rng, i)]);
  }

  std::vector<DesignProposal> candidates;
  candidates.reserve(grid_size + 1);
  candidates.push_back({task.initial_params, task.initial_material});
  for (std::size_t code : order) {
    DesignProposal d;
    d.material = library.materials()[code % library.size()].name;
    code /= library.size();
    for (std::size_t i = 0; i < dims; ++i) {
      const auto& s = cat.parameters[i];
      const int level = static_cast<int>(code % kLevels);
      code /= kLevels;
      d.params.values.push_back(s.lower + (s.upper - s.lower) * level / (kLevels - 1));
    }
    candidates.push_back(std::move(d));
  }

  FeasibilityResult out;
  for (const auto& cand : candidates) {
    if (out.evaluations >= search_budget) break;
    const MaterialProps* mat = library.find(cand.material);
    if (!mat) continue;
    double volume = 0.0;
    try {
      volume = analytic_volume(task.category_id, cand.params);
    } catch (const Error&) {
      continue;
    }
    if (cost(volume, *mat) > task.kappa) continue;
    ++out.evaluations;
    try {
      const MetricTriple t = evaluate_design(task.category_id, cand, task.sim_settings, library, config);
      if (check_feasibility(t, task, *mat).all()) {
        out.feasible = true;
        out.witness = cand;
        return out;
      }
    } catch (const Error&) {
      continue;
    }
  }
  return out;
}

bool feasibility_check(const TaskInstance& task, const MaterialLibrary& library,
                       const ToolchainConfig& config, int search_budget) {
  return feasibility_search(task, library, config, search_budget, splitmix64(task.seed ^ 0xfea5ULL))
      .feasible;
}

std::uint64_t task_seed(std::uint64_t dataset_seed, std::uint64_t index) {
  return splitmix64(splitmix64(dataset_seed) ^ (index + 1));
}

GeneratedTask generate_task(const DatasetOptions& options, const MaterialLibrary& library,
                            const std::string& split, std::uint64_t index,
                            const std::vector<std::string>& categories) {
  if (categories.empty() || library.empty()) {
    throw Error(ErrorCode::kInsufficientCategories, "no categories or materials to sample from");
  }
  GeneratedTask g;
  g.split = split;
  const std::uint64_t seed = task_seed(options.seed, index);
  std::mt19937_64 rng(seed);
  const std::string category_id = categories[pick(rng, categories.size())];
  const auto& cat = find_category(category_id);
  const ReductionDraw draw = draw_reduction(options.policy, rng);
  const bool stress_reduced = draw.reduced[static_cast<std::size_t>(ConstraintItem::kStress)];

  for (int attempt = 1; attempt <= options.max_attempts; ++attempt) {
    g.attempts = attempt;
    ParamVector params;
    for (const auto& s : cat.parameters) {
      const double v = s.lower + (s.upper - s.lower) * uniform(rng, 0.2, 0.8);
      params.values.push_back(std::clamp(std::round(v * 10.0) / 10.0, s.lower, s.upper));
    }
    const MaterialProps& material = library.materials()[pick(rng, library.size())];
    // Target stress utilisation of the initial design. A tightened stress item
    // needs the design close to its allowable so the reduction binds.
    const double utilisation = stress_reduced ? uniform(rng, 0.96, 0.995) : uniform(rng, 0.35, 0.9);
    if (!geometry_valid(category_id, params)) continue;

    MetricTriple baseline;
    SimSettings settings;
    try {
      settings.pressure_mpa = 1.0;
      const MetricTriple unit = baseline_metrics(category_id, params, material, settings, options.toolchain);
      if (!(unit.sigma_max > 0)) continue;
      settings.pressure_mpa =
          round_significant(utilisation * material.allowable_stress / unit.sigma_max, 4);
      baseline = baseline_metrics(category_id, params, material, settings, options.toolchain);
    } catch (const Error&) {
      continue;  // seed discarded
    }
    if (!(baseline.u_max > 0 && baseline.cost > 0)) continue;

    const ThresholdAnnotation ann = apply_reduction(baseline, draw);
    TaskInstance task;
    task.category_id = category_id;
    task.initial_params = params;
    task.initial_material = material.name;
    task.sim_settings = settings;
    task.delta_mm = ann.delta_mm;
    task.kappa = ann.kappa;
    task.stress_scale = ann.stress_scale;
    task.seed = seed;
    if (!feasibility_check(task, library, options.toolchain, options.search_budget)) continue;

    g.task = std::move(task);
    g.annotation = ann;
    g.baseline = baseline;
    return g;
  }
  throw Error(ErrorCode::kTaskSynthesisFailed,
              "could not synthesize a feasible task for slot " + std::to_string(index) + " (" +
                  category_id + ")");
}

namespace {

void resolve_categories(const DatasetOptions& options, std::vector<std::string>& main,
                        std::vector<std::string>& held_out) {
  main = options.main_categories;
  held_out = options.held_out_categories;
  if (main.empty() && held_out.empty()) {
    for (const auto& c : part_categories()) (c.held_out ? held_out : main).push_back(c.id);
  }
  if (main.size() + held_out.size() < 2 || main.empty() ||
      (options.n_general > 0 && held_out.empty())) {
    throw Error(ErrorCode::kInsufficientCategories,
                "need at least one main and one held-out category (two in total)");
  }
  for (const auto& id : main) find_category(id);
  for (const auto& id : held_out) find_category(id);
}

std::string slot_name(int i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "task_%05d", i);
  return buf;
}

}  // namespace

std::vector<GeneratedTask> generate_dataset(const DatasetOptions& options,
                                            const MaterialLibrary& library) {
  std::vector<std::string> main, held_out;
  resolve_categories(options, main, held_out);
  std::vector<GeneratedTask> out;
  std::uint64_t index = 0;
  auto emit = [&](const std::string& split, int n, const std::vector<std::string>& cats) {
    for (int i = 0; i < n; ++i, ++index) {
      GeneratedTask g = generate_task(options, library, split, index, cats);
      g.id = split + "/" + slot_name(i);
      out.push_back(std::move(g));
    }
  };
  emit("train", options.n_train, main);
  emit("test", options.n_test, main);
  emit("general", options.n_general, held_out);
  return out;
}

std::vector<GeneratedTask> export_dataset(const DatasetOptions& options,
                                          const MaterialLibrary& library,
                                          const std::string& out_dir) {
  namespace fs = std::filesystem;
  std::vector<GeneratedTask> tasks = generate_dataset(options, library);
  json manifest;
  manifest["format"] = "cadloop-dataset 1";
  manifest["seed"] = options.seed;
  manifest["mesh_density"] = options.toolchain.mesh_density;
  manifest["search_budget"] = options.search_budget;
  manifest["counts"] = {{"train", options.n_train}, {"test", options.n_test},
                        {"general", options.n_general}};
  json entries = json::array();
  for (const auto& g : tasks) {
    const fs::path base = fs::path(out_dir) / g.id;
    fs::create_directories(base.parent_path());
    write_task_file(g.task, base.string() + ".json");
    std::ofstream prompt(base.string() + ".prompt.txt");
    prompt << build_prompt(g.task, library, g.task.seed);
    json reduced = json::array(), ratio = json::array();
    for (int i = 0; i < 3; ++i) {
      reduced.push_back(g.annotation.reduced[i]);
      ratio.push_back(g.annotation.ratio[i]);
    }
    entries.push_back({{"id", g.id},
                       {"category", g.task.category_id},
                       {"extreme", g.annotation.extreme},
                       {"reduced", reduced},
                       {"ratio", ratio},
                       {"baseline", {{"u_max", g.baseline.u_max},
                                     {"sigma_max", g.baseline.sigma_max},
                                     {"cost", g.baseline.cost}}},
                       {"attempts", g.attempts}});
  }
  manifest["items"] = {"displacement", "cost", "stress"};
  manifest["tasks"] = std::move(entries);
  fs::create_directories(out_dir);
  std::ofstream(fs::path(out_dir) / "manifest.json") << manifest.dump(2) << "\n";
  return tasks;
}

}  // namespace cadloop
