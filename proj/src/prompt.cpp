#include <array>
#include <iomanip>
#include <map>
#include <sstream>
#include <string>

#include "cadloop/error.hpp"
#include "cadloop/taskgen.hpp"

namespace cadloop {

namespace {

std::string num(double v, int precision = 6) {
  std::ostringstream os;
  os << std::setprecision(precision) << v;
  return os.str();
}

// Replaces every {key} in text.
std::string render(std::string text, const std::map<std::string, std::string>& vars) {
  for (const auto& [key, value] : vars) {
    const std::string token = "{" + key + "}";
    for (auto pos = text.find(token); pos != std::string::npos;
         pos = text.find(token, pos + value.size())) {
      text.replace(pos, token.size(), value);
    }
  }
  return text;
}

// Part 1: background and objectives.
constexpr std::array<const char*, kPromptVariants> kBackground{
    "You are a mechanical design engineer working in a closed CAD-CAE loop. Your goal is to "
    "revise the geometry and material of the {part} below until its maximum displacement, "
    "maximum von Mises stress and material cost all satisfy the given limits.",

    "Background: a {part} has been drafted but does not yet meet its requirements. Using the "
    "CAD generator, the finite-element solver, the result extractor and the cost calculator, "
    "find a parameter set and material that satisfy the stiffness, strength and cost "
    "constraints at the same time.",

    "Task overview. We need a structurally sound and affordable {part}. Iterate on its "
    "parametric dimensions and material choice, verifying each candidate by simulation, until "
    "every constraint listed below holds.",

    "Objective: deliver a {part} design that is stiff enough, strong enough and cheap enough. "
    "Each candidate must be generated, simulated and costed with the provided tools before you "
    "judge it.",

    "Design brief. An engineering team asks you to optimize a {part}. Keep the load case and "
    "supports unchanged, adjust the geometry and material, and confirm compliance with the "
    "displacement, stress and cost limits through simulation.",

    "Context: in industrial design, geometry edits must be checked by analysis. Your job is to "
    "close the loop for a {part}: propose dimensions and a material, run the toolchain, read "
    "the numbers, and revise until all three constraints pass.",

    "You are assisting with a structural optimization of a {part}. Starting from the initial "
    "design, use tool feedback to make targeted parameter and material changes so that the "
    "part satisfies every stated limit.",

    "Goal statement. Modify the {part} described below so that the simulated maximum "
    "displacement, the maximum equivalent stress and the material cost are all within their "
    "thresholds. Base every decision on tool outputs, not on guesses.",

    "Problem. The current {part} violates at least one of its design limits. Work iteratively: "
    "generate the geometry, solve the linear static problem, extract the metrics, compute the "
    "cost, then decide the next revision.",

    "As a CAD-CAE optimization agent, you will refine a {part}. Aim for a design that meets "
    "the stiffness, strength and budget requirements with as few tool calls as practical.",
};

// Part 3: material library, tool rules and termination conditions.
constexpr std::array<const char*, kPromptVariants> kRules{
    "Material library:\n{materials}\n"
    "Tools: generate_cad(category, parameters) -> geometry_id; run_cae(geometry_id, material) "
    "-> result_id; extract_results(result_id) -> u_max, sigma_max; compute_cost(geometry_id, "
    "material) -> cost. Call them in this order for every candidate.\n"
    "Stop as soon as a candidate satisfies all constraints, or after {max_rounds} design rounds "
    "({max_tool_calls} tool calls at most).",

    "Available materials (choose exactly one by name):\n{materials}\n"
    "Usage rules: every design round must call generate_cad, then run_cae, extract_results and "
    "compute_cost with the same geometry. If a tool reports a failure, read the message and "
    "retry or adjust.\n"
    "Termination: finish once all three constraints hold; otherwise you have {max_rounds} rounds "
    "and {max_tool_calls} tool calls.",

    "Materials you may use:\n{materials}\n"
    "Toolchain: (1) generate_cad builds the solid, (2) run_cae solves it with your material, "
    "(3) extract_results returns the maximum displacement and von Mises stress, (4) "
    "compute_cost returns the material cost.\n"
    "End the session when the latest candidate is feasible. Hard limits: {max_rounds} rounds, "
    "{max_tool_calls} tool calls.",

    "Library of candidate materials:\n{materials}\n"
    "Rules: do not skip simulation; a design is only verified once its displacement, stress "
    "and cost come from tool outputs. Tool failures are recoverable.\n"
    "Termination conditions: all constraints satisfied, or {max_rounds} rounds / "
    "{max_tool_calls} tool calls used.",

    "Material data (E, nu, density, price, allowable stress):\n{materials}\n"
    "How to use the tools: generate_cad -> run_cae -> extract_results -> compute_cost for each "
    "proposal. Avoid unnecessary calls after reaching a feasible design.\n"
    "Budget: {max_rounds} rounds and {max_tool_calls} tool calls.",

    "You may select any of these materials:\n{materials}\n"
    "Tool protocol: pass the geometry_id returned by generate_cad to run_cae and "
    "compute_cost, and the result_id from run_cae to extract_results.\n"
    "Stop immediately once feasible. Never exceed {max_rounds} rounds or {max_tool_calls} tool "
    "calls.",

    "Materials:\n{materials}\n"
    "Each iteration consists of four tool calls (CAD generation, CAE solve, result extraction, "
    "cost calculation). Failed calls still count toward the budget.\n"
    "The episode ends when every constraint is met or when {max_rounds} rounds or "
    "{max_tool_calls} tool calls are spent.",

    "Material options and their limits:\n{materials}\n"
    "Guidelines: change few parameters per round, keep them within their bounds, and re-verify "
    "every change with the toolchain.\n"
    "Termination: a feasible verified design, or the limit of {max_rounds} rounds "
    "({max_tool_calls} tool calls).",

    "The following material library applies:\n{materials}\n"
    "Call generate_cad first, then run_cae with a material name from the library, then "
    "extract_results and compute_cost. Use the returned numbers to plan the next edit.\n"
    "Finish when all constraints hold; the maximum is {max_rounds} rounds and "
    "{max_tool_calls} tool calls.",

    "Reference materials:\n{materials}\n"
    "Tool rules: only the four tools are available; arguments must follow their schemas "
    "exactly. A malformed call returns an error you can correct.\n"
    "Stop criteria: constraints satisfied, or {max_rounds} rounds, or {max_tool_calls} tool "
    "calls.",
};

struct CategoryPrompt {
  const char* part;
  const char* supports;
  const char* loading;
};

const std::map<std::string, CategoryPrompt>& category_prompts() {
  static const std::map<std::string, CategoryPrompt> m = {
      {"flat_plate",
       {"flat rectangular plate", "The end face at x = 0 is fully clamped.",
        "A uniform pressure of {pressure} MPa acts on the top face."}},
      {"cantilever_box_beam",
       {"hollow box-section cantilever beam", "The root end face at x = 0 is fully clamped.",
        "A uniform pressure of {pressure} MPa acts on the top flange face."}},
      {"l_bracket",
       {"L-shaped mounting bracket",
        "The back face of the vertical leg (x = 0) is bolted to a wall and fully clamped.",
        "A uniform pressure of {pressure} MPa acts on the top face of the horizontal shelf."}},
      {"annular_flange",
       {"annular flange", "The bore surface is fully clamped to the shaft.",
        "A uniform pressure of {pressure} MPa acts on the top face."}},
      {"solid_cylinder_bushing",
       {"solid cylindrical bushing", "The base end face is fully clamped.",
        "A uniform axial pressure of {pressure} MPa acts on the top end face."}},
      {"hex_prism_nut_blank",
       {"hexagonal nut blank", "The bottom face is fully clamped.",
        "A uniform pressure of {pressure} MPa acts on the +x flat."}},
  };
  return m;
}

std::string material_table(const MaterialLibrary& library) {
  std::ostringstream os;
  for (const auto& m : library.materials()) {
    os << "- " << m.name << ": E = " << num(m.young_modulus) << " MPa, nu = "
       << num(m.poisson_ratio) << ", density = " << num(m.density) << " kg/m^3, price = "
       << num(m.unit_price) << " per kg, allowable stress = " << num(m.allowable_stress)
       << " MPa\n";
  }
  std::string s = os.str();
  if (!s.empty()) s.pop_back();
  return s;
}

std::string initial_design(const TaskInstance& task, const PartCategory& cat,
                           const CategoryPrompt& tp, const MaterialLibrary& library) {
  std::ostringstream os;
  os << "Part category: " << cat.id << " (" << tp.part << ").\n";
  os << "Initial parameters:\n";
  for (std::size_t i = 0; i < cat.parameters.size(); ++i) {
    const auto& s = cat.parameters[i];
    os << "- " << s.name << " = " << num(task.initial_params.values[i]) << " " << s.unit
       << " (allowed range " << num(s.lower) << " to " << num(s.upper) << " " << s.unit << ")\n";
  }
  os << "Initial material: " << task.initial_material << ".\n";
  os << "Boundary conditions: " << tp.supports << "\n";
  os << "Loading: "
     << render(tp.loading, {{"pressure", num(task.sim_settings.pressure_mpa)}}) << "\n";
  os << "Constraints:\n";
  os << "- maximum displacement u_max <= " << num(task.delta_mm) << " mm ("
     << num(mm_to_um(task.delta_mm)) << " um)\n";
  if (task.stress_scale == 1.0) {
    os << "- maximum von Mises stress sigma_max <= the allowable stress of the chosen material";
  } else {
    os << "- maximum von Mises stress sigma_max <= " << num(task.stress_scale)
       << " x the allowable stress of the chosen material";
  }
  if (const auto* m = library.find(task.initial_material)) {
    os << " (" << num(task.stress_scale * m->allowable_stress) << " MPa for "
       << task.initial_material << ")";
  }
  os << "\n- material cost C <= " << num(task.kappa) << "\n";
  return os.str();
}

std::string json_requirement(const PartCategory& cat) {
  std::ostringstream os;
  os << "Final output requirement: when you finish, output exactly one JSON object with the "
        "fields below and no other JSON. Parameter values are numbers in the stated units.\n";
  os << "{\"category\": \"" << cat.id << "\", \"material\": \"<material name>\", "
     << "\"parameters\": {";
  for (std::size_t i = 0; i < cat.parameters.size(); ++i) {
    const auto& s = cat.parameters[i];
    os << (i ? ", " : "") << "\"" << s.name << "\": <" << s.unit << ">";
  }
  os << "}}\n";
  return os.str();
}

}  // namespace

std::string build_prompt(const TaskInstance& task, const MaterialLibrary& library,
                         std::uint64_t variant_seed) {
  const auto& prompts = category_prompts();
  const auto it = prompts.find(task.category_id);
  if (it == prompts.end()) {
    throw Error(ErrorCode::kMissingTemplate,
                "no prompt template for category '" + task.category_id + "'");
  }
  const PartCategory& cat = find_category(task.category_id);
  const auto background_idx = static_cast<std::size_t>(variant_seed % kPromptVariants);
  const auto rules_idx = static_cast<std::size_t>((variant_seed / kPromptVariants + variant_seed * 3) %
                                                  kPromptVariants);
  const std::map<std::string, std::string> vars{
      {"part", it->second.part},
      {"materials", material_table(library)},
      {"max_rounds", std::to_string(task.max_rounds)},
      {"max_tool_calls", std::to_string(task.max_tool_calls)},
  };
  std::string out;
  out += render(kBackground[background_idx], vars) + "\n\n";
  out += initial_design(task, cat, it->second, library) + "\n";
  out += render(kRules[rules_idx], vars) + "\n\n";
  out += json_requirement(cat);
  return out;
}

}  // namespace cadloop
