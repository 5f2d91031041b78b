#pragma once

// Scripted agents that drive the tool protocol, and the clients they use to
// reach a ToolServer in-process or over the wire.

#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"

#include "cadloop/materials.hpp"
#include "cadloop/metrics.hpp"
#include "cadloop/rollout.hpp"
#include "cadloop/task.hpp"
#include "cadloop/toolchain.hpp"
#include "cadloop/toolserver.hpp"

namespace cadloop {

class ToolClient {
 public:
  virtual ~ToolClient() = default;
  virtual std::string open_episode(const TaskInstance& task, const FailureConfig& failures) = 0;
  virtual ToolResponse call_tool(const std::string& episode_id, const std::string& tool,
                                 const nlohmann::json& args) = 0;
  virtual nlohmann::json submit_final(const std::string& episode_id, const std::string& text) = 0;
  virtual RolloutLog rollout_log(const std::string& episode_id) = 0;
  virtual void close_episode(const std::string& episode_id) = 0;
};

class InProcessClient : public ToolClient {
 public:
  explicit InProcessClient(ToolServer& server) : server_(server) {}
  std::string open_episode(const TaskInstance& task, const FailureConfig& failures) override;
  ToolResponse call_tool(const std::string& episode_id, const std::string& tool,
                         const nlohmann::json& args) override;
  nlohmann::json submit_final(const std::string& episode_id, const std::string& text) override;
  RolloutLog rollout_log(const std::string& episode_id) override;
  void close_episode(const std::string& episode_id) override;

 private:
  ToolServer& server_;
};

// Speaks the line protocol through `transport` (request line -> response line).
class WireClient : public ToolClient {
 public:
  using Transport = std::function<std::string(const std::string&)>;
  explicit WireClient(Transport transport) : transport_(std::move(transport)) {}
  std::string open_episode(const TaskInstance& task, const FailureConfig& failures) override;
  ToolResponse call_tool(const std::string& episode_id, const std::string& tool,
                         const nlohmann::json& args) override;
  nlohmann::json submit_final(const std::string& episode_id, const std::string& text) override;
  RolloutLog rollout_log(const std::string& episode_id) override;
  void close_episode(const std::string& episode_id) override;

 private:
  // Throws Error for control-request failures.
  nlohmann::json control(const std::string& episode_id, const std::string& tool,
                         const nlohmann::json& args);
  nlohmann::json exchange(const nlohmann::json& request);

  Transport transport_;
  int next_call_ = 1;
};

struct Outcome {
  bool ok = false;
  MetricTriple triple;
  std::string error_code;  // set when !ok
};

class Policy {
 public:
  virtual ~Policy() = default;
  virtual std::string name() const = 0;
  // False for agents that answer without touching the tools.
  virtual bool explores() const { return true; }
  virtual DesignProposal start(const TaskInstance& task, const MaterialLibrary& library);
  // Next design to execute, or nullopt to stop.
  virtual std::optional<DesignProposal> next(const DesignProposal& last, const Outcome& outcome) = 0;

 protected:
  const TaskInstance* task_ = nullptr;
  const MaterialLibrary* library_ = nullptr;
};

// Sum of relative constraint violations max(0, metric / threshold - 1).
double constraint_penalty(const MetricTriple& triple, const TaskInstance& task,
                          const MaterialProps& material);

// One deterministic rule step from a completed triple; nullopt when the
// triple is feasible or no rule changes the design. Results are clamped.
std::optional<DesignProposal> heuristic_step(const TaskInstance& task,
                                             const MaterialLibrary& library,
                                             const DesignProposal& last,
                                             const MetricTriple& triple);

class HeuristicPolicy : public Policy {
 public:
  explicit HeuristicPolicy(std::uint64_t seed = 0) : rng_(seed) {}
  std::string name() const override { return "heuristic"; }
  DesignProposal start(const TaskInstance& task, const MaterialLibrary& library) override;
  std::optional<DesignProposal> next(const DesignProposal& last, const Outcome& outcome) override;

 private:
  std::mt19937_64 rng_;
  int retries_ = 0;
};

class RandomSearchPolicy : public Policy {
 public:
  explicit RandomSearchPolicy(std::uint64_t seed = 0) : rng_(seed) {}
  std::string name() const override { return "random"; }
  std::optional<DesignProposal> next(const DesignProposal& last, const Outcome& outcome) override;

 private:
  std::mt19937_64 rng_;
};

// Ask/tell Nelder-Mead minimiser on the unit box (points are clipped).
class NelderMead {
 public:
  NelderMead(std::vector<double> x0, double step);
  const std::vector<double>& ask() const { return pending_; }
  void tell(double value);
  const std::vector<double>& best() const { return simplex_.front(); }
  double best_value() const { return values_.front(); }
  int evaluations() const { return evaluations_; }

 private:
  enum class Phase { kInit, kReflect, kExpand, kContractOutside, kContractInside, kShrink };
  void order();
  std::vector<double> centroid() const;
  std::vector<double> along(const std::vector<double>& from, const std::vector<double>& to,
                            double t) const;
  void begin_reflect();

  std::vector<std::vector<double>> simplex_;
  std::vector<double> values_;
  std::vector<double> pending_;
  std::vector<double> reflected_;
  double reflected_value_ = 0.0;
  Phase phase_ = Phase::kInit;
  std::size_t index_ = 0;
  int evaluations_ = 0;
};

// Nelder-Mead on the penalty over normalised parameters, one material at a
// time (initial material first, then by ascending cost per volume).
class NelderMeadPolicy : public Policy {
 public:
  explicit NelderMeadPolicy(int evaluations_per_material = 12)
      : per_material_(evaluations_per_material) {}
  std::string name() const override { return "nelder-mead"; }
  DesignProposal start(const TaskInstance& task, const MaterialLibrary& library) override;
  std::optional<DesignProposal> next(const DesignProposal& last, const Outcome& outcome) override;

 private:
  DesignProposal decode(const std::vector<double>& x) const;
  std::vector<double> encode(const ParamVector& params) const;

  int per_material_;
  std::vector<std::string> materials_;
  std::size_t material_index_ = 0;
  std::optional<NelderMead> search_;
};

class SubmitInitialPolicy : public Policy {
 public:
  std::string name() const override { return "submit-initial"; }
  bool explores() const override { return false; }
  std::optional<DesignProposal> next(const DesignProposal&, const Outcome&) override {
    return std::nullopt;
  }
};

// "heuristic", "random", "nelder-mead" or "submit-initial".
std::unique_ptr<Policy> make_policy(const std::string& name, std::uint64_t seed);

enum class FinalChoice { kBestSoFar, kLastExecuted };

struct RunOptions {
  FinalChoice final_choice = FinalChoice::kBestSoFar;
  bool close_episode = true;
};

struct EpisodeRun {
  std::string episode_id;
  RolloutLog log;
  DesignProposal final_design;
  std::string final_text;
  int executed_designs = 0;  // designs that produced a full triple
  bool budget_exhausted = false;
};

// Text carrying the final JSON object for `design`.
std::string final_answer_text(const TaskInstance& task, const DesignProposal& design);

// open_episode -> execute designs until the policy stops or a budget is hit
// -> submit_final. Protocol failures are recorded in the log, never thrown.
EpisodeRun run_policy(Policy& policy, const TaskInstance& task, ToolClient& client,
                      const FailureConfig& failures, const MaterialLibrary& library,
                      const RunOptions& options = {});

}  // namespace cadloop
