#include "doctest.h"

#include "cadloop/reward.hpp"

using namespace cadloop;
using nlohmann::json;

namespace {

const std::string kSteel = "Carbon Steel - ASTM A105";

// Appends call/response pairs with sequential indices.
class LogBuilder {
 public:
  LogBuilder& call(const std::string& tool, json args, json result, bool ok = true) {
    const std::string id = "c-" + std::to_string(++calls_);
    push(EventKind::kToolCall, tool, {{"call_id", id}, {"args", std::move(args)}}, true);
    json payload{{"call_id", id}};
    if (ok) {
      payload["result"] = std::move(result);
    } else {
      payload["error"] = {{"code", "non_convergence"}, {"message", "x"}};
      payload["injected"] = true;
    }
    push(EventKind::kToolResponse, tool, std::move(payload), ok);
    return *this;
  }

  LogBuilder& design(double thickness, double u, double s, double c,
                     const std::string& material = kSteel) {
    const std::string g = "geom-" + std::to_string(++designs_);
    const std::string r = "res-" + std::to_string(designs_);
    call("generate_cad", {{"category", "flat_plate"}, {"parameters", params(thickness)}},
         {{"geometry_id", g}});
    call("run_cae", {{"geometry_id", g}, {"material", material}}, {{"result_id", r}});
    call("extract_results", {{"result_id", r}}, {{"u_max", u}, {"sigma_max", s}});
    call("compute_cost", {{"geometry_id", g}, {"material", material}}, {{"cost", c}});
    return *this;
  }

  LogBuilder& final_text(const std::string& text) {
    push(EventKind::kFinalOutput, "", {{"text", text}}, true);
    return *this;
  }

  LogBuilder& final_design(double thickness, const std::string& material = kSteel) {
    const json f{{"category", "flat_plate"}, {"material", material}, {"parameters", params(thickness)}};
    return final_text("Final design:\n" + f.dump());
  }

  static json params(double thickness) {
    return {{"length", 200.0}, {"width", 50.0}, {"thickness", thickness}};
  }

  RolloutLog log;

 private:
  void push(EventKind kind, const std::string& tool, json payload, bool ok) {
    Event e;
    e.t = int(log.events.size());
    e.kind = kind;
    e.tool = tool;
    e.payload = std::move(payload);
    e.success = ok;
    log.events.push_back(std::move(e));
  }

  int calls_ = 0;
  int designs_ = 0;
};

TaskInstance task() {
  TaskInstance t;
  t.category_id = "flat_plate";
  t.initial_params = ParamVector{{200, 50, 10}};
  t.initial_material = kSteel;
  t.delta_mm = 0.1;
  t.kappa = 10.0;
  t.stress_scale = 1.0;
  return t;
}

const MaterialLibrary& lib() { return MaterialLibrary::default_library(); }

}  // namespace

TEST_CASE("piecewise tables") {
  CHECK(cons_value(0) == 0.00);
  CHECK(cons_value(1) == 0.20);
  CHECK(cons_value(2) == 0.50);
  CHECK(cons_value(3) == 1.00);
  for (int k = 0; k <= 20; ++k) CHECK(stop_value(k) == -std::min(0.02 * k, 0.1));
  CHECK(stop_value(3) == doctest::Approx(-0.06));
  CHECK(stop_value(10) == -0.10);
  CHECK(kFormatReward == 0.10);
}

TEST_CASE("triple parsing") {
  LogBuilder one;
  one.design(10, 0.05, 100, 5);
  auto triples = parse_triples(one.log);
  REQUIRE(triples.size() == 1);
  CHECK(triples[0].t == 7);
  CHECK(triples[0].triple == MetricTriple{0.05, 100, 5});
  CHECK(triples[0].material == kSteel);
  CHECK(triples[0].parameters["thickness"] == 10.0);

  LogBuilder partial;
  partial.call("generate_cad", {{"category", "flat_plate"}, {"parameters", LogBuilder::params(10)}},
               {{"geometry_id", "geom-1"}})
      .call("run_cae", {{"geometry_id", "geom-1"}, {"material", kSteel}}, {{"result_id", "res-1"}})
      .call("extract_results", {{"result_id", "res-1"}}, {{"u_max", 0.01}, {"sigma_max", 1.0}})
      .call("generate_cad", {{"category", "flat_plate"}, {"parameters", LogBuilder::params(12)}},
            {{"geometry_id", "geom-2"}})
      .call("compute_cost", {{"geometry_id", "geom-1"}, {"material", kSteel}}, {{"cost", 1.0}});
  CHECK(parse_triples(partial.log).empty());

  LogBuilder two;
  two.design(10, 0.2, 100, 5).design(12, 0.08, 90, 6);
  triples = parse_triples(two.log);
  REQUIRE(triples.size() == 2);
  CHECK(triples[0].t < triples[1].t);
  CHECK(triples[1].parameters["thickness"] == 12.0);

  LogBuilder mismatch;
  mismatch.call("generate_cad", {{"category", "flat_plate"}, {"parameters", LogBuilder::params(10)}},
                {{"geometry_id", "geom-1"}})
      .call("run_cae", {{"geometry_id", "geom-1"}, {"material", kSteel}}, {{"result_id", "res-1"}})
      .call("extract_results", {{"result_id", "res-1"}}, {{"u_max", 0.01}, {"sigma_max", 1.0}})
      .call("compute_cost", {{"geometry_id", "geom-1"}, {"material", "Gray Cast Iron"}},
            {{"cost", 1.0}});
  CHECK(parse_triples(mismatch.log).empty());

  LogBuilder failed;
  failed.call("generate_cad", {{"category", "flat_plate"}, {"parameters", LogBuilder::params(10)}},
              {{"geometry_id", "geom-1"}})
      .call("run_cae", {{"geometry_id", "geom-1"}, {"material", kSteel}}, {}, false)
      .call("compute_cost", {{"geometry_id", "geom-1"}, {"material", kSteel}}, {{"cost", 1.0}});
  CHECK(parse_triples(failed.log).empty());
}

TEST_CASE("constraint counting is inclusive and unknown materials fail stress") {
  TripleRecord r;
  r.material = kSteel;
  r.triple = {0.1, 167.0, 10.0};
  CHECK(constraint_count(r, task(), lib()) == 3);
  r.triple = {0.2, 200.0, 9.0};
  CHECK(constraint_count(r, task(), lib()) == 1);
  r.triple = {0.05, 1.0, 1.0};
  r.material = "Unobtainium";
  CHECK(constraint_count(r, task(), lib()) == 2);
}

TEST_CASE("R_cons uses the last triple") {
  LogBuilder b;
  CHECK(reward_cons(b.log, task(), lib()) == 0.0);
  b.design(10, 0.05, 100, 5);
  CHECK(reward_cons(b.log, task(), lib()) == 1.0);
  b.design(12, 0.05, 400, 50);
  CHECK(reward_cons(b.log, task(), lib()) == 0.2);
  b.design(14, 0.05, 400, 5);
  CHECK(reward_cons(b.log, task(), lib()) == 0.5);
}

TEST_CASE("R_stop counts tool events after the first feasible triple") {
  LogBuilder b;
  b.design(8, 0.5, 100, 5);
  CHECK(reward_stop(b.log, task(), lib()) == 0.0);
  b.design(10, 0.05, 100, 5);
  CHECK(reward_stop(b.log, task(), lib()) == 0.0);
  b.call("generate_cad", {{"category", "flat_plate"}, {"parameters", LogBuilder::params(11)}},
         {{"geometry_id", "geom-9"}});
  b.call("run_cae", {{"geometry_id", "geom-9"}, {"material", kSteel}}, {{"result_id", "res-9"}});
  // Four events: two calls and two responses.
  auto score = score_rollout(b.log, task(), lib());
  CHECK(score.k == 4);
  CHECK(score.t_feas == 15);
  CHECK(score.r_stop == doctest::Approx(-0.08));

  double previous = 0.0;
  for (int i = 0; i < 6; ++i) {
    b.design(10 + i, 0.05, 100, 5);
    const double r = reward_stop(b.log, task(), lib());
    CHECK(r <= previous);
    previous = r;
  }
  CHECK(previous == -0.10);
}

TEST_CASE("R_stop ignores a trailing final output") {
  LogBuilder b;
  b.design(10, 0.05, 100, 5).final_design(10);
  const auto s = score_rollout(b.log, task(), lib());
  CHECK(s.k == 0);
  CHECK(s.r_stop == 0.0);
}

TEST_CASE("R_fmt") {
  LogBuilder echo;
  echo.design(10, 0.05, 100, 5).final_design(10);
  CHECK(reward_fmt(echo.log, task(), lib()) == 0.10);

  LogBuilder close;
  close.design(10, 0.05, 100, 5).final_design(10 * (1 + 5e-7));
  CHECK(reward_fmt(close.log, task(), lib()) == 0.10);

  LogBuilder other;
  other.design(10, 0.05, 100, 5).final_design(11);
  CHECK(reward_fmt(other.log, task(), lib()) == 0.0);

  LogBuilder wrong_material;
  wrong_material.design(10, 0.05, 100, 5).final_design(10, "Gray Cast Iron");
  CHECK(reward_fmt(wrong_material.log, task(), lib()) == 0.0);

  LogBuilder prose;
  prose.design(10, 0.05, 100, 5).final_text("The plate should be about 10 mm thick.");
  CHECK(reward_fmt(prose.log, task(), lib()) == 0.0);

  LogBuilder only_final;
  only_final.final_design(10);
  CHECK(reward_fmt(only_final.log, task(), lib()) == 0.0);

  LogBuilder earlier;
  earlier.design(10, 0.05, 100, 5).design(12, 0.05, 100, 5).final_design(10);
  CHECK(reward_fmt(earlier.log, task(), lib()) == 0.0);
}

TEST_CASE("total reward examples") {
  CHECK(total_reward(RolloutLog{}, task(), lib()) == 0.0);

  LogBuilder best;
  best.design(10, 0.05, 100, 5).final_design(10);
  CHECK(total_reward(best.log, task(), lib()) == doctest::Approx(1.10));

  LogBuilder trailing;
  trailing.design(10, 0.05, 100, 5);
  for (int i = 0; i < 5; ++i) {
    trailing.call("compute_cost", {{"geometry_id", "geom-1"}, {"material", kSteel}}, {{"cost", 5.0}});
  }
  trailing.final_design(10);
  const auto s = score_rollout(trailing.log, task(), lib());
  CHECK(s.k == 10);
  CHECK(s.r == doctest::Approx(1.00));
  CHECK(s.r >= -0.10);
  CHECK(s.r <= 1.10);

  const json j = score_to_json(s);
  CHECK(j["R_cons"] == 1.0);
  CHECK(j["K"] == 10);
  CHECK(j["N_last"] == 3);
  CHECK(j["t_feas"] == 7);
  CHECK(score_to_json(RewardScore{})["t_feas"].is_null());
}
