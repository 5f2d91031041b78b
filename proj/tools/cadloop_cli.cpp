// cadloop: dataset generation, tool serving, episode runs, scoring and
// evaluation from the command line.

#include <atomic>
#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "cadloop/error.hpp"
#include "cadloop/harness.hpp"
#include "cadloop/policies.hpp"
#include "cadloop/reward.hpp"
#include "cadloop/taskgen.hpp"
#include "cadloop/toolserver.hpp"
#include "cadloop/wire.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::atomic<bool> g_stop{false};

void on_signal(int) { g_stop = true; }

void write_output(const std::string& out, const std::string& text) {
  if (out.empty() || out == "-") {
    std::cout << text;
    return;
  }
  if (const auto parent = fs::path(out).parent_path(); !parent.empty()) {
    fs::create_directories(parent);
  }
  std::ofstream f(out);
  if (!f) throw cadloop::Error(cadloop::ErrorCode::kIo, "cannot write " + out);
  f << text;
}

cadloop::MaterialLibrary load_library(const std::string& path) {
  return path.empty() ? cadloop::MaterialLibrary::default_library()
                      : cadloop::MaterialLibrary::from_file(path);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Closed-loop CAD/CAE optimization environment"};
  app.require_subcommand(1);

  std::uint64_t seed = 42;
  std::string tasks_dir, logs_dir, out, failures_text = "0,0,0", materials_path;
  int mesh_density = 2;

  // gen-dataset
  auto* gen = app.add_subcommand("gen-dataset", "Synthesize feasible task files and prompts");
  cadloop::DatasetOptions dopt;
  gen->add_option("--seed", seed, "Dataset seed")->capture_default_str();
  gen->add_option("--out", out, "Output directory")->required();
  gen->add_option("--mesh-density", mesh_density, "Mesh density")->capture_default_str();
  gen->add_option("--n-train", dopt.n_train)->capture_default_str();
  gen->add_option("--n-test", dopt.n_test)->capture_default_str();
  gen->add_option("--n-general", dopt.n_general)->capture_default_str();
  gen->add_option("--search-budget", dopt.search_budget, "FEM solves per feasibility check")
      ->capture_default_str();
  gen->add_option("--items", dopt.policy.items_to_reduce, "Items to tighten (0 draws 1-3)")
      ->check(CLI::Range(0, 3))
      ->capture_default_str();
  gen->add_option("--materials", materials_path, "Material library JSON");

  // serve
  auto* serve = app.add_subcommand("serve", "Serve the tool protocol on stdio or TCP");
  int port = -1;
  std::string artifacts;
  serve->add_option("--port", port, "TCP port on 127.0.0.1 (0 picks one); omit for stdio");
  serve->add_option("--mesh-density", mesh_density)->capture_default_str();
  serve->add_option("--artifacts", artifacts, "Write meshes and results below this directory");
  serve->add_option("--materials", materials_path, "Material library JSON");

  // run-episodes
  auto* run = app.add_subcommand("run-episodes", "Run a policy over a task set");
  std::string policy_name = "heuristic", final_choice = "best", connect;
  int limit = -1;
  run->add_option("--tasks", tasks_dir, "Task directory")->required();
  run->add_option("--logs", logs_dir, "Output directory for rollout logs")->required();
  run->add_option("--policy", policy_name)
      ->check(CLI::IsMember({"heuristic", "random", "nelder-mead", "submit-initial"}))
      ->capture_default_str();
  run->add_option("--seed", seed, "Policy seed")->capture_default_str();
  run->add_option("--failures", failures_text, "p_regen,p_mesh,p_solver")->capture_default_str();
  run->add_option("--mesh-density", mesh_density)->capture_default_str();
  run->add_option("--final", final_choice, "Final answer: best or last")
      ->check(CLI::IsMember({"best", "last"}))
      ->capture_default_str();
  run->add_option("--limit", limit, "Run only the first N tasks");
  run->add_option("--connect", connect, "host:port of a running server instead of in-process");
  run->add_option("--materials", materials_path, "Material library JSON");

  // score-rollout
  auto* score = app.add_subcommand("score-rollout", "Reward of one rollout log");
  std::string log_file, task_file;
  score->add_option("log", log_file, "Rollout log (.jsonl)")->required()->check(CLI::ExistingFile);
  score->add_option("--task", task_file, "Task file")->required()->check(CLI::ExistingFile);
  score->add_option("--out", out, "Score JSON path (default stdout)");
  score->add_option("--materials", materials_path, "Material library JSON");

  // evaluate
  auto* eval = app.add_subcommand("evaluate", "Re-verify final answers and report metrics");
  eval->add_option("--tasks", tasks_dir)->required();
  eval->add_option("--logs", logs_dir)->required();
  eval->add_option("--out", out, "Report JSON path");
  eval->add_option("--mesh-density", mesh_density)->capture_default_str();
  eval->add_option("--materials", materials_path, "Material library JSON");

  // verify-fem
  auto* verify = app.add_subcommand("verify-fem", "Analytical FEM oracle suite");
  verify->add_option("--out", out, "Result JSON path");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      dopt.seed = seed;
      dopt.toolchain.mesh_density = mesh_density;
      const auto lib = load_library(materials_path);
      const auto tasks = cadloop::export_dataset(dopt, lib, out);
      int extreme = 0;
      for (const auto& g : tasks) extreme += g.annotation.extreme;
      std::printf("wrote %zu tasks to %s (%d extreme)\n", tasks.size(), out.c_str(), extreme);
      return 0;
    }

    if (*serve) {
      cadloop::ServerConfig cfg;
      cfg.toolchain.mesh_density = mesh_density;
      cfg.artifact_dir = artifacts;
      cadloop::ToolServer server(load_library(materials_path), cfg);
      cadloop::WireServer wire(server);
      if (port < 0) {
        cadloop::serve_stream(wire, std::cin, std::cout);
        return 0;
      }
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      cadloop::serve_tcp(wire, port, g_stop, [](int p) {
        std::fprintf(stderr, "listening on 127.0.0.1:%d\n", p);
      });
      return 0;
    }

    if (*run) {
      const auto lib = load_library(materials_path);
      const cadloop::FailureConfig failures = cadloop::parse_failures(failures_text);
      auto tasks = cadloop::load_task_dir(tasks_dir);
      if (limit >= 0 && static_cast<std::size_t>(limit) < tasks.size()) tasks.resize(limit);

      cadloop::ServerConfig cfg;
      cfg.toolchain.mesh_density = mesh_density;
      cadloop::ToolServer server(lib, cfg);
      std::unique_ptr<cadloop::TcpLineClient> tcp;
      std::unique_ptr<cadloop::ToolClient> client;
      if (connect.empty()) {
        client = std::make_unique<cadloop::InProcessClient>(server);
      } else {
        const auto colon = connect.rfind(':');
        if (colon == std::string::npos) throw CLI::ValidationError("--connect", "expected host:port");
        tcp = std::make_unique<cadloop::TcpLineClient>(connect.substr(0, colon),
                                                       std::stoi(connect.substr(colon + 1)));
        client = std::make_unique<cadloop::WireClient>(
            [&](const std::string& line) { return tcp->request(line); });
      }
      cadloop::RunOptions ropt;
      ropt.final_choice =
          final_choice == "last" ? cadloop::FinalChoice::kLastExecuted : cadloop::FinalChoice::kBestSoFar;
      for (std::size_t i = 0; i < tasks.size(); ++i) {
        auto policy = cadloop::make_policy(policy_name, seed + i);
        const auto ep = cadloop::run_policy(*policy, tasks[i].task, *client, failures, lib, ropt);
        const std::string path = cadloop::log_path_for(logs_dir, tasks[i].id);
        fs::create_directories(fs::path(path).parent_path());
        cadloop::write_log_file(ep.log, path);
        const auto s = cadloop::score_rollout(ep.log, tasks[i].task, lib);
        std::printf("%-24s calls %3d  R %.2f%s\n", tasks[i].id.c_str(),
                    cadloop::count_tool_calls(ep.log), s.r, ep.budget_exhausted ? "  (budget)" : "");
      }
      return 0;
    }

    if (*score) {
      const auto lib = load_library(materials_path);
      const auto s = cadloop::score_rollout(cadloop::read_log_file(log_file),
                                            cadloop::read_task_file(task_file), lib);
      write_output(out, cadloop::score_to_json(s).dump(2) + "\n");
      return 0;
    }

    if (*eval) {
      const auto lib = load_library(materials_path);
      const auto tasks = cadloop::load_task_dir(tasks_dir);
      std::vector<cadloop::RolloutLog> logs;
      for (const auto& t : tasks) {
        const std::string path = cadloop::log_path_for(logs_dir, t.id);
        if (!fs::exists(path)) {
          throw cadloop::Error(cadloop::ErrorCode::kMismatchedInputs, "missing log " + path);
        }
        logs.push_back(cadloop::read_log_file(path));
      }
      cadloop::ToolchainConfig cfg;
      cfg.mesh_density = mesh_density;
      const auto report = cadloop::evaluate_run(tasks, logs, lib, cfg);
      std::cout << cadloop::report_table(report);
      if (!out.empty()) write_output(out, cadloop::report_to_json(report).dump(2) + "\n");
      return 0;
    }

    if (*verify) {
      const auto checks = cadloop::verify_fem_suite();
      bool all = true;
      for (const auto& c : checks) {
        all = all && c.pass;
        std::printf("%s %-28s value %-12.6g expected %-12.6g err %.3g (%.2fs)\n",
                    c.pass ? "PASS" : "FAIL", c.name.c_str(), c.value, c.expected, c.error,
                    c.seconds);
      }
      if (!out.empty()) write_output(out, cadloop::oracle_checks_to_json(checks).dump(2) + "\n");
      return all ? 0 : 1;
    }
  } catch (const cadloop::Error& ex) {
    std::fprintf(stderr, "error: %s: %s\n", std::string(cadloop::error_code_name(ex.code())).c_str(),
                 ex.what());
    return 2;
  } catch (const std::exception& ex) {
    std::fprintf(stderr, "error: %s\n", ex.what());
    return 2;
  }
  return 0;
}
