#include <atomic>
#include <cmath>
#include <condition_variable>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "doctest.h"

#include "cadloop/error.hpp"
#include "cadloop/wire.hpp"

using namespace cadloop;
using nlohmann::json;

namespace {

ServerConfig coarse() {
  ServerConfig c;
  c.toolchain.mesh_density = 1;
  return c;
}

json plate_task_json() {
  return {{"category", "flat_plate"},
          {"initial_params", {{"length", 200}, {"width", 50}, {"thickness", 10}}},
          {"initial_material", "Carbon Steel - ASTM A105"},
          {"pressure_mpa", 0.5},
          {"delta_mm", 0.05},
          {"kappa", 10.0},
          {"stress_scale", 1.0},
          {"max_rounds", 15},
          {"max_tool_calls", 60},
          {"seed", 1}};
}

bool volatile_key(const std::string& key) {
  return key == "log" || key == "message" || key == "path";
}

// Same keys and JSON types; numbers within 1e-6 relative; free-text fields skipped.
void compare_json(const json& want, const json& got, const std::string& where) {
  CAPTURE(where);
  if (want.is_number() && got.is_number()) {
    const double a = want.get<double>(), b = got.get<double>();
    CHECK(std::abs(a - b) <= 1e-6 * std::max({1.0, std::abs(a), std::abs(b)}));
    return;
  }
  REQUIRE(want.type() == got.type());
  if (want.is_object()) {
    for (const auto& [k, v] : want.items()) {
      REQUIRE(got.contains(k));
      if (!volatile_key(k)) compare_json(v, got[k], where + "." + k);
    }
    for (const auto& [k, v] : got.items()) CHECK(want.contains(k));
  } else if (want.is_array()) {
    REQUIRE(want.size() == got.size());
    for (std::size_t i = 0; i < want.size(); ++i) {
      compare_json(want[i], got[i], where + "[" + std::to_string(i) + "]");
    }
  } else {
    CHECK(want == got);
  }
}

}  // namespace

TEST_CASE("describe returns the protocol descriptor") {
  ToolServer server(MaterialLibrary::default_library(), coarse());
  WireServer wire(server);
  const json r = json::parse(wire.handle_line(R"({"call_id": "d", "tool": "describe"})"));
  CHECK(r["success"] == true);
  CHECK(r["call_id"] == "d");
  const json& d = r["payload"];
  CHECK(d == protocol_descriptor());
  std::set<std::string> names;
  for (const auto& t : d["tools"]) names.insert(t["name"].get<std::string>());
  for (const auto& name : tool_names()) CHECK(names.count(name) == 1);
  CHECK(names.count("open_episode") == 1);
  CHECK(d.contains("error_codes"));
}

TEST_CASE("episode over the line protocol") {
  ToolServer server(MaterialLibrary::default_library(), coarse());
  WireServer wire(server);
  json r = wire.handle({{"call_id", "o"}, {"tool", "open_episode"}, {"args", {{"task", plate_task_json()}}}});
  REQUIRE(r["success"] == true);
  const std::string ep = r["payload"]["episode_id"];
  r = wire.handle({{"call_id", "g"},
                   {"episode_id", ep},
                   {"tool", "generate_cad"},
                   {"args", {{"category", "flat_plate"},
                             {"parameters", {{"length", 200}, {"width", 50}, {"thickness", 10}}}}}});
  CHECK(r["success"] == true);
  CHECK(r["call_id"] == "g");
  CHECK(r["payload"]["geometry_id"] == "geom-1");
  r = wire.handle({{"call_id", "r"},
                   {"episode_id", ep},
                   {"tool", "run_cae"},
                   {"args", {{"geometry_id", "geom-9"}, {"material", "Gray Cast Iron"}}}});
  CHECK(r["success"] == false);
  CHECK(r["error"]["code"] == "malformed_args");
  CHECK(r["error"]["injected"] == false);
  r = wire.handle({{"call_id", "l"}, {"episode_id", ep}, {"tool", "get_rollout_log"}});
  CHECK(r["payload"]["state"] == "open");
  CHECK(r["payload"]["tool_calls"] == 2);
  CHECK(r["payload"]["events"].size() == 4);
  CHECK(r["payload"]["events"][0]["payload"]["call_id"] == "g");

  r = json::parse(wire.handle_line("{oops"));
  CHECK(r["success"] == false);
  CHECK(r["call_id"].is_null());
  CHECK(r["error"]["code"] == "parse_error");
  r = wire.handle({{"call_id", 4}, {"tool", "generate_cad"}});
  CHECK(r["error"]["code"] == "malformed_args");
  CHECK(r["call_id"] == 4);
  r = wire.handle({{"call_id", "u"}, {"episode_id", "ep-424242"}, {"tool", "extract_results"}});
  CHECK(r["error"]["code"] == "unknown_episode");
}

TEST_CASE("stream serving answers one line per request") {
  ToolServer server(MaterialLibrary::default_library(), coarse());
  WireServer wire(server);
  std::istringstream in(R"({"call_id": 1, "tool": "describe"}

{"call_id": 2, "tool": "nope", "episode_id": "ep-000001"}
)");
  std::ostringstream out;
  serve_stream(wire, in, out);
  std::istringstream lines(out.str());
  std::string a, b, c;
  REQUIRE(std::getline(lines, a));
  REQUIRE(std::getline(lines, b));
  CHECK(!std::getline(lines, c));
  CHECK(json::parse(a)["success"] == true);
  CHECK(json::parse(b)["error"]["code"] == "unknown_episode");
}

TEST_CASE("TCP round trip") {
  ToolServer server(MaterialLibrary::default_library(), coarse());
  WireServer wire(server);
  std::atomic<bool> stop{false};
  std::mutex m;
  std::condition_variable cv;
  int port = 0;
  std::thread t([&] {
    serve_tcp(wire, 0, stop, [&](int p) {
      std::lock_guard lock(m);
      port = p;
      cv.notify_all();
    });
  });
  {
    std::unique_lock lock(m);
    cv.wait(lock, [&] { return port != 0; });
  }
  {
    TcpLineClient client("127.0.0.1", port);
    json r = json::parse(client.request(
        json{{"call_id", "o"}, {"tool", "open_episode"}, {"args", {{"task", plate_task_json()}}}}.dump()));
    REQUIRE(r["success"] == true);
    const std::string ep = r["payload"]["episode_id"];
    r = json::parse(client.request(json{{"call_id", "c"},
                                        {"episode_id", ep},
                                        {"tool", "generate_cad"},
                                        {"args", {{"category", "flat_plate"},
                                                  {"parameters", {{"length", 100},
                                                                  {"width", 40},
                                                                  {"thickness", 5}}}}}}
                                       .dump()));
    CHECK(r["payload"]["volume_mm3"] == 20000.0);
    TcpLineClient second("127.0.0.1", port);
    r = json::parse(second.request(R"({"call_id": "d", "tool": "describe"})"));
    CHECK(r["success"] == true);
  }
  stop = true;
  t.join();
}

TEST_CASE("recorded transcripts replay against a fresh server") {
  namespace fs = std::filesystem;
  int files = 0;
  for (const auto& entry : fs::directory_iterator(CADLOOP_TRANSCRIPT_DIR)) {
    if (entry.path().extension() != ".jsonl") continue;
    ++files;
    CAPTURE(entry.path().filename().string());
    std::ifstream in(entry.path());
    std::string line;
    REQUIRE(std::getline(in, line));
    const json header = json::parse(line);
    ServerConfig cfg;
    cfg.toolchain.mesh_density = header["mesh_density"];
    ToolServer server(MaterialLibrary::default_library(), cfg);
    WireServer wire(server);
    int n = 0;
    while (std::getline(in, line)) {
      const json rec = json::parse(line);
      const json got = json::parse(wire.handle_line(rec["request"].get<std::string>()));
      compare_json(rec["response"], got, "line " + std::to_string(++n));
    }
    CHECK(n > 0);
  }
  CHECK(files >= 4);
}
