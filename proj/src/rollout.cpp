#include "cadloop/rollout.hpp"

#include <fstream>
#include <sstream>

#include "cadloop/error.hpp"

namespace cadloop {

using nlohmann::json;

std::string_view event_kind_name(EventKind kind) {
  switch (kind) {
    case EventKind::kToolCall: return "tool_call";
    case EventKind::kToolResponse: return "tool_response";
    case EventKind::kPolicyMessage: return "policy_message";
    case EventKind::kFinalOutput: return "final_output";
    case EventKind::kTerminal: return "terminal";
  }
  return "terminal";
}

EventKind parse_event_kind(std::string_view name) {
  for (auto k : {EventKind::kToolCall, EventKind::kToolResponse, EventKind::kPolicyMessage,
                 EventKind::kFinalOutput, EventKind::kTerminal}) {
    if (event_kind_name(k) == name) return k;
  }
  throw Error(ErrorCode::kParse, "unknown event kind '" + std::string(name) + "'");
}

json event_to_json(const Event& e) {
  json j;
  j["t"] = e.t;
  j["kind"] = event_kind_name(e.kind);
  j["tool"] = e.tool.empty() ? json(nullptr) : json(e.tool);
  j["payload"] = e.payload;
  j["success"] = e.success;
  return j;
}

Event event_from_json(const json& j) {
  try {
    Event e;
    e.t = j.at("t").get<int>();
    e.kind = parse_event_kind(j.at("kind").get<std::string>());
    const auto& tool = j.at("tool");
    if (!tool.is_null()) e.tool = tool.get<std::string>();
    e.payload = j.at("payload");
    e.success = j.at("success").get<bool>();
    return e;
  } catch (const json::exception& ex) {
    throw Error(ErrorCode::kParse, std::string("bad event: ") + ex.what());
  }
}

std::string to_jsonl(const RolloutLog& log) {
  std::string out;
  for (const auto& e : log.events) {
    out += event_to_json(e).dump();
    out += '\n';
  }
  return out;
}

RolloutLog parse_jsonl(std::string_view text) {
  RolloutLog log;
  std::size_t pos = 0;
  int line_no = 0;
  while (pos < text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    const std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& ex) {
      throw Error(ErrorCode::kParse, "line " + std::to_string(line_no) + ": " + ex.what());
    }
    Event e = event_from_json(j);
    if (!log.events.empty() && e.t <= log.events.back().t) {
      throw Error(ErrorCode::kParse, "line " + std::to_string(line_no) + ": index not increasing");
    }
    log.events.push_back(std::move(e));
  }
  return log;
}

RolloutLog read_log_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_jsonl(ss.str());
}

void write_log_file(const RolloutLog& log, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path);
  out << to_jsonl(log);
}

namespace {

// End of the balanced object starting at text[open], honouring JSON strings.
std::size_t balanced_end(std::string_view text, std::size_t open) {
  int depth = 0;
  bool in_string = false, escaped = false;
  for (std::size_t i = open; i < text.size(); ++i) {
    const char c = text[i];
    if (in_string) {
      if (escaped) escaped = false;
      else if (c == '\\') escaped = true;
      else if (c == '"') in_string = false;
      continue;
    }
    if (c == '"') in_string = true;
    else if (c == '{') ++depth;
    else if (c == '}' && --depth == 0) return i;
  }
  return std::string_view::npos;
}

bool has_final_fields(const json& j) {
  return j.is_object() && j.contains("category") && j["category"].is_string() &&
         j.contains("material") && j["material"].is_string() && j.contains("parameters") &&
         j["parameters"].is_object();
}

}  // namespace

std::optional<json> extract_final_json(std::string_view text) {
  for (std::size_t open = text.find('{'); open != std::string_view::npos;
       open = text.find('{', open + 1)) {
    const std::size_t close = balanced_end(text, open);
    if (close == std::string_view::npos) continue;
    json j = json::parse(text.substr(open, close - open + 1), nullptr, false);
    if (!j.is_discarded() && has_final_fields(j)) return j;
  }
  return std::nullopt;
}

int count_tool_calls(const RolloutLog& log) {
  int n = 0;
  for (const auto& e : log.events) n += e.kind == EventKind::kToolCall ? 1 : 0;
  return n;
}

}  // namespace cadloop
