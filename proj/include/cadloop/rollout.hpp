#pragma once

// Rollout logs: the ordered event record of one episode and its JSONL file
// form. One event per line with fields t, kind, tool, payload, success.

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace cadloop {

enum class EventKind { kToolCall, kToolResponse, kPolicyMessage, kFinalOutput, kTerminal };

std::string_view event_kind_name(EventKind kind);
EventKind parse_event_kind(std::string_view name);

// Payload conventions:
//   tool_call       {"call_id", "args"}
//   tool_response   {"call_id", "result"} or {"call_id", "error": {code, message}, "injected"}
//   final_output    {"text", "parsed", "final"}
//   terminal        {"reason"}
struct Event {
  int t = 0;
  EventKind kind = EventKind::kPolicyMessage;
  std::string tool;
  nlohmann::json payload = nlohmann::json::object();
  bool success = true;

  bool operator==(const Event&) const = default;
};

struct RolloutLog {
  std::vector<Event> events;

  bool operator==(const RolloutLog&) const = default;
};

nlohmann::json event_to_json(const Event& e);
Event event_from_json(const nlohmann::json& j);

std::string to_jsonl(const RolloutLog& log);
// Throws kParse on a malformed line or non-increasing indices.
RolloutLog parse_jsonl(std::string_view text);

RolloutLog read_log_file(const std::string& path);
void write_log_file(const RolloutLog& log, const std::string& path);

// First balanced {...} region of `text` that parses as a JSON object with
// string "category", string "material" and object "parameters".
std::optional<nlohmann::json> extract_final_json(std::string_view text);

// Number of tool_call events.
int count_tool_calls(const RolloutLog& log);

}  // namespace cadloop
