#pragma once

// Newline-delimited JSON transport for ToolServer.
//
// request  {"episode_id", "call_id", "tool", "args"}
// response {"call_id", "success", "payload"} or {"call_id", "success": false,
//           "error": {"code", "message"}}
//
// Besides the four tools, the control tools open_episode, submit_final,
// get_rollout_log, close_episode and describe are accepted. See
// docs/protocol.md and protocol/tools.json.

#include <atomic>
#include <functional>
#include <istream>
#include <ostream>
#include <string>

#include "json.hpp"

#include "cadloop/toolserver.hpp"

namespace cadloop {

// The machine-readable protocol descriptor (protocol/tools.json).
const nlohmann::json& protocol_descriptor();

class WireServer {
 public:
  explicit WireServer(ToolServer& server) : server_(server) {}

  nlohmann::json handle(const nlohmann::json& request);
  // Never throws; unparsable input yields an error response with a null call_id.
  std::string handle_line(const std::string& line);

 private:
  ToolServer& server_;
};

// Serves one request per line until end of input.
void serve_stream(WireServer& wire, std::istream& in, std::ostream& out);

// Accepts TCP connections on 127.0.0.1:port, one thread per connection,
// until `stop` is set. port 0 picks a free port; `on_listening` receives it.
void serve_tcp(WireServer& wire, int port, const std::atomic<bool>& stop,
               const std::function<void(int)>& on_listening = {});

// Synchronous request/response over a persistent TCP connection.
class TcpLineClient {
 public:
  TcpLineClient(const std::string& host, int port);
  ~TcpLineClient();
  TcpLineClient(const TcpLineClient&) = delete;
  TcpLineClient& operator=(const TcpLineClient&) = delete;

  std::string request(const std::string& line);

 private:
  int fd_ = -1;
  std::string buffer_;
};

}  // namespace cadloop
