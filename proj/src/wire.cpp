#include "cadloop/wire.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <thread>
#include <vector>

#include "cadloop/embedded_data.hpp"
#include "cadloop/error.hpp"

namespace cadloop {

using nlohmann::json;

const json& protocol_descriptor() {
  static const json d = json::parse(embedded::kProtocolJson);
  return d;
}

namespace {

json error_response(const json& call_id, std::string_view code, const std::string& message) {
  return {{"call_id", call_id},
          {"success", false},
          {"error", {{"code", code}, {"message", message}}}};
}

json ok_response(const json& call_id, json payload) {
  return {{"call_id", call_id}, {"success", true}, {"payload", std::move(payload)}};
}

}  // namespace

json WireServer::handle(const json& request) {
  json call_id = nullptr;
  try {
    if (!request.is_object()) throw Error(ErrorCode::kMalformedArgs, "request must be an object");
    if (request.contains("call_id")) call_id = request["call_id"];
    if (!request.contains("tool") || !request["tool"].is_string()) {
      throw Error(ErrorCode::kMalformedArgs, "request needs a string 'tool'");
    }
    const std::string tool = request["tool"].get<std::string>();
    const json args = request.value("args", json::object());
    const auto episode = [&]() -> std::string {
      if (!request.contains("episode_id") || !request["episode_id"].is_string()) {
        throw Error(ErrorCode::kMalformedArgs, "request needs a string 'episode_id'");
      }
      return request["episode_id"].get<std::string>();
    };

    if (tool == "describe") return ok_response(call_id, protocol_descriptor());
    if (tool == "open_episode") {
      if (!args.is_object() || !args.contains("task")) {
        throw Error(ErrorCode::kMalformedArgs, "open_episode needs args.task");
      }
      const TaskInstance task = task_from_json(args["task"]);
      const FailureConfig failures = failures_from_json(args.value("failures", json(nullptr)));
      const std::string id = server_.open_episode(task, failures);
      return ok_response(call_id, {{"episode_id", id}, {"state", "open"}});
    }
    if (tool == "submit_final") {
      if (!args.is_object() || !args.contains("text") || !args["text"].is_string()) {
        throw Error(ErrorCode::kMalformedArgs, "submit_final needs a string args.text");
      }
      return ok_response(call_id, server_.submit_final(episode(), args["text"].get<std::string>()));
    }
    if (tool == "get_rollout_log") {
      const std::string id = episode();
      json events = json::array();
      for (const auto& e : server_.get_rollout_log(id).events) events.push_back(event_to_json(e));
      return ok_response(call_id, {{"state", episode_state_name(server_.state(id))},
                                   {"tool_calls", server_.tool_call_count(id)},
                                   {"events", std::move(events)}});
    }
    if (tool == "close_episode") {
      server_.close_episode(episode());
      return ok_response(call_id, {{"closed", true}});
    }

    const std::string id = episode();
    const std::string cid = call_id.is_string() ? call_id.get<std::string>() : std::string();
    const ToolResponse r = server_.call_tool(id, tool, args, cid);
    if (r.success) return ok_response(call_id, r.payload);
    json resp = error_response(call_id, r.error_code, r.message);
    resp["error"]["injected"] = r.injected;
    return resp;
  } catch (const Error& ex) {
    return error_response(call_id, error_code_name(ex.code()), ex.what());
  } catch (const json::exception& ex) {
    return error_response(call_id, error_code_name(ErrorCode::kMalformedArgs), ex.what());
  }
}

std::string WireServer::handle_line(const std::string& line) {
  const json request = json::parse(line, nullptr, false);
  if (request.is_discarded()) {
    return error_response(nullptr, error_code_name(ErrorCode::kParse), "request is not valid JSON")
        .dump();
  }
  return handle(request).dump();
}

void serve_stream(WireServer& wire, std::istream& in, std::ostream& out) {
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    out << wire.handle_line(line) << '\n';
    out.flush();
  }
}

namespace {

bool write_all(int fd, const std::string& data) {
  std::size_t sent = 0;
  while (sent < data.size()) {
    const ssize_t n = ::send(fd, data.data() + sent, data.size() - sent, MSG_NOSIGNAL);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) return false;
    sent += static_cast<std::size_t>(n);
  }
  return true;
}

// Reads one '\n'-terminated line into `line`; false at end of stream.
bool read_line(int fd, std::string& buffer, std::string& line) {
  for (;;) {
    const auto nl = buffer.find('\n');
    if (nl != std::string::npos) {
      line = buffer.substr(0, nl);
      buffer.erase(0, nl + 1);
      return true;
    }
    char chunk[4096];
    const ssize_t n = ::recv(fd, chunk, sizeof chunk, 0);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) return false;
    buffer.append(chunk, static_cast<std::size_t>(n));
  }
}

void serve_connection(WireServer& wire, int fd) {
  std::string buffer, line;
  while (read_line(fd, buffer, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    if (!write_all(fd, wire.handle_line(line) + "\n")) break;
  }
  ::close(fd);
}

}  // namespace

void serve_tcp(WireServer& wire, int port, const std::atomic<bool>& stop,
               const std::function<void(int)>& on_listening) {
  const int listener = ::socket(AF_INET, SOCK_STREAM, 0);
  if (listener < 0) throw Error(ErrorCode::kIo, std::string("socket: ") + std::strerror(errno));
  const int one = 1;
  ::setsockopt(listener, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  addr.sin_port = htons(static_cast<std::uint16_t>(port));
  if (::bind(listener, reinterpret_cast<sockaddr*>(&addr), sizeof addr) < 0 ||
      ::listen(listener, 16) < 0) {
    const std::string msg = std::strerror(errno);
    ::close(listener);
    throw Error(ErrorCode::kIo, "bind/listen on port " + std::to_string(port) + ": " + msg);
  }
  socklen_t len = sizeof addr;
  ::getsockname(listener, reinterpret_cast<sockaddr*>(&addr), &len);
  if (on_listening) on_listening(ntohs(addr.sin_port));

  std::vector<std::thread> workers;
  while (!stop.load()) {
    pollfd pfd{listener, POLLIN, 0};
    const int ready = ::poll(&pfd, 1, 100);
    if (ready <= 0) continue;
    const int fd = ::accept(listener, nullptr, nullptr);
    if (fd < 0) continue;
    workers.emplace_back(serve_connection, std::ref(wire), fd);
  }
  ::close(listener);
  for (auto& w : workers) w.join();
}

TcpLineClient::TcpLineClient(const std::string& host, int port) {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (::getaddrinfo(host.c_str(), std::to_string(port).c_str(), &hints, &res) != 0 || !res) {
    throw Error(ErrorCode::kIo, "cannot resolve " + host);
  }
  fd_ = ::socket(res->ai_family, res->ai_socktype, res->ai_protocol);
  const bool ok = fd_ >= 0 && ::connect(fd_, res->ai_addr, res->ai_addrlen) == 0;
  ::freeaddrinfo(res);
  if (!ok) {
    if (fd_ >= 0) ::close(fd_);
    throw Error(ErrorCode::kIo, "cannot connect to " + host + ":" + std::to_string(port));
  }
}

TcpLineClient::~TcpLineClient() {
  if (fd_ >= 0) ::close(fd_);
}

std::string TcpLineClient::request(const std::string& line) {
  if (!write_all(fd_, line + "\n")) throw Error(ErrorCode::kIo, "connection lost while sending");
  std::string reply;
  if (!read_line(fd_, buffer_, reply)) throw Error(ErrorCode::kIo, "connection closed by server");
  return reply;
}

}  // namespace cadloop
