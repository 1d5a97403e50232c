#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "empathic/session.hpp"

namespace empathic {

inline constexpr int kProtocolVersion = 1;

// Envelope for everything on the socket: {"type", "seq", "payload"}.
struct WireMessage {
  std::string type;
  std::uint64_t seq = 0;
  nlohmann::json payload = nlohmann::json::object();
};

std::string encode(const WireMessage& m);
// ParseError for invalid JSON, SchemaError for a bad envelope.
WireMessage decode(const std::string& text);

bool is_known_message_type(const std::string& type);

nlohmann::json state_payload(const OnlineSession& s, bool running);
nlohmann::json belief_payload(const OnlineSession& s);
nlohmann::json metrics_payload(const TickMetrics& m);

struct Outbound {
  int client = 0;
  std::string text;
  bool close = false;  // close the connection after sending
};

struct LoggedMessage {
  bool inbound = false;
  int client = 0;
  std::string text;
};

// One session and its single client, independent of any transport. Every
// call returns the messages to send; every message in or out is logged.
class SessionService {
 public:
  SessionService(SessionConfig config, std::shared_ptr<const ModelParams> model, WindowConfig window);

  std::vector<Outbound> connect(int client);
  void disconnect(int client);
  std::vector<Outbound> receive(int client, const std::string& text);
  // One clock tick: advances the session if it is running.
  std::vector<Outbound> tick();

  bool running() const { return running_; }
  std::optional<int> client() const { return client_; }
  const OnlineSession& session() const { return *session_; }
  const std::vector<LoggedMessage>& log() const { return log_; }
  // Streams every logged message as a JSON line from now on.
  void set_log_stream(std::ostream* os) { log_stream_ = os; }

 private:
  Outbound send(int client, const std::string& type, nlohmann::json payload, bool close = false);
  Outbound error(int client, const std::string& code, const std::string& message, std::optional<std::uint64_t> of);
  void reset(std::uint64_t seed);
  void advance(std::vector<Outbound>& out);
  void record(bool inbound, int client, const std::string& text);
  std::vector<Outbound> handle_control(int client, const WireMessage& m);

  SessionConfig config_;
  std::shared_ptr<const ModelParams> model_;
  WindowConfig window_;
  std::unique_ptr<OnlineSession> session_;
  std::optional<int> client_;
  bool running_ = false;
  std::uint64_t out_seq_ = 0;
  std::optional<std::uint64_t> in_seq_;
  std::vector<LoggedMessage> log_;
  std::ostream* log_stream_ = nullptr;
};

}  // namespace empathic
