#pragma once

#include <memory>
#include <string>

#include "empathic/protocol.hpp"

namespace empathic {

struct ServerConfig {
  std::string address = "127.0.0.1";
  unsigned short port = 0;  // 0 picks a free port
  // Wall-clock tick period; defaults to the session's step period.
  double tick_period_s = -1.0;
};

// Websocket front end for a SessionService. Socket I/O runs on one thread;
// the service is owned by a second thread and only reached through its
// inbox, so the session never sees concurrent calls.
class WebSocketServer {
 public:
  WebSocketServer(std::unique_ptr<SessionService> service, ServerConfig config);
  ~WebSocketServer();
  WebSocketServer(const WebSocketServer&) = delete;
  WebSocketServer& operator=(const WebSocketServer&) = delete;

  void start();
  void stop();
  // Blocks until stop() or SIGINT/SIGTERM.
  void wait();
  unsigned short port() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace empathic
