#include <gtest/gtest.h>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>

#include "empathic/error.hpp"
#include "empathic/server.hpp"

using namespace empathic;
namespace asio = boost::asio;
namespace beast = boost::beast;
namespace ws = beast::websocket;
using tcp = asio::ip::tcp;

namespace {

class Client {
 public:
  explicit Client(unsigned short port) : ws_(ioc_) {
    tcp::resolver resolver(ioc_);
    asio::connect(ws_.next_layer(), resolver.resolve("127.0.0.1", std::to_string(port)));
    ws_.handshake("127.0.0.1", "/");
  }

  WireMessage read() {
    beast::flat_buffer buf;
    ws_.read(buf);
    return decode(beast::buffers_to_string(buf.data()));
  }

  // Reads until a message of `type` arrives.
  WireMessage read_until(const std::string& type) {
    for (int i = 0; i < 200; ++i) {
      auto m = read();
      if (m.type == type) return m;
    }
    throw std::runtime_error("no " + type + " message");
  }

  void send(const std::string& text) { ws_.write(asio::buffer(text)); }

 private:
  asio::io_context ioc_;
  ws::stream<tcp::socket> ws_;
};

std::unique_ptr<SessionService> live_service() {
  SessionConfig c;
  c.seed = 1;
  c.input = InputMode::Live;
  c.env.episode_length = 50;
  const WindowConfig w;
  auto m = std::make_shared<const ModelParams>(ModelParams::init(ModelConfig::for_window(w), 2));
  return std::make_unique<SessionService>(c, m, w);
}

}  // namespace

TEST(Server, GestureRoundTripOverWebsocket) {
  WebSocketServer server(live_service(), {"127.0.0.1", 0, 0.01});
  server.start();
  ASSERT_GT(server.port(), 0);

  Client a(server.port());
  const auto hello = a.read();
  EXPECT_EQ(hello.type, "hello");
  EXPECT_EQ(hello.payload["protocol"], kProtocolVersion);

  a.send(encode({"control", 1, {{"command", "start"}}}));
  EXPECT_EQ(a.read_until("ack").payload["command"], "start");
  const auto st = a.read_until("state");
  EXPECT_TRUE(st.payload["running"].get<bool>());

  a.send(encode({"gesture", 2, {{"kind", "Smile"}}}));
  const auto ack = a.read_until("ack");
  EXPECT_EQ(ack.payload["of"], 2);
  EXPECT_EQ(ack.payload["kind"], "Smile");

  a.send("{broken");
  const auto err = a.read_until("error");
  EXPECT_EQ(err.payload["code"], "malformed");
  // connection survives
  a.send(encode({"control", 3, {{"command", "pause"}}}));
  EXPECT_EQ(a.read_until("ack").payload["command"], "pause");

  Client b(server.port());
  const auto rejected = b.read();
  EXPECT_EQ(rejected.type, "error");
  EXPECT_EQ(rejected.payload["code"], "busy");

  server.stop();
}

TEST(Server, BadBindAddress) {
  WebSocketServer server(live_service(), {"not-an-address", 0, 0.01});
  EXPECT_THROW(server.start(), InvalidArgument);
}
