#include "empathic/server.hpp"

#include <chrono>
#include <condition_variable>
#include <deque>
#include <map>
#include <mutex>
#include <thread>
#include <variant>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>

#include "empathic/error.hpp"

namespace empathic {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace ws = beast::websocket;
using tcp = asio::ip::tcp;

namespace {

struct Connected {
  int client;
};
struct Disconnected {
  int client;
};
struct Text {
  int client;
  std::string text;
};
using InboxEvent = std::variant<Connected, Disconnected, Text>;

class Connection : public std::enable_shared_from_this<Connection> {
 public:
  using OnEvent = std::function<void(InboxEvent)>;

  Connection(tcp::socket socket, int id, OnEvent on_event) : ws_(std::move(socket)), id_(id), on_event_(std::move(on_event)) {}

  void run() {
    ws_.set_option(ws::stream_base::timeout::suggested(beast::role_type::server));
    ws_.async_accept([self = shared_from_this()](beast::error_code ec) {
      if (ec) {
        self->on_event_(Disconnected{self->id_});
        return;
      }
      self->open_ = true;
      self->on_event_(Connected{self->id_});
      self->read();
    });
  }

  void send(std::string text, bool close_after) {
    if (closed_) return;
    queue_.push_back({std::move(text), close_after});
    if (queue_.size() == 1) write();
  }

  void close() {
    if (closed_) return;
    closed_ = true;
    beast::error_code ec;
    ws_.next_layer().shutdown(tcp::socket::shutdown_both, ec);
    ws_.next_layer().close(ec);
  }

 private:
  void read() {
    ws_.async_read(buffer_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) {
        self->finish();
        return;
      }
      self->on_event_(Text{self->id_, beast::buffers_to_string(self->buffer_.data())});
      self->buffer_.consume(self->buffer_.size());
      self->read();
    });
  }

  void write() {
    ws_.text(true);
    ws_.async_write(asio::buffer(queue_.front().first), [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) {
        self->finish();
        return;
      }
      const bool close_after = self->queue_.front().second;
      self->queue_.pop_front();
      if (close_after) {
        self->ws_.async_close(ws::close_code::try_again_later, [self](beast::error_code) { self->finish(); });
        return;
      }
      if (!self->queue_.empty()) self->write();
    });
  }

  void finish() {
    if (open_) {
      open_ = false;
      on_event_(Disconnected{id_});
    }
    close();
  }

  ws::stream<tcp::socket> ws_;
  beast::flat_buffer buffer_;
  int id_;
  OnEvent on_event_;
  std::deque<std::pair<std::string, bool>> queue_;
  bool open_ = false;
  bool closed_ = false;
};

}  // namespace

struct WebSocketServer::Impl {
  std::unique_ptr<SessionService> service;
  ServerConfig config;
  asio::io_context ioc;
  tcp::acceptor acceptor{ioc};
  asio::signal_set signals{ioc};
  std::map<int, std::shared_ptr<Connection>> connections;  // io thread only
  int next_id = 1;

  std::mutex mu;
  std::condition_variable cv;
  std::deque<InboxEvent> inbox;
  bool stopping = false;
  bool stopped = false;
  std::thread io_thread;
  std::thread owner_thread;

  void push(InboxEvent e) {
    {
      std::lock_guard lock(mu);
      inbox.push_back(std::move(e));
    }
    cv.notify_one();
  }

  void accept() {
    acceptor.async_accept([this](beast::error_code ec, tcp::socket socket) {
      if (ec) return;
      const int id = next_id++;
      auto c = std::make_shared<Connection>(std::move(socket), id, [this](InboxEvent e) { push(std::move(e)); });
      connections[id] = c;
      c->run();
      accept();
    });
  }

  // Owner thread -> io thread.
  void dispatch(std::vector<Outbound> out) {
    if (out.empty()) return;
    asio::post(ioc, [this, out = std::move(out)]() mutable {
      for (auto& o : out) {
        auto it = connections.find(o.client);
        if (it != connections.end()) it->second->send(std::move(o.text), o.close);
      }
    });
  }

  void owner_loop() {
    using clock = std::chrono::steady_clock;
    const double period = config.tick_period_s > 0 ? config.tick_period_s : service->session().config().time.step_period_s;
    const auto step = std::chrono::duration_cast<clock::duration>(std::chrono::duration<double>(period));
    auto next = clock::now() + step;
    for (;;) {
      std::deque<InboxEvent> events;
      {
        std::unique_lock lock(mu);
        cv.wait_until(lock, next, [this] { return stopping || !inbox.empty(); });
        if (stopping) return;
        events.swap(inbox);
      }
      for (auto& e : events) {
        if (auto* c = std::get_if<Connected>(&e)) {
          dispatch(service->connect(c->client));
        } else if (auto* d = std::get_if<Disconnected>(&e)) {
          service->disconnect(d->client);
          asio::post(ioc, [this, id = d->client] { connections.erase(id); });
        } else {
          auto& t = std::get<Text>(e);
          dispatch(service->receive(t.client, t.text));
        }
      }
      if (clock::now() >= next) {
        dispatch(service->tick());
        next += step;
        if (next < clock::now()) next = clock::now() + step;
      }
    }
  }
};

WebSocketServer::WebSocketServer(std::unique_ptr<SessionService> service, ServerConfig config) : impl_(std::make_unique<Impl>()) {
  if (!service) throw InvalidArgument("server needs a session service");
  impl_->service = std::move(service);
  impl_->config = std::move(config);
}

WebSocketServer::~WebSocketServer() { stop(); }

void WebSocketServer::start() {
  auto& s = *impl_;
  beast::error_code ec;
  const auto address = asio::ip::make_address(s.config.address, ec);
  if (ec) throw InvalidArgument("bad bind address '" + s.config.address + "'");
  const tcp::endpoint ep{address, s.config.port};
  s.acceptor.open(ep.protocol(), ec);
  if (!ec) s.acceptor.set_option(asio::socket_base::reuse_address(true), ec);
  if (!ec) s.acceptor.bind(ep, ec);
  if (!ec) s.acceptor.listen(asio::socket_base::max_listen_connections, ec);
  if (ec) throw Error("cannot listen on " + s.config.address + ":" + std::to_string(s.config.port) + ": " + ec.message());
  s.accept();
  s.signals.add(SIGINT);
  s.signals.add(SIGTERM);
  s.signals.async_wait([this](beast::error_code ec, int) {
    if (!ec) {
      std::lock_guard lock(impl_->mu);
      impl_->stopping = true;
      impl_->cv.notify_all();
    }
  });
  s.io_thread = std::thread([&s] { s.ioc.run(); });
  s.owner_thread = std::thread([&s] { s.owner_loop(); });
}

void WebSocketServer::wait() {
  if (impl_->owner_thread.joinable()) impl_->owner_thread.join();
  stop();
}

void WebSocketServer::stop() {
  auto& s = *impl_;
  {
    std::lock_guard lock(s.mu);
    if (s.stopped) return;
    s.stopping = true;
    s.stopped = true;
  }
  s.cv.notify_all();
  if (s.owner_thread.joinable()) s.owner_thread.join();
  asio::post(s.ioc, [&s] {
    beast::error_code ec;
    s.acceptor.close(ec);
    s.signals.cancel(ec);
    for (auto& [id, c] : s.connections) c->close();
    s.connections.clear();
  });
  if (s.io_thread.joinable()) s.io_thread.join();
}

unsigned short WebSocketServer::port() const { return impl_->acceptor.local_endpoint().port(); }

}  // namespace empathic
