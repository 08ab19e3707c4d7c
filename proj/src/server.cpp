#include "dfd/server.hpp"

#include <deque>
#include <iostream>

#include <boost/asio/ip/tcp.hpp>
#include <boost/asio/post.hpp>
#include <boost/asio/signal_set.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>

#include "dfd/session.hpp"

namespace dfd {

namespace net = boost::asio;
namespace beast = boost::beast;
namespace websocket = beast::websocket;
using tcp = net::ip::tcp;

namespace {

class Connection : public std::enable_shared_from_this<Connection> {
 public:
  Connection(tcp::socket socket, std::string mesh_path, std::string field_path)
      : ws_(std::move(socket)), mesh_path_(std::move(mesh_path)), field_path_(std::move(field_path)) {}

  void start() {
    ws_.read_message_max(64 << 20);
    // Geometry frames go out as one WebSocket frame each, not 4 KiB pieces.
    ws_.auto_fragment(false);
    ws_.async_accept([self = shared_from_this()](beast::error_code ec) { self->on_accept(ec); });
  }

 private:
  void on_accept(beast::error_code ec) {
    if (ec) return;
    // Sinks run on runner threads; hop to the socket's executor and only
    // then touch the connection, so it is never destroyed off that thread.
    auto exec = ws_.get_executor();
    std::weak_ptr<Connection> weak = weak_from_this();
    auto sink = [exec, weak](bool binary, SessionRunner::EncodedFrame bytes) {
      net::post(exec, [weak, binary, bytes = std::move(bytes)]() mutable {
        if (auto self = weak.lock()) self->enqueue(binary, std::move(bytes));
      });
    };
    runner_ = std::make_unique<SessionRunner>(
        [sink](const std::string& text) { sink(false, std::make_shared<const std::string>(text)); },
        SessionRunner::EncodedFrames{[sink](SessionRunner::EncodedFrame frame) { sink(true, std::move(frame)); }});
    if (!mesh_path_.empty())
      runner_->post(Json{{"type", "load"}, {"mesh_path", mesh_path_}, {"field_path", field_path_}});
    read();
  }

  void read() {
    ws_.async_read(buffer_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) return;  // closed; runner is torn down with the connection
      if (self->ws_.got_text()) {
        self->runner_->post(beast::buffers_to_string(self->buffer_.data()));
      } else {
        self->enqueue(false, std::make_shared<const std::string>(
                                 Json{{"type", "error"}, {"request", "?"},
                                      {"message", "control messages must be JSON text frames"}}
                                     .dump()));
      }
      self->buffer_.consume(self->buffer_.size());
      self->read();
    });
  }

  void enqueue(bool binary, SessionRunner::EncodedFrame bytes) {
    if (binary && queue_.size() > 1) {
      // An unsent older frame is superseded by this one.
      for (auto it = queue_.begin() + 1; it != queue_.end();)
        it = it->first ? queue_.erase(it) : it + 1;
    }
    queue_.emplace_back(binary, std::move(bytes));
    if (queue_.size() == 1) write_next();
  }

  void write_next() {
    ws_.binary(queue_.front().first);
    ws_.async_write(net::buffer(*queue_.front().second),
                    [self = shared_from_this()](beast::error_code ec, std::size_t) {
                      if (ec) return;
                      self->queue_.pop_front();
                      if (!self->queue_.empty()) self->write_next();
                    });
  }

  websocket::stream<beast::tcp_stream> ws_;
  beast::flat_buffer buffer_;
  std::deque<std::pair<bool, SessionRunner::EncodedFrame>> queue_;
  std::unique_ptr<SessionRunner> runner_;
  std::string mesh_path_, field_path_;
};

}  // namespace

struct EditServer::Impl {
  net::io_context ioc{1};
  tcp::acceptor acceptor{ioc};
  std::string mesh_path, field_path;

  void accept() {
    acceptor.async_accept([this](beast::error_code ec, tcp::socket socket) {
      if (!acceptor.is_open()) return;
      if (!ec) std::make_shared<Connection>(std::move(socket), mesh_path, field_path)->start();
      accept();
    });
  }
};

EditServer::EditServer(const std::string& address, std::uint16_t port, std::string mesh_path,
                       std::string field_path)
    : impl_(std::make_unique<Impl>()) {
  impl_->mesh_path = std::move(mesh_path);
  impl_->field_path = std::move(field_path);
  beast::error_code ec;
  const tcp::endpoint endpoint(net::ip::make_address(address, ec), port);
  if (ec) throw InputError("bad listen address '" + address + "'");
  impl_->acceptor.open(endpoint.protocol());
  impl_->acceptor.set_option(net::socket_base::reuse_address(true));
  impl_->acceptor.bind(endpoint, ec);
  if (ec) throw InputError("cannot bind port " + std::to_string(port) + ": " + ec.message());
  impl_->acceptor.listen();
}

EditServer::~EditServer() = default;

std::uint16_t EditServer::port() const { return impl_->acceptor.local_endpoint().port(); }

void EditServer::run(bool handle_signals) {
  std::optional<net::signal_set> signals;
  if (handle_signals) {
    signals.emplace(impl_->ioc, SIGINT, SIGTERM);
    signals->async_wait([this](beast::error_code, int) { stop(); });
  }
  impl_->accept();
  impl_->ioc.run();
}

void EditServer::stop() {
  net::post(impl_->ioc, [this] {
    beast::error_code ec;
    impl_->acceptor.close(ec);
    impl_->ioc.stop();
  });
}

}  // namespace dfd
