#include "mentalsim/error.hpp"
#include "mentalsim/wire.hpp"

#include <boost/asio/ip/tcp.hpp>
#include <boost/asio/strand.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>

#include <deque>
#include <thread>

namespace mentalsim::wire {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace websocket = beast::websocket;
using tcp = asio::ip::tcp;

namespace {

class Session : public std::enable_shared_from_this<Session> {
 public:
  Session(tcp::socket socket, Hub& hub) : ws_(std::move(socket)), hub_(hub) {}
  ~Session() {
    if (conn_) hub_.disconnect(conn_);
  }

  void start() {
    ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
    ws_.text(true);
    ws_.async_accept(beast::bind_front_handler(&Session::on_accept, shared_from_this()));
  }

  void close() {
    asio::post(ws_.get_executor(), [self = shared_from_this()] {
      beast::error_code ec;
      beast::get_lowest_layer(self->ws_).socket().close(ec);
    });
  }

 private:
  void on_accept(beast::error_code ec) {
    if (ec) return;
    std::weak_ptr<Session> weak = shared_from_this();
    conn_ = hub_.connect([weak](const std::string& frame) {
      if (auto self = weak.lock()) self->queue(frame);
    });
    read();
  }

  void read() { ws_.async_read(buffer_, beast::bind_front_handler(&Session::on_read, shared_from_this())); }

  void on_read(beast::error_code ec, std::size_t) {
    if (ec) {
      hub_.disconnect(conn_);
      return;
    }
    const std::string frame = beast::buffers_to_string(buffer_.data());
    buffer_.consume(buffer_.size());
    hub_.handle(conn_, frame);
    read();
  }

  void queue(const std::string& frame) {
    asio::post(ws_.get_executor(), [self = shared_from_this(), frame] {
      self->outbox_.push_back(frame);
      if (self->outbox_.size() == 1) self->write();
    });
  }

  void write() {
    ws_.async_write(asio::buffer(outbox_.front()), beast::bind_front_handler(&Session::on_write, shared_from_this()));
  }

  void on_write(beast::error_code ec, std::size_t) {
    if (ec) {
      hub_.disconnect(conn_);
      outbox_.clear();
      return;
    }
    outbox_.pop_front();
    if (!outbox_.empty()) write();
  }

  websocket::stream<beast::tcp_stream> ws_;
  Hub& hub_;
  ConnId conn_ = 0;
  beast::flat_buffer buffer_;
  std::deque<std::string> outbox_;
};

}  // namespace

struct Server::Impl {
  Hub& hub;
  asio::io_context io;
  tcp::acceptor acceptor{asio::make_strand(io)};
  std::vector<std::weak_ptr<Session>> sessions;
  std::mutex sessions_mutex;
  std::thread thread;
  unsigned short port = 0;

  explicit Impl(Hub& h) : hub(h) {}

  void accept() {
    acceptor.async_accept(asio::make_strand(io), [this](beast::error_code ec, tcp::socket socket) {
      if (ec) return;
      auto s = std::make_shared<Session>(std::move(socket), hub);
      {
        std::lock_guard lock(sessions_mutex);
        sessions.push_back(s);
      }
      s->start();
      accept();
    });
  }
};

Server::Server(Hub& hub, const std::string& host, unsigned short port) : impl_(std::make_unique<Impl>(hub)) {
  beast::error_code ec;
  const auto address = asio::ip::make_address(host, ec);
  if (ec) throw Error(Errc::BindFailure, "bad address '" + host + "': " + ec.message());
  const tcp::endpoint endpoint(address, port);
  auto& a = impl_->acceptor;
  a.open(endpoint.protocol(), ec);
  if (!ec) a.set_option(asio::socket_base::reuse_address(true), ec);
  if (!ec) a.bind(endpoint, ec);
  if (!ec) a.listen(asio::socket_base::max_listen_connections, ec);
  if (ec) throw Error(Errc::BindFailure, host + ":" + std::to_string(port) + ": " + ec.message());
  impl_->port = a.local_endpoint().port();
  impl_->accept();
  impl_->thread = std::thread([this] { impl_->io.run(); });
}

Server::~Server() { stop(); }

unsigned short Server::port() const { return impl_->port; }

void Server::stop() {
  if (!impl_->thread.joinable()) return;
  asio::post(impl_->acceptor.get_executor(), [this] {
    beast::error_code ec;
    impl_->acceptor.close(ec);
  });
  {
    std::lock_guard lock(impl_->sessions_mutex);
    for (auto& w : impl_->sessions)
      if (auto s = w.lock()) s->close();
  }
  impl_->io.stop();
  impl_->thread.join();
}

}  // namespace mentalsim::wire
