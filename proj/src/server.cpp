#include <boost/asio.hpp>
#include <boost/beast.hpp>
#include <deque>
#include <fstream>
#include <sstream>

#include "hmt/service.hpp"

namespace hmt {

namespace {

namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
namespace asio = boost::asio;
using tcp = asio::ip::tcp;

std::string mime_type(const std::string& path) {
  auto ends = [&](const char* ext) {
    const std::string e(ext);
    return path.size() >= e.size() && path.compare(path.size() - e.size(), e.size(), e) == 0;
  };
  if (ends(".html")) return "text/html";
  if (ends(".js")) return "application/javascript";
  if (ends(".css")) return "text/css";
  if (ends(".json")) return "application/json";
  if (ends(".svg")) return "image/svg+xml";
  if (ends(".png")) return "image/png";
  return "application/octet-stream";
}

// "/sessions/{id}/stream" -> id
std::optional<std::string> stream_session(const std::string& target) {
  const std::string path = target.substr(0, target.find('?'));
  const std::string prefix = "/sessions/";
  const std::string suffix = "/stream";
  if (path.rfind(prefix, 0) != 0 || path.size() <= prefix.size() + suffix.size()) return std::nullopt;
  if (path.compare(path.size() - suffix.size(), suffix.size(), suffix) != 0) return std::nullopt;
  const std::string id = path.substr(prefix.size(), path.size() - prefix.size() - suffix.size());
  if (id.empty() || id.find('/') != std::string::npos) return std::nullopt;
  return id;
}

class WsSession : public std::enable_shared_from_this<WsSession> {
 public:
  WsSession(tcp::socket socket, SessionManager& sm, std::string sid)
      : ws_(std::move(socket)), sm_(sm), sid_(std::move(sid)) {}

  ~WsSession() {
    if (handle_) sm_.unsubscribe(sid_, handle_);
  }

  void run(http::request<http::string_body> req) {
    ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
    ws_.async_accept(req, [self = shared_from_this()](beast::error_code ec) { self->on_accept(ec); });
  }

  // `last` closes the stream once the message is written.
  void send(std::string msg, bool last = false) {
    asio::post(ws_.get_executor(), [self = shared_from_this(), msg = std::move(msg), last]() mutable {
      if (self->closing_) return;
      self->closing_ = last;
      self->queue_.push_back(std::move(msg));
      if (self->queue_.size() == 1) self->write_next();
    });
  }

 private:
  void on_accept(beast::error_code ec) {
    if (ec) return;
    std::weak_ptr<WsSession> weak = shared_from_this();
    try {
      handle_ = sm_.subscribe(sid_, [weak](const Json& m) {
        if (auto self = weak.lock()) self->send(m.dump(), m.value("type", "") == "tick" && m.value("final", false));
      });
    } catch (const NotFound& e) {
      send(error_body("not_found", e.what()).dump());
      return;
    }
    read_next();
  }

  void read_next() {
    ws_.async_read(buffer_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) return;
      const std::string text = beast::buffers_to_string(self->buffer_.data());
      self->buffer_.consume(self->buffer_.size());
      std::weak_ptr<WsSession> weak = self;
      auto reply = [weak](const Json& m) {
        if (auto s = weak.lock()) s->send(m.dump());
      };
      if (auto immediate = handle_stream_message(self->sm_, self->sid_, text, reply)) self->send(immediate->dump());
      self->read_next();
    });
  }

  void write_next() {
    ws_.text(true);
    ws_.async_write(asio::buffer(queue_.front()), [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) return;
      self->queue_.pop_front();
      if (!self->queue_.empty()) self->write_next();
      else if (self->closing_)
        self->ws_.async_close(websocket::close_code::normal, [self](beast::error_code) {});
    });
  }

  websocket::stream<beast::tcp_stream> ws_;
  beast::flat_buffer buffer_;
  std::deque<std::string> queue_;
  SessionManager& sm_;
  std::string sid_;
  std::uint64_t handle_ = 0;
  bool closing_ = false;
};

class HttpSession : public std::enable_shared_from_this<HttpSession> {
 public:
  HttpSession(tcp::socket socket, SessionManager& sm, const std::string& static_dir)
      : stream_(std::move(socket)), sm_(sm), static_dir_(static_dir) {}

  void run() { read_next(); }

 private:
  void read_next() {
    req_ = {};
    stream_.expires_after(std::chrono::seconds(60));
    http::async_read(stream_, buffer_, req_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) return;
      self->handle();
    });
  }

  void handle() {
    const std::string target(req_.target());
    if (websocket::is_upgrade(req_)) {
      if (auto sid = stream_session(target)) {
        stream_.expires_never();
        std::make_shared<WsSession>(stream_.release_socket(), sm_, *sid)->run(std::move(req_));
        return;
      }
    }
    auto res = std::make_shared<http::response<http::string_body>>();
    res->version(req_.version());
    res->keep_alive(req_.keep_alive());
    res->set(http::field::server, "hmt");
    res->set(http::field::access_control_allow_origin, "*");

    const bool api = target.rfind("/sessions", 0) == 0 || target.rfind("/episodes", 0) == 0;
    if (!api && req_.method() == http::verb::get && !static_dir_.empty() && serve_static(target, *res)) {
      // served
    } else if (req_.method() == http::verb::options) {
      res->result(http::status::no_content);
      res->set(http::field::access_control_allow_methods, "GET, POST, OPTIONS");
      res->set(http::field::access_control_allow_headers, "Content-Type");
    } else {
      const ApiResponse r = route(sm_, std::string(req_.method_string()), target, req_.body());
      res->result(static_cast<http::status>(r.status));
      res->set(http::field::content_type, "application/json");
      res->body() = r.body.dump();
    }
    res->prepare_payload();
    http::async_write(stream_, *res, [self = shared_from_this(), res](beast::error_code ec, std::size_t) {
      if (ec) return;
      if (res->keep_alive()) self->read_next();
      else self->stream_.socket().shutdown(tcp::socket::shutdown_send, ec);
    });
  }

  bool serve_static(std::string target, http::response<http::string_body>& res) {
    target = target.substr(0, target.find('?'));
    if (target.find("..") != std::string::npos) return false;
    if (target == "/") target = "/index.html";
    const std::string path = static_dir_ + target;
    std::ifstream in(path, std::ios::binary);
    if (!in) return false;
    std::ostringstream buf;
    buf << in.rdbuf();
    res.result(http::status::ok);
    res.set(http::field::content_type, mime_type(path));
    res.body() = buf.str();
    return true;
  }

  beast::tcp_stream stream_;
  beast::flat_buffer buffer_;
  http::request<http::string_body> req_;
  SessionManager& sm_;
  const std::string& static_dir_;
};

}  // namespace

struct Server::Impl {
  Impl(SessionManager& sm, const std::string& address, unsigned short port, std::string dir)
      : sm(sm), acceptor(ioc), static_dir(std::move(dir)) {
    const tcp::endpoint ep(asio::ip::make_address(address), port);
    acceptor.open(ep.protocol());
    acceptor.set_option(asio::socket_base::reuse_address(true));
    acceptor.bind(ep);
    acceptor.listen(asio::socket_base::max_listen_connections);
  }

  void accept() {
    acceptor.async_accept(asio::make_strand(ioc), [this](beast::error_code ec, tcp::socket socket) {
      if (ec) return;
      std::make_shared<HttpSession>(std::move(socket), sm, static_dir)->run();
      accept();
    });
  }

  SessionManager& sm;
  asio::io_context ioc{1};
  tcp::acceptor acceptor;
  std::string static_dir;
  std::thread thread;
};

Server::Server(SessionManager& sessions, const std::string& address, unsigned short port, std::string static_dir)
    : impl_(std::make_unique<Impl>(sessions, address, port, std::move(static_dir))) {}

Server::~Server() { stop(); }

unsigned short Server::port() const noexcept { return impl_->acceptor.local_endpoint().port(); }

void Server::start() {
  if (impl_->thread.joinable()) return;
  impl_->accept();
  impl_->thread = std::thread([this] { impl_->ioc.run(); });
}

void Server::stop() {
  if (!impl_) return;
  impl_->ioc.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace hmt
