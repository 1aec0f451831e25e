#pragma once

// WebSocket + static HTTP front end for SessionCore.
//
// One network thread runs all socket I/O. Each connected client gets its own
// simulation thread that steps the world at the fixed rate and exchanges
// messages with the network thread through mutex-guarded queues at step
// boundaries. Control messages are always delivered; world-state frames keep
// only the newest pending one, so a slow reader loses frames instead of
// stalling the physics.

#include <phsim/records.hpp>
#include <phsim/session.hpp>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include <atomic>
#include <chrono>
#include <deque>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>

namespace phsim::session {

namespace net = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using tcp = net::ip::tcp;

struct ServerConfig {
  std::string address = "127.0.0.1";
  unsigned short port = 8080;  // 0 picks a free port
  std::string static_root;     // directory served over HTTP; empty: built-in page
  std::string results_dir = ".";
  SessionConfig session = SessionConfig::defaults();
  bool realtime = true;             // pace steps to the wall clock
  int send_buffer_bytes = 0;        // 0: OS default
  std::function<void(const SessionCore&)> on_step;  // runs on the simulation thread
};

struct ServerStats {
  std::atomic<std::uint64_t> sessions{0};
  std::atomic<std::uint64_t> frames_sent{0};
  std::atomic<std::uint64_t> frames_dropped{0};
  std::atomic<std::uint64_t> steps{0};
  std::atomic<std::uint64_t> rejected_clients{0};
};

inline std::string_view mime_type(std::string_view path) {
  const auto dot = path.rfind('.');
  const std::string_view ext = dot == std::string_view::npos ? std::string_view{} : path.substr(dot);
  if (ext == ".html" || ext == ".htm") return "text/html";
  if (ext == ".js" || ext == ".mjs") return "application/javascript";
  if (ext == ".css") return "text/css";
  if (ext == ".json") return "application/json";
  if (ext == ".svg") return "image/svg+xml";
  if (ext == ".png") return "image/png";
  if (ext == ".wasm") return "application/wasm";
  if (ext == ".map" || ext == ".txt" || ext == ".md") return "text/plain";
  return "application/octet-stream";
}

/// Maps a request target to a file under `root`; nullopt for anything that
/// would escape it.
inline std::optional<std::filesystem::path> resolve_static(const std::filesystem::path& root,
                                                           std::string_view target) {
  const auto q = target.find_first_of("?#");
  if (q != std::string_view::npos) target = target.substr(0, q);
  if (target.empty() || target.front() != '/') return std::nullopt;
  std::filesystem::path rel = std::filesystem::path(std::string(target.substr(1))).lexically_normal();
  for (const auto& part : rel)
    if (part == "..") return std::nullopt;
  if (rel.empty() || rel == ".") rel = "index.html";
  std::filesystem::path p = root / rel;
  if (std::filesystem::is_directory(p)) p /= "index.html";
  return p;
}

inline constexpr std::string_view kBuiltinIndex =
    "<!doctype html><html><head><meta charset=\"utf-8\"><title>phsim session</title></head>"
    "<body><h1>phsim session service</h1><p>WebSocket endpoint: <code>/ws</code>. "
    "Start the server with <code>--static DIR</code> to serve a client.</p></body></html>\n";

class SessionServer {
 public:
  explicit SessionServer(ServerConfig cfg) : cfg_(std::move(cfg)), acceptor_(ioc_) {}
  ~SessionServer() { stop(); }

  SessionServer(const SessionServer&) = delete;
  SessionServer& operator=(const SessionServer&) = delete;

  /// Binds and starts the network thread. Returns the bound port.
  unsigned short start() {
    tcp::endpoint ep{net::ip::make_address(cfg_.address), cfg_.port};
    acceptor_.open(ep.protocol());
    acceptor_.set_option(net::socket_base::reuse_address(true));
    acceptor_.bind(ep);
    acceptor_.listen();
    port_ = acceptor_.local_endpoint().port();
    do_accept();
    net_thread_ = std::thread([this] { ioc_.run(); });
    return port_;
  }

  void stop() {
    if (stopped_.exchange(true)) return;
    net::post(ioc_, [this] {
      beast::error_code ec;
      acceptor_.close(ec);
      if (auto c = client_.lock()) c->close_now();
    });
    {
      std::lock_guard lk(runner_mu_);
      if (runner_) runner_->stop = true;
    }
    join_runner();
    ioc_.stop();
    if (net_thread_.joinable()) net_thread_.join();
  }

  unsigned short port() const { return port_; }
  const ServerStats& stats() const { return stats_; }
  /// Paths of the result files written so far.
  std::vector<std::string> result_files() const {
    std::lock_guard lk(files_mu_);
    return files_;
  }

 private:
  // Shared between the network thread and one simulation thread.
  struct Mailbox {
    std::mutex mu;
    std::deque<std::string> inbound;
    std::deque<std::string> control;
    std::optional<std::string> frame;
    bool closed = false;
  };

  struct Runner {
    std::thread thread;
    std::atomic<bool> stop{false};
    std::shared_ptr<Mailbox> box;
  };

  class WsClient : public std::enable_shared_from_this<WsClient> {
   public:
    WsClient(SessionServer& srv, tcp::socket sock, std::shared_ptr<Mailbox> box)
        : srv_(srv), ws_(std::move(sock)), box_(std::move(box)) {}

    void run(http::request<http::string_body> req) {
      ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
      ws_.async_accept(req, [self = shared_from_this()](beast::error_code ec) {
        if (ec) return self->fail();
        self->open_ = true;
        self->read();
        self->flush();
      });
    }

    /// Called on the network thread whenever the mailbox has output.
    void flush() {
      if (!open_ || writing_ || done_) return;
      {
        std::lock_guard lk(box_->mu);
        if (!box_->control.empty()) {
          out_ = std::move(box_->control.front());
          box_->control.pop_front();
        } else if (box_->frame) {
          out_ = std::move(*box_->frame);
          box_->frame.reset();
          ++srv_.stats_.frames_sent;
        } else {
          return;
        }
      }
      writing_ = true;
      ws_.text(true);
      ws_.async_write(net::buffer(out_), [self = shared_from_this()](beast::error_code ec, std::size_t) {
        self->writing_ = false;
        if (ec) return self->fail();
        self->flush();
      });
    }

    void close_now() {
      beast::error_code ec;
      beast::get_lowest_layer(ws_).socket().close(ec);
      fail();
    }

   private:
    void read() {
      ws_.async_read(buf_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
        if (ec) return self->fail();
        {
          std::lock_guard lk(self->box_->mu);
          self->box_->inbound.push_back(beast::buffers_to_string(self->buf_.data()));
        }
        self->buf_.consume(self->buf_.size());
        self->read();
      });
    }

    void fail() {
      if (done_) return;
      done_ = true;
      std::lock_guard lk(box_->mu);
      box_->closed = true;
    }

    SessionServer& srv_;
    websocket::stream<beast::tcp_stream> ws_;
    std::shared_ptr<Mailbox> box_;
    beast::flat_buffer buf_;
    std::string out_;
    bool open_ = false;  // handshake finished; no frame may be written before
    bool writing_ = false;
    bool done_ = false;
  };

  class HttpClient : public std::enable_shared_from_this<HttpClient> {
   public:
    HttpClient(SessionServer& srv, tcp::socket sock) : srv_(srv), stream_(std::move(sock)) {}

    void run() {
      stream_.expires_after(std::chrono::seconds(30));
      http::async_read(stream_, buf_, req_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
        if (ec) return;
        self->dispatch();
      });
    }

   private:
    void dispatch() {
      if (websocket::is_upgrade(req_)) {
        if (req_.target() != "/ws") return reply(http::status::not_found, "text/plain", "no such endpoint\n");
        if (!srv_.client_.expired() || srv_.stopped_) {
          ++srv_.stats_.rejected_clients;
          return reply(http::status::service_unavailable, "text/plain", "a session is already running\n");
        }
        stream_.expires_never();
        auto box = std::make_shared<Mailbox>();
        auto ws = std::make_shared<WsClient>(srv_, stream_.release_socket(), box);
        srv_.client_ = ws;
        srv_.launch_runner(box, ws);
        ws->run(std::move(req_));
        return;
      }
      if (req_.method() != http::verb::get && req_.method() != http::verb::head)
        return reply(http::status::method_not_allowed, "text/plain", "GET only\n");
      if (srv_.cfg_.static_root.empty()) {
        const std::string t(req_.target());
        if (t == "/" || t == "/index.html") return reply(http::status::ok, "text/html", std::string(kBuiltinIndex));
        return reply(http::status::not_found, "text/plain", "not found\n");
      }
      const auto path = resolve_static(srv_.cfg_.static_root, std::string(req_.target()));
      if (!path) return reply(http::status::bad_request, "text/plain", "bad path\n");
      std::ifstream f(*path, std::ios::binary);
      if (!f) return reply(http::status::not_found, "text/plain", "not found\n");
      std::string body((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
      reply(http::status::ok, mime_type(path->string()), std::move(body));
    }

    void reply(http::status status, std::string_view type, std::string body) {
      auto res = std::make_shared<http::response<http::string_body>>(status, req_.version());
      res->set(http::field::server, "phsim");
      res->set(http::field::content_type, std::string(type));
      res->keep_alive(false);
      const bool head = req_.method() == http::verb::head;
      res->body() = head ? std::string() : std::move(body);
      res->prepare_payload();
      if (head) res->content_length(body.size());
      http::async_write(stream_, *res, [self = shared_from_this(), res](beast::error_code, std::size_t) {
        beast::error_code ec;
        self->stream_.socket().shutdown(tcp::socket::shutdown_send, ec);
      });
    }

    SessionServer& srv_;
    beast::tcp_stream stream_;
    beast::flat_buffer buf_;
    http::request<http::string_body> req_;
  };

  void do_accept() {
    acceptor_.async_accept(net::make_strand(ioc_), [this](beast::error_code ec, tcp::socket sock) {
      if (ec) return;
      if (cfg_.send_buffer_bytes > 0) {
        beast::error_code ignored;
        sock.set_option(net::socket_base::send_buffer_size(cfg_.send_buffer_bytes), ignored);
      }
      std::make_shared<HttpClient>(*this, std::move(sock))->run();
      do_accept();
    });
  }

  void join_runner() {
    std::unique_ptr<Runner> r;
    {
      std::lock_guard lk(runner_mu_);
      r = std::move(runner_);
    }
    if (r && r->thread.joinable()) r->thread.join();
  }

  // Network thread. A previous runner has already seen its client close.
  void launch_runner(std::shared_ptr<Mailbox> box, std::weak_ptr<WsClient> ws) {
    join_runner();
    auto r = std::make_unique<Runner>();
    r->box = box;
    Runner* raw = r.get();
    const std::uint64_t id = ++stats_.sessions;
    r->thread = std::thread([this, raw, box, ws, id] { simulate(*raw, *box, ws, id); });
    std::lock_guard lk(runner_mu_);
    runner_ = std::move(r);
  }

  void simulate(Runner& runner, Mailbox& box, std::weak_ptr<WsClient> ws, std::uint64_t id) {
    SessionCore core(cfg_.session);
    const auto dt = std::chrono::duration<double>(core.simulation().world().dt);
    auto next = std::chrono::steady_clock::now();
    std::deque<std::string> in;
    const auto kick = [this, ws] {
      net::post(ioc_, [ws] {
        if (auto c = ws.lock()) c->flush();
      });
    };
    for (;;) {
      bool closed = false;
      {
        std::lock_guard lk(box.mu);
        in.swap(box.inbound);
        closed = box.closed;
      }
      if (closed || runner.stop) break;
      std::deque<std::string> replies;
      for (const auto& text : in)
        for (auto& m : core.handle_text(text)) replies.push_back(m.dump());
      in.clear();
      std::optional<json> frame = core.tick();
      ++stats_.steps;
      if (cfg_.on_step) cfg_.on_step(core);
      if (!replies.empty() || frame) {
        {
          std::lock_guard lk(box.mu);
          for (auto& r : replies) box.control.push_back(std::move(r));
          if (frame) {
            if (box.frame) ++stats_.frames_dropped;
            box.frame = frame->dump();
          }
        }
        kick();
      }
      if (cfg_.realtime) {
        next += std::chrono::duration_cast<std::chrono::steady_clock::duration>(dt);
        const auto now = std::chrono::steady_clock::now();
        if (now - next > std::chrono::milliseconds(250)) next = now;  // resynchronise after a stall
        std::this_thread::sleep_until(next);
      }
    }
    persist(core, id);
  }

  void persist(const SessionCore& core, std::uint64_t id) {
    if (core.records().empty()) return;
    std::filesystem::create_directories(cfg_.results_dir);
    const std::string path = (std::filesystem::path(cfg_.results_dir) / ("session-" + std::to_string(id) + ".csv")).string();
    try {
      records::write_text(path, records::trials_csv(core.records()));
      std::lock_guard lk(files_mu_);
      files_.push_back(path);
    } catch (const std::exception& e) {
      std::cerr << "phsim: " << e.what() << '\n';
    }
  }

  ServerConfig cfg_;
  net::io_context ioc_{1};
  tcp::acceptor acceptor_;
  std::thread net_thread_;
  unsigned short port_ = 0;
  std::atomic<bool> stopped_{false};
  std::weak_ptr<WsClient> client_;
  std::mutex runner_mu_;
  std::unique_ptr<Runner> runner_;
  ServerStats stats_;
  mutable std::mutex files_mu_;
  std::vector<std::string> files_;
};

}  // namespace phsim::session
