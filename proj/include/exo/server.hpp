#pragma once

// Session server. One session per connection; a connection is either a raw
// TCP stream of newline-terminated frames or a WebSocket carrying one frame
// per text message. Both arrive on the same port: a connection whose first
// bytes look like an HTTP request is handed to the HTTP side (WebSocket
// upgrade, or static files when a UI root is configured).
//
// Each connection's state lives on its own strand. Deferred evaluations run
// on a separate thread pool and post their results back to that strand.

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
#include <random>
#include <set>
#include <string>
#include <thread>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include "exo/config.hpp"
#include "exo/protocol.hpp"
#include "exo/session.hpp"
#include "exo/session_log.hpp"

namespace exo {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using tcp = asio::ip::tcp;

// Virtual time advances only by the think_ms carried on client frames, which
// makes logs from scripted clients reproducible byte for byte.
enum class ClockMode { Steady, Virtual };

struct ServerOptions {
    ClockMode clock = ClockMode::Steady;
    std::optional<std::filesystem::path> ui_root;
    std::string bind_address = "127.0.0.1";
    unsigned eval_threads = 1;
    bool quiet = false;
    // Sees every frame, inbound before decoding and outbound before writing.
    // Called from connection strands concurrently; must be thread-safe.
    std::function<void(bool inbound, std::string_view frame)> frame_tap;
};

class Server;

namespace server_detail {

inline std::string content_type(const std::filesystem::path& p) {
    const auto ext = p.extension().string();
    if (ext == ".html") return "text/html; charset=utf-8";
    if (ext == ".js" || ext == ".mjs") return "text/javascript";
    if (ext == ".css") return "text/css";
    if (ext == ".json" || ext == ".map") return "application/json";
    if (ext == ".svg") return "image/svg+xml";
    if (ext == ".png") return "image/png";
    if (ext == ".wasm") return "application/wasm";
    return "application/octet-stream";
}

/// Maps a request target onto a file under `root`, or nullopt when the
/// target escapes it.
inline std::optional<std::filesystem::path> resolve_static(const std::filesystem::path& root, std::string target) {
    if (auto q = target.find_first_of("?#"); q != std::string::npos) target.resize(q);
    if (target.empty() || target.front() != '/') return std::nullopt;
    if (target.back() == '/') target += "index.html";
    const std::filesystem::path rel = std::filesystem::path(target.substr(1)).lexically_normal();
    for (const auto& part : rel)
        if (part == "..") return std::nullopt;
    return root / rel;
}

}  // namespace server_detail

class Connection : public std::enable_shared_from_this<Connection> {
public:
    Connection(Server& server, tcp::socket socket);
    void start();

private:
    enum class Mode { Unknown, Lines, WebSocket, Http };

    void on_first_read(beast::error_code ec, std::size_t n);
    void read_lines();
    void drain_lines();
    void read_http();
    void serve_static();
    void read_ws();
    void on_frame(std::string_view frame);
    void pump();
    void apply(Step step);
    void send(std::string frame);
    void write_next();
    void close_after_writes();
    void shutdown();
    std::int64_t now_ms() const;

    Server& server_;
    tcp::socket socket_;
    asio::any_io_executor strand_;  // the socket's own strand
    std::unique_ptr<websocket::stream<tcp::socket>> ws_;
    beast::flat_buffer buffer_;
    http::request<http::string_body> request_;
    Mode mode_ = Mode::Unknown;

    std::optional<SessionState> state_;
    std::unique_ptr<LogWriter> log_;
    std::deque<WireMessage> inbox_;
    std::size_t pending_ = 0;
    std::int64_t virtual_ms_ = 0;
    std::chrono::steady_clock::time_point started_;

    std::deque<std::string> outbox_;
    bool writing_ = false;
    bool closing_ = false;
    bool closed_ = false;
};

class Server {
public:
    Server(ServerConfig cfg, ServerOptions opt)
        : cfg_(std::move(cfg)),
          opt_(std::move(opt)),
          refs_(cfg_.model.reference_values()),
          pool_(std::max(1u, opt_.eval_threads)),
          acceptor_(ioc_) {}

    ~Server() { stop(); }

    /// Binds and starts accepting; returns the bound port (useful with 0).
    unsigned short listen(unsigned short port) {
        std::filesystem::create_directories(cfg_.log_dir);
        const tcp::endpoint ep(asio::ip::make_address(opt_.bind_address), port);
        acceptor_.open(ep.protocol());
        acceptor_.set_option(asio::socket_base::reuse_address(true));
        acceptor_.bind(ep);
        acceptor_.listen();
        accept();
        return acceptor_.local_endpoint().port();
    }

    void run() { ioc_.run(); }

    void run_in_background() {
        thread_ = std::thread([this] { ioc_.run(); });
    }

    void stop() {
        if (stopped_.exchange(true)) return;
        ioc_.stop();
        if (thread_.joinable()) thread_.join();
        pool_.join();
    }

    const ServerConfig& config() const { return cfg_; }
    const ServerOptions& options() const { return opt_; }
    const ReferenceValues& refs() const { return refs_; }
    asio::thread_pool& pool() { return pool_; }

    bool claim_session(const std::string& id) {
        std::lock_guard lock(mu_);
        return active_.insert(id).second;
    }
    void release_session(const std::string& id) {
        std::lock_guard lock(mu_);
        active_.erase(id);
    }

    void diagnostic(const std::string& line) const {
        if (!opt_.quiet) std::cerr << line << '\n';
    }

private:
    void accept() {
        acceptor_.async_accept(asio::make_strand(ioc_), [this](beast::error_code ec, tcp::socket s) {
            if (ec) return;
            std::make_shared<Connection>(*this, std::move(s))->start();
            accept();
        });
    }

    ServerConfig cfg_;
    ServerOptions opt_;
    ReferenceValues refs_;
    asio::io_context ioc_;
    asio::thread_pool pool_;
    tcp::acceptor acceptor_;
    std::thread thread_;
    std::atomic<bool> stopped_{false};
    std::mutex mu_;
    std::set<std::string> active_;
};

// ---- Connection ------------------------------------------------------------

inline Connection::Connection(Server& server, tcp::socket socket)
    : server_(server),
      socket_(std::move(socket)),
      strand_(socket_.get_executor()),
      started_(std::chrono::steady_clock::now()) {}

inline void Connection::start() {
    socket_.set_option(tcp::no_delay(true));
    socket_.async_read_some(buffer_.prepare(4096), asio::bind_executor(strand_, [self = shared_from_this()](
                                                                                      beast::error_code ec,
                                                                                      std::size_t n) {
                                self->on_first_read(ec, n);
                            }));
}

inline void Connection::on_first_read(beast::error_code ec, std::size_t n) {
    if (ec) return shutdown();
    buffer_.commit(n);
    const std::string_view head(static_cast<const char*>(buffer_.data().data()), buffer_.size());
    if (head.rfind("GET ", 0) == 0 || head.rfind("HEAD ", 0) == 0 || head == "G" || head == "GE" || head == "GET") {
        mode_ = Mode::Http;
        read_http();
    } else {
        mode_ = Mode::Lines;
        drain_lines();
    }
}

inline void Connection::read_lines() {
    if (closing_) return;
    socket_.async_read_some(buffer_.prepare(4096),
                            asio::bind_executor(strand_, [self = shared_from_this()](beast::error_code ec, std::size_t n) {
                                if (ec) return self->shutdown();
                                self->buffer_.commit(n);
                                self->drain_lines();
                            }));
}

inline void Connection::drain_lines() {
    for (;;) {
        if (closing_) return;
        const std::string_view data(static_cast<const char*>(buffer_.data().data()), buffer_.size());
        const auto nl = data.find('\n');
        if (nl == std::string_view::npos) {
            if (data.size() > kMaxFrameBytes) {
                send(encode_message(WireMessage{state_ ? state_->session_id : "", 0, std::nullopt,
                                                ErrorBody{"frame_too_large", "frame exceeds 65536 bytes"}}));
                close_after_writes();
                return;
            }
            break;
        }
        const std::string frame(data.substr(0, nl));
        buffer_.consume(nl + 1);
        if (frame.find_first_not_of(" \t\r") == std::string::npos) continue;
        on_frame(frame);
    }
    read_lines();
}

inline void Connection::read_http() {
    http::async_read(socket_, buffer_, request_,
                     asio::bind_executor(strand_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
                         if (ec) return self->shutdown();
                         if (websocket::is_upgrade(self->request_)) {
                             self->mode_ = Mode::WebSocket;
                             self->ws_ = std::make_unique<websocket::stream<tcp::socket>>(std::move(self->socket_));
                             self->ws_->read_message_max(kMaxFrameBytes);
                             self->ws_->async_accept(
                                 self->request_,
                                 asio::bind_executor(self->strand_, [self](beast::error_code ec2) {
                                     if (ec2) return self->shutdown();
                                     self->buffer_.clear();
                                     self->read_ws();
                                 }));
                             return;
                         }
                         self->serve_static();
                     }));
}

inline void Connection::serve_static() {
    auto res = std::make_shared<http::response<http::string_body>>();
    res->version(request_.version());
    res->keep_alive(false);
    const auto& root = server_.options().ui_root;
    std::optional<std::filesystem::path> file;
    if (root) file = server_detail::resolve_static(*root, std::string(request_.target()));
    std::ifstream in;
    if (file && std::filesystem::is_regular_file(*file)) in.open(*file, std::ios::binary);
    if (in.is_open() && in) {
        res->result(http::status::ok);
        res->set(http::field::content_type, server_detail::content_type(*file));
        res->body().assign(std::istreambuf_iterator<char>(in), {});
    } else {
        res->result(http::status::not_found);
        res->set(http::field::content_type, "text/plain");
        res->body() = root ? "not found\n" : "no UI is served here; connect a WebSocket or raw TCP client\n";
    }
    if (request_.method() == http::verb::head) res->body().clear();
    res->prepare_payload();
    http::async_write(socket_, *res,
                      asio::bind_executor(strand_, [self = shared_from_this(), res](beast::error_code, std::size_t) {
                          self->shutdown();
                      }));
}

inline void Connection::read_ws() {
    if (closing_) return;
    ws_->async_read(buffer_, asio::bind_executor(strand_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
        if (ec) return self->shutdown();
        const std::string frame = beast::buffers_to_string(self->buffer_.data());
        self->buffer_.consume(self->buffer_.size());
        self->on_frame(frame);
        self->read_ws();
    }));
}

inline std::int64_t Connection::now_ms() const {
    if (server_.options().clock == ClockMode::Virtual) return virtual_ms_;
    return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - started_).count();
}

inline void Connection::on_frame(std::string_view frame) {
    if (server_.options().frame_tap) server_.options().frame_tap(true, frame);
    WireMessage msg;
    try {
        msg = decode_message(frame);
    } catch (const DecodeError& e) {
        // A malformed frame ends the connection; the session cannot trust the
        // stream any more.
        send(encode_message(WireMessage{state_ ? state_->session_id : "", state_ ? state_->revision : 0, std::nullopt,
                                        ErrorBody{"decode_error", e.what()}}));
        close_after_writes();
        return;
    }
    if (!state_) {
        const auto* hello = std::get_if<Hello>(&msg.body);
        if (!hello) {
            send(encode_message(WireMessage{"", 0, std::nullopt, ErrorBody{"expected_hello", "send Hello first"}}));
            close_after_writes();
            return;
        }
        std::uint64_t seed;
        if (hello->seed) {
            seed = *hello->seed;
        } else {
            std::random_device rd;
            seed = (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
        }
        const std::string id = session_id_for(hello->participant_id, seed);
        if (!server_.claim_session(id)) {
            send(encode_message(WireMessage{id, 0, std::nullopt, ErrorBody{"session_active", "session already connected"}}));
            close_after_writes();
            return;
        }
        try {
            log_ = std::make_unique<LogWriter>(std::filesystem::path(server_.config().log_dir) / (id + ".jsonl"));
        } catch (const std::exception& e) {
            server_.release_session(id);
            send(encode_message(WireMessage{id, 0, std::nullopt, ErrorBody{"log_unavailable", e.what()}}));
            close_after_writes();
            return;
        }
        started_ = std::chrono::steady_clock::now();
        auto [state, step] = start_session(hello->participant_id, seed, server_.config(), server_.refs());
        state_ = std::move(state);
        apply(std::move(step));
        return;
    }
    inbox_.push_back(std::move(msg));
    pump();
}

inline void Connection::pump() {
    while (!inbox_.empty() && !closing_) {
        if (pending_ > 0 && is_barrier(inbox_.front())) return;
        WireMessage msg = std::move(inbox_.front());
        inbox_.pop_front();
        if (msg.think_ms) virtual_ms_ += *msg.think_ms;
        apply(handle_client_message(*state_, msg, server_.config(), now_ms()));
    }
}

inline void Connection::apply(Step step) {
    for (const auto& e : step.events) {
        try {
            log_->append(e);
        } catch (const ClockRegression& ex) {
            server_.diagnostic(std::string("log: ") + ex.what());
        }
    }
    for (const auto& m : step.outbound) send(encode_message(m));
    for (auto& job : step.jobs) {
        ++pending_;
        asio::post(server_.pool(), [self = shared_from_this(), job = std::move(job)]() mutable {
            std::optional<FullEvaluation> result;
            std::string failure;
            try {
                result = run_evaluation(job, self->server_.config(), self->server_.refs());
            } catch (const std::exception& e) {
                failure = e.what();
            }
            asio::post(self->strand_, [self, job = std::move(job), result = std::move(result), failure]() {
                --self->pending_;
                if (result) {
                    self->apply(complete_evaluation(*self->state_, job, *result, self->server_.config(), self->now_ms()));
                } else {
                    self->send(encode_message(WireMessage{self->state_->session_id, job.revision, std::nullopt,
                                                          ErrorBody{"evaluation_failed", failure}}));
                }
                self->pump();
            });
        });
    }
}

inline void Connection::send(std::string frame) {
    if (closed_) return;
    if (server_.options().frame_tap) server_.options().frame_tap(false, frame);
    outbox_.push_back(std::move(frame));
    if (!writing_) write_next();
}

inline void Connection::write_next() {
    if (outbox_.empty()) {
        writing_ = false;
        if (closing_) shutdown();
        return;
    }
    writing_ = true;
    auto done = asio::bind_executor(strand_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
        if (ec) return self->shutdown();
        self->outbox_.pop_front();
        self->write_next();
    });
    if (mode_ == Mode::WebSocket) {
        std::string_view f = outbox_.front();
        if (!f.empty() && f.back() == '\n') f.remove_suffix(1);
        ws_->text(true);
        ws_->async_write(asio::buffer(f.data(), f.size()), std::move(done));
    } else {
        asio::async_write(socket_, asio::buffer(outbox_.front()), std::move(done));
    }
}

inline void Connection::close_after_writes() {
    closing_ = true;
    if (!writing_) shutdown();
}

inline void Connection::shutdown() {
    if (closed_) return;
    closed_ = true;
    beast::error_code ec;
    if (ws_) {
        ws_->next_layer().shutdown(tcp::socket::shutdown_both, ec);
        ws_->next_layer().close(ec);
    } else {
        socket_.shutdown(tcp::socket::shutdown_both, ec);
        socket_.close(ec);
    }
    if (state_) server_.release_session(state_->session_id);
}

}  // namespace exo
