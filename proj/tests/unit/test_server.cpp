#include <fstream>
#include <thread>

#include <gtest/gtest.h>

#include "exo/agent.hpp"
#include "exo/replay.hpp"
#include "exo/server.hpp"
#include "support/temp_dir.hpp"

using namespace exo;

namespace {

WireMessage hello(const std::string& pid, std::uint64_t seed) {
    return WireMessage{"", 0, std::nullopt, Hello{std::string(kProtocolVersion), pid, seed}};
}

class RunningServer : public ::testing::Test {
protected:
    void start(ServerOptions opt = {}) {
        opt.quiet = true;
        ServerConfig cfg = parse_config(nlohmann::json::object());
        cfg.log_dir = (logs.path()).string();
        server = std::make_unique<Server>(cfg, opt);
        port = server->listen(0);
        server->run_in_background();
    }
    void TearDown() override {
        if (server) server->stop();
    }

    support::TempDir logs{"server"};
    std::unique_ptr<Server> server;
    unsigned short port = 0;
};

// Minimal synchronous WebSocket client.
class WsClient {
public:
    explicit WsClient(unsigned short port) : ws_(ioc_) {
        tcp::resolver resolver(ioc_);
        asio::connect(ws_.next_layer(), resolver.resolve("127.0.0.1", std::to_string(port)));
        ws_.handshake("127.0.0.1:" + std::to_string(port), "/");
        ws_.text(true);
    }
    void send_raw(const std::string& s) { ws_.write(asio::buffer(s)); }
    void send(const WireMessage& m) {
        std::string f = encode_message(m);
        if (!f.empty() && f.back() == '\n') f.pop_back();
        send_raw(f);
    }
    std::string receive_raw() {
        beast::flat_buffer buf;
        ws_.read(buf);
        return beast::buffers_to_string(buf.data());
    }
    WireMessage receive() { return decode_message(receive_raw()); }

private:
    asio::io_context ioc_;
    websocket::stream<tcp::socket> ws_;
};

struct HttpReply {
    unsigned status;
    std::string content_type;
    std::string body;
};

HttpReply http_get(unsigned short port, const std::string& target) {
    asio::io_context ioc;
    tcp::socket s(ioc);
    tcp::resolver resolver(ioc);
    asio::connect(s, resolver.resolve("127.0.0.1", std::to_string(port)));
    http::request<http::empty_body> req{http::verb::get, target, 11};
    req.set(http::field::host, "127.0.0.1");
    http::write(s, req);
    beast::flat_buffer buf;
    http::response<http::string_body> res;
    http::read(s, buf, res);
    return {res.result_int(), std::string(res[http::field::content_type]), res.body()};
}

}  // namespace

TEST_F(RunningServer, WebSocketCarriesOneFramePerMessage) {
    start();
    WsClient ws(port);
    ws.send(hello("ws-user", 17));
    const std::string raw = ws.receive_raw();
    EXPECT_NE(raw.back(), '\n');
    const auto welcome = decode_message(raw);
    ASSERT_TRUE(holds<Welcome>(welcome));
    EXPECT_EQ(welcome.session_id, session_id_for("ws-user", 17));
    EXPECT_EQ(std::get<Welcome>(welcome.body).participant_id, "ws-user");

    ws.send(WireMessage{welcome.session_id, 0, 500, CameraPose{{1, 2, 3}, {0, 1, 0}}});
    ws.send(WireMessage{welcome.session_id, 0, std::nullopt, Sync{}});
    WireMessage m;
    do m = ws.receive();
    while (!holds<SyncAck>(m) && !holds<ErrorBody>(m));
    EXPECT_TRUE(holds<SyncAck>(m));
}

TEST_F(RunningServer, WebSocketDecodeErrorEndsSession) {
    start();
    WsClient ws(port);
    ws.send(hello("ws-bad", 1));
    ASSERT_TRUE(holds<Welcome>(ws.receive()));
    ws.send_raw(R"({"type":"Sync"})");
    const auto err = ws.receive();
    ASSERT_TRUE(holds<ErrorBody>(err));
    EXPECT_EQ(std::get<ErrorBody>(err.body).code, "decode_error");
    EXPECT_THROW(ws.receive(), boost::system::system_error);
}

TEST_F(RunningServer, ServesStaticUiWhenConfigured) {
    support::TempDir ui("ui");
    std::ofstream(ui / "index.html") << "<!doctype html><title>x</title>";
    std::filesystem::create_directories(ui / "assets");
    std::ofstream(ui / "assets" / "app.js") << "console.log(1)";
    ServerOptions opt;
    opt.ui_root = ui.path();
    start(opt);

    const auto index = http_get(port, "/");
    EXPECT_EQ(index.status, 200u);
    EXPECT_EQ(index.body, "<!doctype html><title>x</title>");
    EXPECT_EQ(index.content_type, "text/html; charset=utf-8");
    const auto js = http_get(port, "/assets/app.js?v=3");
    EXPECT_EQ(js.status, 200u);
    EXPECT_EQ(js.content_type, "text/javascript");
    EXPECT_EQ(http_get(port, "/missing.css").status, 404u);
    EXPECT_EQ(http_get(port, "/../../etc/passwd").status, 404u);

    // The same port still speaks the session protocol.
    WsClient ws(port);
    ws.send(hello("ui-user", 2));
    EXPECT_TRUE(holds<Welcome>(ws.receive()));
}

TEST_F(RunningServer, NoStaticFilesWithoutUiRoot) {
    start();
    EXPECT_EQ(http_get(port, "/").status, 404u);
}

TEST(StaticPaths, StayUnderRoot) {
    const std::filesystem::path root = "/srv/ui";
    EXPECT_EQ(server_detail::resolve_static(root, "/"), root / "index.html");
    EXPECT_EQ(server_detail::resolve_static(root, "/a/b.js#x"), root / "a/b.js");
    EXPECT_EQ(server_detail::resolve_static(root, "/a/../b.js"), root / "b.js");
    EXPECT_FALSE(server_detail::resolve_static(root, "/../x"));
    EXPECT_FALSE(server_detail::resolve_static(root, "relative"));
}

TEST_F(RunningServer, FirstFrameMustBeHello) {
    start();
    FrameClient c("127.0.0.1", port);
    c.send(WireMessage{"", 0, std::nullopt, Sync{}});
    const auto err = c.receive();
    ASSERT_TRUE(holds<ErrorBody>(err));
    EXPECT_EQ(std::get<ErrorBody>(err.body).code, "expected_hello");
    EXPECT_THROW(c.receive(), ConnectionLost);
}

TEST_F(RunningServer, SemanticErrorKeepsSessionOpen) {
    start();
    FrameClient c("127.0.0.1", port);
    c.send(hello("tcp-bad", 4));
    const auto welcome = c.receive();
    ASSERT_TRUE(holds<Welcome>(welcome));
    c.send(WireMessage{welcome.session_id, 0, std::nullopt, EditRequest{NodeEdit{999999, 0.1}}});
    WireMessage m;
    do m = c.receive();
    while (!holds<ErrorBody>(m));
    EXPECT_EQ(std::get<ErrorBody>(m.body).code, "unknown_node");
    c.send(WireMessage{welcome.session_id, 0, std::nullopt, Sync{}});
    do m = c.receive();
    while (!holds<SyncAck>(m));
}

TEST_F(RunningServer, GarbageLineGetsDecodeError) {
    start();
    asio::io_context ioc;
    tcp::socket s(ioc);
    asio::connect(s, tcp::resolver(ioc).resolve("127.0.0.1", std::to_string(port)));
    asio::write(s, asio::buffer(encode_message(hello("raw", 9)) + "{\"type\":\n"));
    std::string buf;
    std::vector<WireMessage> got;
    boost::system::error_code ec;
    while (!ec) {
        const auto n = asio::read_until(s, asio::dynamic_buffer(buf), '\n', ec);
        if (ec) break;
        got.push_back(decode_message(buf.substr(0, n)));
        buf.erase(0, n);
    }
    ASSERT_EQ(got.size(), 2u);
    EXPECT_TRUE(holds<Welcome>(got[0]));
    ASSERT_TRUE(holds<ErrorBody>(got[1]));
    EXPECT_EQ(std::get<ErrorBody>(got[1].body).code, "decode_error");
    EXPECT_EQ(got[1].session_id, got[0].session_id);
}

TEST_F(RunningServer, OversizeFrameIsRejected) {
    start();
    asio::io_context ioc;
    tcp::socket s(ioc);
    asio::connect(s, tcp::resolver(ioc).resolve("127.0.0.1", std::to_string(port)));
    asio::write(s, asio::buffer(std::string(70000, ' ') + "x"));
    std::string buf;
    boost::system::error_code ec;
    const auto n = asio::read_until(s, asio::dynamic_buffer(buf), '\n', ec);
    ASSERT_FALSE(ec) << ec.message();
    const auto m = decode_message(buf.substr(0, n));
    ASSERT_TRUE(holds<ErrorBody>(m));
    EXPECT_EQ(std::get<ErrorBody>(m.body).code, "frame_too_large");
}

TEST_F(RunningServer, SameSessionCannotConnectTwice) {
    start();
    FrameClient first("127.0.0.1", port);
    first.send(hello("dup", 77));
    ASSERT_TRUE(holds<Welcome>(first.receive()));

    FrameClient second("127.0.0.1", port);
    second.send(hello("dup", 77));
    const auto err = second.receive();
    ASSERT_TRUE(holds<ErrorBody>(err));
    EXPECT_EQ(std::get<ErrorBody>(err.body).code, "session_active");

    FrameClient other("127.0.0.1", port);
    other.send(hello("dup", 78));
    EXPECT_TRUE(holds<Welcome>(other.receive()));
}

TEST_F(RunningServer, SteadyClockSessionLogReplays) {
    start();
    AgentRunSpec spec;
    spec.policy = AgentPolicy::GreedyFeedback;
    spec.edit_budget = 5;
    spec.seed = 12;
    spec.participant_id = "live";
    const auto r = run_agent_session(spec, Endpoint{"127.0.0.1", port}, server->config());
    server->stop();
    const auto log = read_log(logs / (r.session_id + ".jsonl"));
    ASSERT_GT(log.size(), 10u);
    EXPECT_EQ(log.front().kind, EventKind::SessionStart);
    const auto rep = replay_session(log, server->config());
    EXPECT_TRUE(rep.identical) << rep.detail;
}
