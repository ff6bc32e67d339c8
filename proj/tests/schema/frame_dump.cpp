// Writes a frame corpus for schema validation: the boundary samples, followed
// by everything exchanged while simulated participants play whole sessions.
// Each line is "in <frame>" (client to server) or "out <frame>".

#include <cstdio>
#include <fstream>
#include <mutex>

#include "exo/agent.hpp"
#include "exo/server.hpp"
#include "support/samples.hpp"

int main(int argc, char** argv) {
    if (argc != 3) {
        std::fprintf(stderr, "usage: %s <out-file> <log-dir>\n", argv[0]);
        return 2;
    }
    std::ofstream out(argv[1], std::ios::trunc);
    if (!out) return 1;
    for (const auto& m : samples::boundary_messages()) {
        std::string f = exo::encode_message(m);
        f.pop_back();
        out << (exo::holds<exo::Hello>(m) ? "in " : "out ") << f << '\n';
    }

    exo::ServerConfig cfg = exo::parse_config(nlohmann::json::object());
    cfg.log_dir = argv[2];
    std::mutex mu;
    exo::ServerOptions opt;
    opt.clock = exo::ClockMode::Virtual;
    opt.quiet = true;
    opt.frame_tap = [&](bool inbound, std::string_view frame) {
        while (!frame.empty() && frame.back() == '\n') frame.remove_suffix(1);
        std::lock_guard lock(mu);
        out << (inbound ? "in " : "out ") << frame << '\n';
    };
    exo::Server server(cfg, opt);
    const auto port = server.listen(0);
    server.run_in_background();
    int sessions = 0;
    for (auto policy : {exo::AgentPolicy::Random, exo::AgentPolicy::GreedyFeedback, exo::AgentPolicy::HillClimb})
        for (std::uint64_t seed : {1, 2}) {
            exo::AgentRunSpec spec;
            spec.policy = policy;
            spec.seed = seed;
            spec.edit_budget = 20;
            spec.delay = exo::DelayModel::parse("exp:3000");
            exo::run_agent_session(spec, exo::Endpoint{"127.0.0.1", port}, cfg);
            ++sessions;
        }
    server.stop();
    std::printf("%d sessions traced into %s\n", sessions, argv[1]);
    return 0;
}
