// exo: session server, replay checker, agent runner and analytics front end.

#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>

#include <CLI11.hpp>

#include "exo/analytics.hpp"
#include "exo/batch.hpp"
#include "exo/config.hpp"
#include "exo/replay.hpp"
#include "exo/server.hpp"

namespace {

exo::ServerConfig load_or_default(const std::string& path) {
    return path.empty() ? exo::parse_config(nlohmann::json::object()) : exo::load_config(path);
}

exo::Condition condition_arg(const std::string& s) {
    const auto c = exo::parse_condition(s);
    if (!c) throw CLI::ValidationError("--condition", "expected IDM or nIDM");
    return *c;
}

exo::AgentPolicy policy_arg(const std::string& s) {
    const auto p = exo::parse_policy(s);
    if (!p) throw CLI::ValidationError("--policy", "expected random, greedy or hillclimb");
    return *p;
}

void print_run(const exo::AgentRunResult& r) {
    std::printf("%s session=%s order=%s,%s edits=%d reverts=%d\n", r.participant_id.c_str(), r.session_id.c_str(),
                std::string(exo::to_string(r.condition_order[0])).c_str(),
                std::string(exo::to_string(r.condition_order[1])).c_str(), r.edits_sent, r.reverts);
}

exo::Server* g_server = nullptr;

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Exoskeleton facade decision-support toolkit"};
    app.require_subcommand(1);

    // serve
    auto* serve = app.add_subcommand("serve", "Host sessions over raw TCP and WebSocket");
    std::string config_path, log_dir, clock = "steady", ui_root, bind = "127.0.0.1";
    int port = -1;
    unsigned eval_threads = 1;
    serve->add_option("--config", config_path, "Server config (JSON)")->check(CLI::ExistingFile);
    serve->add_option("--port", port, "TCP port (overrides config)")->check(CLI::Range(0, 65535));
    serve->add_option("--log-dir", log_dir, "Directory for session logs (overrides config)");
    serve->add_option("--clock", clock, "steady, or virtual (time advances by client think_ms)")
        ->check(CLI::IsMember({"steady", "virtual"}));
    serve->add_option("--serve-ui", ui_root, "Serve static UI files from this directory")->check(CLI::ExistingDirectory);
    serve->add_option("--bind", bind, "Bind address");
    serve->add_option("--eval-threads", eval_threads, "Threads for deferred evaluation")->check(CLI::Range(1u, 64u));
    std::string trace_path;
    serve->add_option("--trace-frames", trace_path, "Append every frame to this file, prefixed 'in ' or 'out '");

    // replay
    auto* replay = app.add_subcommand("replay", "Re-run a session log and check it reproduces");
    std::string replay_log, replay_config;
    replay->add_option("--log", replay_log, "Session log (.jsonl)")->required()->check(CLI::ExistingFile);
    replay->add_option("--config", replay_config, "Config the session ran with")->check(CLI::ExistingFile);

    // agent
    auto* agent = app.add_subcommand("agent", "Simulated participants");
    agent->require_subcommand(1);
    std::string policy = "random", condition = "IDM", delay = "exp:5000", agent_config, endpoint, agent_log_dir = "logs";
    std::uint64_t seed = 1;
    int edits = 150;
    bool sleep = false;
    auto* run = agent->add_subcommand("run", "Play one session");
    auto* batch = agent->add_subcommand("batch", "Play a cohort of sessions");
    for (auto* sub : {run, batch}) {
        sub->add_option("--policy", policy, "random, greedy or hillclimb");
        sub->add_option("--condition", condition, "Task condition the run is scored on (IDM or nIDM)");
        sub->add_option("--edits", edits, "Edit budget per task phase")->check(CLI::PositiveNumber);
        sub->add_option("--delay", delay, "Think time: none, constant:<ms> or exp:<mean ms>");
        sub->add_option("--config", agent_config, "Config shared with the server")->check(CLI::ExistingFile);
        sub->add_flag("--sleep", sleep, "Really wait out think time");
    }
    run->add_option("--seed", seed, "Agent and session seed");
    run->add_option("--endpoint", endpoint, "host:port of a running server")->required();
    std::string seeds = "1..24";
    int batch_n = 0;
    batch->add_option("--seeds", seeds, "Seed list, e.g. 1..24 or 1,2,5");
    batch->add_option("--n", batch_n, "Number of sessions (checked against the seed list)");
    batch->add_option("--endpoint", endpoint, "host:port of a running server; omit to run one in-process");
    batch->add_option("--log-dir", agent_log_dir, "Log directory for the in-process server");

    // analyze
    auto* analyze = app.add_subcommand("analyze", "Statistics and CSV tables from session logs");
    std::string logs_dir, sus_path, out_dir;
    bool exact_p = false;
    analyze->add_option("--logs", logs_dir, "Directory of .jsonl session logs")->required()->check(CLI::ExistingDirectory);
    analyze->add_option("--sus", sus_path, "SUS CSV (participant_id,q1..q10)")->check(CLI::ExistingFile);
    analyze->add_option("--out", out_dir, "Output directory")->required();
    analyze->add_flag("--exact-p", exact_p, "Exact permutation p-values for small samples");

    CLI11_PARSE(app, argc, argv);

    try {
        if (serve->parsed()) {
            exo::ServerConfig cfg = load_or_default(config_path);
            if (port >= 0) cfg.port = port;
            if (!log_dir.empty()) cfg.log_dir = log_dir;
            exo::ServerOptions opt;
            opt.clock = clock == "virtual" ? exo::ClockMode::Virtual : exo::ClockMode::Steady;
            if (!ui_root.empty()) opt.ui_root = ui_root;
            opt.bind_address = bind;
            opt.eval_threads = eval_threads;
            std::ofstream trace;
            std::mutex trace_mu;
            if (!trace_path.empty()) {
                trace.open(trace_path, std::ios::app);
                if (!trace) throw std::runtime_error("cannot open " + trace_path);
                opt.frame_tap = [&](bool inbound, std::string_view frame) {
                    while (!frame.empty() && (frame.back() == '\n' || frame.back() == '\r')) frame.remove_suffix(1);
                    std::lock_guard lock(trace_mu);
                    trace << (inbound ? "in " : "out ") << frame << '\n' << std::flush;
                };
            }
            exo::Server server(cfg, opt);
            const auto bound = server.listen(static_cast<unsigned short>(cfg.port));
            std::printf("listening on %s:%u (logs in %s)\n", bind.c_str(), bound, cfg.log_dir.c_str());
            std::fflush(stdout);
            g_server = &server;
            std::signal(SIGINT, [](int) {
                if (g_server) g_server->stop();
            });
            server.run();
            return 0;
        }

        if (replay->parsed()) {
            const exo::ServerConfig cfg = load_or_default(replay_config);
            const auto events = exo::read_log(replay_log);
            const auto rep = exo::replay_session(events, cfg);
            if (rep.identical) {
                std::printf("replay identical: %zu events\n", rep.logged_events);
                return 0;
            }
            std::printf("replay differs: %s\n", rep.detail.c_str());
            return 1;
        }

        if (agent->parsed()) {
            const exo::ServerConfig cfg = load_or_default(agent_config);
            exo::AgentRunSpec spec;
            spec.policy = policy_arg(policy);
            spec.condition = condition_arg(condition);
            spec.edit_budget = edits;
            spec.delay = exo::DelayModel::parse(delay);
            spec.sleep = sleep;
            if (run->parsed()) {
                spec.seed = seed;
                print_run(exo::run_agent_session(spec, exo::Endpoint::parse(endpoint), cfg));
                return 0;
            }
            exo::BatchSpec b{spec, exo::parse_seed_list(seeds)};
            if (batch_n > 0 && static_cast<std::size_t>(batch_n) != b.seeds.size()) {
                std::fprintf(stderr, "--n %d does not match %zu seeds\n", batch_n, b.seeds.size());
                return 2;
            }
            exo::ServerConfig server_cfg = cfg;
            server_cfg.log_dir = agent_log_dir;
            std::optional<exo::Endpoint> ep;
            if (!endpoint.empty()) ep = exo::Endpoint::parse(endpoint);
            for (const auto& r : exo::run_batch(b, server_cfg, ep)) print_run(r);
            return 0;
        }

        if (analyze->parsed()) {
            const auto sessions = exo::load_sessions(logs_dir);
            std::vector<exo::SusRow> sus;
            if (!sus_path.empty()) sus = exo::read_sus_csv(sus_path);
            exo::AnalysisOptions opt;
            opt.exact_p = exact_p;
            exo::run_analysis(sessions, sus, out_dir, opt);
            std::printf("analyzed %zu sessions into %s\n", sessions.size(), out_dir.c_str());
            return 0;
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
