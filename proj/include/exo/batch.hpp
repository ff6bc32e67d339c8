#pragma once

// Runs cohorts of agents, either against a live server or against one
// started in-process on a virtual clock (the reproducible mode).

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "exo/agent.hpp"
#include "exo/server.hpp"

namespace exo {

/// "1..24", "3,5,9" or a mix such as "1..4,10".
inline std::vector<std::uint64_t> parse_seed_list(const std::string& s) {
    std::vector<std::uint64_t> out;
    std::size_t pos = 0;
    while (pos <= s.size()) {
        const auto comma = s.find(',', pos);
        const std::string part = s.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
        if (part.empty()) throw std::invalid_argument("empty entry in seed list");
        const auto dots = part.find("..");
        if (dots == std::string::npos) {
            out.push_back(std::stoull(part));
        } else {
            const auto lo = std::stoull(part.substr(0, dots)), hi = std::stoull(part.substr(dots + 2));
            if (hi < lo) throw std::invalid_argument("seed range " + part + " is reversed");
            for (auto v = lo; v <= hi; ++v) out.push_back(v);
        }
        if (comma == std::string::npos) break;
        pos = comma + 1;
    }
    return out;
}

struct BatchSpec {
    AgentRunSpec base;  // seed and participant_id are filled per run
    std::vector<std::uint64_t> seeds;
};

/// With no endpoint, starts a virtual-clock server writing logs to
/// cfg.log_dir, runs every seed in order, then stops it.
inline std::vector<AgentRunResult> run_batch(const BatchSpec& batch, const ServerConfig& cfg,
                                             const std::optional<Endpoint>& endpoint = std::nullopt) {
    std::vector<AgentRunResult> results;
    auto run_all = [&](const Endpoint& ep) {
        for (auto seed : batch.seeds) {
            AgentRunSpec spec = batch.base;
            spec.seed = seed;
            spec.participant_id.clear();
            results.push_back(run_agent_session(spec, ep, cfg));
        }
    };
    if (endpoint) {
        run_all(*endpoint);
        return results;
    }
    ServerOptions opt;
    opt.clock = ClockMode::Virtual;
    opt.quiet = true;
    Server server(cfg, opt);
    const unsigned short port = server.listen(0);
    server.run_in_background();
    try {
        run_all(Endpoint{"127.0.0.1", port});
    } catch (...) {
        server.stop();
        throw;
    }
    server.stop();
    return results;
}

}  // namespace exo
