#pragma once

// Re-runs a logged session: rebuilds the client frames from the log, feeds
// them through a fresh session with the same seed, and compares every event
// the session emits against what was logged.

#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "exo/config.hpp"
#include "exo/session.hpp"
#include "exo/session_log.hpp"

namespace exo {

struct ReplayReport {
    bool identical = false;
    std::size_t logged_events = 0;
    std::size_t replayed_events = 0;
    std::string detail;  // first difference, empty when identical
};

namespace replay_detail {

inline Vec3 vec(const nlohmann::json& a) { return {a.at(0).get<double>(), a.at(1).get<double>(), a.at(2).get<double>()}; }

// The client frame that produced a logged event, or nullopt for events the
// server emits on its own.
inline std::optional<MessageBody> client_body(const SessionEvent& e) {
    const auto& p = e.payload;
    switch (e.kind) {
        case EventKind::Edit:
            if (p.contains("node_id"))
                return EditRequest{NodeEdit{p.at("node_id").get<NodeId>(), p.at("delta").get<double>()}};
            return EditRequest{SectionEdit{p.at("section").at("depth").get<double>(),
                                           p.at("section").at("width").get<double>(),
                                           p.at("section").at("laminations").get<double>()}};
        case EventKind::PhaseChange:
            if (p.at("phase").get<std::string>() == to_string(Phase::Done)) return std::nullopt;
            return PhaseAdvance{};
        case EventKind::CameraPose:
            return CameraPose{vec(p.at("position")), vec(p.at("direction"))};
        case EventKind::FinalSelection:
            return FinalSelection{};
        case EventKind::SurveyResponse: {
            SurveyResponse s;
            for (std::size_t i = 0; i < 10; ++i) s.items[i] = p.at("items").at(i).get<int>();
            return s;
        }
        default:
            return std::nullopt;
    }
}

}  // namespace replay_detail

inline ReplayReport replay_session(const std::vector<SessionEvent>& logged, const ServerConfig& cfg) {
    ReplayReport rep;
    rep.logged_events = logged.size();
    if (logged.empty() || logged.front().kind != EventKind::SessionStart) {
        rep.detail = "log does not start with SessionStart";
        return rep;
    }
    std::vector<SessionEvent> produced;
    std::map<std::int64_t, EvaluationJob> pending;
    try {
        const auto& start = logged.front().payload;
        auto [state, first] = start_session(start.at("participant_id").get<std::string>(),
                                            start.at("seed").get<std::uint64_t>(), cfg);
        auto absorb = [&](Step step) {
            produced.insert(produced.end(), step.events.begin(), step.events.end());
            for (auto& j : step.jobs) pending[j.revision] = std::move(j);
        };
        absorb(std::move(first));
        for (std::size_t i = 1; i < logged.size(); ++i) {
            const SessionEvent& e = logged[i];
            if (e.kind == EventKind::EvalFinal) {
                const auto rev = e.payload.at("revision").get<std::int64_t>();
                auto it = pending.find(rev);
                if (it == pending.end()) continue;  // produced synchronously on a phase change
                const FullEvaluation r = run_evaluation(it->second, cfg, state.refs);
                absorb(complete_evaluation(state, it->second, r, cfg, e.ts_ms));
                pending.erase(it);
                continue;
            }
            auto body = replay_detail::client_body(e);
            if (!body) continue;
            absorb(handle_client_message(state, WireMessage{state.session_id, state.revision, std::nullopt, *body}, cfg,
                                         e.ts_ms));
        }
    } catch (const std::exception& ex) {
        rep.detail = std::string("replay failed: ") + ex.what();
        return rep;
    }
    rep.replayed_events = produced.size();
    const std::size_t n = std::min(produced.size(), logged.size());
    for (std::size_t i = 0; i < n; ++i) {
        if (produced[i] == logged[i]) continue;
        std::ostringstream os;
        os << "event " << i << " differs:\n  logged:   " << format_event(logged[i]) << "\n  replayed: "
           << format_event(produced[i]);
        rep.detail = os.str();
        return rep;
    }
    if (produced.size() != logged.size()) {
        rep.detail = "event count differs: logged " + std::to_string(logged.size()) + ", replayed " +
                     std::to_string(produced.size());
        return rep;
    }
    rep.identical = true;
    return rep;
}

}  // namespace exo
