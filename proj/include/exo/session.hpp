#pragma once

// Per-session state machine. Pure with respect to I/O: every call takes the
// current time and returns the frames to send, the events to log and the
// deferred evaluations to run. The server (or a test) decides when a deferred
// evaluation completes and hands the result back via complete_evaluation.

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "exo/config.hpp"
#include "exo/evaluation.hpp"
#include "exo/protocol.hpp"
#include "exo/session_log.hpp"

namespace exo {

struct SessionState {
    std::string session_id;
    std::string participant_id;
    std::uint64_t seed = 0;
    Phase phase = Phase::Tutorial;
    std::array<Condition, 2> condition_order{Condition::IDM, Condition::nIDM};
    DesignConfiguration current_config;
    // Metrics of the last Final delivered; every label is judged against it.
    std::optional<MetricVector> last_accepted_metrics;
    std::int64_t revision = 0;
    ReferenceValues refs;
    std::int64_t last_ts = 0;
};

struct EvaluationJob {
    std::string session_id;
    std::int64_t revision = 0;
    DesignConfiguration config;
};

struct Step {
    std::vector<WireMessage> outbound;
    std::vector<SessionEvent> events;
    std::vector<EvaluationJob> jobs;
};

inline std::optional<Condition> current_condition(const SessionState& s) {
    if (s.phase == Phase::Task1) return s.condition_order[0];
    if (s.phase == Phase::Task2) return s.condition_order[1];
    return std::nullopt;
}

/// Feedback is shown in the tutorial and in IDM tasks.
inline bool feedback_visible(const SessionState& s) {
    return s.phase == Phase::Tutorial || current_condition(s) == Condition::IDM;
}

/// Fair coin from the top bit of the first mt19937_64 draw.
inline std::array<Condition, 2> condition_order_for(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    return (rng() >> 63) ? std::array{Condition::nIDM, Condition::IDM} : std::array{Condition::IDM, Condition::nIDM};
}

inline std::string session_id_for(const std::string& participant_id, std::uint64_t seed) {
    std::string clean;
    for (unsigned char c : participant_id)
        if (std::isalnum(c) || c == '_' || c == '-') clean.push_back(static_cast<char>(c));
    if (clean.empty()) clean = "p";
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : participant_id) h = (h ^ c) * 1099511628211ULL;
    for (int i = 0; i < 8; ++i) h = (h ^ ((seed >> (8 * i)) & 0xffU)) * 1099511628211ULL;
    char buf[9];
    std::snprintf(buf, sizeof buf, "%08llx", static_cast<unsigned long long>(h >> 32));
    return clean + "-" + buf;
}

/// Messages that must wait until every queued evaluation has been delivered.
inline bool is_barrier(const WireMessage& m) {
    return holds<Sync>(m) || holds<FinalSelection>(m) || holds<PhaseAdvance>(m);
}

namespace session_detail {

using nlohmann::json;

inline json metrics_json(const MetricVector& v) { return json(v.values); }

inline WireMessage frame(const SessionState& s, MessageBody body, std::int64_t revision) {
    return WireMessage{s.session_id, revision, std::nullopt, std::move(body)};
}

inline WireMessage error_frame(const SessionState& s, std::string code, std::string message) {
    return frame(s, ErrorBody{std::move(code), std::move(message)}, s.revision);
}

inline std::int64_t stamp(SessionState& s, std::int64_t now_ms) {
    s.last_ts = std::max(s.last_ts, now_ms);
    return s.last_ts;
}

inline void emit(Step& step, SessionState& s, std::int64_t now_ms, EventKind kind, json payload) {
    step.events.push_back(SessionEvent{stamp(s, now_ms), kind, std::move(payload)});
}

inline std::vector<std::string> changed_fields(const DesignConfiguration& before, const DesignConfiguration& after) {
    std::vector<std::string> f;
    if (before.grid.bays_x != after.grid.bays_x) f.emplace_back("grid.bays_x");
    if (before.grid.bays_z != after.grid.bays_z) f.emplace_back("grid.bays_z");
    if (before.grid.module_size != after.grid.module_size) f.emplace_back("grid.module_size");
    if (before.section.depth != after.section.depth) f.emplace_back("section.depth");
    if (before.section.width != after.section.width) f.emplace_back("section.width");
    if (before.section.laminations != after.section.laminations) f.emplace_back("section.laminations");
    for (const auto& [id, dy] : before.node_offsets)
        if (after.offset_of(id) != dy) f.push_back("offset." + std::to_string(id));
    return f;
}

inline void record_final(Step& step, SessionState& s, std::int64_t now_ms, std::int64_t revision,
                         const FullEvaluation& full, bool send_feedback, double epsilon) {
    emit(step, s, now_ms, EventKind::EvalFinal,
         {{"revision", revision}, {"metrics", metrics_json(full.metrics)}, {"shading", full.shading}});
    if (send_feedback && s.last_accepted_metrics) {
        const EncapsulatedFeedback fb = encapsulate(*s.last_accepted_metrics, full.metrics, epsilon);
        step.outbound.push_back(frame(s, Feedback{fb.enc1, fb.enc2, fb.enc3, Stage::Final}, revision));
        emit(step, s, now_ms, EventKind::FeedbackShown,
             {{"revision", revision},
              {"stage", to_string(Stage::Final)},
              {"enc1", to_string(fb.enc1)},
              {"enc2", to_string(fb.enc2)},
              {"enc3", to_string(fb.enc3)}});
    }
    s.last_accepted_metrics = full.metrics;
}

inline void enter_phase(Step& step, SessionState& s, Phase next, const ServerConfig& cfg, std::int64_t now_ms) {
    s.phase = next;
    const auto cond = current_condition(s);
    const bool task = next == Phase::Task1 || next == Phase::Task2;
    if (task) {
        s.current_config = initial_configuration(cfg.model.grid, cfg.model.initial_section);
        ++s.revision;
    }
    emit(step, s, now_ms, EventKind::PhaseChange,
         {{"phase", to_string(next)},
          {"condition", cond ? json(to_string(*cond)) : json(nullptr)},
          {"revision", s.revision},
          {"config_hash", config_hash(s.current_config)}});
    step.outbound.push_back(frame(s, PhaseAdvance{next, cond}, s.revision));
    if (task) {
        // Each task starts from a fresh baseline evaluated on the spot.
        record_final(step, s, now_ms, s.revision, evaluate_full(s.current_config, cfg.model, s.refs), false,
                     cfg.model.epsilon);
    }
}

inline std::optional<Phase> next_phase(Phase p) {
    switch (p) {
        case Phase::Tutorial: return Phase::Task1;
        case Phase::Task1: return Phase::Task2;
        case Phase::Task2: return Phase::Survey;
        default: return std::nullopt;
    }
}

inline bool editable(Phase p) { return p == Phase::Tutorial || p == Phase::Task1 || p == Phase::Task2; }

inline Step handle_edit(SessionState& s, const EditRequest& req, const ServerConfig& cfg, std::int64_t now_ms) {
    Step step;
    if (!editable(s.phase)) {
        step.outbound.push_back(error_frame(s, "bad_phase", "edits are not accepted in this phase"));
        return step;
    }
    const DesignBounds& b = cfg.model.bounds;
    DesignConfiguration requested;
    json edit_payload;
    if (const auto* n = std::get_if<NodeEdit>(&req.edit)) {
        const Offset delta = Offset::from_metres(n->delta);
        try {
            requested = apply_node_edit(s.current_config, n->node_id, delta);
        } catch (const UnknownNode& e) {
            step.outbound.push_back(error_frame(s, "unknown_node", e.what()));
            return step;
        } catch (const SupportNodeImmutable& e) {
            step.outbound.push_back(error_frame(s, "support_node", e.what()));
            return step;
        }
        edit_payload = {{"node_id", n->node_id}, {"delta", n->delta}, {"delta_um", delta.micrometres()}};
    } else {
        const auto& sec = std::get<SectionEdit>(req.edit);
        requested = s.current_config;
        requested.section.depth = sec.depth;
        requested.section.width = sec.width;
        requested.section.laminations = nearest_count(sec.laminations, 0, 1000);
        edit_payload = {{"section", {{"depth", sec.depth}, {"width", sec.width}, {"laminations", sec.laminations}}}};
    }

    const SnapResult snap = snap_to_valid(requested, b);
    std::vector<std::string> fields = changed_fields(requested, snap.config);
    if (const auto* sec = std::get_if<SectionEdit>(&req.edit);
        sec && static_cast<double>(requested.section.laminations) != sec->laminations &&
        std::find(fields.begin(), fields.end(), "section.laminations") == fields.end())
        fields.emplace_back("section.laminations");

    s.current_config = snap.config;
    ++s.revision;
    const std::string hash = config_hash(s.current_config);
    edit_payload["revision"] = s.revision;
    edit_payload["config_hash"] = hash;
    emit(step, s, now_ms, EventKind::Edit, edit_payload);

    if (!fields.empty()) {
        emit(step, s, now_ms, EventKind::Snap, {{"revision", s.revision}, {"fields", fields}, {"config_hash", hash}});
        step.outbound.push_back(frame(s, SnapNotice{fields, s.current_config}, s.revision));
    }

    const FastEvaluation fast = evaluate_fast(s.current_config, cfg.model, s.refs);
    emit(step, s, now_ms, EventKind::EvalFast,
         {{"revision", s.revision}, {"c3", fast.c3_mass}, {"c7", fast.c7_complexity}, {"shading", fast.shading}});
    if (feedback_visible(s) && s.last_accepted_metrics) {
        const MetricVector& base = *s.last_accepted_metrics;
        const EncapsulatedFeedback fb =
            encapsulate(base, merge_fast(base, fast), fast_metric_mask(), cfg.model.epsilon);
        step.outbound.push_back(frame(s, Feedback{fb.enc1, fb.enc2, fb.enc3, Stage::Fast}, s.revision));
        emit(step, s, now_ms, EventKind::FeedbackShown,
             {{"revision", s.revision},
              {"stage", to_string(Stage::Fast)},
              {"enc1", to_string(fb.enc1)},
              {"enc2", to_string(fb.enc2)},
              {"enc3", to_string(fb.enc3)}});
    }
    step.jobs.push_back(EvaluationJob{s.session_id, s.revision, s.current_config});
    return step;
}

inline Overlay compute_overlay(const DesignConfiguration& config, OverlayMode mode, const EvaluationModel& model) {
    Overlay o{mode, {}};
    if (mode == OverlayMode::Mesh) {
        const FacadeGraph g = generate_facade(config);
        const auto loads = default_load_cases(config, g, model.material, model.structural);
        const auto field = solve_displacements(g, config.section, model.material, loads.back(), model.structural);
        o.values = member_axial_forces(g, config.section, model.material, field, model.structural);
    } else {
        const AnnualDemand d =
            annual_demand(model.building, model.climate, shading_fraction(config), model.energy);
        for (const auto& m : d.monthly) o.values.push_back(m.heating);
        for (const auto& m : d.monthly) o.values.push_back(m.cooling);
        for (const auto& m : d.monthly) o.values.push_back(m.solar);
    }
    return o;
}

}  // namespace session_detail

/// Creates a session. The returned step holds the Welcome frame, the
/// SessionStart event (always first, at t = 0) and the tutorial baseline.
inline std::pair<SessionState, Step> start_session(const std::string& participant_id, std::uint64_t seed,
                                                   const ServerConfig& cfg, const ReferenceValues& refs) {
    using namespace session_detail;
    SessionState s;
    s.participant_id = participant_id;
    s.seed = seed;
    s.session_id = session_id_for(participant_id, seed);
    s.condition_order = condition_order_for(seed);
    s.current_config = initial_configuration(cfg.model.grid, cfg.model.initial_section);
    s.refs = refs;

    Step step;
    emit(step, s, 0, EventKind::SessionStart,
         {{"version", kProtocolVersion},
          {"participant_id", participant_id},
          {"session_id", s.session_id},
          {"seed", seed},
          {"condition_order", {to_string(s.condition_order[0]), to_string(s.condition_order[1])}},
          {"config_hash", config_hash(s.current_config)},
          {"m_ref", refs.m_ref},
          {"t_ref", refs.t_ref},
          {"epsilon", cfg.model.epsilon}});
    step.outbound.push_back(frame(
        s, Welcome{std::string(kProtocolVersion), participant_id, s.phase, cfg.edit_step, cfg.model.bounds, s.current_config},
        s.revision));
    record_final(step, s, 0, s.revision, evaluate_full(s.current_config, cfg.model, refs), false, cfg.model.epsilon);
    return {std::move(s), std::move(step)};
}

inline std::pair<SessionState, Step> start_session(const std::string& participant_id, std::uint64_t seed,
                                                   const ServerConfig& cfg) {
    return start_session(participant_id, seed, cfg, cfg.model.reference_values());
}

/// Applies one decoded client frame. Protocol violations come back as Error
/// frames; the session stays usable.
inline Step handle_client_message(SessionState& s, const WireMessage& msg, const ServerConfig& cfg,
                                  std::int64_t now_ms) {
    using namespace session_detail;
    Step step;
    if (msg.session_id != s.session_id) {
        step.outbound.push_back(error_frame(s, "session_mismatch", "frame addressed to another session"));
        return step;
    }
    if (const auto* e = std::get_if<EditRequest>(&msg.body)) return handle_edit(s, *e, cfg, now_ms);

    if (const auto* p = std::get_if<PhaseAdvance>(&msg.body)) {
        const auto next = next_phase(s.phase);
        if (!next || p->phase || p->condition) {
            step.outbound.push_back(error_frame(s, "bad_phase", "cannot advance from " + std::string(to_string(s.phase))));
            return step;
        }
        enter_phase(step, s, *next, cfg, now_ms);
        return step;
    }
    if (const auto* c = std::get_if<CameraPose>(&msg.body)) {
        if (s.phase == Phase::Done) {
            step.outbound.push_back(error_frame(s, "bad_phase", "session is finished"));
            return step;
        }
        emit(step, s, now_ms, EventKind::CameraPose,
             {{"position", wire::vec_json(c->position)},
              {"direction", wire::vec_json(c->direction)},
              {"phase", to_string(s.phase)}});
        return step;
    }
    if (holds<FinalSelection>(msg)) {
        const auto cond = current_condition(s);
        if (!cond) {
            step.outbound.push_back(error_frame(s, "bad_phase", "final selection is only valid in a task"));
            return step;
        }
        emit(step, s, now_ms, EventKind::FinalSelection,
             {{"revision", s.revision},
              {"phase", to_string(s.phase)},
              {"condition", to_string(*cond)},
              {"config_hash", config_hash(s.current_config)}});
        return step;
    }
    if (const auto* r = std::get_if<SurveyResponse>(&msg.body)) {
        if (s.phase != Phase::Survey) {
            step.outbound.push_back(error_frame(s, "bad_phase", "survey is not open"));
            return step;
        }
        emit(step, s, now_ms, EventKind::SurveyResponse, {{"items", r->items}});
        enter_phase(step, s, Phase::Done, cfg, now_ms);
        return step;
    }
    if (const auto* o = std::get_if<OverlayRequest>(&msg.body)) {
        if (!feedback_visible(s)) {
            step.outbound.push_back(error_frame(s, "overlay_unavailable", "overlays are hidden in this condition"));
            return step;
        }
        step.outbound.push_back(frame(s, compute_overlay(s.current_config, o->mode, cfg.model), s.revision));
        return step;
    }
    if (holds<Sync>(msg)) {
        step.outbound.push_back(frame(s, SyncAck{}, s.revision));
        return step;
    }
    if (holds<Hello>(msg)) {
        step.outbound.push_back(error_frame(s, "duplicate_hello", "session already started"));
        return step;
    }
    step.outbound.push_back(
        error_frame(s, "unexpected_type", std::string(type_name(msg)) + " is a server-to-client message"));
    return step;
}

inline FullEvaluation run_evaluation(const EvaluationJob& job, const ServerConfig& cfg, const ReferenceValues& refs) {
    return evaluate_full(job.config, cfg.model, refs);
}

/// Delivers a deferred result. Results for a superseded revision are dropped
/// without a trace.
inline Step complete_evaluation(SessionState& s, const EvaluationJob& job, const FullEvaluation& result,
                                const ServerConfig& cfg, std::int64_t now_ms) {
    Step step;
    if (job.revision != s.revision) return step;
    session_detail::record_final(step, s, now_ms, job.revision, result, feedback_visible(s), cfg.model.epsilon);
    return step;
}

}  // namespace exo
