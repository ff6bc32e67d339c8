#include <algorithm>

#include <gtest/gtest.h>

#include "exo/config.hpp"
#include "exo/session.hpp"

using namespace exo;

namespace {

const ServerConfig& cfg() {
    static const ServerConfig c = parse_config(nlohmann::json::object());
    return c;
}

const ReferenceValues& refs() {
    static const ReferenceValues r = cfg().model.reference_values();
    return r;
}

WireMessage msg(const SessionState& s, MessageBody b) { return WireMessage{s.session_id, s.revision, std::nullopt, std::move(b)}; }

EditRequest node_edit(NodeId id, double d) { return EditRequest{NodeEdit{id, d}}; }

std::uint64_t seed_with_first(Condition c) {
    for (std::uint64_t seed = 0;; ++seed)
        if (condition_order_for(seed)[0] == c) return seed;
}

// A session advanced into its first task.
SessionState in_task1(Condition c) {
    auto [s, first] = start_session("tester", seed_with_first(c), cfg(), refs());
    handle_client_message(s, msg(s, PhaseAdvance{}), cfg(), 10);
    EXPECT_EQ(s.phase, Phase::Task1);
    EXPECT_EQ(current_condition(s), c);
    return s;
}

template <typename T>
std::size_t count(const std::vector<WireMessage>& out) {
    return static_cast<std::size_t>(std::count_if(out.begin(), out.end(), [](const auto& m) { return holds<T>(m); }));
}

std::size_t count(const std::vector<SessionEvent>& ev, EventKind k) {
    return static_cast<std::size_t>(std::count_if(ev.begin(), ev.end(), [k](const auto& e) { return e.kind == k; }));
}

std::string error_code(const Step& step) {
    if (step.outbound.size() != 1 || !holds<ErrorBody>(step.outbound[0])) return "";
    return std::get<ErrorBody>(step.outbound[0].body).code;
}

}  // namespace

TEST(Session, StartsWithSessionStartAtZero) {
    for (std::uint64_t seed : {0ULL, 1ULL, 77ULL, 1ULL << 40}) {
        auto [s, step] = start_session("p-" + std::to_string(seed), seed, cfg(), refs());
        ASSERT_FALSE(step.events.empty());
        EXPECT_EQ(step.events[0].kind, EventKind::SessionStart);
        EXPECT_EQ(step.events[0].ts_ms, 0);
        EXPECT_EQ(count(step.events, EventKind::EvalFinal), 1u);
        ASSERT_EQ(step.outbound.size(), 1u);
        EXPECT_TRUE(holds<Welcome>(step.outbound[0]));
        EXPECT_TRUE(s.last_accepted_metrics.has_value());
        EXPECT_EQ(s.phase, Phase::Tutorial);
    }
}

TEST(Session, SameSeedSameSession) {
    auto [a, sa] = start_session("alice", 42, cfg(), refs());
    auto [b, sb] = start_session("alice", 42, cfg(), refs());
    EXPECT_EQ(a.session_id, b.session_id);
    EXPECT_EQ(a.condition_order, b.condition_order);
    EXPECT_EQ(a.current_config, b.current_config);
    EXPECT_EQ(sa.events, sb.events);
    EXPECT_EQ(sa.outbound, sb.outbound);
}

TEST(Session, ConditionOrderIsAPermutationAndBalanced) {
    int idm_first = 0;
    for (std::uint64_t seed = 0; seed < 10000; ++seed) {
        const auto o = condition_order_for(seed);
        ASSERT_NE(o[0], o[1]);
        idm_first += o[0] == Condition::IDM;
    }
    EXPECT_NEAR(idm_first / 10000.0, 0.5, 0.02);
}

TEST(Session, SessionIdIsSanitised) {
    const auto id = session_id_for("we ird/..", 3);
    for (char c : id) EXPECT_TRUE(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.');
    EXPECT_NE(session_id_for("a", 1), session_id_for("a", 2));
}

TEST(Session, IdmEditGetsFastThenFinalFeedback) {
    auto s = in_task1(Condition::IDM);
    const auto step = handle_client_message(s, msg(s, node_edit(7, 0.1)), cfg(), 100);
    EXPECT_EQ(count<Feedback>(step.outbound), 1u);
    EXPECT_EQ(std::get<Feedback>(step.outbound.back().body).stage, Stage::Fast);
    EXPECT_EQ(step.outbound.back().revision, s.revision);
    ASSERT_EQ(step.jobs.size(), 1u);

    const auto done = complete_evaluation(s, step.jobs[0], run_evaluation(step.jobs[0], cfg(), s.refs), cfg(), 150);
    ASSERT_EQ(count<Feedback>(done.outbound), 1u);
    EXPECT_EQ(std::get<Feedback>(done.outbound[0].body).stage, Stage::Final);
    EXPECT_EQ(done.outbound[0].revision, step.jobs[0].revision);
    EXPECT_EQ(count(done.events, EventKind::EvalFinal), 1u);
}

TEST(Session, NidmEditShowsNothingButLogsEverything) {
    auto s = in_task1(Condition::nIDM);
    const auto step = handle_client_message(s, msg(s, node_edit(7, 0.1)), cfg(), 100);
    EXPECT_EQ(count<Feedback>(step.outbound), 0u);
    EXPECT_EQ(count(step.events, EventKind::EvalFast), 1u);
    EXPECT_EQ(count(step.events, EventKind::FeedbackShown), 0u);
    const auto done = complete_evaluation(s, step.jobs[0], run_evaluation(step.jobs[0], cfg(), s.refs), cfg(), 150);
    EXPECT_TRUE(done.outbound.empty());
    ASSERT_EQ(count(done.events, EventKind::EvalFinal), 1u);
    EXPECT_EQ(done.events[0].payload.at("metrics").size(), 7u);

    const auto o = handle_client_message(s, msg(s, OverlayRequest{OverlayMode::Energy}), cfg(), 200);
    EXPECT_EQ(error_code(o), "overlay_unavailable");
}

TEST(Session, StaleFinalIsDropped) {
    auto s = in_task1(Condition::IDM);
    const auto first = handle_client_message(s, msg(s, node_edit(7, 0.05)), cfg(), 100);
    const auto second = handle_client_message(s, msg(s, node_edit(8, 0.05)), cfg(), 110);
    const auto& j5 = first.jobs.at(0);
    const auto& j6 = second.jobs.at(0);
    ASSERT_EQ(j6.revision, j5.revision + 1);

    const auto late = complete_evaluation(s, j5, run_evaluation(j5, cfg(), s.refs), cfg(), 120);
    EXPECT_TRUE(late.outbound.empty());
    EXPECT_TRUE(late.events.empty());
    const auto fresh = complete_evaluation(s, j6, run_evaluation(j6, cfg(), s.refs), cfg(), 130);
    ASSERT_EQ(count<Feedback>(fresh.outbound), 1u);
    EXPECT_EQ(fresh.outbound[0].revision, j6.revision);
}

TEST(Session, FinalBaselineIsPreviousDeliveredFinal) {
    auto s = in_task1(Condition::IDM);
    const MetricVector before = *s.last_accepted_metrics;
    auto step = handle_client_message(s, msg(s, node_edit(7, 0.3)), cfg(), 100);
    const auto r = run_evaluation(step.jobs[0], cfg(), s.refs);
    const auto done = complete_evaluation(s, step.jobs[0], r, cfg(), 110);
    const auto fb = encapsulate(before, r.metrics, cfg().model.epsilon);
    const auto& sent = std::get<Feedback>(done.outbound[0].body);
    EXPECT_EQ(sent.enc1, fb.enc1);
    EXPECT_EQ(sent.enc2, fb.enc2);
    EXPECT_EQ(sent.enc3, fb.enc3);
    EXPECT_EQ(*s.last_accepted_metrics, r.metrics);
}

TEST(Session, SnapOnOversizedEdit) {
    auto s = in_task1(Condition::IDM);
    const auto step = handle_client_message(s, msg(s, node_edit(7, 0.9)), cfg(), 100);
    ASSERT_EQ(count<SnapNotice>(step.outbound), 1u);
    const auto& notice = std::get<SnapNotice>(step.outbound[0].body);
    EXPECT_EQ(notice.fields, std::vector<std::string>{"offset.7"});
    EXPECT_EQ(notice.config.offset_of(7), cfg().model.bounds.offset_limit());
    EXPECT_EQ(count(step.events, EventKind::Snap), 1u);
    EXPECT_EQ(s.current_config, notice.config);
}

TEST(Session, FractionalLaminationsAreSnapped) {
    auto s = in_task1(Condition::IDM);
    const auto step =
        handle_client_message(s, msg(s, EditRequest{SectionEdit{0.2, 0.12, 2.5}}), cfg(), 100);
    EXPECT_EQ(s.current_config.section.laminations, 2);
    ASSERT_EQ(count<SnapNotice>(step.outbound), 1u);
    const auto& f = std::get<SnapNotice>(step.outbound[0].body).fields;
    EXPECT_NE(std::find(f.begin(), f.end(), "section.laminations"), f.end());
}

TEST(Session, ProtocolErrorsKeepSessionAlive) {
    auto [s, first] = start_session("e", 5, cfg(), refs());
    WireMessage wrong = msg(s, Sync{});
    wrong.session_id = "someone-else";
    EXPECT_EQ(error_code(handle_client_message(s, wrong, cfg(), 1)), "session_mismatch");
    EXPECT_EQ(error_code(handle_client_message(s, msg(s, node_edit(0, 0.1)), cfg(), 1)), "support_node");
    EXPECT_EQ(error_code(handle_client_message(s, msg(s, node_edit(999, 0.1)), cfg(), 1)), "unknown_node");
    EXPECT_EQ(error_code(handle_client_message(s, msg(s, FinalSelection{}), cfg(), 1)), "bad_phase");
    EXPECT_EQ(error_code(handle_client_message(s, msg(s, SurveyResponse{{3, 3, 3, 3, 3, 3, 3, 3, 3, 3}}), cfg(), 1)),
              "bad_phase");
    EXPECT_EQ(error_code(handle_client_message(s, msg(s, PhaseAdvance{Phase::Survey, std::nullopt}), cfg(), 1)),
              "bad_phase");
    EXPECT_EQ(error_code(handle_client_message(s, msg(s, Hello{}), cfg(), 1)), "duplicate_hello");
    EXPECT_EQ(error_code(handle_client_message(s, msg(s, SyncAck{}), cfg(), 1)), "unexpected_type");
    EXPECT_EQ(s.revision, 0);
    const auto ok = handle_client_message(s, msg(s, node_edit(7, 0.05)), cfg(), 2);
    EXPECT_EQ(s.revision, 1);
    EXPECT_FALSE(ok.jobs.empty());
}

TEST(Session, FullPhaseWalk) {
    auto [s, first] = start_session("walker", 9, cfg(), refs());
    std::vector<SessionEvent> log = first.events;
    auto feed = [&](MessageBody b, std::int64_t t) {
        auto step = handle_client_message(s, msg(s, std::move(b)), cfg(), t);
        log.insert(log.end(), step.events.begin(), step.events.end());
        return step;
    };
    feed(PhaseAdvance{}, 10);
    EXPECT_EQ(s.phase, Phase::Task1);
    EXPECT_EQ(s.revision, 1);
    feed(node_edit(6, 0.1), 20);
    feed(FinalSelection{}, 30);
    auto st = feed(PhaseAdvance{}, 40);
    EXPECT_EQ(s.phase, Phase::Task2);
    EXPECT_EQ(s.current_config, initial_configuration(cfg().model.grid, cfg().model.initial_section));
    EXPECT_EQ(std::get<PhaseAdvance>(st.outbound[0].body).condition, s.condition_order[1]);
    feed(PhaseAdvance{}, 50);
    EXPECT_EQ(s.phase, Phase::Survey);
    EXPECT_EQ(error_code(feed(node_edit(6, 0.1), 55)), "bad_phase");
    feed(SurveyResponse{{4, 2, 4, 2, 4, 2, 4, 2, 4, 2}}, 60);
    EXPECT_EQ(s.phase, Phase::Done);
    EXPECT_EQ(error_code(feed(PhaseAdvance{}, 70)), "bad_phase");

    for (std::size_t i = 1; i < log.size(); ++i) EXPECT_LE(log[i - 1].ts_ms, log[i].ts_ms);
    EXPECT_EQ(count(log, EventKind::PhaseChange), 4u);
    EXPECT_EQ(count(log, EventKind::SurveyResponse), 1u);
    // Baselines: start, Task1 entry, Task2 entry.
    EXPECT_EQ(count(log, EventKind::EvalFinal), 3u);
}

TEST(Session, TimestampsNeverRegress) {
    auto [s, first] = start_session("t", 1, cfg(), refs());
    handle_client_message(s, msg(s, CameraPose{{0, 5, 0}, {0, -1, 0}}), cfg(), 500);
    const auto step = handle_client_message(s, msg(s, CameraPose{{0, 5, 0}, {0, -1, 0}}), cfg(), 100);
    EXPECT_EQ(step.events.at(0).ts_ms, 500);
}

TEST(Session, Overlays) {
    auto [s, first] = start_session("o", 1, cfg(), refs());
    const auto mesh = handle_client_message(s, msg(s, OverlayRequest{OverlayMode::Mesh}), cfg(), 1);
    const auto& m = std::get<Overlay>(mesh.outbound.at(0).body);
    EXPECT_EQ(m.values.size(), generate_facade(s.current_config).members.size());
    const auto energy = handle_client_message(s, msg(s, OverlayRequest{OverlayMode::Energy}), cfg(), 1);
    EXPECT_EQ(std::get<Overlay>(energy.outbound.at(0).body).values.size(), 36u);
}

TEST(Session, BarrierClassification) {
    SessionState s;
    EXPECT_TRUE(is_barrier(msg(s, Sync{})));
    EXPECT_TRUE(is_barrier(msg(s, FinalSelection{})));
    EXPECT_TRUE(is_barrier(msg(s, PhaseAdvance{})));
    EXPECT_FALSE(is_barrier(msg(s, node_edit(1, 0.1))));
}
