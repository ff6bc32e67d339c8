#pragma once

// Headless participants that play a full session over raw TCP: scripted
// tutorial, both task phases under a seeded policy, and a neutral survey.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <boost/asio.hpp>

#include "exo/config.hpp"
#include "exo/evaluation.hpp"
#include "exo/protocol.hpp"

namespace exo {

enum class AgentPolicy { Random, GreedyFeedback, HillClimb };

inline std::string_view to_string(AgentPolicy p) {
    switch (p) {
        case AgentPolicy::Random: return "random";
        case AgentPolicy::GreedyFeedback: return "greedy";
        case AgentPolicy::HillClimb: return "hillclimb";
    }
    return "random";
}

inline std::optional<AgentPolicy> parse_policy(std::string_view s) {
    if (s == "random") return AgentPolicy::Random;
    if (s == "greedy" || s == "greedyfeedback") return AgentPolicy::GreedyFeedback;
    if (s == "hillclimb") return AgentPolicy::HillClimb;
    return std::nullopt;
}

struct DelayModel {
    enum class Kind { None, Constant, Exponential } kind = Kind::None;
    double mean_ms = 0.0;

    /// "none", "constant:<ms>" or "exp:<mean ms>".
    static DelayModel parse(const std::string& s) {
        if (s == "none") return {};
        const auto colon = s.find(':');
        if (colon == std::string::npos) throw std::invalid_argument("delay must be none, constant:<ms> or exp:<ms>");
        const std::string kind = s.substr(0, colon);
        const double v = std::stod(s.substr(colon + 1));
        if (!(v >= 0.0) || !std::isfinite(v)) throw std::invalid_argument("delay must be a non-negative number");
        if (kind == "constant") return {Kind::Constant, v};
        if (kind == "exp") return {Kind::Exponential, v};
        throw std::invalid_argument("unknown delay model " + kind);
    }

    /// Think time in ms, at least 1 so consecutive edits never share a stamp.
    std::int64_t draw(std::mt19937_64& rng) const {
        double ms = 1.0;
        if (kind == Kind::Constant) ms = mean_ms;
        if (kind == Kind::Exponential && mean_ms > 0.0) {
            const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
            ms = -mean_ms * std::log1p(-u);
        }
        return std::max<std::int64_t>(1, std::llround(ms));
    }
};

struct AgentRunSpec {
    AgentPolicy policy = AgentPolicy::Random;
    Condition condition = Condition::IDM;  // the task phase this run is scored on
    std::uint64_t seed = 1;
    int edit_budget = 150;
    DelayModel delay;
    bool sleep = false;  // actually wait out think time (for live servers)
    std::string participant_id;  // defaults to "<policy>-<seed>"
};

struct AgentRunResult {
    std::string session_id;
    std::string participant_id;
    std::array<Condition, 2> condition_order{};
    int edits_sent = 0;
    int reverts = 0;
    DesignConfiguration scored_config;  // final design in spec.condition's task
};

inline double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

/// A random design move: a section step with probability
/// `section_edit_probability`, otherwise a push/pull on a uniformly chosen
/// free node by a uniform delta.
inline EditRequest propose_random_edit(const DesignConfiguration& config, const AgentEditModel& m,
                                       std::mt19937_64& rng) {
    if (uniform01(rng) < m.section_edit_probability) {
        const int field = static_cast<int>(uniform01(rng) * 3.0);
        const double sign = uniform01(rng) < 0.5 ? -1.0 : 1.0;
        SectionEdit s{config.section.depth, config.section.width, static_cast<double>(config.section.laminations)};
        if (field == 0) s.depth += sign * m.section_step;
        else if (field == 1) s.width += sign * m.section_step;
        else s.laminations += sign;
        return EditRequest{s};
    }
    const int first_free = config.grid.bays_x + 1;
    const int free_count = config.grid.node_count() - first_free;
    const NodeId node = first_free + static_cast<NodeId>(uniform01(rng) * free_count);
    const Offset delta = Offset::from_metres((2.0 * uniform01(rng) - 1.0) * m.max_node_delta);
    return EditRequest{NodeEdit{node, static_cast<double>(delta.micrometres()) / 1e6}};
}

struct AgentAction {
    enum class Kind { ProposeEdit, Revert, Finalize } kind = Kind::ProposeEdit;
    EditRequest edit;
};

/// Accept when at least two labels are not Worsened and at least one is
/// Improved.
inline bool feedback_acceptable(const EncapsulatedFeedback& fb) {
    int improved = 0, not_worse = 0;
    for (Label l : {fb.enc1, fb.enc2, fb.enc3}) {
        improved += l == Label::Improved;
        not_worse += l != Label::Worsened;
    }
    return not_worse >= 2 && improved >= 1;
}

/// One decision of the GreedyFeedback policy. `last_feedback` is the Final
/// feedback on the previous proposal, absent when none was shown (nIDM) or
/// when the previous action was itself a revert.
inline AgentAction greedy_policy_step(const std::optional<EncapsulatedFeedback>& last_feedback, int edits_remaining,
                                      const DesignConfiguration& config, const AgentEditModel& m,
                                      std::mt19937_64& rng) {
    if (last_feedback && !feedback_acceptable(*last_feedback)) return {AgentAction::Kind::Revert, {}};
    if (edits_remaining <= 0) return {AgentAction::Kind::Finalize, {}};
    return {AgentAction::Kind::ProposeEdit, propose_random_edit(config, m, rng)};
}

/// The edit that undoes the move from `before` to `after` exactly.
inline EditRequest revert_edit(const EditRequest& applied, const DesignConfiguration& before,
                               const DesignConfiguration& after) {
    if (const auto* n = std::get_if<NodeEdit>(&applied.edit)) {
        const Offset back = before.offset_of(n->node_id) - after.offset_of(n->node_id);
        return EditRequest{NodeEdit{n->node_id, static_cast<double>(back.micrometres()) / 1e6}};
    }
    return EditRequest{SectionEdit{before.section.depth, before.section.width,
                                   static_cast<double>(before.section.laminations)}};
}

// ---- client transport --------------------------------------------------------

class FrameClient {
public:
    FrameClient(const std::string& host, unsigned short port) : socket_(ioc_) {
        boost::asio::ip::tcp::resolver resolver(ioc_);
        boost::system::error_code ec;
        boost::asio::connect(socket_, resolver.resolve(host, std::to_string(port)), ec);
        if (ec) throw ConnectionLost("cannot connect to " + host + ":" + std::to_string(port) + ": " + ec.message());
        socket_.set_option(boost::asio::ip::tcp::no_delay(true));
    }

    void send(const WireMessage& m) {
        const std::string f = encode_message(m);
        boost::system::error_code ec;
        boost::asio::write(socket_, boost::asio::buffer(f), ec);
        if (ec) throw ConnectionLost("send failed: " + ec.message());
    }

    WireMessage receive() {
        boost::system::error_code ec;
        const std::size_t n = boost::asio::read_until(socket_, boost::asio::dynamic_buffer(buffer_), '\n', ec);
        if (ec) throw ConnectionLost("connection closed: " + ec.message());
        const std::string line = buffer_.substr(0, n);
        buffer_.erase(0, n);
        return decode_message(line);
    }

private:
    boost::asio::io_context ioc_;
    boost::asio::ip::tcp::socket socket_;
    std::string buffer_;
};

struct Endpoint {
    std::string host = "127.0.0.1";
    unsigned short port = 7447;

    static Endpoint parse(const std::string& s) {
        const auto colon = s.rfind(':');
        if (colon == std::string::npos) throw std::invalid_argument("endpoint must be host:port");
        const int port = std::stoi(s.substr(colon + 1));
        if (port <= 0 || port > 65535) throw std::invalid_argument("port out of range");
        return {s.substr(0, colon), static_cast<unsigned short>(port)};
    }
};

namespace agent_detail {

inline std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t salt) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(salt)};
    std::uint32_t words[2];
    seq.generate(words, words + 2);
    return (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
}

// Plays one session; every wait is on a Sync round trip, so the server's
// output for a given script is fully determined.
class Player {
public:
    Player(const AgentRunSpec& spec, const Endpoint& ep, const ServerConfig& cfg)
        : spec_(spec), cfg_(cfg), client_(ep.host, ep.port) {}

    AgentRunResult run() {
        AgentRunResult result;
        result.participant_id =
            spec_.participant_id.empty() ? std::string(to_string(spec_.policy)) + "-" + std::to_string(spec_.seed)
                                         : spec_.participant_id;
        client_.send(WireMessage{"", 0, std::nullopt, Hello{std::string(kProtocolVersion), result.participant_id, spec_.seed}});
        const WireMessage welcome = client_.receive();
        const auto* w = std::get_if<Welcome>(&welcome.body);
        if (!w) throw ProtocolError("expected Welcome, got " + std::string(type_name(welcome)));
        session_id_ = welcome.session_id;
        config_ = w->config;
        edit_step_ = w->edit_step;
        result.session_id = session_id_;

        tutorial();
        for (int task = 0; task < 2; ++task) {
            const auto cond = advance();
            if (!cond) throw ProtocolError("task phase arrived without a condition");
            result.condition_order[static_cast<std::size_t>(task)] = *cond;
            play_task(*cond, result);
            if (*cond == spec_.condition) result.scored_config = config_;
        }
        advance();  // survey
        SurveyResponse neutral;
        neutral.items.fill(3);
        send(neutral, 0);
        expect_phase_change();
        return result;
    }

private:
    template <typename Body>
    void send(Body body, std::int64_t think_ms) {
        if (spec_.sleep && think_ms > 0) std::this_thread::sleep_for(std::chrono::milliseconds(think_ms));
        client_.send(WireMessage{session_id_, revision_, think_ms > 0 ? std::optional(think_ms) : std::nullopt,
                                 std::move(body)});
    }

    // Sends Sync and consumes frames up to SyncAck, tracking the feedback
    // and any snapped configuration for the latest revision.
    void sync() {
        send(Sync{}, 0);
        for (;;) {
            const WireMessage m = client_.receive();
            revision_ = std::max(revision_, m.revision);
            if (const auto* f = std::get_if<Feedback>(&m.body)) {
                if (f->stage == Stage::Final && m.revision == revision_)
                    final_feedback_ = EncapsulatedFeedback{f->enc1, f->enc2, f->enc3, m.revision, Stage::Final};
            } else if (const auto* s = std::get_if<SnapNotice>(&m.body)) {
                config_ = s->config;
            } else if (const auto* e = std::get_if<ErrorBody>(&m.body)) {
                throw ProtocolError("server error " + e->code + ": " + e->message);
            } else if (holds<SyncAck>(m)) {
                return;
            }
        }
    }

    std::optional<Condition> advance() {
        send(PhaseAdvance{}, 0);
        return expect_phase_change();
    }

    std::optional<Condition> expect_phase_change() {
        for (;;) {
            const WireMessage m = client_.receive();
            revision_ = std::max(revision_, m.revision);
            if (const auto* p = std::get_if<PhaseAdvance>(&m.body)) {
                config_ = initial_configuration(cfg_.model.grid, cfg_.model.initial_section);
                return p->condition;
            }
            if (const auto* e = std::get_if<ErrorBody>(&m.body))
                throw ProtocolError("server error " + e->code + ": " + e->message);
        }
    }

    // Applies an edit locally the way the server does before snapping; a
    // SnapNotice received during sync() then overrides it.
    void edit(const EditRequest& req, std::int64_t think_ms) {
        if (const auto* n = std::get_if<NodeEdit>(&req.edit)) {
            config_ = apply_node_edit(config_, n->node_id, Offset::from_metres(n->delta));
        } else {
            const auto& s = std::get<SectionEdit>(req.edit);
            config_.section = {s.depth, s.width, nearest_count(s.laminations, 0, 1000)};
        }
        final_feedback_.reset();
        send(req, think_ms);
        sync();
    }

    void pose_towards(const Vec3& target, std::mt19937_64& rng, std::int64_t think_ms) {
        const bool inside = uniform01(rng) < 0.15;
        Vec3 pos{target.x + (uniform01(rng) - 0.5) * 4.0, inside ? -3.0 : 6.0 + 4.0 * uniform01(rng),
                 target.z + (uniform01(rng) - 0.5) * 4.0};
        Vec3 dir = target - pos;
        if (inside) dir = Vec3{dir.x, 1.0, dir.z};
        dir = (1.0 / norm(dir)) * dir;
        send(CameraPose{pos, dir}, think_ms);
    }

    Vec3 node_position(const EditRequest& req) const {
        const FacadeGraph g = generate_facade(config_);
        if (const auto* n = std::get_if<NodeEdit>(&req.edit)) return g.nodes[static_cast<std::size_t>(n->node_id)].position;
        return {config_.grid.facade_width() / 2.0, 0.0, config_.grid.facade_height() / 2.0};
    }

    void tutorial() {
        std::mt19937_64 rng(stream_seed(spec_.seed, 0x7475));
        const NodeId mid = (config_.grid.bays_z + 1) / 2 * (config_.grid.bays_x + 1) + config_.grid.bays_x / 2;
        const Vec3 target = generate_facade(config_).nodes[static_cast<std::size_t>(mid)].position;
        pose_towards(target, rng, 500);
        const Offset step = Offset::from_metres(edit_step_);
        edit(EditRequest{NodeEdit{mid, static_cast<double>(step.micrometres()) / 1e6}}, 1000);
        edit(EditRequest{NodeEdit{mid, static_cast<double>((-step).micrometres()) / 1e6}}, 1000);
        send(OverlayRequest{OverlayMode::Mesh}, 500);
        send(OverlayRequest{OverlayMode::Energy}, 500);
        sync();
    }

    // Polarity-aware sum of metrics normalised by the initial design; lower is
    // better.
    double hill_score(const DesignConfiguration& c) {
        if (!refs_) {
            refs_ = cfg_.model.reference_values();
            hill_base_ = evaluate_full(initial_configuration(cfg_.model.grid, cfg_.model.initial_section), cfg_.model,
                                       *refs_)
                             .metrics;
        }
        const MetricVector v = evaluate_full(c, cfg_.model, *refs_).metrics;
        const MetricVector& b = hill_base_;
        double s = 0.0;
        for (std::size_t j = 0; j < kMetricCount; ++j) s += (kLowerIsBetter[j] ? 1.0 : -1.0) * v[j] / b[j];
        return s;
    }

    void play_task(Condition cond, AgentRunResult& result) {
        std::mt19937_64 proposals(stream_seed(spec_.seed, cond == Condition::IDM ? 1 : 2));
        std::mt19937_64 timing(stream_seed(spec_.seed, cond == Condition::IDM ? 3 : 4));
        std::mt19937_64 views(stream_seed(spec_.seed, cond == Condition::IDM ? 5 : 6));
        const bool idm = cond == Condition::IDM;
        int remaining = spec_.edit_budget;
        std::optional<EncapsulatedFeedback> last;
        std::optional<double> current_score;
        for (;;) {
            AgentAction action;
            if (spec_.policy == AgentPolicy::GreedyFeedback) {
                action = greedy_policy_step(idm ? last : std::nullopt, remaining, config_, cfg_.agent, proposals);
            } else if (remaining <= 0) {
                action.kind = AgentAction::Kind::Finalize;
            } else {
                action.edit = propose_random_edit(config_, cfg_.agent, proposals);
            }
            if (action.kind == AgentAction::Kind::Finalize) break;
            if (action.kind == AgentAction::Kind::Revert) {
                const DesignConfiguration now = config_;
                edit(revert_edit(last_edit_, before_, now), timing_draw(timing));
                ++result.reverts;
                ++result.edits_sent;
                last.reset();
                continue;
            }
            const std::int64_t think = timing_draw(timing);
            pose_towards(node_position(action.edit), views, think / 2);
            before_ = config_;
            last_edit_ = action.edit;
            edit(action.edit, think - think / 2);
            ++result.edits_sent;
            --remaining;
            last = final_feedback_;
            if (spec_.policy == AgentPolicy::HillClimb) {
                if (!current_score) current_score = hill_score(before_);
                const double s = hill_score(config_);
                if (s > *current_score) {
                    const DesignConfiguration now = config_;
                    edit(revert_edit(last_edit_, before_, now), timing_draw(timing));
                    ++result.reverts;
                    ++result.edits_sent;
                } else {
                    current_score = s;
                }
            }
        }
        send(FinalSelection{}, timing_draw(timing));
    }

    std::int64_t timing_draw(std::mt19937_64& rng) const { return spec_.delay.draw(rng); }

    AgentRunSpec spec_;
    const ServerConfig& cfg_;
    FrameClient client_;
    std::string session_id_;
    std::int64_t revision_ = 0;
    double edit_step_ = 0.05;
    DesignConfiguration config_;
    DesignConfiguration before_;
    EditRequest last_edit_;
    std::optional<EncapsulatedFeedback> final_feedback_;
    std::optional<ReferenceValues> refs_;
    MetricVector hill_base_;
};

}  // namespace agent_detail

/// Plays one complete session against a running server. `cfg` supplies the
/// agent edit model (and, for HillClimb, the evaluation model).
inline AgentRunResult run_agent_session(const AgentRunSpec& spec, const Endpoint& endpoint, const ServerConfig& cfg) {
    if (spec.edit_budget < 1) throw std::invalid_argument("edit budget must be at least 1");
    agent_detail::Player player(spec, endpoint, cfg);
    return player.run();
}

}  // namespace exo
