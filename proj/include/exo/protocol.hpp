#pragma once

// Session wire protocol, version "v1". One frame is one JSON object on one
// line (raw TCP) or one WebSocket text message:
//
//   {"body":{...},"revision":N,"session_id":"...","type":"EditRequest"}
//
// Optional frame key "think_ms" (client -> server) carries simulated think
// time for servers running on a virtual clock. decode_message is the data
// shield: anything outside the documented shape or ranges is rejected with a
// DecodeError before it reaches a session. Field-level documentation lives in
// schema/protocol-v1.schema.json.

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <json.hpp>

#include "exo/errors.hpp"
#include "exo/facade_model.hpp"
#include "exo/feedback.hpp"

namespace exo {

inline constexpr std::string_view kProtocolVersion = "v1";
inline constexpr std::size_t kMaxFrameBytes = 65536;

enum class Phase { Tutorial, Task1, Task2, Survey, Done };
enum class Condition { IDM, nIDM };
enum class OverlayMode { Mesh, Energy };

inline std::string_view to_string(Phase p) {
    switch (p) {
        case Phase::Tutorial: return "Tutorial";
        case Phase::Task1: return "Task1";
        case Phase::Task2: return "Task2";
        case Phase::Survey: return "Survey";
        case Phase::Done: return "Done";
    }
    return "Done";
}
inline std::string_view to_string(Condition c) { return c == Condition::IDM ? "IDM" : "nIDM"; }
inline std::string_view to_string(OverlayMode m) { return m == OverlayMode::Mesh ? "mesh" : "energy"; }

inline std::optional<Phase> parse_phase(std::string_view s) {
    for (Phase p : {Phase::Tutorial, Phase::Task1, Phase::Task2, Phase::Survey, Phase::Done})
        if (to_string(p) == s) return p;
    return std::nullopt;
}
inline std::optional<Condition> parse_condition(std::string_view s) {
    if (s == "IDM") return Condition::IDM;
    if (s == "nIDM") return Condition::nIDM;
    return std::nullopt;
}
inline std::optional<Label> parse_label(std::string_view s) {
    for (Label l : {Label::Improved, Label::Neutral, Label::Worsened})
        if (to_string(l) == s) return l;
    return std::nullopt;
}

inline bool operator==(const DesignBounds& a, const DesignBounds& b) {
    return a.bays_min == b.bays_min && a.bays_max == b.bays_max && a.module_min == b.module_min &&
           a.module_max == b.module_max && a.depth_min == b.depth_min && a.depth_max == b.depth_max &&
           a.width_min == b.width_min && a.width_max == b.width_max && a.laminations_min == b.laminations_min &&
           a.laminations_max == b.laminations_max && a.offset_max == b.offset_max;
}

// ---- message bodies --------------------------------------------------------

struct Hello {
    std::string version{kProtocolVersion};
    std::string participant_id;
    std::optional<std::uint64_t> seed;
    friend bool operator==(const Hello&, const Hello&) = default;
};

struct Welcome {
    std::string version{kProtocolVersion};
    std::string participant_id;
    Phase phase = Phase::Tutorial;
    double edit_step = 0.05;
    DesignBounds bounds;
    DesignConfiguration config;
    friend bool operator==(const Welcome&, const Welcome&) = default;
};

struct NodeEdit {
    NodeId node_id = 0;
    double delta = 0.0;  // m
    friend bool operator==(const NodeEdit&, const NodeEdit&) = default;
};

// Absolute section request; laminations may arrive fractional and is snapped.
struct SectionEdit {
    double depth = 0.0;
    double width = 0.0;
    double laminations = 0.0;
    friend bool operator==(const SectionEdit&, const SectionEdit&) = default;
};

struct EditRequest {
    std::variant<NodeEdit, SectionEdit> edit;
    friend bool operator==(const EditRequest&, const EditRequest&) = default;
};

struct SnapNotice {
    std::vector<std::string> fields;
    DesignConfiguration config;
    friend bool operator==(const SnapNotice&, const SnapNotice&) = default;
};

struct Feedback {
    Label enc1 = Label::Neutral;
    Label enc2 = Label::Neutral;
    Label enc3 = Label::Neutral;
    Stage stage = Stage::Fast;
    friend bool operator==(const Feedback&, const Feedback&) = default;
};

struct OverlayRequest {
    OverlayMode mode = OverlayMode::Mesh;
    friend bool operator==(const OverlayRequest&, const OverlayRequest&) = default;
};

// mesh: axial force per member under the wind case (kN).
// energy: 36 values, monthly heating, then cooling, then solar (kWh).
struct Overlay {
    OverlayMode mode = OverlayMode::Mesh;
    std::vector<double> values;
    friend bool operator==(const Overlay&, const Overlay&) = default;
};

// Client -> server: empty body, "advance to the next phase".
// Server -> client: the phase entered and, for task phases, its condition.
struct PhaseAdvance {
    std::optional<Phase> phase;
    std::optional<Condition> condition;
    friend bool operator==(const PhaseAdvance&, const PhaseAdvance&) = default;
};

struct CameraPose {
    Vec3 position;
    Vec3 direction;  // unit
    friend bool operator==(const CameraPose&, const CameraPose&) = default;
};

struct FinalSelection {
    friend bool operator==(const FinalSelection&, const FinalSelection&) = default;
};

struct SurveyResponse {
    std::array<int, 10> items{};
    friend bool operator==(const SurveyResponse&, const SurveyResponse&) = default;
};

// Barrier: answered with SyncAck once every evaluation queued before it has
// been delivered.
struct Sync {
    friend bool operator==(const Sync&, const Sync&) = default;
};
struct SyncAck {
    friend bool operator==(const SyncAck&, const SyncAck&) = default;
};

struct ErrorBody {
    std::string code;
    std::string message;
    friend bool operator==(const ErrorBody&, const ErrorBody&) = default;
};

using MessageBody = std::variant<Hello, Welcome, EditRequest, SnapNotice, Feedback, OverlayRequest, Overlay,
                                 PhaseAdvance, CameraPose, FinalSelection, SurveyResponse, Sync, SyncAck, ErrorBody>;

struct WireMessage {
    std::string session_id;
    std::int64_t revision = 0;
    std::optional<std::int64_t> think_ms;
    MessageBody body;
    friend bool operator==(const WireMessage&, const WireMessage&) = default;
};

inline constexpr std::array<std::string_view, std::variant_size_v<MessageBody>> kMessageTypes = {
    "Hello",   "Welcome",        "EditRequest",    "SnapNotice", "Feedback", "OverlayRequest", "Overlay",
    "PhaseAdvance", "CameraPose", "FinalSelection", "SurveyResponse", "Sync", "SyncAck",    "Error"};

inline std::string_view type_name(const WireMessage& m) { return kMessageTypes[m.body.index()]; }

template <typename T>
bool holds(const WireMessage& m) {
    return std::holds_alternative<T>(m.body);
}

// ---- encoding --------------------------------------------------------------

namespace wire {

using nlohmann::json;

inline json vec_json(Vec3 v) { return json::array({v.x, v.y, v.z}); }

inline json config_json(const DesignConfiguration& c) {
    json offsets = json::array();
    for (const auto& [id, dy] : c.node_offsets) offsets.push_back(json::array({id, dy.metres()}));
    return {{"grid", {{"bays_x", c.grid.bays_x}, {"bays_z", c.grid.bays_z}, {"module_size", c.grid.module_size}}},
            {"section",
             {{"depth", c.section.depth}, {"width", c.section.width}, {"laminations", c.section.laminations}}},
            {"offsets", offsets}};
}

inline json bounds_json(const DesignBounds& b) {
    return {{"bays_min", b.bays_min},     {"bays_max", b.bays_max},         {"module_min", b.module_min},
            {"module_max", b.module_max}, {"depth_min", b.depth_min},       {"depth_max", b.depth_max},
            {"width_min", b.width_min},   {"width_max", b.width_max},       {"laminations_min", b.laminations_min},
            {"laminations_max", b.laminations_max}, {"offset_max", b.offset_max}};
}

inline json body_json(const MessageBody& body) {
    return std::visit(
        [](const auto& b) -> json {
            using T = std::decay_t<decltype(b)>;
            if constexpr (std::is_same_v<T, Hello>) {
                json j = {{"version", b.version}, {"participant_id", b.participant_id}};
                if (b.seed) j["seed"] = *b.seed;
                return j;
            } else if constexpr (std::is_same_v<T, Welcome>) {
                return {{"version", b.version},     {"participant_id", b.participant_id},
                        {"phase", to_string(b.phase)}, {"edit_step", b.edit_step},
                        {"bounds", bounds_json(b.bounds)}, {"config", config_json(b.config)}};
            } else if constexpr (std::is_same_v<T, EditRequest>) {
                if (const auto* n = std::get_if<NodeEdit>(&b.edit))
                    return {{"node_id", n->node_id}, {"delta", n->delta}};
                const auto& s = std::get<SectionEdit>(b.edit);
                return {{"section", {{"depth", s.depth}, {"width", s.width}, {"laminations", s.laminations}}}};
            } else if constexpr (std::is_same_v<T, SnapNotice>) {
                return {{"fields", b.fields}, {"config", config_json(b.config)}};
            } else if constexpr (std::is_same_v<T, Feedback>) {
                return {{"enc1", to_string(b.enc1)},
                        {"enc2", to_string(b.enc2)},
                        {"enc3", to_string(b.enc3)},
                        {"stage", to_string(b.stage)}};
            } else if constexpr (std::is_same_v<T, OverlayRequest>) {
                return {{"mode", to_string(b.mode)}};
            } else if constexpr (std::is_same_v<T, Overlay>) {
                return {{"mode", to_string(b.mode)}, {"values", b.values}};
            } else if constexpr (std::is_same_v<T, PhaseAdvance>) {
                json j = json::object();
                if (b.phase) j["phase"] = to_string(*b.phase);
                if (b.condition) j["condition"] = to_string(*b.condition);
                return j;
            } else if constexpr (std::is_same_v<T, CameraPose>) {
                return {{"position", vec_json(b.position)}, {"direction", vec_json(b.direction)}};
            } else if constexpr (std::is_same_v<T, SurveyResponse>) {
                return {{"items", b.items}};
            } else if constexpr (std::is_same_v<T, ErrorBody>) {
                return {{"code", b.code}, {"message", b.message}};
            } else {
                return json::object();
            }
        },
        body);
}

}  // namespace wire

/// Canonical single-line encoding (sorted keys, shortest round-trip doubles),
/// terminated by '\n'.
inline std::string encode_message(const WireMessage& m) {
    nlohmann::json j = {{"type", type_name(m)},
                        {"session_id", m.session_id},
                        {"revision", m.revision},
                        {"body", wire::body_json(m.body)}};
    if (m.think_ms) j["think_ms"] = *m.think_ms;
    return j.dump() + "\n";
}

// ---- decoding --------------------------------------------------------------

namespace wire {

class Reader {
public:
    explicit Reader(std::string_view frame) : frame_(frame) {}

    [[noreturn]] void fail(std::string_view key, const std::string& reason) const {
        std::size_t pos = 0;
        if (!key.empty()) {
            const std::string quoted = "\"" + std::string(key) + "\"";
            const auto at = frame_.find(quoted);
            if (at != std::string_view::npos) pos = at;
        }
        throw DecodeError(pos, reason);
    }

    void only_keys(const json& obj, std::string_view where, std::initializer_list<std::string_view> keys) const {
        if (!obj.is_object()) fail(where, std::string(where) + " must be an object");
        for (auto it = obj.begin(); it != obj.end(); ++it) {
            bool known = false;
            for (auto k : keys) known = known || it.key() == k;
            if (!known) fail(it.key(), "unknown key '" + it.key() + "' in " + std::string(where));
        }
    }

    const json& field(const json& obj, std::string_view key) const {
        auto it = obj.find(std::string(key));
        if (it == obj.end()) fail(key, "missing key '" + std::string(key) + "'");
        return *it;
    }

    double number(const json& obj, std::string_view key, double lo, double hi) const {
        const json& v = field(obj, key);
        if (!v.is_number()) fail(key, std::string(key) + " must be a number");
        const double d = v.get<double>();
        if (!std::isfinite(d) || d < lo || d > hi)
            fail(key, std::string(key) + " out of range [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
        return d;
    }

    std::int64_t integer(const json& obj, std::string_view key, std::int64_t lo, std::int64_t hi) const {
        const json& v = field(obj, key);
        if (!v.is_number_integer()) fail(key, std::string(key) + " must be an integer");
        if (v.is_number_unsigned() && v.get<std::uint64_t>() > static_cast<std::uint64_t>(hi))
            fail(key, std::string(key) + " out of range");
        const auto i = v.get<std::int64_t>();
        if (i < lo || i > hi) fail(key, std::string(key) + " out of range");
        return i;
    }

    std::string text(const json& obj, std::string_view key, std::size_t max_len, bool id_chars) const {
        const json& v = field(obj, key);
        if (!v.is_string()) fail(key, std::string(key) + " must be a string");
        auto s = v.get<std::string>();
        if (s.size() > max_len) fail(key, std::string(key) + " too long");
        if (id_chars) {
            for (unsigned char c : s)
                if (!(std::isalnum(c) || c == '_' || c == '-' || c == '.'))
                    fail(key, std::string(key) + " has characters outside [A-Za-z0-9_.-]");
        }
        return s;
    }

    Vec3 vec(const json& obj, std::string_view key, double limit) const {
        const json& v = field(obj, key);
        if (!v.is_array() || v.size() != 3) fail(key, std::string(key) + " must be [x, y, z]");
        double c[3];
        for (std::size_t i = 0; i < 3; ++i) {
            if (!v[i].is_number()) fail(key, std::string(key) + " must be numeric");
            c[i] = v[i].get<double>();
            if (!std::isfinite(c[i]) || std::fabs(c[i]) > limit) fail(key, std::string(key) + " out of range");
        }
        return {c[0], c[1], c[2]};
    }

    DesignConfiguration config(const json& obj, std::string_view key) const {
        const json& c = field(obj, key);
        only_keys(c, key, {"grid", "section", "offsets"});
        DesignConfiguration out;
        const json& g = field(c, "grid");
        only_keys(g, "grid", {"bays_x", "bays_z", "module_size"});
        out.grid.bays_x = static_cast<int>(integer(g, "bays_x", 1, 1000));
        out.grid.bays_z = static_cast<int>(integer(g, "bays_z", 1, 1000));
        out.grid.module_size = number(g, "module_size", 1e-6, 1e3);
        const json& s = field(c, "section");
        only_keys(s, "section", {"depth", "width", "laminations"});
        out.section.depth = number(s, "depth", 0.0, 10.0);
        out.section.width = number(s, "width", 0.0, 10.0);
        out.section.laminations = static_cast<int>(integer(s, "laminations", 0, 1000));
        const json& offs = field(c, "offsets");
        if (!offs.is_array()) fail("offsets", "offsets must be an array");
        for (const auto& e : offs) {
            if (!e.is_array() || e.size() != 2 || !e[0].is_number_integer() || !e[1].is_number())
                fail("offsets", "offsets entries must be [node_id, dy]");
            const auto id = e[0].get<std::int64_t>();
            const double dy = e[1].get<double>();
            if (id < 0 || id >= out.grid.node_count() || !std::isfinite(dy) || std::fabs(dy) > 10.0)
                fail("offsets", "offset entry out of range");
            const Offset o = Offset::from_metres(dy);
            if (o.micrometres() == 0 || out.node_offsets.count(static_cast<NodeId>(id)))
                fail("offsets", "offsets entries must be unique and non-zero");
            out.node_offsets[static_cast<NodeId>(id)] = o;
        }
        return out;
    }

    DesignBounds bounds(const json& obj, std::string_view key) const {
        const json& b = field(obj, key);
        only_keys(b, key,
                  {"bays_min", "bays_max", "module_min", "module_max", "depth_min", "depth_max", "width_min",
                   "width_max", "laminations_min", "laminations_max", "offset_max"});
        DesignBounds out;
        out.bays_min = static_cast<int>(integer(b, "bays_min", 1, 1000));
        out.bays_max = static_cast<int>(integer(b, "bays_max", 1, 1000));
        out.module_min = number(b, "module_min", 0.0, 1e3);
        out.module_max = number(b, "module_max", 0.0, 1e3);
        out.depth_min = number(b, "depth_min", 0.0, 10.0);
        out.depth_max = number(b, "depth_max", 0.0, 10.0);
        out.width_min = number(b, "width_min", 0.0, 10.0);
        out.width_max = number(b, "width_max", 0.0, 10.0);
        out.laminations_min = static_cast<int>(integer(b, "laminations_min", 0, 1000));
        out.laminations_max = static_cast<int>(integer(b, "laminations_max", 0, 1000));
        out.offset_max = number(b, "offset_max", 0.0, 10.0);
        return out;
    }

    Label label(const json& obj, std::string_view key) const {
        const auto l = parse_label(text(obj, key, 16, false));
        if (!l) fail(key, std::string(key) + " must be improved|neutral|worsened");
        return *l;
    }

    OverlayMode mode(const json& obj) const {
        const auto s = text(obj, "mode", 16, false);
        if (s == "mesh") return OverlayMode::Mesh;
        if (s == "energy") return OverlayMode::Energy;
        fail("mode", "mode must be mesh|energy");
    }

private:
    std::string_view frame_;
};

inline MessageBody decode_body(const Reader& r, std::string_view type, const json& b) {
    if (type == "Hello") {
        r.only_keys(b, "body", {"version", "participant_id", "seed"});
        Hello h;
        h.version = r.text(b, "version", 8, false);
        if (h.version != kProtocolVersion) r.fail("version", "unsupported protocol version");
        h.participant_id = r.text(b, "participant_id", 64, true);
        if (h.participant_id.empty()) r.fail("participant_id", "participant_id must not be empty");
        if (auto it = b.find("seed"); it != b.end()) {
            if (!it->is_number_unsigned() && !(it->is_number_integer() && it->get<std::int64_t>() >= 0))
                r.fail("seed", "seed must be a non-negative integer");
            h.seed = it->get<std::uint64_t>();
        }
        return h;
    }
    if (type == "Welcome") {
        r.only_keys(b, "body", {"version", "participant_id", "phase", "edit_step", "bounds", "config"});
        Welcome w;
        w.version = r.text(b, "version", 8, false);
        if (w.version != kProtocolVersion) r.fail("version", "unsupported protocol version");
        w.participant_id = r.text(b, "participant_id", 64, true);
        const auto p = parse_phase(r.text(b, "phase", 16, false));
        if (!p) r.fail("phase", "unknown phase");
        w.phase = *p;
        w.edit_step = r.number(b, "edit_step", 0.0, 10.0);
        w.bounds = r.bounds(b, "bounds");
        w.config = r.config(b, "config");
        return w;
    }
    if (type == "EditRequest") {
        if (b.contains("section")) {
            r.only_keys(b, "body", {"section"});
            const json& s = r.field(b, "section");
            r.only_keys(s, "section", {"depth", "width", "laminations"});
            return EditRequest{SectionEdit{r.number(s, "depth", 0.0, 10.0), r.number(s, "width", 0.0, 10.0),
                                           r.number(s, "laminations", 0.0, 100.0)}};
        }
        r.only_keys(b, "body", {"node_id", "delta"});
        return EditRequest{NodeEdit{static_cast<NodeId>(r.integer(b, "node_id", 0, 1000000)),
                                    r.number(b, "delta", -5.0, 5.0)}};
    }
    if (type == "SnapNotice") {
        r.only_keys(b, "body", {"fields", "config"});
        SnapNotice s;
        const json& f = r.field(b, "fields");
        if (!f.is_array() || f.size() > 10000) r.fail("fields", "fields must be an array");
        for (const auto& e : f) {
            if (!e.is_string() || e.get<std::string>().size() > 128) r.fail("fields", "fields must be strings");
            s.fields.push_back(e.get<std::string>());
        }
        s.config = r.config(b, "config");
        return s;
    }
    if (type == "Feedback") {
        r.only_keys(b, "body", {"enc1", "enc2", "enc3", "stage"});
        Feedback f{r.label(b, "enc1"), r.label(b, "enc2"), r.label(b, "enc3"), Stage::Fast};
        const auto stage = r.text(b, "stage", 8, false);
        if (stage == "final") f.stage = Stage::Final;
        else if (stage != "fast") r.fail("stage", "stage must be fast|final");
        return f;
    }
    if (type == "OverlayRequest") {
        r.only_keys(b, "body", {"mode"});
        return OverlayRequest{r.mode(b)};
    }
    if (type == "Overlay") {
        r.only_keys(b, "body", {"mode", "values"});
        Overlay o{r.mode(b), {}};
        const json& v = r.field(b, "values");
        if (!v.is_array() || v.size() > 100000) r.fail("values", "values must be an array");
        for (const auto& e : v) {
            if (!e.is_number() || !std::isfinite(e.get<double>())) r.fail("values", "values must be finite numbers");
            o.values.push_back(e.get<double>());
        }
        return o;
    }
    if (type == "PhaseAdvance") {
        r.only_keys(b, "body", {"phase", "condition"});
        PhaseAdvance p;
        if (b.contains("phase")) {
            p.phase = parse_phase(r.text(b, "phase", 16, false));
            if (!p.phase) r.fail("phase", "unknown phase");
        }
        if (b.contains("condition")) {
            p.condition = parse_condition(r.text(b, "condition", 8, false));
            if (!p.condition) r.fail("condition", "condition must be IDM|nIDM");
        }
        return p;
    }
    if (type == "CameraPose") {
        r.only_keys(b, "body", {"position", "direction"});
        CameraPose c{r.vec(b, "position", 1e4), r.vec(b, "direction", 1.0 + 1e-3)};
        if (std::fabs(norm(c.direction) - 1.0) > 1e-3) r.fail("direction", "direction must be a unit vector");
        return c;
    }
    if (type == "SurveyResponse") {
        r.only_keys(b, "body", {"items"});
        const json& items = r.field(b, "items");
        if (!items.is_array() || items.size() != 10) r.fail("items", "items must hold exactly 10 scores");
        SurveyResponse s;
        for (std::size_t i = 0; i < 10; ++i) {
            if (!items[i].is_number_integer()) r.fail("items", "items must be integers");
            const auto v = items[i].get<std::int64_t>();
            if (v < 1 || v > 5) r.fail("items", "items must be in 1..5");
            s.items[i] = static_cast<int>(v);
        }
        return s;
    }
    if (type == "Error") {
        r.only_keys(b, "body", {"code", "message"});
        return ErrorBody{r.text(b, "code", 64, false), r.text(b, "message", 1024, false)};
    }
    r.only_keys(b, "body", {});
    if (type == "FinalSelection") return FinalSelection{};
    if (type == "Sync") return Sync{};
    return SyncAck{};
}

}  // namespace wire

inline WireMessage decode_message(std::string_view frame) {
    if (frame.size() > kMaxFrameBytes) throw DecodeError(kMaxFrameBytes, "frame exceeds size limit");
    while (!frame.empty() && (frame.back() == '\n' || frame.back() == '\r')) frame.remove_suffix(1);
    if (frame.empty()) throw DecodeError(0, "empty frame");

    nlohmann::json j;
    try {
        j = nlohmann::json::parse(frame.begin(), frame.end());
    } catch (const nlohmann::json::parse_error& e) {
        throw DecodeError(e.byte > 0 ? e.byte - 1 : 0, "malformed JSON");
    } catch (const nlohmann::json::exception& e) {
        throw DecodeError(0, std::string("unreadable JSON: ") + e.what());  // e.g. integer overflow
    }

    const wire::Reader r(frame);
    r.only_keys(j, "frame", {"type", "session_id", "revision", "body", "think_ms"});
    const std::string type = r.text(j, "type", 32, false);
    bool known = false;
    for (auto t : kMessageTypes) known = known || t == type;
    if (!known) r.fail("type", "unknown message type '" + type + "'");

    WireMessage m;
    m.session_id = r.text(j, "session_id", 128, true);
    m.revision = r.integer(j, "revision", 0, std::int64_t{1} << 53);
    if (j.contains("think_ms")) m.think_ms = r.integer(j, "think_ms", 0, 3600000);
    try {
        m.body = wire::decode_body(r, type, r.field(j, "body"));
    } catch (const nlohmann::json::exception& e) {
        throw DecodeError(0, std::string("unreadable body: ") + e.what());
    }
    return m;
}

}  // namespace exo
