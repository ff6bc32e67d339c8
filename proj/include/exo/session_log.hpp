#pragma once

// Append-only session log: one JSON object per line with exactly the keys
// ts_ms, kind and payload. Timestamps are session-relative milliseconds and
// never decrease within a file.

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "exo/errors.hpp"

namespace exo {

enum class EventKind {
    SessionStart,
    PhaseChange,
    Edit,
    Snap,
    EvalFast,
    EvalFinal,
    FeedbackShown,
    CameraPose,
    FinalSelection,
    SurveyResponse
};

inline constexpr std::array<std::string_view, 10> kEventKindNames = {
    "SessionStart", "PhaseChange",   "Edit",       "Snap",           "EvalFast",
    "EvalFinal",    "FeedbackShown", "CameraPose", "FinalSelection", "SurveyResponse"};

inline std::string_view to_string(EventKind k) { return kEventKindNames[static_cast<std::size_t>(k)]; }

inline std::optional<EventKind> parse_event_kind(std::string_view s) {
    for (std::size_t i = 0; i < kEventKindNames.size(); ++i)
        if (kEventKindNames[i] == s) return static_cast<EventKind>(i);
    return std::nullopt;
}

struct SessionEvent {
    std::int64_t ts_ms = 0;
    EventKind kind = EventKind::SessionStart;
    nlohmann::json payload = nlohmann::json::object();

    friend bool operator==(const SessionEvent&, const SessionEvent&) = default;
};

inline std::string format_event(const SessionEvent& e) {
    const nlohmann::json j = {{"ts_ms", e.ts_ms}, {"kind", to_string(e.kind)}, {"payload", e.payload}};
    return j.dump();
}

inline SessionEvent parse_event(std::string_view line) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(line.begin(), line.end());
    } catch (const nlohmann::json::parse_error& e) {
        throw ProtocolError(std::string("malformed log line: ") + e.what());
    }
    if (!j.is_object() || j.size() != 3 || !j.contains("ts_ms") || !j.contains("kind") || !j.contains("payload"))
        throw ProtocolError("log line must have exactly ts_ms, kind, payload");
    if (!j["ts_ms"].is_number_integer()) throw ProtocolError("ts_ms must be an integer");
    if (!j["kind"].is_string()) throw ProtocolError("kind must be a string");
    const auto kind = parse_event_kind(j["kind"].get<std::string>());
    if (!kind) throw ProtocolError("unknown event kind " + j["kind"].get<std::string>());
    return SessionEvent{j["ts_ms"].get<std::int64_t>(), *kind, j["payload"]};
}

/// Reads a whole log. Blank lines are skipped; timestamp order is checked.
inline std::vector<SessionEvent> read_log(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ProtocolError("cannot open log " + path.string());
    std::vector<SessionEvent> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        out.push_back(parse_event(line));
        if (out.size() > 1 && out.back().ts_ms < out[out.size() - 2].ts_ms)
            throw ClockRegression("log " + path.string() + " has decreasing timestamps");
    }
    return out;
}

class LogWriter {
public:
    explicit LogWriter(const std::filesystem::path& path) : path_(path), out_(path, std::ios::trunc) {
        if (!out_) throw ProtocolError("cannot open log for writing: " + path.string());
    }

    /// Writes one line and flushes. An event older than the previous one is
    /// refused with ClockRegression and nothing is written.
    void append(const SessionEvent& e) {
        if (last_ts_ && e.ts_ms < *last_ts_)
            throw ClockRegression("event at " + std::to_string(e.ts_ms) + " ms after " + std::to_string(*last_ts_) +
                                  " ms");
        out_ << format_event(e) << '\n';
        out_.flush();
        last_ts_ = e.ts_ms;
        ++count_;
    }

    std::size_t size() const { return count_; }
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
    std::ofstream out_;
    std::optional<std::int64_t> last_ts_;
    std::size_t count_ = 0;
};

}  // namespace exo
