#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "exo/session_log.hpp"

using namespace exo;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name) {
    const auto dir = fs::temp_directory_path() / "exo_log_tests";
    fs::create_directories(dir);
    return dir / name;
}

std::size_t line_count(const fs::path& p) {
    std::ifstream in(p);
    std::size_t n = 0;
    for (std::string line; std::getline(in, line);) ++n;
    return n;
}

}  // namespace

TEST(SessionLog, SingleStartEventIsOneLine) {
    const auto p = temp_file("one.jsonl");
    {
        LogWriter w(p);
        w.append({0, EventKind::SessionStart, {{"seed", 1}}});
        EXPECT_EQ(w.size(), 1u);
    }
    EXPECT_EQ(line_count(p), 1u);
    const auto ev = read_log(p);
    ASSERT_EQ(ev.size(), 1u);
    EXPECT_EQ(ev[0].kind, EventKind::SessionStart);
}

TEST(SessionLog, ClockRegressionOnAppend) {
    const auto p = temp_file("regress.jsonl");
    LogWriter w(p);
    w.append({0, EventKind::SessionStart, {}});
    w.append({50, EventKind::CameraPose, {}});
    w.append({50, EventKind::CameraPose, {}});
    EXPECT_THROW(w.append({49, EventKind::Edit, {}}), ClockRegression);
    EXPECT_EQ(w.size(), 3u);
    EXPECT_EQ(line_count(p), 3u);
}

TEST(SessionLog, ClockRegressionOnRead) {
    const auto p = temp_file("bad.jsonl");
    std::ofstream(p) << format_event({10, EventKind::SessionStart, {}}) << "\n"
                     << format_event({5, EventKind::Edit, {}}) << "\n";
    EXPECT_THROW(read_log(p), ClockRegression);
}

TEST(SessionLog, FormatParseRoundTrip) {
    for (std::size_t k = 0; k < kEventKindNames.size(); ++k) {
        const SessionEvent e{static_cast<std::int64_t>(k) * 1000, static_cast<EventKind>(k),
                             {{"x", 1.25}, {"list", {1, 2, 3}}, {"name", "n"}}};
        EXPECT_EQ(parse_event(format_event(e)), e);
    }
}

TEST(SessionLog, RejectsMalformedLines) {
    EXPECT_THROW(parse_event("{"), ProtocolError);
    EXPECT_THROW(parse_event(R"({"ts_ms":1,"kind":"Edit"})"), ProtocolError);
    EXPECT_THROW(parse_event(R"({"ts_ms":1,"kind":"Nope","payload":{}})"), ProtocolError);
    EXPECT_THROW(parse_event(R"({"ts_ms":1.5,"kind":"Edit","payload":{}})"), ProtocolError);
    EXPECT_THROW(parse_event(R"({"ts_ms":1,"kind":"Edit","payload":{},"x":0})"), ProtocolError);
}
