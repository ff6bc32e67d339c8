#pragma once

// Offline analysis of session logs: decision times, rank tests, learning
// slopes, final-decision outcomes, the baseline-deviation matrix, SUS scores
// and camera-pose summaries. Every table is written as CSV; test statistics go
// to tests.txt.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "exo/feedback.hpp"
#include "exo/protocol.hpp"
#include "exo/session_log.hpp"
#include "exo/stats.hpp"

namespace exo {

struct DecisionSample {
    std::string participant_id;
    Condition condition = Condition::IDM;
    int attempt_index = 0;
    double decision_time_s = 0.0;
};

struct PoseRecord {
    Vec3 position;
    Vec3 direction;
};

struct TaskPhaseRecord {
    Phase phase = Phase::Task1;
    Condition condition = Condition::IDM;
    std::vector<std::int64_t> edit_ts;
    std::vector<MetricVector> finals;  // EvalFinal after edits, excluding the phase baseline
    std::optional<std::size_t> finals_at_selection;
};

struct ParsedSession {
    std::string participant_id;
    std::string session_id;
    std::map<Condition, TaskPhaseRecord> tasks;
    std::vector<PoseRecord> poses;
    std::optional<std::array<int, 10>> survey;
};

namespace analytics_detail {

inline Vec3 vec_from(const nlohmann::json& a) { return {a.at(0).get<double>(), a.at(1).get<double>(), a.at(2).get<double>()}; }

inline std::string fmt(double v) {
    if (std::isnan(v)) return "nan";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

inline void write_atomic(const std::filesystem::path& path, const std::string& content) {
    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::trunc | std::ios::binary);
        if (!out) throw std::runtime_error("cannot write " + tmp);
        out << content;
    }
    std::filesystem::rename(tmp, path);
}

}  // namespace analytics_detail

inline ParsedSession parse_session(const std::vector<SessionEvent>& events) {
    using analytics_detail::vec_from;
    if (events.empty() || events.front().kind != EventKind::SessionStart)
        throw ProtocolError("log does not start with SessionStart");
    ParsedSession s;
    s.participant_id = events.front().payload.at("participant_id").get<std::string>();
    s.session_id = events.front().payload.at("session_id").get<std::string>();

    TaskPhaseRecord* current = nullptr;
    std::int64_t phase_revision = -1;
    try {
        for (const auto& e : events) {
            const auto& p = e.payload;
            switch (e.kind) {
                case EventKind::PhaseChange: {
                    current = nullptr;
                    const auto phase = parse_phase(p.at("phase").get<std::string>());
                    if (!phase) throw ProtocolError("unknown phase in log");
                    if (*phase == Phase::Task1 || *phase == Phase::Task2) {
                        const auto cond = parse_condition(p.at("condition").get<std::string>());
                        if (!cond) throw ProtocolError("unknown condition in log");
                        TaskPhaseRecord rec;
                        rec.phase = *phase;
                        rec.condition = *cond;
                        current = &(s.tasks[*cond] = rec);
                        phase_revision = p.at("revision").get<std::int64_t>();
                    }
                    break;
                }
                case EventKind::Edit:
                    if (current) current->edit_ts.push_back(e.ts_ms);
                    break;
                case EventKind::EvalFinal:
                    if (current && p.at("revision").get<std::int64_t>() != phase_revision) {
                        MetricVector v;
                        const auto& m = p.at("metrics");
                        for (std::size_t i = 0; i < kMetricCount; ++i) v.values[i] = m.at(i).get<double>();
                        current->finals.push_back(v);
                    }
                    break;
                case EventKind::FinalSelection:
                    if (current && !current->finals_at_selection) current->finals_at_selection = current->finals.size();
                    break;
                case EventKind::CameraPose:
                    s.poses.push_back({vec_from(p.at("position")), vec_from(p.at("direction"))});
                    break;
                case EventKind::SurveyResponse: {
                    std::array<int, 10> items{};
                    for (std::size_t i = 0; i < 10; ++i) items[i] = p.at("items").at(i).get<int>();
                    s.survey = items;
                    break;
                }
                default:
                    break;
            }
        }
    } catch (const nlohmann::json::exception& ex) {
        throw ProtocolError(std::string("malformed event payload: ") + ex.what());
    }
    return s;
}

/// Gaps between consecutive edits within each task phase, in seconds. The
/// first edit of a phase has no predecessor; zero gaps are not decisions.
inline std::vector<DecisionSample> decision_samples(const ParsedSession& s) {
    std::vector<DecisionSample> out;
    for (const auto& [cond, rec] : s.tasks) {
        int attempt = 0;
        for (std::size_t i = 1; i < rec.edit_ts.size(); ++i) {
            const auto gap = rec.edit_ts[i] - rec.edit_ts[i - 1];
            if (gap <= 0) continue;
            out.push_back({s.participant_id, cond, attempt++, static_cast<double>(gap) / 1000.0});
        }
    }
    return out;
}

struct Outcome {
    MetricVector metrics;
    std::size_t decisions = 0;  // how many were averaged
    bool flagged = false;       // fewer than k, or no FinalSelection
};

/// Mean of the last k EvalFinal vectors preceding FinalSelection.
inline Outcome final_outcome(const ParsedSession& s, Condition c, std::size_t k = 3) {
    const auto it = s.tasks.find(c);
    if (it == s.tasks.end())
        throw MissingPhase(s.participant_id + " has no " + std::string(to_string(c)) + " task");
    const auto& rec = it->second;
    const std::size_t end = rec.finals_at_selection.value_or(rec.finals.size());
    const std::size_t begin = end > k ? end - k : 0;
    Outcome o;
    o.decisions = end - begin;
    o.flagged = o.decisions < k || !rec.finals_at_selection;
    if (o.decisions == 0) {
        o.metrics.values.fill(std::nan(""));
        return o;
    }
    for (std::size_t i = begin; i < end; ++i)
        for (std::size_t j = 0; j < kMetricCount; ++j) o.metrics.values[j] += rec.finals[i].values[j];
    for (auto& v : o.metrics.values) v /= static_cast<double>(o.decisions);
    return o;
}

/// Metrics of the selected design (the last EvalFinal before FinalSelection).
inline std::optional<MetricVector> selected_metrics(const ParsedSession& s, Condition c) {
    const Outcome o = final_outcome(s, c, 1);
    if (o.decisions == 0) return std::nullopt;
    return o.metrics;
}

inline bool better(std::size_t metric, double candidate, double reference) {
    return kLowerIsBetter[metric] ? candidate < reference : candidate > reference;
}

struct ParticipantComparison {
    std::string participant_id;
    Outcome idm;
    Outcome nidm;
    std::array<double, kMetricCount> pct_change{};  // (IDM - nIDM) / |nIDM| * 100
    std::array<bool, kMetricCount> improved{};
    int improved_count = 0;
    std::string bucket;  // "5-7", "3-4" or "0-2"
};

inline std::string improvement_bucket(int count) { return count >= 5 ? "5-7" : count >= 3 ? "3-4" : "0-2"; }

struct FinalDecisionsReport {
    std::vector<ParticipantComparison> rows;
    std::array<int, kMetricCount> participants_improving{};
    std::array<std::size_t, kMetricCount> ranking{};  // metric indices, most improved first
    std::map<std::string, int> bucket_counts;
};

inline FinalDecisionsReport final_decisions_report(const std::vector<ParsedSession>& sessions, std::size_t k = 3) {
    FinalDecisionsReport r;
    r.bucket_counts = {{"5-7", 0}, {"3-4", 0}, {"0-2", 0}};
    std::array<double, kMetricCount> gain{};
    for (const auto& s : sessions) {
        ParticipantComparison row;
        row.participant_id = s.participant_id;
        row.idm = final_outcome(s, Condition::IDM, k);
        row.nidm = final_outcome(s, Condition::nIDM, k);
        for (std::size_t j = 0; j < kMetricCount; ++j) {
            const double a = row.idm.metrics[j], b = row.nidm.metrics[j];
            row.pct_change[j] = a == b ? 0.0 : b == 0.0 ? std::nan("") : (a - b) / std::fabs(b) * 100.0;
            row.improved[j] = better(j, a, b);
            if (row.improved[j]) {
                ++row.improved_count;
                ++r.participants_improving[j];
                gain[j] += std::fabs(row.pct_change[j]);
            }
        }
        row.bucket = improvement_bucket(row.improved_count);
        ++r.bucket_counts[row.bucket];
        r.rows.push_back(std::move(row));
    }
    for (std::size_t j = 0; j < kMetricCount; ++j) r.ranking[j] = j;
    std::stable_sort(r.ranking.begin(), r.ranking.end(), [&](std::size_t a, std::size_t b) {
        if (r.participants_improving[a] != r.participants_improving[b])
            return r.participants_improving[a] > r.participants_improving[b];
        return gain[a] > gain[b];
    });
    return r;
}

struct BaselineRow {
    std::string participant_id;
    std::array<double, kMetricCount> deviation_pct{};
    std::array<bool, kMetricCount> green{};
    double fraction = 0.0;
    bool blue_border = false;
};

struct BaselineMatrix {
    MetricVector baseline;
    std::vector<BaselineRow> rows;
};

inline constexpr double kBlueBorderFraction = 4.0 / 7.0;

/// Baseline = mean of every participant's final outcome over both conditions;
/// each row compares the participant's IDM outcome against it.
inline BaselineMatrix baseline_deviation_matrix(const std::vector<ParsedSession>& sessions, std::size_t k = 3) {
    BaselineMatrix m;
    if (sessions.empty()) return m;
    std::vector<std::pair<MetricVector, MetricVector>> outcomes;
    for (const auto& s : sessions)
        outcomes.emplace_back(final_outcome(s, Condition::IDM, k).metrics, final_outcome(s, Condition::nIDM, k).metrics);
    for (std::size_t j = 0; j < kMetricCount; ++j) {
        double sum = 0.0;
        for (const auto& [idm, nidm] : outcomes) sum += idm[j] + nidm[j];
        m.baseline.values[j] = sum / (2.0 * static_cast<double>(outcomes.size()));
    }
    for (std::size_t i = 0; i < sessions.size(); ++i) {
        BaselineRow row;
        row.participant_id = sessions[i].participant_id;
        int greens = 0;
        for (std::size_t j = 0; j < kMetricCount; ++j) {
            const double v = outcomes[i].first[j], b = m.baseline[j];
            row.deviation_pct[j] = b == 0.0 ? (v == 0.0 ? 0.0 : std::nan("")) : (v - b) / std::fabs(b) * 100.0;
            row.green[j] = better(j, v, b);
            greens += row.green[j];
        }
        row.fraction = greens / 7.0;
        row.blue_border = greens >= 4;
        m.rows.push_back(row);
    }
    return m;
}

struct SpatialRow {
    std::string participant_id;
    std::size_t poses = 0;
    double sd_x = 0.0;
    double sd_z = 0.0;
    std::size_t front = 0;
    std::size_t back = 0;
    bool absent = false;
};

/// Outward facade normal; the host building lies at y < 0.
inline constexpr Vec3 kFacadeNormal{0.0, 1.0, 0.0};

/// A pose is in the front hemisphere when it stands outside the facade plane
/// and looks back toward it; anything else (inside, or facing away) is back.
inline bool front_hemisphere(const PoseRecord& p) {
    return dot(p.position, kFacadeNormal) > 0.0 && dot(p.direction, kFacadeNormal) < 0.0;
}

inline SpatialRow spatial_summary(const ParsedSession& s) {
    SpatialRow row;
    row.participant_id = s.participant_id;
    row.poses = s.poses.size();
    if (s.poses.empty()) {
        row.absent = true;
        return row;
    }
    std::vector<double> xs, zs;
    for (const auto& p : s.poses) {
        xs.push_back(p.position.x);
        zs.push_back(p.position.z);
        (front_hemisphere(p) ? row.front : row.back)++;
    }
    row.sd_x = stddev(xs);
    row.sd_z = stddev(zs);
    return row;
}

struct SusRow {
    std::string participant_id;
    std::array<int, 10> items{};
    std::optional<double> score;  // empty when an item is out of range
};

/// Reads "participant_id,q1,...,q10" with a header line.
inline std::vector<SusRow> read_sus_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ProtocolError("cannot open SUS file " + path.string());
    std::vector<SusRow> rows;
    std::string line;
    bool header = true;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (header) {
            header = false;
            if (line.rfind("participant_id", 0) == 0) continue;
        }
        std::stringstream ss(line);
        std::string cell;
        std::vector<std::string> cells;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (cells.size() != 11) throw ProtocolError("SUS row needs participant_id and 10 items: " + line);
        SusRow r;
        r.participant_id = cells[0];
        bool ok = true;
        for (std::size_t i = 0; i < 10; ++i) {
            try {
                std::size_t used = 0;
                r.items[i] = std::stoi(cells[i + 1], &used);
                ok = ok && used == cells[i + 1].size();
            } catch (const std::exception&) {
                ok = false;
            }
        }
        if (ok) {
            try {
                r.score = sus_score(r.items);
            } catch (const OutOfRangeItem&) {
            }
        }
        rows.push_back(r);
    }
    return rows;
}

struct AnalysisOptions {
    bool exact_p = false;
    std::size_t k = 3;
    double trim_fraction = 0.05;
};

inline std::vector<ParsedSession> load_sessions(const std::filesystem::path& dir) {
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".jsonl") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    std::vector<ParsedSession> out;
    std::map<std::string, std::string> seen;
    for (const auto& f : files) {
        out.push_back(parse_session(read_log(f)));
        auto [it, fresh] = seen.emplace(out.back().participant_id, f.filename().string());
        if (!fresh) throw ProtocolError("participant " + it->first + " appears in both " + it->second + " and " +
                                        f.filename().string());
    }
    std::sort(out.begin(), out.end(),
              [](const ParsedSession& a, const ParsedSession& b) { return a.participant_id < b.participant_id; });
    return out;
}

inline const std::vector<std::string>& analysis_outputs() {
    static const std::vector<std::string> names = {"decision_times.csv", "tests.txt",          "slopes.csv",
                                                   "final_decisions.csv", "baseline_matrix.csv", "sus.csv",
                                                   "spatial.csv"};
    return names;
}

/// Runs the whole pipeline and writes every output into `out_dir`.
inline void run_analysis(const std::vector<ParsedSession>& sessions, const std::vector<SusRow>& sus_rows,
                         const std::filesystem::path& out_dir, const AnalysisOptions& opt = {}) {
    using analytics_detail::fmt;
    using analytics_detail::write_atomic;
    std::filesystem::create_directories(out_dir);
    std::ostringstream tests;
    tests << "sessions " << sessions.size() << "\n";

    // Decision times.
    std::ostringstream dt;
    dt << "participant_id,condition,attempt_index,decision_time_s\n";
    std::map<Condition, std::vector<double>> times;
    std::map<std::string, std::map<Condition, std::vector<double>>> per_participant;
    for (const auto& s : sessions) {
        for (const auto& d : decision_samples(s)) {
            dt << d.participant_id << ',' << to_string(d.condition) << ',' << d.attempt_index << ','
               << fmt(d.decision_time_s) << '\n';
            times[d.condition].push_back(d.decision_time_s);
            per_participant[d.participant_id][d.condition].push_back(d.decision_time_s);
        }
    }
    write_atomic(out_dir / "decision_times.csv", dt.str());

    tests << "\n[decision_times]\n";
    for (Condition c : {Condition::IDM, Condition::nIDM}) {
        const auto& v = times[c];
        const std::string name(to_string(c));
        tests << name << ".n " << v.size() << "\n";
        if (v.empty()) continue;
        const auto trimmed = trim_outliers(v, opt.trim_fraction);
        tests << name << ".mean_s " << fmt(mean(v)) << "\n"
              << name << ".median_s " << fmt(median(v)) << "\n"
              << name << ".mean_s_trimmed " << fmt(mean(trimmed)) << "\n"
              << name << ".n_trimmed " << trimmed.size() << "\n";
    }
    if (!times[Condition::IDM].empty() && !times[Condition::nIDM].empty()) {
        const auto mw = mann_whitney_u(times[Condition::IDM], times[Condition::nIDM], opt.exact_p);
        tests << "mann_whitney.U_IDM " << fmt(mw.statistic) << "\nmann_whitney.z " << fmt(mw.z)
              << "\nmann_whitney.p " << fmt(mw.p) << "\nmann_whitney.exact " << (mw.exact ? "yes" : "no") << "\n";
    } else {
        tests << "mann_whitney unavailable (a condition has no decisions)\n";
    }
    std::vector<double> paired;
    for (const auto& [pid, byc] : per_participant) {
        const auto a = byc.find(Condition::IDM), b = byc.find(Condition::nIDM);
        if (a == byc.end() || b == byc.end()) continue;
        const std::size_t n = std::min(a->second.size(), b->second.size());
        for (std::size_t i = 0; i < n; ++i) paired.push_back(a->second[i] - b->second[i]);
    }
    try {
        const auto w = wilcoxon_signed_rank(paired, opt.exact_p);
        tests << "wilcoxon.pairs " << w.n_used << "\nwilcoxon.W " << fmt(w.statistic) << "\nwilcoxon.W_plus "
              << fmt(w.w_plus) << "\nwilcoxon.W_minus " << fmt(w.w_minus) << "\nwilcoxon.z " << fmt(w.z)
              << "\nwilcoxon.p " << fmt(w.p) << "\nwilcoxon.exact " << (w.exact ? "yes" : "no") << "\n";
    } catch (const AllZeroDifferences&) {
        tests << "wilcoxon unavailable (no non-zero paired differences)\n";
    }

    // Learning slopes.
    std::ostringstream sl;
    sl << "participant_id,condition,n_attempts,slope_s_per_attempt\n";
    std::map<Condition, std::vector<double>> slopes;
    std::vector<double> slope_diffs;
    for (const auto& s : sessions) {
        std::map<Condition, double> mine;
        for (Condition c : {Condition::IDM, Condition::nIDM}) {
            const auto& v = per_participant[s.participant_id][c];
            sl << s.participant_id << ',' << to_string(c) << ',' << v.size() << ',';
            if (v.size() >= 2) {
                mine[c] = learning_slope(v);
                slopes[c].push_back(mine[c]);
                sl << fmt(mine[c]);
            } else {
                sl << "NA";
            }
            sl << '\n';
        }
        if (mine.size() == 2) slope_diffs.push_back(mine[Condition::IDM] - mine[Condition::nIDM]);
    }
    write_atomic(out_dir / "slopes.csv", sl.str());
    tests << "\n[slopes]\n";
    for (Condition c : {Condition::IDM, Condition::nIDM})
        if (!slopes[c].empty()) tests << to_string(c) << ".mean_slope " << fmt(mean(slopes[c])) << "\n";
    if (slope_diffs.size() >= 2) {
        const auto t = paired_t_test(slope_diffs);
        tests << "paired_t.t " << fmt(t.t) << "\npaired_t.df " << fmt(t.df) << "\npaired_t.p " << fmt(t.p) << "\n";
    } else {
        tests << "paired_t unavailable (fewer than two participants with slopes in both conditions)\n";
    }

    // Final decisions and baseline matrix need both task phases.
    std::vector<ParsedSession> complete;
    for (const auto& s : sessions)
        if (s.tasks.size() == 2) complete.push_back(s);
        else tests << "excluded " << s.participant_id << " (missing a task phase)\n";
    const auto report = final_decisions_report(complete, opt.k);
    std::ostringstream fd;
    fd << "participant_id,row,n_decisions,flagged";
    for (auto n : kMetricNames) fd << ',' << n;
    fd << ",improved_count,bucket\n";
    for (const auto& r : report.rows) {
        for (const auto& [label, o] : {std::pair{"IDM", &r.idm}, std::pair{"nIDM", &r.nidm}}) {
            fd << r.participant_id << ',' << label << ',' << o->decisions << ',' << (o->flagged ? 1 : 0);
            for (double v : o->metrics.values) fd << ',' << fmt(v);
            fd << ",,\n";
        }
        fd << r.participant_id << ",pct_change,,";
        for (double v : r.pct_change) fd << ',' << fmt(v);
        fd << ',' << r.improved_count << ',' << r.bucket << '\n';
    }
    write_atomic(out_dir / "final_decisions.csv", fd.str());
    tests << "\n[final_decisions]\n";
    for (std::size_t j = 0; j < kMetricCount; ++j)
        tests << "improving." << kMetricNames[j] << ' ' << report.participants_improving[j] << "\n";
    tests << "ranking";
    for (auto j : report.ranking) tests << ' ' << kMetricNames[j];
    tests << "\n";
    for (const auto& [bucket, n] : report.bucket_counts)
        tests << "bucket." << bucket << ' ' << n << ' '
              << fmt(complete.empty() ? 0.0 : 100.0 * n / static_cast<double>(complete.size())) << "%\n";

    const auto matrix = baseline_deviation_matrix(complete, opt.k);
    std::ostringstream bm;
    bm << "participant_id";
    for (auto n : kMetricNames) bm << ",dev_" << n;
    for (auto n : kMetricNames) bm << ",green_" << n;
    bm << ",fraction,blue_border\n";
    for (const auto& r : matrix.rows) {
        bm << r.participant_id;
        for (double v : r.deviation_pct) bm << ',' << fmt(v);
        for (bool g : r.green) bm << ',' << (g ? 1 : 0);
        bm << ',' << fmt(r.fraction) << ',' << (r.blue_border ? 1 : 0) << '\n';
    }
    write_atomic(out_dir / "baseline_matrix.csv", bm.str());
    tests << "\n[baseline]\n";
    for (std::size_t j = 0; j < kMetricCount; ++j)
        tests << "baseline." << kMetricNames[j] << ' ' << fmt(matrix.baseline[j]) << "\n";

    // SUS: the CSV wins; logged responses fill in participants it lacks.
    std::vector<SusRow> sus = sus_rows;
    for (const auto& s : sessions) {
        if (!s.survey) continue;
        const bool listed = std::any_of(sus.begin(), sus.end(),
                                        [&](const SusRow& r) { return r.participant_id == s.participant_id; });
        if (!listed) {
            SusRow r{s.participant_id, *s.survey, std::nullopt};
            try {
                r.score = sus_score(r.items);
            } catch (const OutOfRangeItem&) {
            }
            sus.push_back(r);
        }
    }
    std::sort(sus.begin(), sus.end(), [](const SusRow& a, const SusRow& b) { return a.participant_id < b.participant_id; });
    std::ostringstream su;
    su << "participant_id,score,benchmark\n";
    std::vector<double> scores;
    for (const auto& r : sus) {
        su << r.participant_id << ',';
        if (r.score) {
            su << fmt(*r.score) << ',' << sus_class(*r.score) << '\n';
            scores.push_back(*r.score);
        } else {
            su << ",invalid\n";
        }
    }
    write_atomic(out_dir / "sus.csv", su.str());
    tests << "\n[sus]\nsus.n " << scores.size() << "\n";
    if (!scores.empty()) {
        const auto [lo, hi] = std::minmax_element(scores.begin(), scores.end());
        const double m = mean(scores);
        tests << "sus.mean " << fmt(m) << "\nsus.sd " << fmt(stddev(scores)) << "\nsus.min " << fmt(*lo)
              << "\nsus.max " << fmt(*hi) << "\nsus.mean_vs_68 " << sus_class(m) << "\n";
    }

    std::ostringstream sp;
    sp << "participant_id,poses,sd_x_m,sd_z_m,front,back,front_share,status\n";
    for (const auto& s : sessions) {
        const auto r = spatial_summary(s);
        sp << r.participant_id << ',' << r.poses << ',';
        if (r.absent) {
            sp << ",,,,,absent\n";
            continue;
        }
        sp << fmt(r.sd_x) << ',' << fmt(r.sd_z) << ',' << r.front << ',' << r.back << ','
           << fmt(static_cast<double>(r.front) / static_cast<double>(r.poses)) << ",ok\n";
    }
    write_atomic(out_dir / "spatial.csv", sp.str());

    write_atomic(out_dir / "tests.txt", tests.str());
}

}  // namespace exo
