#pragma once

// Encapsulated feedback: seven metrics collapse into three domain labels
// (structure C1-C3, environment C4-C6, fabrication C7), each judged against
// the previous accepted state.

#include <array>
#include <bitset>
#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>

namespace exo {

inline constexpr std::size_t kMetricCount = 7;

struct MetricVector {
    std::array<double, kMetricCount> values{};  // C1..C7 at index 0..6

    double& operator[](std::size_t i) { return values[i]; }
    double operator[](std::size_t i) const { return values[i]; }

    bool valid() const {
        for (double v : values)
            if (!std::isfinite(v)) return false;
        return values[0] >= 0 && values[1] >= 0 && values[2] > 0 && values[3] >= 0 && values[4] >= 0 &&
               values[5] >= 0 && values[6] >= 0;
    }

    friend bool operator==(const MetricVector&, const MetricVector&) = default;
};

inline constexpr std::array<std::string_view, kMetricCount> kMetricNames = {"c1", "c2", "c3", "c4", "c5", "c6", "c7"};

// C6 (solar gain) is a benefit; everything else is a cost.
inline constexpr std::array<bool, kMetricCount> kLowerIsBetter = {true, true, true, true, true, false, true};

enum class Trend { Positive, Neutral, Negative };
enum class Label { Improved, Neutral, Worsened };
enum class Stage { Fast, Final };

inline std::string_view to_string(Label l) {
    switch (l) {
        case Label::Improved: return "improved";
        case Label::Neutral: return "neutral";
        case Label::Worsened: return "worsened";
    }
    return "neutral";
}

inline std::string_view to_string(Stage s) { return s == Stage::Fast ? "fast" : "final"; }

struct EncapsulatedFeedback {
    Label enc1 = Label::Neutral;
    Label enc2 = Label::Neutral;
    Label enc3 = Label::Neutral;
    std::int64_t revision = 0;
    Stage stage = Stage::Final;

    friend bool operator==(const EncapsulatedFeedback&, const EncapsulatedFeedback&) = default;
};

inline constexpr double kDefaultNeutralBand = 0.005;

/// Relative change against `prev`. A zero baseline counts any move away from
/// zero as beyond the band.
inline Trend metric_trend(double prev, double curr, bool lower_is_better, double epsilon = kDefaultNeutralBand) {
    double r;
    if (prev == 0.0) {
        if (curr == 0.0) return Trend::Neutral;
        r = curr > 0.0 ? INFINITY : -INFINITY;
    } else {
        r = (curr - prev) / std::fabs(prev);
    }
    if (!(std::fabs(r) > epsilon)) return Trend::Neutral;
    const bool better = lower_is_better ? r < 0.0 : r > 0.0;
    return better ? Trend::Positive : Trend::Negative;
}

/// Two of three positive -> Improved, two of three negative -> Worsened.
inline Label domain_label(Trend a, Trend b, Trend c) {
    int pos = 0, neg = 0;
    for (Trend t : {a, b, c}) {
        pos += t == Trend::Positive;
        neg += t == Trend::Negative;
    }
    if (pos >= 2) return Label::Improved;
    if (neg >= 2) return Label::Worsened;
    return Label::Neutral;
}

inline Label single_label(Trend t) {
    return t == Trend::Positive ? Label::Improved : t == Trend::Negative ? Label::Worsened : Label::Neutral;
}

using MetricMask = std::bitset<kMetricCount>;

/// Labels using only the metrics in `available`; the rest count as Neutral.
inline EncapsulatedFeedback encapsulate(const MetricVector& prev, const MetricVector& curr, const MetricMask& available,
                                        double epsilon = kDefaultNeutralBand) {
    std::array<Trend, kMetricCount> t{};
    for (std::size_t i = 0; i < kMetricCount; ++i)
        t[i] = available.test(i) ? metric_trend(prev[i], curr[i], kLowerIsBetter[i], epsilon) : Trend::Neutral;
    EncapsulatedFeedback fb;
    fb.enc1 = domain_label(t[0], t[1], t[2]);
    fb.enc2 = domain_label(t[3], t[4], t[5]);
    fb.enc3 = single_label(t[6]);
    fb.stage = available.all() ? Stage::Final : Stage::Fast;
    return fb;
}

inline EncapsulatedFeedback encapsulate(const MetricVector& prev, const MetricVector& curr,
                                        double epsilon = kDefaultNeutralBand) {
    return encapsulate(prev, curr, MetricMask{}.set(), epsilon);
}

}  // namespace exo
