#pragma once

// Rank tests, regression slope, trimming and SUS scoring used by the
// analytics pipeline. p-values are two-sided throughout.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

#include "exo/errors.hpp"

namespace exo {

struct TestResult {
    double statistic = 0.0;
    double p = 1.0;
    double z = 0.0;
    bool exact = false;
};

/// Midranks (1-based) of `v`; ties share the mean of the ranks they span.
inline std::vector<double> midranks(const std::vector<double>& v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < idx.size();) {
        std::size_t j = i;
        while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
        const double mid = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) r[idx[k]] = mid;
        i = j + 1;
    }
    return r;
}

/// Sum of t^3 - t over tie groups.
inline double tie_term(const std::vector<double>& v) {
    std::map<double, double> counts;
    for (double x : v) counts[x] += 1.0;
    double s = 0.0;
    for (const auto& [_, t] : counts) s += t * t * t - t;
    return s;
}

inline double normal_two_sided(double z) { return std::min(1.0, std::erfc(std::fabs(z) / std::sqrt(2.0))); }

namespace stats_detail {

// Number of ways to pick `n` of `scores` (integers) per total; index = total.
inline std::vector<long double> subset_sum_counts(const std::vector<std::int64_t>& scores, std::size_t n) {
    const std::int64_t total = std::accumulate(scores.begin(), scores.end(), std::int64_t{0});
    std::vector<std::vector<long double>> dp(n + 1, std::vector<long double>(static_cast<std::size_t>(total) + 1, 0.0L));
    dp[0][0] = 1.0L;
    std::size_t seen = 0;
    for (std::int64_t s : scores) {
        ++seen;
        for (std::size_t k = std::min(n, seen); k >= 1; --k)
            for (std::int64_t t = total; t >= s; --t)
                dp[k][static_cast<std::size_t>(t)] += dp[k - 1][static_cast<std::size_t>(t - s)];
    }
    return dp[n];
}

}  // namespace stats_detail

/// Mann-Whitney U for sample `a`. The normal approximation uses the tie and
/// continuity corrections; `exact` switches to the permutation distribution
/// conditional on the observed ties (min(n, m) <= 8 only).
inline TestResult mann_whitney_u(const std::vector<double>& a, const std::vector<double>& b, bool exact = false) {
    if (a.empty() || b.empty()) throw EmptySample("Mann-Whitney needs two non-empty samples");
    const double n = static_cast<double>(a.size()), m = static_cast<double>(b.size()), N = n + m;
    std::vector<double> all(a);
    all.insert(all.end(), b.begin(), b.end());
    const std::vector<double> r = midranks(all);
    const double ra = std::accumulate(r.begin(), r.begin() + static_cast<std::ptrdiff_t>(a.size()), 0.0);

    TestResult out;
    out.statistic = ra - n * (n + 1.0) / 2.0;
    const double mu = n * m / 2.0;
    const double var = n * m / 12.0 * ((N + 1.0) - tie_term(all) / (N * (N - 1.0)));
    if (var > 0.0) {
        const double dev = std::max(0.0, std::fabs(out.statistic - mu) - 0.5);
        out.z = dev / std::sqrt(var);
        out.p = normal_two_sided(out.z);
    }
    const std::size_t small = std::min(a.size(), b.size());
    if (exact && small <= 8 && N * (N + 1.0) <= 4e6) {
        // Doubled midranks are integers. Count subsets of the smaller sample's
        // size by rank sum; the two-sided tail is the same from either side.
        std::vector<std::int64_t> scores;
        for (double x : r) scores.push_back(std::llround(2.0 * x));
        const auto counts = stats_detail::subset_sum_counts(scores, small);
        const double k = static_cast<double>(small);
        const double u_small = a.size() == small ? out.statistic : n * m - out.statistic;
        const double obs = std::fabs(2.0 * u_small - 2.0 * mu);
        long double hit = 0.0L, all_ways = 0.0L;
        for (std::size_t t = 0; t < counts.size(); ++t) {
            if (counts[t] == 0.0L) continue;
            all_ways += counts[t];
            const double u2 = static_cast<double>(t) - k * (k + 1.0);
            if (std::fabs(u2 - 2.0 * mu) >= obs - 1e-9) hit += counts[t];
        }
        out.p = static_cast<double>(hit / all_ways);
        out.exact = true;
    }
    return out;
}

struct SignedRankResult : TestResult {
    double w_plus = 0.0;
    double w_minus = 0.0;
    std::size_t n_used = 0;  // pairs left after dropping zero differences
};

/// Wilcoxon signed-rank on differences x - y. Zero differences are dropped
/// before ranking. W is the smaller signed-rank sum.
inline SignedRankResult wilcoxon_signed_rank(const std::vector<double>& differences, bool exact = false) {
    std::vector<double> d;
    for (double x : differences)
        if (x != 0.0) d.push_back(x);
    if (d.empty()) throw AllZeroDifferences("every paired difference is zero");
    std::vector<double> mags;
    for (double x : d) mags.push_back(std::fabs(x));
    const std::vector<double> r = midranks(mags);

    SignedRankResult out;
    out.n_used = d.size();
    for (std::size_t i = 0; i < d.size(); ++i) (d[i] > 0 ? out.w_plus : out.w_minus) += r[i];
    out.statistic = std::min(out.w_plus, out.w_minus);

    const double n = static_cast<double>(d.size());
    const double mu = n * (n + 1.0) / 4.0;
    const double var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - tie_term(mags) / 48.0;
    if (var > 0.0) {
        out.z = std::max(0.0, std::fabs(out.statistic - mu) - 0.5) / std::sqrt(var);
        out.p = normal_two_sided(out.z);
    }
    if (exact && d.size() <= 12) {
        // Every sign assignment is equally likely under the null.
        std::vector<std::int64_t> scores;
        for (double x : r) scores.push_back(std::llround(2.0 * x));
        const std::int64_t total = std::accumulate(scores.begin(), scores.end(), std::int64_t{0});
        std::vector<long double> ways(static_cast<std::size_t>(total) + 1, 0.0L);
        ways[0] = 1.0L;
        for (std::int64_t s : scores)
            for (std::int64_t t = total; t >= s; --t)
                ways[static_cast<std::size_t>(t)] += ways[static_cast<std::size_t>(t - s)];
        const double obs = std::fabs(2.0 * out.w_plus - 2.0 * mu);
        long double hit = 0.0L, all_ways = 0.0L;
        for (std::size_t t = 0; t < ways.size(); ++t) {
            all_ways += ways[t];
            if (std::fabs(static_cast<double>(t) - 2.0 * mu) >= obs - 1e-9) hit += ways[t];
        }
        out.p = static_cast<double>(hit / all_ways);
        out.exact = true;
    }
    return out;
}

/// OLS slope of `y` against 0, 1, 2, ...
inline double learning_slope(const std::vector<double>& y) {
    if (y.size() < 2) throw TooFewPoints("a slope needs at least two attempts");
    const double n = static_cast<double>(y.size());
    const double xbar = (n - 1.0) / 2.0;
    const double ybar = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double dx = static_cast<double>(i) - xbar;
        sxy += dx * (y[i] - ybar);
        sxx += dx * dx;
    }
    return sxy / sxx;
}

inline double median(std::vector<double> v) {
    if (v.empty()) throw EmptySample("median of an empty sample");
    std::sort(v.begin(), v.end());
    const std::size_t h = v.size() / 2;
    return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

inline double mean(const std::vector<double>& v) {
    if (v.empty()) throw EmptySample("mean of an empty sample");
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

/// Sample standard deviation (n - 1); 0 for a single value.
inline double stddev(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    const double m = mean(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size() - 1));
}

/// Drops the ceil(fraction * n) values farthest from the median. Among equal
/// deviations the later index goes first. Survivors keep their order.
inline std::vector<double> trim_outliers(const std::vector<double>& v, double fraction = 0.05) {
    if (!(fraction >= 0.0 && fraction < 0.5)) throw std::invalid_argument("trim fraction must be in [0, 0.5)");
    if (v.empty() || fraction == 0.0) return v;
    const auto k = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(v.size()) - 1e-9));
    const double med = median(v);
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        const double da = std::fabs(v[a] - med), db = std::fabs(v[b] - med);
        return da != db ? da > db : a > b;
    });
    std::vector<bool> drop(v.size(), false);
    for (std::size_t i = 0; i < k && i < idx.size(); ++i) drop[idx[i]] = true;
    std::vector<double> out;
    for (std::size_t i = 0; i < v.size(); ++i)
        if (!drop[i]) out.push_back(v[i]);
    return out;
}

struct PairedT {
    double t = 0.0;
    double df = 0.0;
    double p = 1.0;
};

/// Paired t-test on differences.
inline PairedT paired_t_test(const std::vector<double>& differences) {
    if (differences.size() < 2) throw TooFewPoints("paired t-test needs two differences");
    PairedT r;
    r.df = static_cast<double>(differences.size() - 1);
    const double sd = stddev(differences);
    const double m = mean(differences);
    if (sd == 0.0) {
        r.t = m == 0.0 ? 0.0 : std::copysign(INFINITY, m);
        r.p = m == 0.0 ? 1.0 : 0.0;
        return r;
    }
    r.t = m / (sd / std::sqrt(static_cast<double>(differences.size())));
    const boost::math::students_t dist(r.df);
    r.p = 2.0 * boost::math::cdf(boost::math::complement(dist, std::fabs(r.t)));
    return r;
}

inline constexpr double kSusBenchmark = 68.0;

/// Standard SUS: odd items contribute (x - 1), even items (5 - x), sum x 2.5.
inline double sus_score(const std::array<int, 10>& items) {
    int sum = 0;
    for (std::size_t i = 0; i < 10; ++i) {
        if (items[i] < 1 || items[i] > 5)
            throw OutOfRangeItem("SUS item " + std::to_string(i + 1) + " = " + std::to_string(items[i]));
        sum += (i % 2 == 0) ? items[i] - 1 : 5 - items[i];
    }
    return 2.5 * sum;
}

inline const char* sus_class(double score) { return score > kSusBenchmark ? "above" : score < kSusBenchmark ? "below" : "at"; }

}  // namespace exo
