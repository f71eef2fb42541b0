#pragma once

// Mann-Whitney U test and median/range summaries for small samples.

#include <algorithm>
#include <cfloat>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "lcmm/error.hpp"
#include "lcmm/text.hpp"

namespace lcmm {

enum class MwuMethod { exact, normal_approx };

inline const char* to_string(MwuMethod m) { return m == MwuMethod::exact ? "exact" : "normal-approximation"; }

struct MwuResult {
    double u_a = 0.0;  // pairs with a > b, ties counting 1/2
    double u_b = 0.0;
    double p_two_sided = 1.0;
    MwuMethod method = MwuMethod::exact;
};

inline constexpr std::size_t kExactMaxGroup = 8;

/// Null distribution of U_a for tie-free groups, by enumerating every choice
/// of ranks for group a. counts[u] = number of assignments with U_a = u.
inline std::vector<std::uint64_t> exact_u_counts(std::size_t na, std::size_t nb) {
    const std::size_t N = na + nb;
    std::vector<std::uint64_t> counts(na * nb + 1, 0);
    std::vector<std::size_t> pick(na);
    std::iota(pick.begin(), pick.end(), 0);
    const std::size_t offset = na * (na - 1) / 2;  // rank-sum minimum (0-based ranks)
    for (;;) {
        const std::size_t rank_sum = std::accumulate(pick.begin(), pick.end(), std::size_t{0});
        ++counts[rank_sum - offset];
        // next combination in lexicographic order
        std::size_t i = na;
        while (i > 0 && pick[i - 1] == N - na + (i - 1)) --i;
        if (i == 0) break;
        ++pick[i - 1];
        for (std::size_t j = i; j < na; ++j) pick[j] = pick[j - 1] + 1;
    }
    return counts;
}

/// Two-sided exact p = 2 min(P(U <= u), P(U >= u)), capped at 1.
inline double mwu_exact_p(double u_a, std::size_t na, std::size_t nb) {
    const auto counts = exact_u_counts(na, nb);
    const double total = std::accumulate(counts.begin(), counts.end(), 0.0);
    const auto u = static_cast<std::size_t>(std::llround(u_a));
    double lower = 0.0, upper = 0.0;
    for (std::size_t k = 0; k < counts.size(); ++k) {
        if (k <= u) lower += static_cast<double>(counts[k]);
        if (k >= u) upper += static_cast<double>(counts[k]);
    }
    return std::min(1.0, 2.0 * std::min(lower, upper) / total);
}

/// Normal approximation with continuity correction; `tie_term` is the sum of
/// t^3 - t over tie groups.
inline double mwu_normal_p(double u_a, std::size_t na, std::size_t nb, double tie_term = 0.0) {
    const double nab = static_cast<double>(na * nb);
    const double n = static_cast<double>(na + nb);
    const double var = nab / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
    if (var <= 0.0) return 1.0;
    const double z = std::max(0.0, std::abs(u_a - nab / 2.0) - 0.5) / std::sqrt(var);
    return std::min(1.0, std::erfc(z / std::sqrt(2.0)));
}

inline MwuResult mann_whitney_u(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.empty() || b.empty()) throw DataError("Mann-Whitney test needs two nonempty groups");
    const std::size_t na = a.size(), nb = b.size(), N = na + nb;

    std::vector<std::pair<double, int>> all;
    all.reserve(N);
    for (double v : a) all.push_back({v, 0});
    for (double v : b) all.push_back({v, 1});
    std::sort(all.begin(), all.end(), [](const auto& x, const auto& y) { return x.first < y.first; });
    double rank_sum_a = 0.0, tie_term = 0.0;
    bool ties = false;
    for (std::size_t i = 0; i < N;) {
        std::size_t j = i;
        while (j < N && all[j].first == all[i].first) ++j;
        const double mid = 0.5 * static_cast<double>(i + 1 + j);  // average of ranks i+1..j
        const double t = static_cast<double>(j - i);
        if (j - i > 1) ties = true;
        tie_term += t * t * t - t;
        for (std::size_t k = i; k < j; ++k)
            if (all[k].second == 0) rank_sum_a += mid;
        i = j;
    }
    MwuResult r;
    const double nab = static_cast<double>(na * nb);
    r.u_a = rank_sum_a - static_cast<double>(na * (na + 1)) / 2.0;
    r.u_b = nab - r.u_a;

    if (na <= kExactMaxGroup && nb <= kExactMaxGroup && !ties) {
        r.method = MwuMethod::exact;
        r.p_two_sided = mwu_exact_p(r.u_a, na, nb);
    } else {
        r.method = MwuMethod::normal_approx;
        r.p_two_sided = mwu_normal_p(r.u_a, na, nb, tie_term);
    }
    r.p_two_sided = std::max(r.p_two_sided, DBL_MIN);
    return r;
}

struct MedianRange {
    double median, min, max;
};

inline MedianRange median_range(std::vector<double> v) {
    if (v.empty()) throw DataError("median of an empty sample");
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    const double med = n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
    return {med, v.front(), v.back()};
}

/// One number per line; blank lines, '#' comments and a non-numeric first
/// line (a column name) are skipped.
inline std::vector<double> parse_values(std::string_view content, const std::string& source) {
    content = text::strip_bom(content);
    std::vector<double> out;
    std::size_t line_no = 0, pos = 0;
    bool first = true;
    while (pos <= content.size()) {
        auto end = content.find('\n', pos);
        if (end == std::string_view::npos) end = content.size();
        auto line = text::trim(content.substr(pos, end - pos));
        pos = end + 1;
        ++line_no;
        if (!line.empty() && line.front() != '#') {
            auto v = text::parse_double(line);
            if (v && std::isfinite(*v)) out.push_back(*v);
            else if (!first) throw ParseError(source, line_no, "non-numeric value '" + std::string(line) + "'");
            first = false;
        }
        if (end == content.size()) break;
    }
    if (out.empty()) throw DataError(source + ": no values");
    return out;
}

}  // namespace lcmm
