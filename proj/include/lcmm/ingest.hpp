#pragma once

// Longitudinal biomarker and event-record ingestion.
//
// Cohort inclusion mirrors the registry rules: at least three serial results
// per subject, at least two of them on or after treatment start (day 0), and
// no measurement after a recorded status-1 event.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "lcmm/error.hpp"
#include "lcmm/text.hpp"

namespace lcmm {

struct Measurement {
    std::int64_t time_days = 0;  // relative to treatment start
    double value = 0.0;

    friend bool operator==(const Measurement&, const Measurement&) = default;
};

struct EventRecord {
    std::string subject_id;
    std::int64_t event_time_days = 0;
    int status = 0;  // 1 = event, 0 = censored

    friend bool operator==(const EventRecord&, const EventRecord&) = default;
};

struct Subject {
    std::string id;
    std::vector<Measurement> measurements;  // ascending time_days
    std::optional<EventRecord> event;

    std::size_t post_treatment_count() const {
        return static_cast<std::size_t>(std::count_if(measurements.begin(), measurements.end(),
                                                      [](const Measurement& m) { return m.time_days >= 0; }));
    }
    friend bool operator==(const Subject&, const Subject&) = default;
};

struct Provenance {
    std::string digest;            // FNV-1a of the source bytes
    std::vector<std::string> log;  // one line per filter step
};

struct Cohort {
    std::vector<Subject> subjects;  // sorted by id
    Provenance provenance;

    std::size_t n_observations() const {
        std::size_t n = 0;
        for (const auto& s : subjects) n += s.measurements.size();
        return n;
    }
    bool has_pre_treatment() const {
        for (const auto& s : subjects)
            for (const auto& m : s.measurements)
                if (m.time_days < 0) return true;
        return false;
    }
    bool has_post_treatment() const {
        for (const auto& s : subjects)
            for (const auto& m : s.measurements)
                if (m.time_days >= 0) return true;
        return false;
    }
};

enum class ExclusionReason { too_few_results, too_few_post_treatment, all_values_invalid };
enum class DropReason { nonpositive_value, duplicate_time, post_event_time, subject_excluded };

inline std::string_view to_string(ExclusionReason r) {
    switch (r) {
        case ExclusionReason::too_few_results: return "too-few-results";
        case ExclusionReason::too_few_post_treatment: return "too-few-post-treatment";
        case ExclusionReason::all_values_invalid: return "all-values-invalid";
    }
    return "?";
}

inline std::string_view to_string(DropReason r) {
    switch (r) {
        case DropReason::nonpositive_value: return "nonpositive-value";
        case DropReason::duplicate_time: return "duplicate-time";
        case DropReason::post_event_time: return "post-event-time";
        case DropReason::subject_excluded: return "subject-excluded";
    }
    return "?";
}

struct FilterReport {
    struct Exclusion {
        std::string subject_id;
        ExclusionReason reason;
        std::string detail;
    };
    struct DroppedRow {
        std::size_t line = 0;  // 0 when the row did not come from a file
        std::string subject_id;
        std::int64_t time_days = 0;
        double value = 0.0;
        DropReason reason;
    };

    std::size_t subjects_in = 0;
    std::size_t subjects_retained = 0;
    std::size_t rows_in = 0;
    std::size_t rows_retained = 0;
    std::vector<Exclusion> excluded;
    std::vector<DroppedRow> dropped;
    std::vector<std::string> unmatched_events;  // event subject ids absent from the cohort
};

struct IngestOptions {
    std::size_t min_results = 3;
    std::size_t min_post_treatment = 2;
    // Event records applied during load (truncation at status-1 events).
    std::vector<EventRecord> events;
};

namespace detail {

struct RawRow {
    std::size_t line;
    std::int64_t time_days;
    double value;
};

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Applies row-level cleaning, event truncation and inclusion rules to one subject.
// Returns the subject when retained; always records drops/exclusions in `report`.
inline std::optional<Subject> filter_subject(const std::string& id, std::vector<RawRow> rows,
                                             const std::optional<EventRecord>& event,
                                             const IngestOptions& opt, FilterReport& report) {
    auto drop = [&](const RawRow& r, DropReason why) {
        report.dropped.push_back({r.line, id, r.time_days, r.value, why});
    };
    std::stable_sort(rows.begin(), rows.end(),
                     [](const RawRow& a, const RawRow& b) { return a.time_days < b.time_days; });

    std::vector<RawRow> kept;
    bool any_valid = false;
    for (const auto& r : rows) {
        if (!(r.value > 0.0)) {
            drop(r, DropReason::nonpositive_value);
            continue;
        }
        any_valid = true;
        if (!kept.empty() && kept.back().time_days == r.time_days) {
            drop(r, DropReason::duplicate_time);
            continue;
        }
        if (event && event->status == 1 && r.time_days > event->event_time_days) {
            drop(r, DropReason::post_event_time);
            continue;
        }
        kept.push_back(r);
    }

    std::optional<ExclusionReason> reason;
    std::string detail;
    const auto post = static_cast<std::size_t>(
        std::count_if(kept.begin(), kept.end(), [](const RawRow& r) { return r.time_days >= 0; }));
    if (!any_valid) {
        reason = ExclusionReason::all_values_invalid;
        detail = "no positive values";
    } else if (kept.size() < opt.min_results) {
        reason = ExclusionReason::too_few_results;
        detail = "fewer than " + std::to_string(opt.min_results) + " serial results (" +
                 std::to_string(kept.size()) + ")";
    } else if (post < opt.min_post_treatment) {
        reason = ExclusionReason::too_few_post_treatment;
        detail = "fewer than " + std::to_string(opt.min_post_treatment) + " post-treatment results (" +
                 std::to_string(post) + ")";
    }
    if (reason) {
        for (const auto& r : kept) drop(r, DropReason::subject_excluded);
        report.excluded.push_back({id, *reason, detail});
        return std::nullopt;
    }

    Subject s;
    s.id = id;
    s.event = event;
    s.measurements.reserve(kept.size());
    for (const auto& r : kept) s.measurements.push_back({r.time_days, r.value});
    report.rows_retained += kept.size();
    ++report.subjects_retained;
    return s;
}

inline void summarize(const FilterReport& report, Provenance& prov) {
    prov.log.push_back("subjects_in=" + std::to_string(report.subjects_in) +
                       " retained=" + std::to_string(report.subjects_retained) +
                       " excluded=" + std::to_string(report.excluded.size()));
    prov.log.push_back("rows_in=" + std::to_string(report.rows_in) + " retained=" +
                       std::to_string(report.rows_retained) + " dropped=" + std::to_string(report.dropped.size()));
}

}  // namespace detail

struct LoadResult {
    Cohort cohort;
    FilterReport report;
};

/// Parses longitudinal CSV content (`subject_id,time_days,value`) and applies
/// the inclusion filters. `source` names the input in error messages.
inline LoadResult parse_longitudinal(std::string_view content, const std::string& source,
                                     const IngestOptions& opt = {}) {
    const auto digest = text::hex64(text::fnv1a(content));
    content = text::strip_bom(content);
    std::map<std::string, std::vector<detail::RawRow>> by_subject;
    FilterReport report;

    std::size_t line_no = 0;
    bool header_seen = false;
    std::size_t pos = 0;
    while (pos <= content.size()) {
        auto end = content.find('\n', pos);
        if (end == std::string_view::npos) end = content.size();
        auto line = text::trim(content.substr(pos, end - pos));
        pos = end + 1;
        ++line_no;
        if (line.empty() || line.front() == '#') {
            if (end == content.size()) break;
            continue;
        }
        if (!header_seen) {
            if (line != "subject_id,time_days,value")
                throw ParseError(source, line_no, "expected header 'subject_id,time_days,value'");
            header_seen = true;
            continue;
        }
        auto fields = text::split(line);
        if (fields.size() != 3) throw ParseError(source, line_no, "expected 3 fields");
        if (fields[0].empty()) throw ParseError(source, line_no, "empty subject_id");
        auto t = text::parse_int(fields[1]);
        if (!t) throw ParseError(source, line_no, "non-integer time_days '" + std::string(fields[1]) + "'");
        auto v = text::parse_double(fields[2]);
        if (!v || !std::isfinite(*v))
            throw ParseError(source, line_no, "non-numeric value '" + std::string(fields[2]) + "'");
        by_subject[std::string(fields[0])].push_back({line_no, *t, *v});
        ++report.rows_in;
        if (end == content.size()) break;
    }
    if (!header_seen) throw DataError(source + ": empty file");
    if (report.rows_in == 0) throw DataError(source + ": no data rows");

    std::map<std::string, EventRecord> events;
    for (const auto& e : opt.events) events.emplace(e.subject_id, e);

    LoadResult out;
    out.cohort.provenance.digest = digest;
    report.subjects_in = by_subject.size();
    for (auto& [id, rows] : by_subject) {
        std::optional<EventRecord> ev;
        if (auto it = events.find(id); it != events.end()) ev = it->second;
        if (auto s = detail::filter_subject(id, std::move(rows), ev, opt, report))
            out.cohort.subjects.push_back(std::move(*s));
    }
    std::set<std::string> present;
    for (const auto& [id, rows] : by_subject) present.insert(id);
    for (const auto& [id, e] : events)
        if (!present.count(id)) report.unmatched_events.push_back(id);

    detail::summarize(report, out.cohort.provenance);
    out.report = std::move(report);
    return out;
}

inline LoadResult load_longitudinal(const std::string& path, const IngestOptions& opt = {}) {
    return parse_longitudinal(detail::read_file(path), path, opt);
}

/// Parses events CSV content (`subject_id,event_time_days,status`).
inline std::vector<EventRecord> parse_events(std::string_view content, const std::string& source) {
    content = text::strip_bom(content);
    std::vector<EventRecord> out;
    std::set<std::string> seen;
    std::size_t line_no = 0;
    bool header_seen = false;
    std::size_t pos = 0;
    while (pos <= content.size()) {
        auto end = content.find('\n', pos);
        if (end == std::string_view::npos) end = content.size();
        auto line = text::trim(content.substr(pos, end - pos));
        pos = end + 1;
        ++line_no;
        if (!line.empty() && line.front() != '#') {
            if (!header_seen) {
                if (line != "subject_id,event_time_days,status")
                    throw ParseError(source, line_no, "expected header 'subject_id,event_time_days,status'");
                header_seen = true;
            } else {
                auto f = text::split(line);
                if (f.size() != 3) throw ParseError(source, line_no, "expected 3 fields");
                auto t = text::parse_int(f[1]);
                auto st = text::parse_int(f[2]);
                if (f[0].empty()) throw ParseError(source, line_no, "empty subject_id");
                if (!t) throw ParseError(source, line_no, "non-integer event_time_days");
                if (!st) throw ParseError(source, line_no, "non-integer status");
                if (*t < 0) throw ParseError(source, line_no, "negative event_time_days for " + std::string(f[0]));
                if (*st != 0 && *st != 1) throw ParseError(source, line_no, "status must be 0 or 1");
                std::string id(f[0]);
                if (!seen.insert(id).second) throw ParseError(source, line_no, "duplicate subject_id " + id);
                out.push_back({id, *t, static_cast<int>(*st)});
            }
        }
        if (end == content.size()) break;
    }
    if (!header_seen) throw DataError(source + ": empty file");
    return out;
}

inline std::vector<EventRecord> load_events(const std::string& path) {
    return parse_events(detail::read_file(path), path);
}

struct JoinResult {
    Cohort cohort;
    FilterReport report;
};

/// Attaches event records by subject id. Status-1 events truncate later
/// measurements; subjects that then fail inclusion move to the report.
inline JoinResult join_cohort(const Cohort& cohort, const std::vector<EventRecord>& events,
                              const IngestOptions& opt = {}) {
    std::map<std::string, EventRecord> by_id;
    for (const auto& e : events) by_id.emplace(e.subject_id, e);

    JoinResult out;
    out.cohort.provenance = cohort.provenance;
    auto& report = out.report;
    report.subjects_in = cohort.subjects.size();
    std::set<std::string> present;
    for (const auto& s : cohort.subjects) {
        present.insert(s.id);
        report.rows_in += s.measurements.size();
        std::optional<EventRecord> ev;
        if (auto it = by_id.find(s.id); it != by_id.end()) ev = it->second;
        std::vector<detail::RawRow> rows;
        rows.reserve(s.measurements.size());
        for (const auto& m : s.measurements) rows.push_back({0, m.time_days, m.value});
        if (auto kept = detail::filter_subject(s.id, std::move(rows), ev, opt, report))
            out.cohort.subjects.push_back(std::move(*kept));
    }
    for (const auto& [id, e] : by_id)
        if (!present.count(id)) report.unmatched_events.push_back(id);
    out.cohort.provenance.log.push_back("join: events=" + std::to_string(events.size()) +
                                        " unmatched=" + std::to_string(report.unmatched_events.size()) +
                                        " excluded=" + std::to_string(report.excluded.size()));
    return out;
}

/// Canonical longitudinal CSV; parsing it reproduces the cohort's measurements.
inline void write_longitudinal(const Cohort& cohort, std::ostream& os) {
    os << "subject_id,time_days,value\n";
    for (const auto& s : cohort.subjects)
        for (const auto& m : s.measurements) os << s.id << ',' << m.time_days << ',' << text::fmt_exact(m.value) << '\n';
}

inline void write_events(const std::vector<EventRecord>& events, std::ostream& os) {
    os << "subject_id,event_time_days,status\n";
    for (const auto& e : events) os << e.subject_id << ',' << e.event_time_days << ',' << e.status << '\n';
}

inline void write_filter_report(const FilterReport& r, std::ostream& os) {
    os << "# subjects_in\t" << r.subjects_in << "\tretained\t" << r.subjects_retained << "\texcluded\t"
       << r.excluded.size() << '\n';
    os << "# rows_in\t" << r.rows_in << "\tretained\t" << r.rows_retained << "\tdropped\t" << r.dropped.size()
       << '\n';
    os << "kind\tsubject_id\treason\tline\ttime_days\tvalue\tdetail\n";
    for (const auto& e : r.excluded)
        os << "excluded\t" << e.subject_id << '\t' << to_string(e.reason) << "\t\t\t\t" << e.detail << '\n';
    for (const auto& d : r.dropped)
        os << "dropped\t" << d.subject_id << '\t' << to_string(d.reason) << '\t' << d.line << '\t' << d.time_days
           << '\t' << text::fmt_exact(d.value) << "\t\n";
    for (const auto& id : r.unmatched_events) os << "unmatched_event\t" << id << "\t\t\t\t\t\n";
}

}  // namespace lcmm
