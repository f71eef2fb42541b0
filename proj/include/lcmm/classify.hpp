#pragma once

// Posterior class membership and the summaries built on it: discrimination
// tables, external-cohort application, class mean trajectories and binned
// goodness-of-fit.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "lcmm/estimator.hpp"
#include "lcmm/model.hpp"
#include "lcmm/text.hpp"

namespace lcmm {

struct PosteriorRecord {
    std::string subject_id;
    Eigen::VectorXd probs;
    int assigned = 1;  // 1..G, argmax with ties to the lowest index
};

inline int argmax_lowest(const Eigen::VectorXd& v) {
    Eigen::Index best = 0;
    for (Eigen::Index g = 1; g < v.size(); ++g)
        if (v(g) > v(best)) best = g;
    return static_cast<int>(best);
}

namespace detail {

inline Eigen::VectorXd class_log_densities(const FittedModel& model, const SubjectData& d) {
    const int G = model.spec.n_classes;
    Eigen::VectorXd a(G);
    for (int g = 0; g < G; ++g)
        a(g) = class_loglik(d, model.params.beta.row(g), model.params.chol(g), model.params.log_sd(g), g, nullptr);
    return a;
}

}  // namespace detail

/// Bayes posterior over classes from the measurements up to `window_end_days`
/// (all measurements when absent).
inline PosteriorRecord posterior_probs(const FittedModel& model, const Subject& subject,
                                       std::optional<std::int64_t> window_end_days = std::nullopt) {
    const auto d = prepare_subject(subject, model.spec, window_end_days);
    const Eigen::VectorXd a = detail::class_log_densities(model, d).array() + model.params.priors().array().log();
    const double lse = log_sum_exp(a);
    PosteriorRecord r;
    r.subject_id = subject.id;
    r.probs = (a.array() - lse).exp();
    r.probs /= r.probs.sum();
    r.assigned = argmax_lowest(r.probs) + 1;
    return r;
}

inline std::vector<PosteriorRecord> classify_cohort(const FittedModel& model, const Cohort& cohort,
                                                    std::optional<std::int64_t> window_end_days = std::nullopt,
                                                    unsigned threads = 1) {
    std::vector<PosteriorRecord> out(cohort.subjects.size());
    parallel_for(out.size(), threads,
                 [&](std::size_t i) { out[i] = posterior_probs(model, cohort.subjects[i], window_end_days); });
    std::sort(out.begin(), out.end(),
              [](const PosteriorRecord& a, const PosteriorRecord& b) { return a.subject_id < b.subject_id; });
    return out;
}

/// Row g: mean posterior vector over subjects assigned to class g. Rows of
/// empty classes are NaN.
inline Eigen::MatrixXd discrimination_table(const std::vector<PosteriorRecord>& records, int n_classes) {
    Eigen::MatrixXd t = Eigen::MatrixXd::Zero(n_classes, n_classes);
    std::vector<int> n(static_cast<std::size_t>(n_classes), 0);
    for (const auto& r : records) {
        t.row(r.assigned - 1) += r.probs.transpose();
        ++n[static_cast<std::size_t>(r.assigned - 1)];
    }
    for (int g = 0; g < n_classes; ++g) {
        if (n[static_cast<std::size_t>(g)] == 0) t.row(g).setConstant(std::numeric_limits<double>::quiet_NaN());
        else t.row(g) /= n[static_cast<std::size_t>(g)];
    }
    return t;
}

inline Eigen::MatrixXd discrimination_table(const FittedModel& model, const Cohort& cohort) {
    return discrimination_table(classify_cohort(model, cohort), model.spec.n_classes);
}

struct ClassSummary {
    std::vector<std::size_t> counts;
    std::vector<double> percentages;  // one decimal
};

inline ClassSummary class_summary(const std::vector<PosteriorRecord>& records, int n_classes) {
    ClassSummary s;
    s.counts.assign(static_cast<std::size_t>(n_classes), 0);
    for (const auto& r : records) ++s.counts[static_cast<std::size_t>(r.assigned - 1)];
    for (auto c : s.counts) s.percentages.push_back(records.empty() ? 0.0 : percent_1dp(c, records.size()));
    return s;
}

struct ExternalResult {
    std::vector<PosteriorRecord> records;
    Eigen::MatrixXd discrimination;
    ClassSummary summary;
};

/// Classifies a cohort with frozen parameters (no refit).
inline ExternalResult apply_external(const FittedModel& model, const Cohort& cohort, unsigned threads = 1) {
    ExternalResult r;
    r.records = classify_cohort(model, cohort, std::nullopt, threads);
    r.discrimination = discrimination_table(r.records, model.spec.n_classes);
    r.summary = class_summary(r.records, model.spec.n_classes);
    return r;
}

/// Marginal class mean x(t) beta_g; `class_number` is 1-based.
inline double predict_mean(const FittedModel& model, int class_number, double time_days) {
    if (class_number < 1 || class_number > model.spec.n_classes)
        throw DataError("class number " + std::to_string(class_number) + " out of range");
    return design_row(time_days, model.spec).dot(model.params.beta.row(class_number - 1));
}

enum class GofPrediction { marginal, conditional };

struct GofCell {
    double weighted_mean_observed = std::numeric_limits<double>::quiet_NaN();
    double weighted_mean_predicted = std::numeric_limits<double>::quiet_NaN();
    double q05 = std::numeric_limits<double>::quiet_NaN();
    double q95 = std::numeric_limits<double>::quiet_NaN();
    double effective_weight = 0.0;  // sum of posterior weights in the cell
};

struct GofBin {
    double bin_start_days = 0.0;
    double bin_end_days = 0.0;
    std::vector<GofCell> classes;
};

/// Inverse-CDF weighted quantile: the smallest value whose normalized
/// cumulative weight reaches q.
inline double weighted_quantile(std::vector<std::pair<double, double>> value_weight, double q) {
    std::sort(value_weight.begin(), value_weight.end());
    double total = 0.0;
    for (const auto& [v, w] : value_weight) total += w;
    if (!(total > 0)) return std::numeric_limits<double>::quiet_NaN();
    double cum = 0.0;
    for (const auto& [v, w] : value_weight) {
        cum += w / total;
        if (cum >= q - 1e-12) return v;
    }
    return value_weight.back().first;
}

namespace detail {

// Per-measurement predictions for class g: marginal mean, or the marginal
// mean plus the best linear unbiased predictor of the random effects.
inline Eigen::VectorXd class_predictions(const FittedModel& model, const SubjectData& d, int g, GofPrediction mode) {
    Eigen::VectorXd mean = d.X * model.params.beta.row(g).transpose();
    if (mode == GofPrediction::marginal) return mean;
    const Eigen::Matrix2d B = model.params.random_cov(g);
    const double s = std::exp(2.0 * model.params.log_sd(g));
    Eigen::MatrixXd V = d.Z * B * d.Z.transpose();
    V.diagonal().array() += s;
    const Eigen::VectorXd alpha = V.llt().solve(d.y - mean);
    return mean + d.Z * (B * (d.Z.transpose() * alpha));
}

}  // namespace detail

/// Binned weighted means of observations and model predictions per class,
/// weighted by each subject's posterior class probability. Bins are aligned
/// at day 0; bins without measurements are omitted.
inline std::vector<GofBin> gof_bins(const FittedModel& model, const Cohort& cohort, double bin_width_days = 182.625,
                                    GofPrediction mode = GofPrediction::marginal) {
    if (!(bin_width_days > 0)) throw DataError("bin width must be positive");
    const int G = model.spec.n_classes;
    struct Acc {
        std::vector<std::vector<std::pair<double, double>>> obs;  // per class (value, weight)
        std::vector<double> wsum, wobs, wpred;
    };
    std::map<long long, Acc> bins;
    for (const auto& s : cohort.subjects) {
        const auto post = posterior_probs(model, s);
        const auto d = prepare_subject(s, model.spec);
        std::vector<Eigen::VectorXd> pred;
        for (int g = 0; g < G; ++g) pred.push_back(detail::class_predictions(model, d, g, mode));
        for (std::size_t j = 0; j < s.measurements.size(); ++j) {
            const auto& m = s.measurements[j];
            const auto b = static_cast<long long>(std::floor(static_cast<double>(m.time_days) / bin_width_days));
            auto& acc = bins[b];
            if (acc.obs.empty()) {
                acc.obs.resize(static_cast<std::size_t>(G));
                acc.wsum.assign(static_cast<std::size_t>(G), 0.0);
                acc.wobs.assign(static_cast<std::size_t>(G), 0.0);
                acc.wpred.assign(static_cast<std::size_t>(G), 0.0);
            }
            const double y = d.y(static_cast<Eigen::Index>(j));
            for (int g = 0; g < G; ++g) {
                const double w = post.probs(g);
                const auto gi = static_cast<std::size_t>(g);
                acc.obs[gi].push_back({y, w});
                acc.wsum[gi] += w;
                acc.wobs[gi] += w * y;
                acc.wpred[gi] += w * pred[gi](static_cast<Eigen::Index>(j));
            }
        }
    }
    std::vector<GofBin> out;
    for (auto& [b, acc] : bins) {
        GofBin bin;
        bin.bin_start_days = static_cast<double>(b) * bin_width_days;
        bin.bin_end_days = static_cast<double>(b + 1) * bin_width_days;
        bin.classes.resize(static_cast<std::size_t>(G));
        for (std::size_t g = 0; g < static_cast<std::size_t>(G); ++g) {
            auto& c = bin.classes[g];
            c.effective_weight = acc.wsum[g];
            if (!(acc.wsum[g] > 0)) continue;
            c.weighted_mean_observed = acc.wobs[g] / acc.wsum[g];
            c.weighted_mean_predicted = acc.wpred[g] / acc.wsum[g];
            c.q05 = weighted_quantile(acc.obs[g], 0.05);
            c.q95 = weighted_quantile(std::move(acc.obs[g]), 0.95);
        }
        out.push_back(std::move(bin));
    }
    return out;
}

// ---- tabular output --------------------------------------------------------

inline void write_classification(const std::vector<PosteriorRecord>& records, int n_classes, std::ostream& os) {
    os << "subject_id";
    for (int g = 1; g <= n_classes; ++g) os << ",prob_" << g;
    os << ",assigned\n";
    for (const auto& r : records) {
        os << r.subject_id;
        for (Eigen::Index g = 0; g < r.probs.size(); ++g) os << ',' << text::fmt_exact(r.probs(g));
        os << ',' << r.assigned << '\n';
    }
}

/// Reads `subject_id,prob_1..prob_G,assigned` back into posterior records.
inline std::vector<PosteriorRecord> parse_classification(std::string_view content, const std::string& source) {
    content = text::strip_bom(content);
    std::vector<PosteriorRecord> out;
    std::size_t line_no = 0, pos = 0, n_classes = 0;
    bool header_seen = false;
    while (pos <= content.size()) {
        auto end = content.find('\n', pos);
        if (end == std::string_view::npos) end = content.size();
        auto line = text::trim(content.substr(pos, end - pos));
        pos = end + 1;
        ++line_no;
        if (!line.empty() && line.front() != '#') {
            auto f = text::split(line);
            if (!header_seen) {
                if (f.size() < 3 || f.front() != "subject_id" || f.back() != "assigned")
                    throw ParseError(source, line_no, "expected header 'subject_id,prob_1..prob_G,assigned'");
                n_classes = f.size() - 2;
                header_seen = true;
            } else {
                if (f.size() != n_classes + 2) throw ParseError(source, line_no, "wrong number of fields");
                PosteriorRecord r;
                r.subject_id = std::string(f[0]);
                r.probs.resize(static_cast<Eigen::Index>(n_classes));
                for (std::size_t g = 0; g < n_classes; ++g) {
                    auto v = text::parse_double(f[g + 1]);
                    if (!v) throw ParseError(source, line_no, "non-numeric probability");
                    r.probs(static_cast<Eigen::Index>(g)) = *v;
                }
                auto a = text::parse_int(f.back());
                if (!a || *a < 1 || *a > static_cast<long long>(n_classes))
                    throw ParseError(source, line_no, "assigned class out of range");
                r.assigned = static_cast<int>(*a);
                out.push_back(std::move(r));
            }
        }
        if (end == content.size()) break;
    }
    if (!header_seen) throw DataError(source + ": empty file");
    return out;
}

inline int n_classes_of(const std::vector<PosteriorRecord>& records) {
    return records.empty() ? 0 : static_cast<int>(records.front().probs.size());
}

inline void write_discrimination(const Eigen::MatrixXd& t, std::ostream& os) {
    os << "assigned_class";
    for (Eigen::Index h = 0; h < t.cols(); ++h) os << "\tprob_class_" << h + 1;
    os << '\n';
    for (Eigen::Index g = 0; g < t.rows(); ++g) {
        os << g + 1;
        for (Eigen::Index h = 0; h < t.cols(); ++h)
            os << '\t' << (std::isnan(t(g, h)) ? std::string("NA") : text::fmt_fixed(t(g, h), 4));
        os << '\n';
    }
}

inline void write_class_summary(const ClassSummary& s, std::ostream& os) {
    os << "class\tcount\tpercent\n";
    for (std::size_t g = 0; g < s.counts.size(); ++g)
        os << g + 1 << '\t' << s.counts[g] << '\t' << text::fmt_fixed(s.percentages[g], 1) << '\n';
}

inline void write_gof(const std::vector<GofBin>& bins, std::ostream& os) {
    os << "bin_start_days\tbin_end_days\tclass\tweight\tobserved_mean\tpredicted_mean\tq05\tq95\n";
    auto num = [](double v) { return std::isnan(v) ? std::string("NA") : text::fmt_sig(v, 10); };
    for (const auto& b : bins)
        for (std::size_t g = 0; g < b.classes.size(); ++g) {
            const auto& c = b.classes[g];
            os << text::fmt_sig(b.bin_start_days, 10) << '\t' << text::fmt_sig(b.bin_end_days, 10) << '\t' << g + 1
               << '\t' << text::fmt_sig(c.effective_weight, 10) << '\t' << num(c.weighted_mean_observed) << '\t'
               << num(c.weighted_mean_predicted) << '\t' << num(c.q05) << '\t' << num(c.q95) << '\n';
        }
}

/// Class mean trajectories on a regular day grid (plot-ready).
inline void write_trajectories(const FittedModel& model, double from_days, double to_days, double step_days,
                               std::ostream& os) {
    os << "time_days";
    for (int g = 1; g <= model.spec.n_classes; ++g) os << "\tclass_" << g;
    os << '\n';
    for (double t = from_days; t <= to_days + 1e-9; t += step_days) {
        os << text::fmt_sig(t, 10);
        for (int g = 1; g <= model.spec.n_classes; ++g) os << '\t' << text::fmt_sig(predict_mean(model, g, t), 10);
        os << '\n';
    }
}

}  // namespace lcmm
