#pragma once

// Synthetic cohorts from a known latent-class mixed model with
// class-dependent exponential event times.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <ostream>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "lcmm/error.hpp"
#include "lcmm/ingest.hpp"
#include "lcmm/model.hpp"

namespace lcmm {

struct SimTruth {
    ModelSpec spec;
    Parameters params;
    double mean_visits = 15.0;  // Poisson mean, floored at min_visits
    int min_visits = 3;
    std::int64_t visit_start_days = -1500;
    std::int64_t visit_end_days = 5500;
    std::vector<double> hazard_rates;  // events per year, per class
    double censor_min_years = 2.0;
    double censor_max_years = 20.0;
    // Optional per-subject risk score s ~ N(0, score_sd^2) multiplying the
    // hazard by exp(score_log_hr * s). score_sd = 0 disables it.
    double score_sd = 0.0;
    double score_log_hr = 0.0;
};

inline void validate(const SimTruth& t) {
    validate(t.spec);
    if (static_cast<int>(t.hazard_rates.size()) != t.spec.n_classes)
        throw DataError("one hazard rate per class is required");
    for (double r : t.hazard_rates)
        if (!(r > 0.0)) throw DataError("hazard rates must be positive");
    if (t.min_visits < 3) throw DataError("min_visits must be >= 3");
    if (t.visit_start_days >= 0 || t.visit_end_days <= 0) throw DataError("visit window must straddle day 0");
    if (!(t.censor_min_years > 0) || t.censor_max_years < t.censor_min_years)
        throw DataError("censoring window must be positive and ordered");
    if (t.params.beta.rows() != t.spec.n_classes || t.params.beta.cols() != n_fixed(t.spec))
        throw DataError("truth parameters do not match the spec");
}

/// Four-class quadratic truth with shares near (0.36, 0.38, 0.09, 0.17):
/// 1 normal and flat, 2 high then a good response, 3 high with a partial
/// response, 4 markedly high with no response. Event rates rise with class.
inline SimTruth default_truth() {
    SimTruth t;
    t.spec.n_classes = 4;
    t.spec.trend = Trend::quadratic;
    t.params = zero_parameters(t.spec);
    // columns: intercept, time, time^2, treatment, treatment:time
    t.params.beta << 150.0, 0.0, 0.0, -10.0, 0.0,  //
        450.0, 5.0, 0.2, -200.0, -10.0,            //
        650.0, 5.0, 0.2, -250.0, -5.0,             //
        850.0, 10.0, 0.3, -20.0, 5.0;
    const double shares[4] = {0.36, 0.38, 0.09, 0.17};
    for (int g = 0; g < 3; ++g) t.params.logits(g) = std::log(shares[g] / shares[3]);
    t.params.chol_b[0] << 40.0, 0.0, 1.0, 6.0;
    t.params.log_sigma[0] = std::log(40.0);
    t.hazard_rates = {0.02, 0.06, 0.09, 0.15};
    return t;
}

/// Two well-separated linear-response classes with shares (0.6, 0.4).
inline SimTruth two_class_truth() {
    SimTruth t;
    t.spec.n_classes = 2;
    t.spec.trend = Trend::quadratic;
    t.params = zero_parameters(t.spec);
    t.params.beta << 250.0, 0.0, 0.0, -20.0, 0.0,  //
        600.0, 5.0, 0.2, -250.0, -10.0;
    t.params.logits(0) = std::log(0.6 / 0.4);
    t.params.chol_b[0] << 40.0, 0.0, 1.0, 6.0;
    t.params.log_sigma[0] = std::log(40.0);
    t.hazard_rates = {0.03, 0.10};
    return t;
}

struct SimCohort {
    Cohort cohort;
    std::vector<EventRecord> events;
    std::vector<int> labels;     // 0-based true class, aligned with cohort.subjects
    std::vector<double> scores;  // aligned with cohort.subjects; zeros when disabled
};

inline std::string subject_name(std::size_t i, std::size_t n) {
    const auto width = std::to_string(n).size();
    auto s = std::to_string(i + 1);
    return "S" + std::string(width > s.size() ? width - s.size() : 0, '0') + s;
}

inline SimCohort simulate_cohort(const SimTruth& truth, std::size_t n_subjects, std::uint64_t seed) {
    validate(truth);
    if (n_subjects < 1) throw DataError("n_subjects must be >= 1");
    const auto& spec = truth.spec;
    const int G = spec.n_classes;
    const Eigen::VectorXd pri = truth.params.priors();

    SimCohort out;
    out.cohort.subjects.reserve(n_subjects);
    for (std::size_t i = 0; i < n_subjects; ++i) {
        std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                          static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(i >> 32)};
        std::mt19937_64 rng(seq);
        std::uniform_real_distribution<double> unif(0.0, 1.0);
        std::normal_distribution<double> norm(0.0, 1.0);

        int g = 0;
        {
            const double u = unif(rng);
            double acc = 0.0;
            for (g = 0; g < G - 1; ++g) {
                acc += pri(g);
                if (u < acc) break;
            }
        }
        const Eigen::Vector2d b = truth.params.chol(g) * Eigen::Vector2d(norm(rng), norm(rng));
        const double sigma = std::exp(truth.params.log_sd(g));

        double score = 0.0;
        if (truth.score_sd > 0) score = truth.score_sd * norm(rng);
        const double rate = truth.hazard_rates[static_cast<std::size_t>(g)] * std::exp(truth.score_log_hr * score);
        const double t_event = std::exponential_distribution<double>(rate)(rng);
        const double t_censor = truth.censor_min_years + (truth.censor_max_years - truth.censor_min_years) * unif(rng);
        const int status = t_event <= t_censor ? 1 : 0;
        const auto end_days = std::max<std::int64_t>(1, static_cast<std::int64_t>(std::ceil(std::min(t_event, t_censor) * 365.25)));

        std::poisson_distribution<int> pois(truth.mean_visits);
        const int k = std::max(truth.min_visits, pois(rng));
        std::set<std::int64_t> times{0};  // treatment-start visit
        std::uniform_int_distribution<std::int64_t> day(truth.visit_start_days, truth.visit_end_days);
        for (int tries = 0; static_cast<int>(times.size()) < k && tries < 100 * k; ++tries) times.insert(day(rng));
        if (status == 1) times.erase(times.upper_bound(end_days), times.end());
        // Keep the cohort inclusion rules satisfied after truncation.
        auto post = [&] { return static_cast<int>(std::distance(times.lower_bound(0), times.end())); };
        std::uniform_int_distribution<std::int64_t> early(1, status == 1 ? end_days : truth.visit_end_days);
        for (int tries = 0; post() < 2 && tries < 1000; ++tries) times.insert(early(rng));
        std::uniform_int_distribution<std::int64_t> pre(truth.visit_start_days, -1);
        for (int tries = 0; static_cast<int>(times.size()) < truth.min_visits && tries < 1000; ++tries)
            times.insert(pre(rng));

        Subject s;
        s.id = subject_name(i, n_subjects);
        for (auto td : times) {
            const Eigen::RowVectorXd x = design_row(static_cast<double>(td), spec);
            const double tau = static_cast<double>(td) / spec.time_scale_days;
            const double mean = x.dot(truth.params.beta.row(g)) + b(0) + b(1) * tau;
            double v = mean;
            if (sigma > 0) {
                // Redraw the residual until the value is positive (measured concentrations).
                for (int tries = 0; tries < 100; ++tries) {
                    v = mean + sigma * norm(rng);
                    if (spec.log_transform || v > 0) break;
                }
            }
            if (spec.log_transform) v = std::exp(v);
            if (!(v > 0)) v = 1e-3;
            s.measurements.push_back({td, v});
        }
        s.event = EventRecord{s.id, end_days, status};
        out.events.push_back(*s.event);
        out.labels.push_back(g);
        out.scores.push_back(score);
        out.cohort.subjects.push_back(std::move(s));
    }
    out.cohort.provenance.digest = "simulated:seed=" + std::to_string(seed);
    out.cohort.provenance.log.push_back("simulated subjects=" + std::to_string(n_subjects));
    return out;
}

inline nlohmann::ordered_json to_json(const SimTruth& t) {
    nlohmann::ordered_json j;
    j["n_classes"] = t.spec.n_classes;
    j["trend"] = std::string(to_string(t.spec.trend));
    j["time_scale_days"] = t.spec.time_scale_days;
    nlohmann::ordered_json beta = nlohmann::ordered_json::array();
    for (Eigen::Index g = 0; g < t.params.beta.rows(); ++g) {
        nlohmann::ordered_json row = nlohmann::ordered_json::array();
        for (Eigen::Index c = 0; c < t.params.beta.cols(); ++c) row.push_back(t.params.beta(g, c));
        beta.push_back(row);
    }
    j["beta"] = beta;
    const auto p = t.params.priors();
    j["priors"] = std::vector<double>(p.data(), p.data() + p.size());
    nlohmann::ordered_json chol = nlohmann::ordered_json::array();
    for (const auto& L : t.params.chol_b) chol.push_back({L(0, 0), L(1, 0), L(1, 1)});
    j["chol_b"] = chol;
    j["log_sigma"] = t.params.log_sigma;
    j["hazard_rates"] = t.hazard_rates;
    j["mean_visits"] = t.mean_visits;
    j["visit_window_days"] = {t.visit_start_days, t.visit_end_days};
    j["censor_window_years"] = {t.censor_min_years, t.censor_max_years};
    j["score_sd"] = t.score_sd;
    j["score_log_hr"] = t.score_log_hr;
    return j;
}

inline void write_labels(const SimCohort& sim, std::ostream& os) {
    os << "subject_id,class\n";
    for (std::size_t i = 0; i < sim.labels.size(); ++i)
        os << sim.cohort.subjects[i].id << ',' << sim.labels[i] + 1 << '\n';
}

}  // namespace lcmm
