#pragma once

// Time-to-event analytics on latent classes: Kaplan-Meier curves, Cox
// proportional hazards, time-dependent AUC and a cross-validated comparison
// of a risk score with and without class membership.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "lcmm/classify.hpp"
#include "lcmm/error.hpp"
#include "lcmm/ingest.hpp"
#include "lcmm/parallel.hpp"
#include "lcmm/text.hpp"

namespace lcmm {

inline constexpr double kDaysPerYear = 365.25;

struct SurvSample {
    std::string subject_id;
    double time_years = 0.0;
    int status = 0;
    std::vector<double> covariates;
};

// ---- Kaplan-Meier -----------------------------------------------------------

enum class KmCi { log_log, plain };

struct KmCurve {
    std::vector<double> event_times;  // distinct times with at least one event
    std::vector<std::size_t> at_risk;
    std::vector<std::size_t> events;
    std::vector<double> survival;
    std::vector<double> ci_lower;
    std::vector<double> ci_upper;

    /// Right-continuous step function value at t.
    double at(double t) const {
        double s = 1.0;
        for (std::size_t i = 0; i < event_times.size() && event_times[i] <= t; ++i) s = survival[i];
        return s;
    }
};

inline KmCurve km_estimate(const std::vector<SurvSample>& samples, KmCi ci = KmCi::log_log) {
    if (samples.empty()) throw DataError("Kaplan-Meier needs at least one sample");
    std::vector<std::size_t> idx(samples.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(),
              [&](std::size_t a, std::size_t b) { return samples[a].time_years < samples[b].time_years; });
    constexpr double z = 1.959963984540054;
    KmCurve c;
    double s = 1.0, greenwood = 0.0;
    std::size_t n = samples.size();
    for (std::size_t k = 0; k < idx.size();) {
        const double t = samples[idx[k]].time_years;
        std::size_t d = 0, m = 0;
        for (; k < idx.size() && samples[idx[k]].time_years == t; ++k, ++m)
            if (samples[idx[k]].status == 1) ++d;
        if (d > 0) {
            s *= static_cast<double>(n - d) / static_cast<double>(n);
            if (d < n) greenwood += static_cast<double>(d) / (static_cast<double>(n) * static_cast<double>(n - d));
            double lo = s, hi = s;
            if (s > 0 && s < 1) {
                if (ci == KmCi::log_log) {
                    const double se = std::sqrt(greenwood) / std::abs(std::log(s));
                    lo = std::pow(s, std::exp(z * se));
                    hi = std::pow(s, std::exp(-z * se));
                } else {
                    const double half = z * s * std::sqrt(greenwood);
                    lo = std::max(0.0, s - half);
                    hi = std::min(1.0, s + half);
                }
            }
            c.event_times.push_back(t);
            c.at_risk.push_back(n);
            c.events.push_back(d);
            c.survival.push_back(s);
            c.ci_lower.push_back(lo);
            c.ci_upper.push_back(hi);
        }
        n -= m;
    }
    return c;
}

// ---- Cox proportional hazards ----------------------------------------------

enum class Ties { efron, breslow };

struct CoxTerm {
    std::string name;
    double coef = 0.0;
    double hazard_ratio = 1.0;
    double se = 0.0;
    double wald_z = 0.0;
    double p_value = 1.0;
};

struct CoxFit {
    std::vector<CoxTerm> terms;
    double loglik = 0.0;       // maximized partial log-likelihood
    double loglik_null = 0.0;  // at beta = 0
    double score_max_norm = 0.0;
    int iterations = 0;
    bool converged = false;
};

inline double two_sided_normal_p(double z) { return std::erfc(std::abs(z) / std::sqrt(2.0)); }

namespace detail {

struct CoxDerivs {
    double loglik = 0.0;
    Eigen::VectorXd score;
    Eigen::MatrixXd info;
};

// Samples must be sorted by descending time; X rows are centred covariates.
inline CoxDerivs cox_derivs(const std::vector<double>& times, const std::vector<int>& status,
                            const Eigen::MatrixXd& X, const Eigen::VectorXd& beta, Ties ties) {
    const auto n = X.rows();
    const auto p = X.cols();
    CoxDerivs r;
    r.score = Eigen::VectorXd::Zero(p);
    r.info = Eigen::MatrixXd::Zero(p, p);
    const Eigen::VectorXd eta = X * beta;
    double s0 = 0.0;
    Eigen::VectorXd s1 = Eigen::VectorXd::Zero(p);
    Eigen::MatrixXd s2 = Eigen::MatrixXd::Zero(p, p);
    for (Eigen::Index i = 0; i < n;) {
        const double t = times[static_cast<std::size_t>(i)];
        double d0 = 0.0;
        Eigen::VectorXd d1 = Eigen::VectorXd::Zero(p);
        Eigen::MatrixXd d2 = Eigen::MatrixXd::Zero(p, p);
        int ndead = 0;
        // Everyone tied at t joins the risk set before the events at t are scored.
        for (; i < n && times[static_cast<std::size_t>(i)] == t; ++i) {
            const double w = std::exp(eta(i));
            const Eigen::VectorXd x = X.row(i).transpose();
            s0 += w;
            s1 += w * x;
            s2 += w * x * x.transpose();
            if (status[static_cast<std::size_t>(i)] == 1) {
                ++ndead;
                d0 += w;
                d1 += w * x;
                d2 += w * x * x.transpose();
                r.loglik += eta(i);
                r.score += x;
            }
        }
        for (int l = 0; l < ndead; ++l) {
            const double frac = ties == Ties::efron ? static_cast<double>(l) / ndead : 0.0;
            const double den = s0 - frac * d0;
            const Eigen::VectorXd a = s1 - frac * d1;
            const Eigen::MatrixXd c = s2 - frac * d2;
            r.loglik -= std::log(den);
            r.score -= a / den;
            r.info += c / den - (a * a.transpose()) / (den * den);
        }
    }
    return r;
}

}  // namespace detail

struct CoxOptions {
    Ties ties = Ties::efron;
    int max_iterations = 100;
    double score_tol = 1e-8;
    double separation_bound = 15.0;
};

inline CoxFit cox_fit(const std::vector<SurvSample>& samples, const std::vector<std::string>& names,
                      const CoxOptions& opt = {}) {
    if (samples.empty()) throw DataError("Cox model needs samples");
    const auto p = static_cast<Eigen::Index>(names.size());
    if (p == 0) throw DataError("Cox model needs at least one covariate");
    for (const auto& s : samples)
        if (static_cast<Eigen::Index>(s.covariates.size()) != p)
            throw DataError("subject " + s.subject_id + " has the wrong number of covariates");
    if (std::none_of(samples.begin(), samples.end(), [](const SurvSample& s) { return s.status == 1; }))
        throw DataError("Cox model needs at least one event");

    std::vector<std::size_t> idx(samples.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(),
                     [&](std::size_t a, std::size_t b) { return samples[a].time_years > samples[b].time_years; });
    const auto n = static_cast<Eigen::Index>(samples.size());
    Eigen::MatrixXd X(n, p);
    std::vector<double> times(samples.size());
    std::vector<int> status(samples.size());
    for (Eigen::Index r = 0; r < n; ++r) {
        const auto& s = samples[idx[static_cast<std::size_t>(r)]];
        for (Eigen::Index j = 0; j < p; ++j) X(r, j) = s.covariates[static_cast<std::size_t>(j)];
        times[static_cast<std::size_t>(r)] = s.time_years;
        status[static_cast<std::size_t>(r)] = s.status;
    }
    for (Eigen::Index j = 0; j < p; ++j) {
        if (X.col(j).maxCoeff() == X.col(j).minCoeff())
            throw DataError("covariate '" + names[static_cast<std::size_t>(j)] + "' is constant");
        X.col(j).array() -= X.col(j).mean();
    }

    CoxFit fit;
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
    auto cur = detail::cox_derivs(times, status, X, beta, opt.ties);
    fit.loglik_null = cur.loglik;
    for (fit.iterations = 0; fit.iterations < opt.max_iterations; ++fit.iterations) {
        if (cur.score.cwiseAbs().maxCoeff() < opt.score_tol) {
            fit.converged = true;
            break;
        }
        Eigen::LDLT<Eigen::MatrixXd> ldlt(cur.info);
        Eigen::VectorXd step = ldlt.solve(cur.score);
        if (ldlt.info() != Eigen::Success || !step.allFinite()) step = cur.score;
        double t = 1.0;
        bool moved = false;
        for (int h = 0; h < 40; ++h, t *= 0.5) {
            const Eigen::VectorXd trial = beta + t * step;
            auto next = detail::cox_derivs(times, status, X, trial, opt.ties);
            if (std::isfinite(next.loglik) && next.loglik >= cur.loglik - 1e-12 * std::abs(cur.loglik)) {
                beta = trial;
                cur = std::move(next);
                moved = true;
                break;
            }
        }
        if (beta.cwiseAbs().maxCoeff() > opt.separation_bound)
            throw DataError("Cox coefficients diverge (|coefficient| > " + text::fmt_sig(opt.separation_bound, 3) +
                            "); the data are separable (monotone likelihood)");
        if (!moved) break;
    }
    if (!fit.converged && cur.score.cwiseAbs().maxCoeff() < opt.score_tol) fit.converged = true;
    fit.loglik = cur.loglik;
    fit.score_max_norm = cur.score.cwiseAbs().maxCoeff();

    const Eigen::MatrixXd cov = cur.info.inverse();
    for (Eigen::Index j = 0; j < p; ++j) {
        CoxTerm term;
        term.name = names[static_cast<std::size_t>(j)];
        term.coef = beta(j);
        term.hazard_ratio = std::exp(beta(j));
        term.se = std::sqrt(std::max(0.0, cov(j, j)));
        term.wald_z = term.coef / term.se;
        term.p_value = two_sided_normal_p(term.wald_z);
        fit.terms.push_back(term);
    }
    return fit;
}

inline double linear_predictor(const CoxFit& fit, const std::vector<double>& x) {
    double lp = 0.0;
    for (std::size_t j = 0; j < fit.terms.size(); ++j) lp += fit.terms[j].coef * x[j];
    return lp;
}

struct HrInterval {
    double lower, upper;
};

inline HrInterval hazard_ratio_ci(double coef, double se, double z = 1.96) {
    return {std::exp(coef - z * se), std::exp(coef + z * se)};
}

/// Survival samples with class dummies (classes 2..G, class 1 reference).
inline std::vector<SurvSample> class_samples(const std::vector<PosteriorRecord>& records,
                                             const std::vector<EventRecord>& events, int n_classes) {
    std::map<std::string, const EventRecord*> by_id;
    for (const auto& e : events) by_id[e.subject_id] = &e;
    std::vector<SurvSample> out;
    for (const auto& r : records) {
        auto it = by_id.find(r.subject_id);
        if (it == by_id.end()) continue;
        const auto& e = *it->second;
        if (e.event_time_days <= 0)
            throw DataError("subject " + e.subject_id + " has a non-positive event time");
        SurvSample s{r.subject_id, static_cast<double>(e.event_time_days) / kDaysPerYear, e.status, {}};
        for (int g = 2; g <= n_classes; ++g) s.covariates.push_back(r.assigned == g ? 1.0 : 0.0);
        out.push_back(std::move(s));
    }
    return out;
}

inline std::vector<std::string> class_dummy_names(int n_classes) {
    std::vector<std::string> n;
    for (int g = 2; g <= n_classes; ++g) n.push_back("class_" + std::to_string(g));
    return n;
}

struct ClassRiskRow {
    int class_number = 1;
    bool reference = false;
    bool estimated = false;  // false for the reference and for classes without a term
    CoxTerm term;
    HrInterval ci{1.0, 1.0};
};

/// Per-class hazard-ratio rows from a Cox fit on dummies named class_2..class_G.
inline std::vector<ClassRiskRow> class_risk_table(const CoxFit& fit, int n_classes) {
    std::vector<ClassRiskRow> rows;
    for (int g = 1; g <= n_classes; ++g) {
        ClassRiskRow r;
        r.class_number = g;
        r.reference = g == 1;
        for (const auto& t : fit.terms)
            if (t.name == "class_" + std::to_string(g)) {
                r.estimated = true;
                r.term = t;
                r.ci = hazard_ratio_ci(t.coef, t.se);
            }
        rows.push_back(r);
    }
    return rows;
}

/// Cox model on class dummies (class 1 reference); dummies of classes with no
/// members are left out.
inline CoxFit class_cox(const std::vector<PosteriorRecord>& records, const std::vector<EventRecord>& events,
                        int n_classes, const CoxOptions& opt = {}) {
    auto samples = class_samples(records, events, n_classes);
    std::vector<bool> keep(static_cast<std::size_t>(std::max(0, n_classes - 1)), false);
    for (const auto& s : samples)
        for (std::size_t j = 0; j < s.covariates.size(); ++j)
            if (s.covariates[j] != 0.0) keep[j] = true;
    std::vector<std::string> names;
    const auto all = class_dummy_names(n_classes);
    for (std::size_t j = 0; j < keep.size(); ++j)
        if (keep[j]) names.push_back(all[j]);
    for (auto& s : samples) {
        std::vector<double> x;
        for (std::size_t j = 0; j < keep.size(); ++j)
            if (keep[j]) x.push_back(s.covariates[j]);
        s.covariates = std::move(x);
    }
    return cox_fit(samples, names, opt);
}

inline std::string format_p(double p) {
    if (p < 2e-16) return "<2e-16";
    return text::fmt_sig(p, 3);
}

inline void write_class_risk_table(const std::vector<ClassRiskRow>& rows, std::ostream& os) {
    auto pad = [](std::string s, std::size_t w) {
        if (s.size() < w) s.insert(0, w - s.size(), ' ');
        return s;
    };
    const std::size_t w = 14;
    os << pad("Latent class", w) << pad("Coefficient", w) << pad("Hazard ratio", w) << pad("Std. error", w)
       << pad("Wald z", w) << pad("p value", w) << pad("HR 95% CI", 20) << '\n';
    for (const auto& r : rows) {
        os << pad(std::to_string(r.class_number), w);
        if (!r.estimated) {
            const char* mark = r.reference ? "n/a" : "NA";
            for (int i = 0; i < 5; ++i) os << pad(mark, w);
            os << pad(mark, 20) << '\n';
            continue;
        }
        os << pad(text::fmt_fixed(r.term.coef, 4), w) << pad(text::fmt_fixed(r.term.hazard_ratio, 4), w)
           << pad(text::fmt_fixed(r.term.se, 4), w) << pad(text::fmt_fixed(r.term.wald_z, 3), w)
           << pad(format_p(r.term.p_value), w)
           << pad(text::fmt_fixed(r.ci.lower, 3) + "-" + text::fmt_fixed(r.ci.upper, 3), 20) << '\n';
    }
}

inline void write_cox(const CoxFit& fit, std::ostream& os) {
    os << "term\tcoef\thazard_ratio\tse\twald_z\tp_value\n";
    for (const auto& t : fit.terms)
        os << t.name << '\t' << text::fmt_exact(t.coef) << '\t' << text::fmt_exact(t.hazard_ratio) << '\t'
           << text::fmt_exact(t.se) << '\t' << text::fmt_exact(t.wald_z) << '\t' << text::fmt_exact(t.p_value) << '\n';
    os << "# partial_loglik\t" << text::fmt_exact(fit.loglik) << "\tnull\t" << text::fmt_exact(fit.loglik_null)
       << "\tconverged\t" << (fit.converged ? 1 : 0) << '\n';
}

inline void write_km(const std::vector<std::pair<std::string, KmCurve>>& curves, std::ostream& os) {
    os << "group\ttime_years\tat_risk\tevents\tsurvival\tci_lower\tci_upper\n";
    for (const auto& [name, c] : curves) {
        os << name << "\t0\t" << (c.at_risk.empty() ? 0 : c.at_risk.front()) << "\t0\t1\t1\t1\n";
        for (std::size_t i = 0; i < c.event_times.size(); ++i)
            os << name << '\t' << text::fmt_sig(c.event_times[i], 10) << '\t' << c.at_risk[i] << '\t' << c.events[i]
               << '\t' << text::fmt_sig(c.survival[i], 10) << '\t' << text::fmt_sig(c.ci_lower[i], 10) << '\t'
               << text::fmt_sig(c.ci_upper[i], 10) << '\n';
    }
}

// ---- time-dependent AUC ---------------------------------------------------

/// Cumulative/dynamic AUC at `horizon_years`: cases have an event by the
/// horizon, controls are still event-free after it. Cases are weighted by
/// 1/G(T-) and controls by 1/G(horizon), G being the Kaplan-Meier estimate of
/// the censoring distribution.
inline double horizon_auc(const std::vector<double>& scores, const std::vector<SurvSample>& samples,
                          double horizon_years) {
    if (scores.size() != samples.size()) throw DataError("scores and samples differ in length");
    if (!(horizon_years > 0)) throw DataError("horizon must be positive");

    std::vector<SurvSample> cens;
    cens.reserve(samples.size());
    for (const auto& s : samples) cens.push_back({s.subject_id, s.time_years, 1 - s.status, {}});
    const KmCurve G = km_estimate(cens, KmCi::plain);
    auto g_left = [&](double t) {
        double s = 1.0;
        for (std::size_t i = 0; i < G.event_times.size() && G.event_times[i] < t; ++i) s = G.survival[i];
        return s;
    };

    std::vector<std::pair<double, double>> cases;  // (score, weight)
    std::vector<double> controls;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const auto& s = samples[i];
        if (s.status == 1 && s.time_years <= horizon_years) {
            const double gl = g_left(s.time_years);
            if (gl > 0) cases.push_back({scores[i], 1.0 / gl});
        } else if (s.time_years > horizon_years) {
            controls.push_back(scores[i]);
        }
    }
    if (cases.empty()) throw DataError("no events before the horizon");
    if (controls.empty()) throw DataError("no subjects event-free beyond the horizon");
    // Control weights 1/G(horizon) are constant and cancel.
    std::sort(controls.begin(), controls.end());
    double num = 0.0, den = 0.0;
    for (const auto& [sc, w] : cases) {
        const auto lo = std::lower_bound(controls.begin(), controls.end(), sc);
        const auto hi = std::upper_bound(controls.begin(), controls.end(), sc);
        const double below = static_cast<double>(lo - controls.begin());
        const double tied = static_cast<double>(hi - lo);
        num += w * (below + 0.5 * tied);
        den += w * static_cast<double>(controls.size());
    }
    return num / den;
}

// ---- cross-validated comparison ---------------------------------------------

struct CvOptions {
    int folds = 10;
    std::uint64_t seed = 1;
    double horizon_years = 5.0;
    std::int64_t window_end_days = 365;  // class assigned from the first 12 months
    int bootstrap = 1000;
    unsigned threads = 1;
};

struct CvReport {
    std::size_t n_subjects = 0;
    std::vector<std::size_t> fold_sizes;  // after merging event-free folds
    double auc_score = 0.0;               // risk score alone
    double auc_score_class = 0.0;         // risk score + class dummies
    HrInterval ci_score{0, 0};
    HrInterval ci_score_class{0, 0};
    double delta = 0.0;  // auc_score_class - auc_score
    HrInterval ci_delta{0, 0};
    int bootstrap_valid = 0;
    std::vector<double> oof_score;        // out-of-fold linear predictors
    std::vector<double> oof_score_class;
    std::vector<std::string> warnings;
};

/// Seeded near-equal partition of n items into k folds (sizes differ by <= 1).
inline std::vector<int> make_folds(std::size_t n, int k, std::uint64_t seed) {
    if (k < 2) throw DataError("need at least 2 folds");
    if (n < static_cast<std::size_t>(k)) throw DataError("fewer subjects than folds");
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::mt19937_64 rng(seed);
    for (std::size_t i = n; i > 1; --i) {
        std::uniform_int_distribution<std::size_t> u(0, i - 1);
        std::swap(perm[i - 1], perm[u(rng)]);
    }
    std::vector<int> fold(n);
    for (std::size_t pos = 0; pos < n; ++pos) fold[perm[pos]] = static_cast<int>(pos % static_cast<std::size_t>(k));
    return fold;
}

inline double percentile(std::vector<double> v, double q) {
    if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::sort(v.begin(), v.end());
    const double h = (static_cast<double>(v.size()) - 1.0) * q;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = std::min(v.size() - 1, lo + 1);
    return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

/// Compares Cox models on the risk score alone and on score + windowed class
/// via pooled out-of-fold linear predictors and their horizon AUC.
/// `scores` aligns with cohort.subjects, each of which must carry an event record.
inline CvReport cv_auc_compare(const Cohort& cohort, const std::vector<double>& scores, const FittedModel& model,
                               const CvOptions& opt = {}) {
    if (scores.size() != cohort.subjects.size()) throw DataError("one score per subject is required");
    const std::size_t n = cohort.subjects.size();
    const int G = model.spec.n_classes;
    CvReport rep;
    rep.n_subjects = n;

    std::vector<SurvSample> base(n);
    std::vector<int> klass(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& s = cohort.subjects[i];
        if (!s.event) throw DataError("subject " + s.id + " has no event record");
        if (s.event->event_time_days <= 0) throw DataError("subject " + s.id + " has a non-positive event time");
        base[i] = {s.id, static_cast<double>(s.event->event_time_days) / kDaysPerYear, s.event->status, {}};
        klass[i] = posterior_probs(model, s, opt.window_end_days).assigned;
    }

    auto fold = make_folds(n, opt.folds, opt.seed);
    // Merge folds without events into a neighbour.
    for (bool changed = true; changed;) {
        changed = false;
        std::map<int, int> events_in;
        for (std::size_t i = 0; i < n; ++i) events_in[fold[i]] += base[i].status;
        if (events_in.size() < 2) break;
        for (auto it = events_in.begin(); it != events_in.end(); ++it) {
            if (it->second > 0) continue;
            auto next = std::next(it);
            const int target = next != events_in.end() ? next->first : std::prev(it)->first;
            rep.warnings.push_back("fold " + std::to_string(it->first + 1) + " has no events; merged into fold " +
                                   std::to_string(target + 1));
            for (auto& f : fold)
                if (f == it->first) f = target;
            changed = true;
            break;
        }
    }
    std::map<int, std::size_t> sizes;
    for (int f : fold) ++sizes[f];
    if (sizes.size() < 2) throw DataError("cross-validation needs at least two folds containing events");
    for (const auto& [f, c] : sizes) rep.fold_sizes.push_back(c);

    rep.oof_score.assign(n, 0.0);
    rep.oof_score_class.assign(n, 0.0);
    for (const auto& [f, size] : sizes) {
        std::vector<SurvSample> train_a, train_b;
        for (std::size_t i = 0; i < n; ++i) {
            if (fold[i] == f) continue;
            auto a = base[i];
            a.covariates = {scores[i]};
            train_a.push_back(a);
        }
        std::vector<std::string> names_b{"score"};
        std::vector<int> dummy_classes;
        for (int g = 2; g <= G; ++g) {
            std::size_t members = 0;
            for (std::size_t i = 0; i < n; ++i)
                if (fold[i] != f && klass[i] == g) ++members;
            if (members > 0 && members < train_a.size()) {
                names_b.push_back("class_" + std::to_string(g));
                dummy_classes.push_back(g);
            } else {
                rep.warnings.push_back("fold " + std::to_string(f + 1) + ": class " + std::to_string(g) +
                                       " dummy constant in training data; dropped");
            }
        }
        auto covs_b = [&](std::size_t i) {
            std::vector<double> x{scores[i]};
            for (int g : dummy_classes) x.push_back(klass[i] == g ? 1.0 : 0.0);
            return x;
        };
        for (std::size_t i = 0; i < n; ++i) {
            if (fold[i] == f) continue;
            auto b = base[i];
            b.covariates = covs_b(i);
            train_b.push_back(std::move(b));
        }
        const auto fit_a = cox_fit(train_a, {"score"});
        const auto fit_b = cox_fit(train_b, names_b);
        for (std::size_t i = 0; i < n; ++i) {
            if (fold[i] != f) continue;
            rep.oof_score[i] = linear_predictor(fit_a, {scores[i]});
            rep.oof_score_class[i] = linear_predictor(fit_b, covs_b(i));
        }
    }
    rep.auc_score = horizon_auc(rep.oof_score, base, opt.horizon_years);
    rep.auc_score_class = horizon_auc(rep.oof_score_class, base, opt.horizon_years);
    rep.delta = rep.auc_score_class - rep.auc_score;

    const auto B = static_cast<std::size_t>(std::max(0, opt.bootstrap));
    std::vector<double> ba(B, std::numeric_limits<double>::quiet_NaN()), bb(ba), bd(ba);
    parallel_for(B, opt.threads, [&](std::size_t b) {
        std::seed_seq seq{static_cast<std::uint32_t>(opt.seed), static_cast<std::uint32_t>(opt.seed >> 32),
                          static_cast<std::uint32_t>(b), 0xB007u};
        std::mt19937_64 rng(seq);
        std::uniform_int_distribution<std::size_t> pick(0, n - 1);
        std::vector<SurvSample> s(n);
        std::vector<double> la(n), lb(n);
        for (std::size_t i = 0; i < n; ++i) {
            const auto j = pick(rng);
            s[i] = base[j];
            la[i] = rep.oof_score[j];
            lb[i] = rep.oof_score_class[j];
        }
        try {
            ba[b] = horizon_auc(la, s, opt.horizon_years);
            bb[b] = horizon_auc(lb, s, opt.horizon_years);
            bd[b] = bb[b] - ba[b];
        } catch (const DataError&) {
            // resample without cases or controls
        }
    });
    std::vector<double> va, vb, vd;
    for (std::size_t b = 0; b < B; ++b)
        if (!std::isnan(bd[b])) {
            va.push_back(ba[b]);
            vb.push_back(bb[b]);
            vd.push_back(bd[b]);
        }
    rep.bootstrap_valid = static_cast<int>(va.size());
    rep.ci_score = {percentile(va, 0.025), percentile(va, 0.975)};
    rep.ci_score_class = {percentile(vb, 0.025), percentile(vb, 0.975)};
    rep.ci_delta = {percentile(vd, 0.025), percentile(vd, 0.975)};
    return rep;
}

inline void write_cv_report(const CvReport& r, std::ostream& os) {
    auto num = [](double v) { return std::isnan(v) ? std::string("NA") : text::fmt_fixed(v, 4); };
    os << "model\tauc\tci_lower\tci_upper\n";
    os << "score\t" << num(r.auc_score) << '\t' << num(r.ci_score.lower) << '\t' << num(r.ci_score.upper) << '\n';
    os << "score+class\t" << num(r.auc_score_class) << '\t' << num(r.ci_score_class.lower) << '\t'
       << num(r.ci_score_class.upper) << '\n';
    os << "difference\t" << num(r.delta) << '\t' << num(r.ci_delta.lower) << '\t' << num(r.ci_delta.upper) << '\n';
    os << "# subjects\t" << r.n_subjects << "\tfolds\t" << r.fold_sizes.size() << "\tbootstrap_valid\t"
       << r.bootstrap_valid << '\n';
    for (const auto& w : r.warnings) os << "# warning\t" << w << '\n';
}

// ---- survival CSV -----------------------------------------------------------

struct SurvRow {
    std::string subject_id;
    std::int64_t time_days = 0;
    int status = 0;
    std::optional<double> score;
};

/// Parses `subject_id,time_days,status[,score]`.
inline std::vector<SurvRow> parse_survival(std::string_view content, const std::string& source) {
    content = text::strip_bom(content);
    std::vector<SurvRow> out;
    std::size_t line_no = 0, pos = 0;
    bool header_seen = false, with_score = false;
    while (pos <= content.size()) {
        auto end = content.find('\n', pos);
        if (end == std::string_view::npos) end = content.size();
        auto line = text::trim(content.substr(pos, end - pos));
        pos = end + 1;
        ++line_no;
        if (!line.empty() && line.front() != '#') {
            if (!header_seen) {
                if (line == "subject_id,time_days,status") with_score = false;
                else if (line == "subject_id,time_days,status,score") with_score = true;
                else throw ParseError(source, line_no, "expected header 'subject_id,time_days,status[,score]'");
                header_seen = true;
            } else {
                auto f = text::split(line);
                if (f.size() != (with_score ? 4u : 3u)) throw ParseError(source, line_no, "wrong number of fields");
                auto t = text::parse_int(f[1]);
                auto st = text::parse_int(f[2]);
                if (f[0].empty() || !t || !st) throw ParseError(source, line_no, "malformed row");
                if (*t <= 0) throw ParseError(source, line_no, "time_days must be positive");
                if (*st != 0 && *st != 1) throw ParseError(source, line_no, "status must be 0 or 1");
                SurvRow r{std::string(f[0]), *t, static_cast<int>(*st), std::nullopt};
                if (with_score) {
                    auto sc = text::parse_double(f[3]);
                    if (!sc || !std::isfinite(*sc)) throw ParseError(source, line_no, "non-numeric score");
                    r.score = *sc;
                }
                out.push_back(std::move(r));
            }
        }
        if (end == content.size()) break;
    }
    if (!header_seen) throw DataError(source + ": empty file");
    return out;
}

inline void write_survival(const std::vector<SurvRow>& rows, std::ostream& os) {
    const bool with_score = !rows.empty() && rows.front().score.has_value();
    os << "subject_id,time_days,status" << (with_score ? ",score" : "") << '\n';
    for (const auto& r : rows) {
        os << r.subject_id << ',' << r.time_days << ',' << r.status;
        if (with_score) os << ',' << text::fmt_exact(r.score.value_or(0.0));
        os << '\n';
    }
}

}  // namespace lcmm
