#pragma once

// Maximum-likelihood estimation of the latent-class mixed model by multi-start
// quasi-Newton ascent on standardized packed coordinates.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"
#include "lcmm/bfgs.hpp"
#include "lcmm/error.hpp"
#include "lcmm/ingest.hpp"
#include "lcmm/model.hpp"
#include "lcmm/parallel.hpp"
#include "lcmm/text.hpp"

namespace lcmm {

struct FitOptions {
    int n_starts = 10;
    std::uint64_t seed = 1;
    int max_iterations = 500;
    double rel_ll_tol = 1e-8;
    double grad_tol = 1e-4;  // max-norm on standardized coordinates
    unsigned threads = 1;
};

struct StartSummary {
    double initial_loglik = 0.0;
    double final_loglik = 0.0;
    bool converged = false;
    int iterations = 0;
    std::string status;
};

struct FittedModel {
    ModelSpec spec;
    Parameters params;
    double loglik = 0.0;
    int n_params = 0;
    double aic = 0.0;
    double bic = 0.0;
    std::size_t n_subjects = 0;
    std::size_t n_observations = 0;
    bool converged = false;
    double grad_max_norm = 0.0;
    std::vector<StartSummary> starts_summary;
    std::vector<std::size_t> class_counts;  // subjects assigned by posterior argmax
    bool empty_class = false;
    std::vector<std::string> warnings;
};

struct InformationCriteria {
    double aic;
    double bic;
};

inline InformationCriteria information_criteria(double loglik, int p, std::size_t n) {
    if (n < 1) throw DataError("information criteria need N >= 1");
    if (p < 0) throw DataError("information criteria need p >= 0");
    return {-2.0 * loglik + 2.0 * p, -2.0 * loglik + p * std::log(static_cast<double>(n))};
}

/// Column layout with treatment terms removed when the treatment indicator is
/// constant across the cohort (all measurements on one side of day 0).
inline ModelSpec effective_spec(const Cohort& cohort, ModelSpec spec) {
    if (!(cohort.has_pre_treatment() && cohort.has_post_treatment())) {
        spec.treatment_effect = false;
        spec.treatment_interaction = false;
        spec.treatment_quadratic = false;
    }
    return spec;
}

namespace detail {

inline std::vector<int> assignments(const Eigen::MatrixXd& posterior) {
    std::vector<int> out(static_cast<std::size_t>(posterior.rows()));
    for (Eigen::Index i = 0; i < posterior.rows(); ++i) {
        Eigen::Index best = 0;
        for (Eigen::Index g = 1; g < posterior.cols(); ++g)
            if (posterior(i, g) > posterior(i, best)) best = g;
        out[static_cast<std::size_t>(i)] = static_cast<int>(best);
    }
    return out;
}

// Negative log-likelihood in standardized coordinates.
inline optim::Objective make_objective(const LikelihoodData& data, const CoordinateScaling& sc) {
    return [&data, &sc](const Eigen::VectorXd& z, Eigen::VectorXd& g) {
        try {
            const auto p = unpack(sc.from_standard(z), data.spec());
            auto ev = evaluate_mixture(p, data, true);
            if (!std::isfinite(ev.loglik)) return std::numeric_limits<double>::infinity();
            g = -sc.grad_to_standard(ev.grad);
            return -ev.loglik;
        } catch (const SingularCovarianceError&) {
            return std::numeric_limits<double>::infinity();
        }
    };
}

// Pooled OLS start for a single class.
inline Parameters ols_start(const LikelihoodData& data, const ModelSpec& spec, double t_sd) {
    const int k = n_fixed(spec);
    Eigen::MatrixXd XtX = Eigen::MatrixXd::Zero(k, k);
    Eigen::VectorXd Xty = Eigen::VectorXd::Zero(k);
    double n = 0;
    for (const auto& d : data.subjects()) {
        XtX += d.X.transpose() * d.X;
        Xty += d.X.transpose() * d.y;
        n += static_cast<double>(d.y.size());
    }
    const Eigen::VectorXd b = XtX.ldlt().solve(Xty);
    double rss = 0;
    for (const auto& d : data.subjects()) rss += (d.y - d.X * b).squaredNorm();
    const double sd = std::sqrt(std::max(rss / std::max(1.0, n - k), 1e-12));

    Parameters p = zero_parameters(spec);
    for (int g = 0; g < spec.n_classes; ++g) p.beta.row(g) = b.transpose();
    for (auto& L : p.chol_b) {
        L(0, 0) = 0.7 * sd;
        L(1, 1) = 0.1 * sd / t_sd;
    }
    for (auto& ls : p.log_sigma) ls = std::log(0.7 * sd);
    return p;
}

inline double time_sd(const LikelihoodData& data) {
    double n = 0, s = 0, ss = 0;
    for (const auto& d : data.subjects()) {
        n += static_cast<double>(d.Z.rows());
        s += d.Z.col(1).sum();
        ss += d.Z.col(1).squaredNorm();
    }
    const double v = n > 1 ? (ss - s * s / n) / (n - 1) : 0.0;
    return v > 0 ? std::sqrt(v) : 1.0;
}

// Replicates single-class parameters across G classes (variance sets too).
inline Parameters replicate(const Parameters& one, const ModelSpec& spec) {
    Parameters p = zero_parameters(spec);
    for (int g = 0; g < spec.n_classes; ++g) p.beta.row(g) = one.beta.row(0);
    for (std::size_t v = 0; v < p.chol_b.size(); ++v) {
        p.chol_b[v] = one.chol_b[0];
        p.log_sigma[v] = one.log_sigma[0];
    }
    return p;
}

struct StartRun {
    optim::BfgsResult result;
    StartSummary summary;
    bool ok = false;
};

inline StartRun run_start(const LikelihoodData& data, const CoordinateScaling& sc, const Parameters& init,
                          const FitOptions& opt) {
    StartRun run;
    const auto obj = make_objective(data, sc);
    optim::BfgsOptions bo;
    bo.max_iterations = opt.max_iterations;
    bo.rel_f_tol = opt.rel_ll_tol;
    bo.grad_tol = opt.grad_tol;
    const Eigen::VectorXd z0 = sc.to_standard(pack(init));
    Eigen::VectorXd g0(z0.size());
    const double f0 = obj(z0, g0);
    run.summary.initial_loglik = -f0;
    if (!std::isfinite(f0)) {
        run.summary.status = "initial point has singular covariance";
        run.summary.final_loglik = -std::numeric_limits<double>::infinity();
        return run;
    }
    auto res = optim::minimize_bfgs(obj, z0, bo);
    if (std::isfinite(res.f) && !res.at_bound) res = optim::newton_polish(obj, std::move(res), bo);
    run.summary.final_loglik = -res.f;
    run.summary.converged = res.converged;
    run.summary.iterations = res.iterations;
    run.summary.status = res.status;
    run.ok = std::isfinite(res.f);
    run.result = std::move(res);
    return run;
}

}  // namespace detail

/// Relabels classes in ascending order of the post-treatment mean at day 0
/// (ties: ascending prior). The likelihood is invariant under relabelling.
inline FittedModel canonical_order(FittedModel model) {
    const int G = model.spec.n_classes;
    if (G <= 1) return model;
    const Eigen::RowVectorXd x0 = design_row(0.0, model.spec);
    const Eigen::VectorXd pri = model.params.priors();
    std::vector<int> order(static_cast<std::size_t>(G));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        const double ma = x0.dot(model.params.beta.row(a));
        const double mb = x0.dot(model.params.beta.row(b));
        if (ma != mb) return ma < mb;
        return pri(a) < pri(b);
    });

    Eigen::VectorXd full(G);
    full.head(G - 1) = model.params.logits;
    full(G - 1) = 0.0;
    Parameters p = model.params;
    const double ref = full(order.back());
    for (int h = 0; h < G; ++h) {
        const int old = order[static_cast<std::size_t>(h)];
        p.beta.row(h) = model.params.beta.row(old);
        if (h + 1 < G) p.logits(h) = full(old) - ref;
        if (model.params.chol_b.size() > 1) {
            p.chol_b[static_cast<std::size_t>(h)] = model.params.chol_b[static_cast<std::size_t>(old)];
            p.log_sigma[static_cast<std::size_t>(h)] = model.params.log_sigma[static_cast<std::size_t>(old)];
        }
    }
    if (!model.class_counts.empty()) {
        auto counts = model.class_counts;
        for (int h = 0; h < G; ++h)
            counts[static_cast<std::size_t>(h)] = model.class_counts[static_cast<std::size_t>(order[static_cast<std::size_t>(h)])];
        model.class_counts = std::move(counts);
    }
    model.params = std::move(p);
    return model;
}

/// Posterior-argmax counts and the empty-class flag for a model on a cohort.
inline void update_assignment_summary(FittedModel& model, const LikelihoodData& data) {
    auto ev = evaluate_mixture(model.params, data, false, true);
    auto asg = detail::assignments(ev.posterior);
    model.class_counts.assign(static_cast<std::size_t>(model.spec.n_classes), 0);
    for (int a : asg) ++model.class_counts[static_cast<std::size_t>(a)];
    model.empty_class = std::any_of(model.class_counts.begin(), model.class_counts.end(),
                                    [](std::size_t c) { return c == 0; });
}

inline FittedModel fit(const Cohort& cohort, const ModelSpec& requested, const FitOptions& opt = {}) {
    if (cohort.subjects.empty()) throw DataError("cannot fit an empty cohort");
    if (opt.n_starts < 1) throw DataError("n_starts must be >= 1");
    if (!(opt.rel_ll_tol > 0) || !(opt.grad_tol > 0)) throw DataError("tolerances must be positive");
    validate(requested);
    const ModelSpec spec = effective_spec(cohort, requested);
    const LikelihoodData data(cohort, spec);
    const CoordinateScaling sc = coordinate_scaling(data);
    const double t_sd = detail::time_sd(data);

    FittedModel model;
    model.spec = spec;
    if (!(spec == requested))
        model.warnings.push_back("treatment indicator constant in cohort; treatment terms dropped");

    // Single-class solution seeds every start.
    Parameters one;
    {
        ModelSpec s1 = spec;
        s1.n_classes = 1;
        s1.variance_sharing = VarianceSharing::shared;
        const LikelihoodData d1(cohort, s1);
        const CoordinateScaling sc1 = coordinate_scaling(d1);
        const Parameters init = detail::ols_start(d1, s1, t_sd);
        auto run = detail::run_start(d1, sc1, init, opt);
        one = run.ok ? unpack(sc1.from_standard(run.result.x), s1) : init;
    }

    const int G = spec.n_classes;
    const int k = n_fixed(spec);
    std::vector<Parameters> inits(static_cast<std::size_t>(opt.n_starts));
    for (int s = 0; s < opt.n_starts; ++s) {
        std::seed_seq seq{static_cast<std::uint32_t>(opt.seed), static_cast<std::uint32_t>(opt.seed >> 32),
                          static_cast<std::uint32_t>(s)};
        std::mt19937_64 rng(seq);
        std::normal_distribution<double> nd(0.0, 1.0);
        std::uniform_real_distribution<double> ud(-1.0, 1.0);
        Parameters p = detail::replicate(one, spec);
        const bool perturb = G > 1 || s > 0;
        if (perturb) {
            for (int g = 0; g < G; ++g)
                for (int j = 0; j < k; ++j) {
                    const double scale = std::max(0.1, 0.1 * std::abs(one.beta(0, j)));
                    p.beta(g, j) += scale * nd(rng);
                }
        }
        if (s > 0)
            for (int g = 0; g + 1 < G; ++g) p.logits(g) = ud(rng);
        inits[static_cast<std::size_t>(s)] = std::move(p);
    }

    std::vector<detail::StartRun> runs(inits.size());
    parallel_for(inits.size(), opt.threads,
                 [&](std::size_t s) { runs[s] = detail::run_start(data, sc, inits[s], opt); });

    int best = -1;
    std::vector<std::string> diagnostics;
    for (std::size_t s = 0; s < runs.size(); ++s) {
        model.starts_summary.push_back(runs[s].summary);
        diagnostics.push_back("start " + std::to_string(s + 1) + ": " + runs[s].summary.status);
        if (!runs[s].ok) continue;
        if (best < 0 || runs[s].result.f < runs[static_cast<std::size_t>(best)].result.f) best = static_cast<int>(s);
    }
    if (best < 0) throw EstimationError("estimation failed: all starts failed", diagnostics);

    const auto& br = runs[static_cast<std::size_t>(best)].result;
    model.params = unpack(sc.from_standard(br.x), spec);
    normalize_cholesky(model.params);
    model.loglik = -br.f;
    model.converged = br.converged;
    model.grad_max_norm = br.grad.cwiseAbs().maxCoeff();
    model.n_params = n_params(spec);
    model.n_subjects = cohort.subjects.size();
    model.n_observations = cohort.n_observations();
    const auto ic = information_criteria(model.loglik, model.n_params, model.n_subjects);
    model.aic = ic.aic;
    model.bic = ic.bic;
    if (!model.converged) model.warnings.push_back("best start did not converge: " + br.status);
    update_assignment_summary(model, data);
    if (model.empty_class) model.warnings.push_back("a class has no assigned subjects at the optimum");
    return canonical_order(std::move(model));
}

/// Observed information (negative Hessian of the log-likelihood) in packed
/// coordinates, by central differences of the analytic gradient.
inline Eigen::MatrixXd observed_information(const FittedModel& model, const Cohort& cohort, double rel_step = 1e-5) {
    const LikelihoodData data(cohort, model.spec);
    const CoordinateScaling sc = coordinate_scaling(data);
    const auto obj = detail::make_objective(data, sc);
    const Eigen::VectorXd z = sc.to_standard(pack(model.params));
    const Eigen::MatrixXd Hz = optim::fd_hessian(obj, z, rel_step);
    if (Hz.size() == 0) throw EstimationError("observed information not finite", {});
    // Hz is d2(-ll)/dz2; packed = center + scale * z.
    const Eigen::VectorXd inv = sc.scale.cwiseInverse();
    return inv.asDiagonal() * Hz * inv.asDiagonal();
}

struct SelectionRow {
    Trend trend = Trend::linear;
    int n_classes = 1;
    bool ok = false;
    std::string error;
    double loglik = 0.0;
    int n_params = 0;
    double aic = 0.0;
    double bic = 0.0;
    bool converged = false;
    std::vector<std::size_t> counts;
    std::vector<double> percentages;  // one decimal
    bool tiny_class = false;          // some class below 2% of subjects
};

inline double percent_1dp(std::size_t count, std::size_t total) {
    return std::round(1000.0 * static_cast<double>(count) / static_cast<double>(total)) / 10.0;
}

inline void fill_counts(SelectionRow& row, const std::vector<std::size_t>& counts, std::size_t total) {
    row.counts = counts;
    row.percentages.clear();
    row.tiny_class = false;
    for (auto c : counts) {
        row.percentages.push_back(percent_1dp(c, total));
        if (static_cast<double>(c) < 0.02 * static_cast<double>(total)) row.tiny_class = true;
    }
}

inline std::vector<SelectionRow> select_models(const Cohort& cohort, const std::vector<int>& class_range,
                                               const std::vector<Trend>& trends, const FitOptions& opt,
                                               const ModelSpec& base = {}) {
    if (class_range.empty() || trends.empty()) throw DataError("model grid is empty");
    std::vector<SelectionRow> rows;
    for (Trend t : trends)
        for (int G : class_range) {
            SelectionRow row;
            row.trend = t;
            row.n_classes = G;
            ModelSpec spec = base;
            spec.trend = t;
            spec.n_classes = G;
            try {
                const auto m = fit(cohort, spec, opt);
                row.ok = true;
                row.loglik = m.loglik;
                row.n_params = m.n_params;
                row.aic = m.aic;
                row.bic = m.bic;
                row.converged = m.converged;
                fill_counts(row, m.class_counts, m.n_subjects);
            } catch (const Error& e) {
                row.error = e.what();
            }
            rows.push_back(std::move(row));
        }
    return rows;
}

/// Index of the row with minimal BIC among successful fits, or -1.
inline int best_bic(const std::vector<SelectionRow>& rows) {
    int best = -1;
    for (std::size_t i = 0; i < rows.size(); ++i)
        if (rows[i].ok && (best < 0 || rows[i].bic < rows[static_cast<std::size_t>(best)].bic)) best = static_cast<int>(i);
    return best;
}

/// Goodness-of-fit grid: one row per (trend, class count).
inline void write_selection(const std::vector<SelectionRow>& rows, std::ostream& os) {
    const int best = best_bic(rows);
    os << "trend\tclasses\tloglik\tn_params\taic\tbic\tconverged\tbest_bic\tnote\n";
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& r = rows[i];
        os << to_string(r.trend) << '\t' << r.n_classes << '\t';
        if (!r.ok) {
            os << "NA\tNA\tNA\tNA\t0\t0\t" << r.error << '\n';
            continue;
        }
        os << text::fmt_fixed(r.loglik, 2) << '\t' << r.n_params << '\t' << text::fmt_fixed(r.aic, 2) << '\t'
           << text::fmt_fixed(r.bic, 2) << '\t' << (r.converged ? 1 : 0) << '\t'
           << (static_cast<int>(i) == best ? 1 : 0) << '\t' << (r.tiny_class ? "class below 2%" : "") << '\n';
    }
}

/// Subjects per class, count and percentage, for every successful fit.
inline void write_class_counts(const std::vector<SelectionRow>& rows, std::ostream& os) {
    os << "trend\tclasses\tclass\tcount\tpercent\n";
    for (const auto& r : rows) {
        if (!r.ok) continue;
        for (std::size_t g = 0; g < r.counts.size(); ++g)
            os << to_string(r.trend) << '\t' << r.n_classes << '\t' << g + 1 << '\t' << r.counts[g] << '\t'
               << text::fmt_fixed(r.percentages[g], 1) << '\n';
    }
}

// ---- model.json ----------------------------------------------------------

namespace detail {

// Non-finite values are written as null and read back as -inf.
inline nlohmann::ordered_json finite_or_null(double v) {
    return std::isfinite(v) ? nlohmann::ordered_json(v) : nlohmann::ordered_json(nullptr);
}

inline double number_or_neg_inf(const nlohmann::ordered_json& v) {
    return v.is_null() ? -std::numeric_limits<double>::infinity() : v.get<double>();
}

}  // namespace detail

inline nlohmann::ordered_json to_json(const FittedModel& m) {
    using nlohmann::ordered_json;
    ordered_json j;
    j["format"] = "lcmm-model";
    j["version"] = 1;
    ordered_json s;
    s["n_classes"] = m.spec.n_classes;
    s["trend"] = std::string(to_string(m.spec.trend));
    s["treatment_effect"] = m.spec.treatment_effect;
    s["treatment_interaction"] = m.spec.treatment_interaction;
    s["treatment_quadratic"] = m.spec.treatment_quadratic;
    s["time_scale_days"] = m.spec.time_scale_days;
    s["variance_sharing"] = std::string(to_string(m.spec.variance_sharing));
    s["log_transform"] = m.spec.log_transform;
    j["spec"] = s;
    ordered_json cols = ordered_json::array();
    for (auto c : fixed_columns(m.spec)) cols.push_back(std::string(to_string(c)));
    j["fixed_effects"] = cols;
    ordered_json beta = ordered_json::array();
    for (Eigen::Index g = 0; g < m.params.beta.rows(); ++g) {
        ordered_json row = ordered_json::array();
        for (Eigen::Index c = 0; c < m.params.beta.cols(); ++c) row.push_back(m.params.beta(g, c));
        beta.push_back(row);
    }
    ordered_json par;
    par["beta"] = beta;
    ordered_json logits = ordered_json::array();
    for (Eigen::Index g = 0; g < m.params.logits.size(); ++g) logits.push_back(m.params.logits(g));
    par["logits"] = logits;
    ordered_json chol = ordered_json::array();
    for (const auto& L : m.params.chol_b) chol.push_back({L(0, 0), L(1, 0), L(1, 1)});
    par["chol_b"] = chol;
    par["log_sigma"] = m.params.log_sigma;
    j["parameters"] = par;
    ordered_json pri = ordered_json::array();
    const auto p = m.params.priors();
    for (Eigen::Index g = 0; g < p.size(); ++g) pri.push_back(p(g));
    j["priors"] = pri;
    j["loglik"] = m.loglik;
    j["n_params"] = m.n_params;
    j["aic"] = m.aic;
    j["bic"] = m.bic;
    j["n_subjects"] = m.n_subjects;
    j["n_observations"] = m.n_observations;
    j["converged"] = m.converged;
    j["grad_max_norm"] = m.grad_max_norm;
    j["class_counts"] = m.class_counts;
    j["empty_class"] = m.empty_class;
    ordered_json starts = ordered_json::array();
    for (const auto& s0 : m.starts_summary) {
        ordered_json o;
        o["initial_loglik"] = detail::finite_or_null(s0.initial_loglik);
        o["final_loglik"] = detail::finite_or_null(s0.final_loglik);
        o["converged"] = s0.converged;
        o["iterations"] = s0.iterations;
        o["status"] = s0.status;
        starts.push_back(o);
    }
    j["starts"] = starts;
    j["warnings"] = m.warnings;
    return j;
}

inline FittedModel model_from_json(const nlohmann::ordered_json& j) {
    try {
        if (j.at("format").get<std::string>() != "lcmm-model") throw DataError("not an lcmm model document");
        FittedModel m;
        const auto& s = j.at("spec");
        m.spec.n_classes = s.at("n_classes").get<int>();
        m.spec.trend = s.at("trend").get<std::string>() == "linear" ? Trend::linear : Trend::quadratic;
        m.spec.treatment_effect = s.at("treatment_effect").get<bool>();
        m.spec.treatment_interaction = s.at("treatment_interaction").get<bool>();
        m.spec.treatment_quadratic = s.at("treatment_quadratic").get<bool>();
        m.spec.time_scale_days = s.at("time_scale_days").get<double>();
        m.spec.variance_sharing = s.at("variance_sharing").get<std::string>() == "shared"
                                      ? VarianceSharing::shared
                                      : VarianceSharing::class_specific;
        m.spec.log_transform = s.at("log_transform").get<bool>();
        validate(m.spec);
        m.params = zero_parameters(m.spec);
        const auto& par = j.at("parameters");
        const auto& beta = par.at("beta");
        if (static_cast<int>(beta.size()) != m.spec.n_classes) throw DataError("beta has wrong number of classes");
        for (int g = 0; g < m.spec.n_classes; ++g) {
            const auto& row = beta.at(static_cast<std::size_t>(g));
            if (static_cast<Eigen::Index>(row.size()) != m.params.beta.cols()) throw DataError("beta row has wrong length");
            for (Eigen::Index c = 0; c < m.params.beta.cols(); ++c)
                m.params.beta(g, c) = row.at(static_cast<std::size_t>(c)).get<double>();
        }
        const auto& lg = par.at("logits");
        if (static_cast<Eigen::Index>(lg.size()) != m.params.logits.size()) throw DataError("logits have wrong length");
        for (Eigen::Index g = 0; g < m.params.logits.size(); ++g) m.params.logits(g) = lg.at(static_cast<std::size_t>(g)).get<double>();
        const auto& ch = par.at("chol_b");
        const auto& ls = par.at("log_sigma");
        if (ch.size() != m.params.chol_b.size() || ls.size() != m.params.log_sigma.size())
            throw DataError("variance parameters have wrong length");
        for (std::size_t v = 0; v < m.params.chol_b.size(); ++v) {
            m.params.chol_b[v](0, 0) = ch.at(v).at(0).get<double>();
            m.params.chol_b[v](1, 0) = ch.at(v).at(1).get<double>();
            m.params.chol_b[v](1, 1) = ch.at(v).at(2).get<double>();
            m.params.log_sigma[v] = ls.at(v).get<double>();
        }
        m.loglik = j.at("loglik").get<double>();
        m.n_params = j.at("n_params").get<int>();
        m.aic = j.at("aic").get<double>();
        m.bic = j.at("bic").get<double>();
        m.n_subjects = j.at("n_subjects").get<std::size_t>();
        m.n_observations = j.at("n_observations").get<std::size_t>();
        m.converged = j.at("converged").get<bool>();
        m.grad_max_norm = j.value("grad_max_norm", 0.0);
        m.class_counts = j.value("class_counts", std::vector<std::size_t>{});
        m.empty_class = j.value("empty_class", false);
        if (j.contains("starts"))
            for (const auto& o : j.at("starts"))
                m.starts_summary.push_back({detail::number_or_neg_inf(o.at("initial_loglik")),
                                            detail::number_or_neg_inf(o.at("final_loglik")),
                                            o.at("converged").get<bool>(), o.at("iterations").get<int>(),
                                            o.at("status").get<std::string>()});
        m.warnings = j.value("warnings", std::vector<std::string>{});
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed model document: ") + e.what());
    }
}

inline std::string dump_model(const FittedModel& m) { return to_json(m).dump(2) + "\n"; }

inline FittedModel parse_model(const std::string& content) {
    nlohmann::ordered_json j;
    try {
        j = nlohmann::ordered_json::parse(content);
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed model document: ") + e.what());
    }
    return model_from_json(j);
}

inline FittedModel load_model(const std::string& path) { return parse_model(detail::read_file(path)); }

}  // namespace lcmm
