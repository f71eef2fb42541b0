#pragma once

// Latent-class linear mixed model.
//
// Subject i in class g follows  y_i = X_i beta_g + Z_i b_i + e_i  with
// b_i ~ N(0, B_g), e_i ~ N(0, sigma_g^2 I) and prior class probabilities
// pi = softmax(logits, 0).  Fixed-effect rows are [1, t, (t^2), u, u*t, (u*t^2)]
// with t = time_days / time_scale_days and u = 1{time_days >= 0}; random-effect
// rows are [1, t].
//
// The marginal covariance V = Z B Z' + s I (s = sigma^2) is never formed. With
// B = L L' the 2x2 matrix A = I + L'Z'Z L / s is SPD with det(A) >= 1, and
//   det V   = s^n det A
//   V^{-1}  = (I - Z P Z') / s,   P = L A^{-1} L' / s
// so every per-subject term costs O(n k) after an O(n) residual pass.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lcmm/error.hpp"
#include "lcmm/ingest.hpp"

namespace lcmm {

enum class Trend { linear, quadratic };
enum class VarianceSharing { shared, class_specific };

inline std::string_view to_string(Trend t) { return t == Trend::linear ? "linear" : "quadratic"; }
inline std::string_view to_string(VarianceSharing v) {
    return v == VarianceSharing::shared ? "shared" : "class_specific";
}

struct ModelSpec {
    int n_classes = 1;
    Trend trend = Trend::quadratic;
    bool treatment_effect = true;       // u column; cleared when u is constant in the data
    bool treatment_interaction = true;  // u * t
    bool treatment_quadratic = false;   // u * t^2 (quadratic trend only)
    double time_scale_days = 365.25;
    VarianceSharing variance_sharing = VarianceSharing::shared;
    bool log_transform = false;  // model log(value) instead of value

    int n_variance_sets() const { return variance_sharing == VarianceSharing::shared ? 1 : n_classes; }

    friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

inline void validate(const ModelSpec& spec) {
    if (spec.n_classes < 1) throw DataError("number of classes must be >= 1");
    if (!(spec.time_scale_days > 0.0) || !std::isfinite(spec.time_scale_days))
        throw DataError("time_scale_days must be positive");
}

enum class Column { intercept, time, time2, treat, treat_time, treat_time2 };

inline std::vector<Column> fixed_columns(const ModelSpec& spec) {
    std::vector<Column> cols{Column::intercept, Column::time};
    const bool quad = spec.trend == Trend::quadratic;
    if (quad) cols.push_back(Column::time2);
    if (spec.treatment_effect) cols.push_back(Column::treat);
    if (spec.treatment_interaction) cols.push_back(Column::treat_time);
    if (quad && spec.treatment_quadratic) cols.push_back(Column::treat_time2);
    return cols;
}

inline std::string_view to_string(Column c) {
    switch (c) {
        case Column::intercept: return "intercept";
        case Column::time: return "time";
        case Column::time2: return "time2";
        case Column::treat: return "treatment";
        case Column::treat_time: return "treatment:time";
        case Column::treat_time2: return "treatment:time2";
    }
    return "?";
}

inline int n_fixed(const ModelSpec& spec) { return static_cast<int>(fixed_columns(spec).size()); }

inline double column_value(Column c, double t, double u) {
    switch (c) {
        case Column::intercept: return 1.0;
        case Column::time: return t;
        case Column::time2: return t * t;
        case Column::treat: return u;
        case Column::treat_time: return u * t;
        case Column::treat_time2: return u * t * t;
    }
    return 0.0;
}

/// Fixed-effect row for one time point.
inline Eigen::RowVectorXd design_row(double time_days, const ModelSpec& spec) {
    const auto cols = fixed_columns(spec);
    const double t = time_days / spec.time_scale_days;
    const double u = time_days >= 0 ? 1.0 : 0.0;
    Eigen::RowVectorXd x(static_cast<Eigen::Index>(cols.size()));
    for (std::size_t j = 0; j < cols.size(); ++j) x(static_cast<Eigen::Index>(j)) = column_value(cols[j], t, u);
    return x;
}

struct Design {
    Eigen::MatrixXd X;                        // n x k
    Eigen::Matrix<double, Eigen::Dynamic, 2> Z;  // n x 2
};

inline Design build_design(std::span<const double> times_days, const ModelSpec& spec) {
    const auto n = static_cast<Eigen::Index>(times_days.size());
    Design d;
    d.X.resize(n, n_fixed(spec));
    d.Z.resize(n, 2);
    for (Eigen::Index i = 0; i < n; ++i) {
        d.X.row(i) = design_row(times_days[static_cast<std::size_t>(i)], spec);
        d.Z(i, 0) = 1.0;
        d.Z(i, 1) = times_days[static_cast<std::size_t>(i)] / spec.time_scale_days;
    }
    return d;
}

/// Class priors from G-1 logits; the last class is the reference (logit 0).
inline Eigen::VectorXd class_priors(const Eigen::VectorXd& logits) {
    const Eigen::Index G = logits.size() + 1;
    Eigen::VectorXd p(G);
    double mx = 0.0;
    for (Eigen::Index g = 0; g + 1 < G; ++g) mx = std::max(mx, logits(g));
    double total = 0.0;
    for (Eigen::Index g = 0; g < G; ++g) {
        p(g) = std::exp((g + 1 < G ? logits(g) : 0.0) - mx);
        total += p(g);
    }
    return p / total;
}

inline double log_sum_exp(const Eigen::VectorXd& a) {
    const double mx = a.maxCoeff();
    if (!std::isfinite(mx)) return mx;
    return mx + std::log((a.array() - mx).exp().sum());
}

struct Parameters {
    Eigen::MatrixXd beta;                   // G x k, row g = class g
    Eigen::VectorXd logits;                 // G - 1
    std::vector<Eigen::Matrix2d> chol_b;    // lower triangular, 1 or G entries
    std::vector<double> log_sigma;          // 1 or G entries

    int n_classes() const { return static_cast<int>(beta.rows()); }
    const Eigen::Matrix2d& chol(int g) const { return chol_b.size() == 1 ? chol_b[0] : chol_b[static_cast<std::size_t>(g)]; }
    double log_sd(int g) const { return log_sigma.size() == 1 ? log_sigma[0] : log_sigma[static_cast<std::size_t>(g)]; }
    Eigen::Matrix2d random_cov(int g) const { return chol(g) * chol(g).transpose(); }
    Eigen::VectorXd priors() const { return class_priors(logits); }
};

/// Number of free coordinates in the packed vector.
inline int n_params(const ModelSpec& spec) {
    const int G = spec.n_classes;
    const int V = spec.n_variance_sets();
    return G * n_fixed(spec) + (G - 1) + 3 * V + V;
}

inline Parameters zero_parameters(const ModelSpec& spec) {
    Parameters p;
    p.beta = Eigen::MatrixXd::Zero(spec.n_classes, n_fixed(spec));
    p.logits = Eigen::VectorXd::Zero(spec.n_classes - 1);
    p.chol_b.assign(static_cast<std::size_t>(spec.n_variance_sets()), Eigen::Matrix2d::Zero());
    p.log_sigma.assign(static_cast<std::size_t>(spec.n_variance_sets()), 0.0);
    return p;
}

/// Packed order: beta row-major by class, logits, then per variance set the
/// Cholesky lower triangle column-major (L00, L10, L11), then log_sigma per set.
inline Eigen::VectorXd pack(const Parameters& p) {
    const auto G = p.beta.rows();
    const auto k = p.beta.cols();
    const auto V = static_cast<Eigen::Index>(p.chol_b.size());
    Eigen::VectorXd v(G * k + (G - 1) + 4 * V);
    Eigen::Index i = 0;
    for (Eigen::Index g = 0; g < G; ++g)
        for (Eigen::Index j = 0; j < k; ++j) v(i++) = p.beta(g, j);
    for (Eigen::Index g = 0; g + 1 < G; ++g) v(i++) = p.logits(g);
    for (const auto& L : p.chol_b) {
        v(i++) = L(0, 0);
        v(i++) = L(1, 0);
        v(i++) = L(1, 1);
    }
    for (double ls : p.log_sigma) v(i++) = ls;
    return v;
}

inline Parameters unpack(const Eigen::VectorXd& v, const ModelSpec& spec) {
    if (v.size() != n_params(spec)) throw DataError("packed parameter vector has wrong length");
    Parameters p = zero_parameters(spec);
    Eigen::Index i = 0;
    for (Eigen::Index g = 0; g < p.beta.rows(); ++g)
        for (Eigen::Index j = 0; j < p.beta.cols(); ++j) p.beta(g, j) = v(i++);
    for (Eigen::Index g = 0; g < p.logits.size(); ++g) p.logits(g) = v(i++);
    for (auto& L : p.chol_b) {
        L(0, 0) = v(i++);
        L(1, 0) = v(i++);
        L(1, 1) = v(i++);
        L(0, 1) = 0.0;
    }
    for (auto& ls : p.log_sigma) ls = v(i++);
    return p;
}

/// Index helpers into the packed vector.
struct PackedLayout {
    int G, k, V;
    explicit PackedLayout(const ModelSpec& s) : G(s.n_classes), k(n_fixed(s)), V(s.n_variance_sets()) {}
    int beta(int g, int j) const { return g * k + j; }
    int logit(int g) const { return G * k + g; }
    int chol(int set, int e) const { return G * k + (G - 1) + 3 * set + e; }
    int log_sigma(int set) const { return G * k + (G - 1) + 3 * V + set; }
    int size() const { return G * k + (G - 1) + 4 * V; }
};

/// Flips column signs so the Cholesky diagonals are nonnegative (B unchanged).
inline void normalize_cholesky(Parameters& p) {
    for (auto& L : p.chol_b) {
        if (L(0, 0) < 0) L.col(0) = -L.col(0);
        if (L(1, 1) < 0) L(1, 1) = -L(1, 1);
    }
}

/// Lower factor of a 2x2 positive semidefinite matrix.
inline Eigen::Matrix2d psd_cholesky(const Eigen::Matrix2d& B) {
    Eigen::Matrix2d L = Eigen::Matrix2d::Zero();
    const double b00 = std::max(0.0, B(0, 0));
    L(0, 0) = std::sqrt(b00);
    if (L(0, 0) > 0) {
        L(1, 0) = B(1, 0) / L(0, 0);
        L(1, 1) = std::sqrt(std::max(0.0, B(1, 1) - L(1, 0) * L(1, 0)));
    } else {
        L(1, 1) = std::sqrt(std::max(0.0, B(1, 1)));
    }
    return L;
}

/// Per-subject design with the modelled response.
struct SubjectData {
    Eigen::MatrixXd X;
    Eigen::Matrix<double, Eigen::Dynamic, 2> Z;
    Eigen::VectorXd y;
    Eigen::Matrix2d ZtZ;
};

inline SubjectData prepare_subject(const Subject& s, const ModelSpec& spec,
                                   std::optional<std::int64_t> window_end_days = std::nullopt) {
    std::vector<double> times;
    std::vector<double> values;
    for (const auto& m : s.measurements) {
        if (window_end_days && m.time_days > *window_end_days) continue;
        times.push_back(static_cast<double>(m.time_days));
        values.push_back(spec.log_transform ? std::log(m.value) : m.value);
    }
    if (times.empty()) throw DataError("subject " + s.id + " has no usable measurement");
    auto d = build_design(times, spec);
    SubjectData out;
    out.X = std::move(d.X);
    out.Z = std::move(d.Z);
    out.y = Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
    out.ZtZ = out.Z.transpose() * out.Z;
    return out;
}

struct ClassGradient {
    Eigen::VectorXd beta;   // k
    Eigen::Matrix2d chol;   // lower triangle used
    double log_sigma = 0.0;
};

namespace detail {

// Condition-number ceiling for V before it is treated as singular.
inline constexpr double kMaxCondition = 1e14;

inline double class_loglik(const SubjectData& d, const Eigen::Ref<const Eigen::RowVectorXd>& beta,
                           const Eigen::Matrix2d& L, double log_sigma, int class_index,
                           ClassGradient* grad) {
    const auto n = d.y.size();
    const double s = std::exp(2.0 * log_sigma);
    const Eigen::Matrix2d M = L.transpose() * d.ZtZ * L;
    const double lmax = 0.5 * (M.trace() + std::hypot(M(0, 0) - M(1, 1), 2.0 * M(0, 1)));
    if (!(s > 0.0) || !std::isfinite(s) || !std::isfinite(lmax) || (s + lmax) / s > kMaxCondition)
        throw SingularCovarianceError(static_cast<std::size_t>(class_index));

    Eigen::Matrix2d A = Eigen::Matrix2d::Identity() + M / s;
    const double detA = A(0, 0) * A(1, 1) - A(0, 1) * A(1, 0);
    Eigen::Matrix2d Ainv;
    Ainv << A(1, 1), -A(0, 1), -A(1, 0), A(0, 0);
    Ainv /= detA;
    const Eigen::Matrix2d P = L * Ainv * L.transpose() / s;

    const Eigen::VectorXd r = d.y - d.X * beta.transpose();
    const Eigen::Vector2d Ztr = d.Z.transpose() * r;
    const Eigen::VectorXd alpha = (r - d.Z * (P * Ztr)) / s;
    const double quad = r.dot(alpha);
    const double logdet = static_cast<double>(n) * std::log(s) + std::log(detA);
    const double ll = -0.5 * (static_cast<double>(n) * std::log(2.0 * std::numbers::pi) + logdet + quad);

    if (grad) {
        grad->beta = d.X.transpose() * alpha;
        const Eigen::Vector2d Zta = d.Z.transpose() * alpha;
        const Eigen::Matrix2d ZtVinvZ = (d.ZtZ - d.ZtZ * P * d.ZtZ) / s;
        const Eigen::Matrix2d half = 0.5 * (Zta * Zta.transpose() - ZtVinvZ);
        grad->chol = 2.0 * half * L;
        const double trVinv = (static_cast<double>(n) - (P * d.ZtZ).trace()) / s;
        grad->log_sigma = s * (alpha.squaredNorm() - trVinv);
    }
    return ll;
}

}  // namespace detail

/// log N(y; X beta_g, Z B_g Z' + sigma_g^2 I) for one subject.
inline double subject_class_loglik(const Subject& subject, const Eigen::RowVectorXd& beta_g,
                                   const Eigen::Matrix2d& B_g, double sigma_g, const ModelSpec& spec,
                                   int class_index = 0) {
    const auto d = prepare_subject(subject, spec);
    if (beta_g.size() != d.X.cols()) throw DataError("beta has wrong length for the model spec");
    if (!(sigma_g > 0.0)) throw SingularCovarianceError(static_cast<std::size_t>(class_index));
    return detail::class_loglik(d, beta_g, psd_cholesky(B_g), std::log(sigma_g), class_index, nullptr);
}

/// Cohort prepared for repeated likelihood evaluation under one spec.
class LikelihoodData {
  public:
    LikelihoodData() = default;
    LikelihoodData(const Cohort& cohort, const ModelSpec& spec) : spec_(spec) {
        validate(spec);
        subjects_.reserve(cohort.subjects.size());
        for (const auto& s : cohort.subjects) subjects_.push_back(prepare_subject(s, spec));
    }

    const ModelSpec& spec() const { return spec_; }
    const std::vector<SubjectData>& subjects() const { return subjects_; }
    std::size_t size() const { return subjects_.size(); }

  private:
    ModelSpec spec_;
    std::vector<SubjectData> subjects_;
};

struct MixtureEval {
    double loglik = 0.0;
    Eigen::VectorXd grad;       // packed layout; empty unless requested
    Eigen::MatrixXd posterior;  // N x G; empty unless requested
};

/// Mixture log-likelihood, optionally with its gradient in packed coordinates
/// and the posterior class probabilities. Subject terms are summed in cohort
/// order.
inline MixtureEval evaluate_mixture(const Parameters& params, const LikelihoodData& data, bool want_grad,
                                    bool want_posterior = false) {
    const auto& spec = data.spec();
    const int G = spec.n_classes;
    if (params.beta.rows() != G || params.beta.cols() != n_fixed(spec) || params.logits.size() != G - 1 ||
        static_cast<int>(params.chol_b.size()) != spec.n_variance_sets() ||
        static_cast<int>(params.log_sigma.size()) != spec.n_variance_sets())
        throw DataError("parameters do not match the model spec");

    const PackedLayout lay(spec);
    const Eigen::VectorXd pri = params.priors();
    const Eigen::VectorXd log_pri = pri.array().log();
    const bool shared = spec.n_variance_sets() == 1;

    MixtureEval out;
    if (want_grad) out.grad = Eigen::VectorXd::Zero(lay.size());
    if (want_posterior) out.posterior.resize(static_cast<Eigen::Index>(data.size()), G);

    std::vector<ClassGradient> cg(static_cast<std::size_t>(G));
    Eigen::VectorXd a(G);
    for (std::size_t i = 0; i < data.size(); ++i) {
        const auto& d = data.subjects()[i];
        for (int g = 0; g < G; ++g)
            a(g) = log_pri(g) + detail::class_loglik(d, params.beta.row(g), params.chol(g), params.log_sd(g), g,
                                                     want_grad ? &cg[static_cast<std::size_t>(g)] : nullptr);
        const double lse = log_sum_exp(a);
        out.loglik += lse;
        if (!want_grad && !want_posterior) continue;
        const Eigen::VectorXd post = (a.array() - lse).exp();
        if (want_posterior) out.posterior.row(static_cast<Eigen::Index>(i)) = post.transpose();
        if (!want_grad) continue;
        for (int g = 0; g < G; ++g) {
            const double w = post(g);
            if (w == 0.0) continue;
            const auto& c = cg[static_cast<std::size_t>(g)];
            for (int j = 0; j < lay.k; ++j) out.grad(lay.beta(g, j)) += w * c.beta(j);
            const int set = shared ? 0 : g;
            out.grad(lay.chol(set, 0)) += w * c.chol(0, 0);
            out.grad(lay.chol(set, 1)) += w * c.chol(1, 0);
            out.grad(lay.chol(set, 2)) += w * c.chol(1, 1);
            out.grad(lay.log_sigma(set)) += w * c.log_sigma;
        }
        for (int g = 0; g + 1 < G; ++g) out.grad(lay.logit(g)) += post(g) - pri(g);
    }
    return out;
}

inline double mixture_loglik(const Parameters& params, const LikelihoodData& data) {
    return evaluate_mixture(params, data, false).loglik;
}

inline double mixture_loglik(const Parameters& params, const Cohort& cohort, const ModelSpec& spec) {
    return mixture_loglik(params, LikelihoodData(cohort, spec));
}

inline Eigen::VectorXd mixture_grad(const Parameters& params, const LikelihoodData& data) {
    return evaluate_mixture(params, data, true).grad;
}

inline Eigen::VectorXd mixture_grad(const Parameters& params, const Cohort& cohort, const ModelSpec& spec) {
    return mixture_grad(params, LikelihoodData(cohort, spec));
}

/// Affine map between packed and standardized coordinates:
/// standardized = (packed - center) / scale. Fixed effects and Cholesky
/// entries are measured in units of the response SD per unit of covariate
/// SD; log_sigma is centred on log(response SD); logits are unchanged.
struct CoordinateScaling {
    Eigen::VectorXd center;
    Eigen::VectorXd scale;

    Eigen::VectorXd to_standard(const Eigen::VectorXd& packed) const {
        return ((packed - center).array() / scale.array()).matrix();
    }
    Eigen::VectorXd from_standard(const Eigen::VectorXd& z) const {
        return (z.array() * scale.array()).matrix() + center;
    }
    // d f / d z = d f / d packed * scale
    Eigen::VectorXd grad_to_standard(const Eigen::VectorXd& g) const { return (g.array() * scale.array()).matrix(); }
};

inline CoordinateScaling coordinate_scaling(const LikelihoodData& data) {
    const auto& spec = data.spec();
    const PackedLayout lay(spec);
    const int k = lay.k;

    double n = 0, sy = 0, syy = 0;
    Eigen::VectorXd sx = Eigen::VectorXd::Zero(k), sxx = Eigen::VectorXd::Zero(k);
    for (const auto& d : data.subjects()) {
        n += static_cast<double>(d.y.size());
        sy += d.y.sum();
        syy += d.y.squaredNorm();
        sx += d.X.colwise().sum().transpose();
        sxx += d.X.array().square().colwise().sum().matrix().transpose();
    }
    auto sd = [&](double s1, double s2) {
        if (n < 2) return 1.0;
        const double v = (s2 - s1 * s1 / n) / (n - 1);
        return v > 0 ? std::sqrt(v) : 1.0;
    };
    const double y_mean = n > 0 ? sy / n : 0.0;
    const double y_sd = sd(sy, syy);
    const double t_sd = [&] {
        // SD of the random-slope covariate equals the SD of the time column.
        return sd(sx(1), sxx(1));
    }();

    CoordinateScaling c;
    c.center = Eigen::VectorXd::Zero(lay.size());
    c.scale = Eigen::VectorXd::Ones(lay.size());
    for (int g = 0; g < lay.G; ++g) {
        c.center(lay.beta(g, 0)) = y_mean;
        c.scale(lay.beta(g, 0)) = y_sd;
        for (int j = 1; j < k; ++j) c.scale(lay.beta(g, j)) = y_sd / sd(sx(j), sxx(j));
    }
    for (int v = 0; v < lay.V; ++v) {
        c.scale(lay.chol(v, 0)) = y_sd;
        c.scale(lay.chol(v, 1)) = y_sd / t_sd;
        c.scale(lay.chol(v, 2)) = y_sd / t_sd;
        c.center(lay.log_sigma(v)) = std::log(y_sd);
    }
    return c;
}

}  // namespace lcmm
