#pragma once

// Independent reference computations used by the unit and acceptance tests.
// None of these call into the library code they check.

#include <Eigen/Dense>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <limits>
#include <random>
#include <set>
#include <vector>

#include "lcmm/lcmm.hpp"

namespace oracle {

// Fixed-effect row written out column by column.
inline std::vector<double> fixed_row(double days, const lcmm::ModelSpec& s) {
    const double t = days / 365.25;
    const double u = days >= 0 ? 1.0 : 0.0;
    std::vector<double> x{1.0, t};
    if (s.trend == lcmm::Trend::quadratic) x.push_back(t * t);
    if (s.treatment_effect) x.push_back(u);
    if (s.treatment_interaction) x.push_back(u * t);
    if (s.treatment_quadratic && s.trend == lcmm::Trend::quadratic) x.push_back(u * t * t);
    return x;
}

inline double class_mean(const lcmm::Parameters& p, int g, double days, const lcmm::ModelSpec& s) {
    const auto x = fixed_row(days, s);
    double m = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) m += x[j] * p.beta(g, static_cast<Eigen::Index>(j));
    return m;
}

// log N(y; mu, Z B Z' + s^2 I) from the full n x n covariance.
inline double direct_class_loglik(const lcmm::Subject& subj, const lcmm::Parameters& p, int g,
                                  const lcmm::ModelSpec& s) {
    const auto n = static_cast<Eigen::Index>(subj.measurements.size());
    const Eigen::Matrix2d L = p.chol_b.size() == 1 ? p.chol_b[0] : p.chol_b[static_cast<std::size_t>(g)];
    const Eigen::Matrix2d B = L * L.transpose();
    const double sigma = std::exp(p.log_sigma.size() == 1 ? p.log_sigma[0] : p.log_sigma[static_cast<std::size_t>(g)]);
    Eigen::MatrixXd V(n, n);
    Eigen::VectorXd r(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& mi = subj.measurements[static_cast<std::size_t>(i)];
        const double ti = static_cast<double>(mi.time_days) / 365.25;
        r(i) = mi.value - class_mean(p, g, static_cast<double>(mi.time_days), s);
        for (Eigen::Index j = 0; j < n; ++j) {
            const double tj = static_cast<double>(subj.measurements[static_cast<std::size_t>(j)].time_days) / 365.25;
            V(i, j) = B(0, 0) + B(0, 1) * tj + B(1, 0) * ti + B(1, 1) * ti * tj + (i == j ? sigma * sigma : 0.0);
        }
    }
    Eigen::FullPivLU<Eigen::MatrixXd> lu(V);
    const double logdet = std::log(std::abs(lu.determinant()));
    const double quad = r.dot(lu.solve(r));
    return -0.5 * (static_cast<double>(n) * std::log(2.0 * M_PI) + logdet + quad);
}

inline std::vector<double> priors(const lcmm::Parameters& p) {
    std::vector<double> e;
    double tot = 0.0;
    for (Eigen::Index g = 0; g < p.logits.size(); ++g) {
        e.push_back(std::exp(p.logits(g)));
        tot += e.back();
    }
    e.push_back(1.0);
    tot += 1.0;
    for (auto& v : e) v /= tot;
    return e;
}

inline double log_mix(const std::vector<double>& logs) {
    const double mx = *std::max_element(logs.begin(), logs.end());
    double s = 0.0;
    for (double v : logs) s += std::exp(v - mx);
    return mx + std::log(s);
}

inline double direct_mixture_loglik(const lcmm::Cohort& c, const lcmm::Parameters& p, const lcmm::ModelSpec& s) {
    const auto pi = priors(p);
    double ll = 0.0;
    for (const auto& subj : c.subjects) {
        std::vector<double> terms;
        for (int g = 0; g < s.n_classes; ++g)
            terms.push_back(std::log(pi[static_cast<std::size_t>(g)]) + direct_class_loglik(subj, p, g, s));
        ll += log_mix(terms);
    }
    return ll;
}

// Class density obtained by integrating the conditional likelihood over the
// random effects b = L u, u ~ N(0, I), with nested adaptive Gauss-Kronrod.
inline double quadrature_class_loglik(const lcmm::Subject& subj, const lcmm::Parameters& p, int g,
                                      const lcmm::ModelSpec& s) {
    const Eigen::Matrix2d L = p.chol_b.size() == 1 ? p.chol_b[0] : p.chol_b[static_cast<std::size_t>(g)];
    const double sigma = std::exp(p.log_sigma.size() == 1 ? p.log_sigma[0] : p.log_sigma[static_cast<std::size_t>(g)]);
    auto log_integrand = [&](double u0, double u1) {
        const double b0 = L(0, 0) * u0;
        const double b1 = L(1, 0) * u0 + L(1, 1) * u1;
        double lf = -0.5 * (u0 * u0 + u1 * u1) - std::log(2.0 * M_PI);
        for (const auto& m : subj.measurements) {
            const double t = static_cast<double>(m.time_days) / 365.25;
            const double e = m.value - class_mean(p, g, static_cast<double>(m.time_days), s) - b0 - b1 * t;
            lf += -0.5 * std::log(2.0 * M_PI) - std::log(sigma) - 0.5 * e * e / (sigma * sigma);
        }
        return lf;
    };
    // Locate the mode and curvature by Newton steps on finite differences,
    // then integrate over +-12 standard deviations around it.
    const double h = 1e-3;
    Eigen::Vector2d m(0.0, 0.0);
    Eigen::Matrix2d H;
    for (int it = 0; it < 20; ++it) {
        const double f0 = log_integrand(m(0), m(1));
        const double fpx = log_integrand(m(0) + h, m(1)), fmx = log_integrand(m(0) - h, m(1));
        const double fpy = log_integrand(m(0), m(1) + h), fmy = log_integrand(m(0), m(1) - h);
        const double fpp = log_integrand(m(0) + h, m(1) + h), fpm = log_integrand(m(0) + h, m(1) - h);
        const double fmp = log_integrand(m(0) - h, m(1) + h), fmm = log_integrand(m(0) - h, m(1) - h);
        const Eigen::Vector2d g((fpx - fmx) / (2 * h), (fpy - fmy) / (2 * h));
        H << -(fpx - 2 * f0 + fmx) / (h * h), -(fpp - fpm - fmp + fmm) / (4 * h * h),
            -(fpp - fpm - fmp + fmm) / (4 * h * h), -(fpy - 2 * f0 + fmy) / (h * h);
        const Eigen::Vector2d step = H.ldlt().solve(g);
        m += step;
        if (step.norm() < 1e-10) break;
    }
    const double shift = log_integrand(m(0), m(1));
    const double sd0 = std::sqrt(H.inverse()(0, 0));
    const double sd1 = 1.0 / std::sqrt(H(1, 1));
    using boost::math::quadrature::gauss_kronrod;
    auto inner = [&](double u0) {
        const double c = m(1) - H(1, 0) / H(1, 1) * (u0 - m(0));
        auto f = [&](double u1) { return std::exp(log_integrand(u0, u1) - shift); };
        return gauss_kronrod<double, 61>::integrate(f, c - 12 * sd1, c + 12 * sd1, 15, 1e-13);
    };
    const double I = gauss_kronrod<double, 61>::integrate(inner, m(0) - 12 * sd0, m(0) + 12 * sd0, 15, 1e-13);
    return shift + std::log(I);
}

inline double quadrature_mixture_loglik(const lcmm::Cohort& c, const lcmm::Parameters& p, const lcmm::ModelSpec& s) {
    const auto pi = priors(p);
    double ll = 0.0;
    for (const auto& subj : c.subjects) {
        std::vector<double> terms;
        for (int g = 0; g < s.n_classes; ++g)
            terms.push_back(std::log(pi[static_cast<std::size_t>(g)]) + quadrature_class_loglik(subj, p, g, s));
        ll += log_mix(terms);
    }
    return ll;
}

// Small random cohort: 1..3 subjects with 3..6 visits each.
inline lcmm::Cohort small_cohort(std::uint64_t seed, int n_subjects) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> nvis(3, 6);
    std::uniform_int_distribution<int> day(-900, 3000);
    std::normal_distribution<double> nrm(400.0, 150.0);
    lcmm::Cohort c;
    for (int i = 0; i < n_subjects; ++i) {
        lcmm::Subject s;
        s.id = "P" + std::to_string(i + 1);
        std::set<int> days{-100, 30, 400};
        const int k = nvis(rng);
        while (static_cast<int>(days.size()) < k) days.insert(day(rng));
        for (int d : days) s.measurements.push_back({d, std::abs(nrm(rng)) + 10.0});
        c.subjects.push_back(s);
    }
    return c;
}

// Random parameters of moderate scale for the given spec.
inline lcmm::Parameters random_parameters(const lcmm::ModelSpec& s, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n01(0.0, 1.0);
    std::uniform_real_distribution<double> un(0.5, 1.5);
    auto p = lcmm::zero_parameters(s);
    for (Eigen::Index g = 0; g < p.beta.rows(); ++g)
        for (Eigen::Index j = 0; j < p.beta.cols(); ++j) p.beta(g, j) = (j == 0 ? 400.0 : 0.0) + 50.0 * n01(rng);
    for (Eigen::Index g = 0; g < p.logits.size(); ++g) p.logits(g) = n01(rng);
    for (auto& L : p.chol_b) L << 60.0 * un(rng), 0.0, 10.0 * n01(rng), 15.0 * un(rng);
    for (auto& ls : p.log_sigma) ls = std::log(60.0 * un(rng));
    return p;
}

// Central finite differences of f at x with a fixed step h.
inline Eigen::VectorXd central_diff(const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& x,
                                    double h = 1e-5) {
    Eigen::VectorXd g(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        const double step = h;
        Eigen::VectorXd xp = x, xm = x;
        xp(i) += step;
        xm(i) -= step;
        g(i) = (f(xp) - f(xm)) / (2.0 * step);
    }
    return g;
}

// Partial log-likelihood of a single covariate without ties.
inline double partial_loglik_1d(const std::vector<double>& t, const std::vector<int>& d, const std::vector<double>& x,
                                double beta) {
    double ll = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i) {
        if (!d[i]) continue;
        double den = 0.0;
        for (std::size_t j = 0; j < t.size(); ++j)
            if (t[j] >= t[i]) den += std::exp(beta * x[j]);
        ll += beta * x[i] - std::log(den);
    }
    return ll;
}

inline double grid_argmax(const std::function<double(double)>& f, double lo, double hi, double step) {
    double best = lo, fb = f(lo);
    const auto n = static_cast<long>(std::llround((hi - lo) / step));
    for (long i = 1; i <= n; ++i) {
        const double b = lo + static_cast<double>(i) * step;
        const double v = f(b);
        if (v > fb) {
            fb = v;
            best = b;
        }
    }
    return best;
}

// Number of tie-free arrangements of m a's and n b's with U_a = u, via the
// recursion on the largest observation.
inline std::vector<double> mw_counts(int m, int n) {
    std::vector<std::vector<std::vector<double>>> f(
        static_cast<std::size_t>(m + 1),
        std::vector<std::vector<double>>(static_cast<std::size_t>(n + 1)));
    for (int i = 0; i <= m; ++i)
        for (int j = 0; j <= n; ++j) {
            auto& c = f[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
            c.assign(static_cast<std::size_t>(i * j + 1), 0.0);
            if (i == 0 || j == 0) {
                c[0] = 1.0;
                continue;
            }
            // Largest value belongs to a: it beats all j b's.
            const auto& fa = f[static_cast<std::size_t>(i - 1)][static_cast<std::size_t>(j)];
            for (std::size_t u = 0; u < fa.size(); ++u) c[u + static_cast<std::size_t>(j)] += fa[u];
            const auto& fb = f[static_cast<std::size_t>(i)][static_cast<std::size_t>(j - 1)];
            for (std::size_t u = 0; u < fb.size(); ++u) c[u] += fb[u];
        }
    return f[static_cast<std::size_t>(m)][static_cast<std::size_t>(n)];
}

inline double mw_exact_p(int m, int n, double u) {
    const auto c = mw_counts(m, n);
    const double tot = std::accumulate(c.begin(), c.end(), 0.0);
    double lo = 0.0, hi = 0.0;
    for (std::size_t k = 0; k < c.size(); ++k) {
        if (static_cast<double>(k) <= u + 1e-9) lo += c[k];
        if (static_cast<double>(k) >= u - 1e-9) hi += c[k];
    }
    return std::min(1.0, 2.0 * std::min(lo, hi) / tot);
}

}  // namespace oracle
