#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"

using namespace lcmm;

namespace {

// Profile log-likelihood of a one-class model: beta by generalized least
// squares for fixed variance parameters theta = (L00, L10, L11, log sigma).
double profile_loglik(const Cohort& c, const ModelSpec& s, const Eigen::Vector4d& theta) {
    const int k = n_fixed(s);
    std::vector<Eigen::MatrixXd> Xs, Vinv;
    std::vector<Eigen::VectorXd> ys;
    Eigen::MatrixXd XtVX = Eigen::MatrixXd::Zero(k, k);
    Eigen::VectorXd XtVy = Eigen::VectorXd::Zero(k);
    Eigen::Matrix2d L;
    L << theta(0), 0.0, theta(1), theta(2);
    const Eigen::Matrix2d B = L * L.transpose();
    const double s2 = std::exp(2 * theta(3));
    double logdet = 0.0;
    for (const auto& subj : c.subjects) {
        const auto n = static_cast<Eigen::Index>(subj.measurements.size());
        Eigen::MatrixXd X(n, k), V(n, n);
        Eigen::VectorXd y(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            const auto& m = subj.measurements[static_cast<std::size_t>(i)];
            const auto row = oracle::fixed_row(static_cast<double>(m.time_days), s);
            for (int j = 0; j < k; ++j) X(i, j) = row[static_cast<std::size_t>(j)];
            y(i) = m.value;
            const double ti = static_cast<double>(m.time_days) / 365.25;
            for (Eigen::Index j = 0; j < n; ++j) {
                const double tj = static_cast<double>(subj.measurements[static_cast<std::size_t>(j)].time_days) / 365.25;
                V(i, j) = B(0, 0) + B(0, 1) * (ti + tj) + B(1, 1) * ti * tj + (i == j ? s2 : 0.0);
            }
        }
        Eigen::FullPivLU<Eigen::MatrixXd> lu(V);
        logdet += std::log(std::abs(lu.determinant()));
        Eigen::MatrixXd Vi = lu.inverse();
        XtVX += X.transpose() * Vi * X;
        XtVy += X.transpose() * Vi * y;
        Xs.push_back(X);
        ys.push_back(y);
        Vinv.push_back(Vi);
    }
    const Eigen::VectorXd beta = XtVX.fullPivLu().solve(XtVy);
    double quad = 0.0, nobs = 0.0;
    for (std::size_t i = 0; i < Xs.size(); ++i) {
        const Eigen::VectorXd r = ys[i] - Xs[i] * beta;
        quad += r.dot(Vinv[i] * r);
        nobs += static_cast<double>(r.size());
    }
    return -0.5 * (nobs * std::log(2 * M_PI) + logdet + quad);
}

// Nelder-Mead maximization with restarts.
double nelder_mead_max(const std::function<double(const Eigen::Vector4d&)>& f, Eigen::Vector4d x0) {
    double best = f(x0);
    for (int restart = 0; restart < 30; ++restart) {
        std::vector<Eigen::Vector4d> pts{x0};
        for (int i = 0; i < 4; ++i) {
            Eigen::Vector4d p = x0;
            p(i) += 0.1 * std::max(1.0, std::abs(p(i)));
            pts.push_back(p);
        }
        std::vector<double> val;
        for (auto& p : pts) val.push_back(-f(p));
        for (int it = 0; it < 4000; ++it) {
            std::vector<int> idx{0, 1, 2, 3, 4};
            std::sort(idx.begin(), idx.end(), [&](int a, int b) { return val[a] < val[b]; });
            std::vector<Eigen::Vector4d> sp;
            std::vector<double> sv;
            for (int i : idx) {
                sp.push_back(pts[i]);
                sv.push_back(val[i]);
            }
            pts = sp;
            val = sv;
            if (std::abs(val[4] - val[0]) < 1e-12) break;
            Eigen::Vector4d cen = Eigen::Vector4d::Zero();
            for (int i = 0; i < 4; ++i) cen += pts[i];
            cen /= 4;
            const Eigen::Vector4d xr = cen + (cen - pts[4]);
            const double fr = -f(xr);
            if (fr < val[0]) {
                const Eigen::Vector4d xe = cen + 2 * (cen - pts[4]);
                const double fe = -f(xe);
                if (fe < fr) pts[4] = xe, val[4] = fe;
                else pts[4] = xr, val[4] = fr;
            } else if (fr < val[3]) {
                pts[4] = xr, val[4] = fr;
            } else {
                const Eigen::Vector4d xc = cen + 0.5 * (pts[4] - cen);
                const double fc = -f(xc);
                if (fc < val[4]) {
                    pts[4] = xc, val[4] = fc;
                } else {
                    for (int i = 1; i < 5; ++i) {
                        pts[i] = pts[0] + 0.5 * (pts[i] - pts[0]);
                        val[i] = -f(pts[i]);
                    }
                }
            }
        }
        const int b = static_cast<int>(std::min_element(val.begin(), val.end()) - val.begin());
        const double improved = -val[b];
        x0 = pts[b];
        if (improved - best < 1e-9 && restart > 2) {
            best = std::max(best, improved);
            break;
        }
        best = std::max(best, improved);
    }
    return best;
}

SimCohort small_sim(std::size_t n, std::uint64_t seed) { return simulate_cohort(two_class_truth(), n, seed); }

}  // namespace

TEST(InformationCriteria, PublishedRows) {
    const double ll[5] = {-141947.92, -141436.5, -141047.22, -140857.44, -140583.25};
    const double aic[5] = {283925.84, 282918.99, 282156.43, 281792.88, 281260.5};
    const double bic[5] = {284006.51, 283042.69, 282323.16, 282002.64, 281513.28};
    for (int g = 0; g < 5; ++g) {
        const auto ic = information_criteria(ll[g], 15 + 8 * g, 1601);
        EXPECT_NEAR(ic.aic, aic[g], 0.02);
        EXPECT_NEAR(ic.bic, bic[g], 0.02);
    }
    const auto z = information_criteria(0.0, 0, 1);
    EXPECT_EQ(z.aic, 0.0);
    EXPECT_EQ(z.bic, 0.0);
    EXPECT_THROW(information_criteria(0.0, 1, 0), DataError);
}

TEST(Selection, PercentagesAndTinyClass) {
    SelectionRow r;
    fill_counts(r, {576, 603, 145, 277}, 1601);
    // 576/1601 = 35.98%, so one decimal gives 36.0.
    EXPECT_DOUBLE_EQ(r.percentages[0], 36.0);
    EXPECT_DOUBLE_EQ(r.percentages[1], 37.7);
    EXPECT_DOUBLE_EQ(r.percentages[2], 9.1);
    EXPECT_DOUBLE_EQ(r.percentages[3], 17.3);
    EXPECT_FALSE(r.tiny_class);
    fill_counts(r, {18, 583, 1000}, 1601);
    EXPECT_DOUBLE_EQ(r.percentages[0], 1.1);
    EXPECT_TRUE(r.tiny_class);
}

TEST(Fit, SingleClassMatchesProfileOracle) {
    const auto sim = small_sim(10, 3);
    ModelSpec s;
    s.n_classes = 1;
    FitOptions fo;
    fo.n_starts = 2;
    const auto m = fit(sim.cohort, s, fo);
    EXPECT_TRUE(m.converged);
    auto f = [&](const Eigen::Vector4d& th) { return profile_loglik(sim.cohort, m.spec, th); };
    double ysd = 0;
    {
        double n = 0, s1 = 0, s2 = 0;
        for (const auto& subj : sim.cohort.subjects)
            for (const auto& mm : subj.measurements) n += 1, s1 += mm.value, s2 += mm.value * mm.value;
        ysd = std::sqrt((s2 - s1 * s1 / n) / (n - 1));
    }
    const double best = nelder_mead_max(f, Eigen::Vector4d(ysd / 2, 0.0, ysd / 20, std::log(ysd / 2)));
    EXPECT_NEAR(m.loglik, best, 1e-4);
    // The fitted variance parameters reproduce the fitted likelihood under the oracle.
    Eigen::Vector4d th(m.params.chol_b[0](0, 0), m.params.chol_b[0](1, 0), m.params.chol_b[0](1, 1), m.params.log_sigma[0]);
    EXPECT_NEAR(f(th), m.loglik, 1e-6);
}

TEST(Fit, DeterministicAcrossRunsAndThreads) {
    const auto sim = small_sim(120, 5);
    ModelSpec s;
    s.n_classes = 2;
    FitOptions fo;
    fo.n_starts = 4;
    fo.seed = 9;
    const auto a = fit(sim.cohort, s, fo);
    fo.threads = 4;
    const auto b = fit(sim.cohort, s, fo);
    EXPECT_EQ(dump_model(a), dump_model(b));
    EXPECT_EQ(pack(a.params), pack(b.params));
}

TEST(Fit, AscentFirstOrderAndIdentity) {
    const auto sim = small_sim(150, 6);
    ModelSpec s;
    s.n_classes = 2;
    FitOptions fo;
    fo.n_starts = 4;
    const auto m = fit(sim.cohort, s, fo);
    ASSERT_TRUE(m.converged);
    for (const auto& st : m.starts_summary) EXPECT_GE(m.loglik, st.initial_loglik);
    EXPECT_LT(m.grad_max_norm, fo.grad_tol);
    EXPECT_EQ(m.n_params, n_params(m.spec));
    EXPECT_NEAR(m.aic, -2 * m.loglik + 2 * m.n_params, 1e-9);
    EXPECT_NEAR(m.bic, -2 * m.loglik + m.n_params * std::log(static_cast<double>(m.n_subjects)), 1e-9);
    EXPECT_NEAR(mixture_loglik(m.params, sim.cohort, m.spec), m.loglik, 1e-8 * std::abs(m.loglik));
    // classes are in ascending order of the day-0 post-treatment mean
    const auto x0 = design_row(0, m.spec);
    EXPECT_LT(x0.dot(m.params.beta.row(0)), x0.dot(m.params.beta.row(1)));
    for (const auto& L : m.params.chol_b) {
        EXPECT_GE(L(0, 0), 0.0);
        EXPECT_GE(L(1, 1), 0.0);
    }
}

TEST(Fit, TimeScaleEquivariance) {
    const auto sim = small_sim(60, 8);
    ModelSpec s;
    s.n_classes = 1;
    FitOptions fo;
    fo.n_starts = 2;
    const auto a = fit(sim.cohort, s, fo);
    s.time_scale_days = 2 * 365.25;
    const auto b = fit(sim.cohort, s, fo);
    EXPECT_NEAR(a.loglik, b.loglik, 1e-4);
    // tau halves, so its coefficient doubles and the tau^2 coefficient quadruples
    EXPECT_NEAR(b.params.beta(0, 1) / a.params.beta(0, 1), 2.0, 2e-3);
    EXPECT_NEAR(b.params.beta(0, 2) / a.params.beta(0, 2), 4.0, 4e-3);
    EXPECT_NEAR(b.params.beta(0, 0) / a.params.beta(0, 0), 1.0, 1e-3);
}

TEST(Fit, CollinearityGuardWithoutPreTreatment) {
    auto sim = small_sim(60, 4);
    for (auto& subj : sim.cohort.subjects) {
        std::erase_if(subj.measurements, [](const Measurement& m) { return m.time_days < 0; });
        if (subj.measurements.size() < 3) subj.measurements.push_back({6000, 300.0});
    }
    ModelSpec s;
    s.n_classes = 1;
    FitOptions fo;
    fo.n_starts = 1;
    const auto m = fit(sim.cohort, s, fo);
    EXPECT_FALSE(m.spec.treatment_effect);
    EXPECT_EQ(n_fixed(m.spec), 3);
    EXPECT_FALSE(m.warnings.empty());
    EXPECT_TRUE(std::isfinite(m.loglik));
}

TEST(CanonicalOrder, RestoresAfterSwap) {
    const auto sim = small_sim(100, 12);
    ModelSpec s;
    s.n_classes = 2;
    FitOptions fo;
    fo.n_starts = 2;
    const auto m = fit(sim.cohort, s, fo);
    auto swapped = m;
    swapped.params.beta.row(0) = m.params.beta.row(1);
    swapped.params.beta.row(1) = m.params.beta.row(0);
    swapped.params.logits(0) = -m.params.logits(0);
    std::swap(swapped.class_counts[0], swapped.class_counts[1]);
    EXPECT_NEAR(mixture_loglik(swapped.params, sim.cohort, s), m.loglik, 1e-10 * std::abs(m.loglik));
    const auto back = canonical_order(swapped);
    EXPECT_LT((back.params.beta - m.params.beta).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_NEAR(back.params.logits(0), m.params.logits(0), 1e-12);
    EXPECT_EQ(back.class_counts, m.class_counts);
    EXPECT_EQ(dump_model(canonical_order(m)), dump_model(m));
}

TEST(CanonicalOrder, TiesBrokenByPrior) {
    FittedModel m;
    m.spec.n_classes = 2;
    m.params = zero_parameters(m.spec);
    m.params.beta.setConstant(1.0);
    m.params.logits(0) = 1.0;  // class 1 has the larger prior
    const auto c = canonical_order(m);
    EXPECT_NEAR(c.params.priors()(0), m.params.priors()(1), 1e-15);
}

TEST(ModelJson, RoundTripAndNonFinite) {
    const auto sim = small_sim(80, 2);
    ModelSpec s;
    s.n_classes = 2;
    FitOptions fo;
    fo.n_starts = 2;
    auto m = fit(sim.cohort, s, fo);
    m.starts_summary.push_back({-std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity(),
                                false, 0, "initial point has singular covariance"});
    const auto text1 = dump_model(m);
    const auto back = parse_model(text1);
    EXPECT_EQ(dump_model(back), text1);
    EXPECT_EQ(pack(back.params), pack(m.params));
    EXPECT_EQ(back.loglik, m.loglik);
    EXPECT_TRUE(std::isinf(back.starts_summary.back().final_loglik));
    EXPECT_THROW(parse_model("{"), DataError);
    EXPECT_THROW(parse_model("{\"format\":\"other\"}"), DataError);
}

TEST(Selection, GridReportsEveryCell) {
    const auto sim = small_sim(80, 21);
    FitOptions fo;
    fo.n_starts = 2;
    const auto rows = select_models(sim.cohort, {1, 2}, {Trend::linear, Trend::quadratic}, fo);
    ASSERT_EQ(rows.size(), 4u);
    for (const auto& r : rows) {
        EXPECT_TRUE(r.ok) << r.error;
        EXPECT_EQ(static_cast<int>(r.counts.size()), r.n_classes);
    }
    EXPECT_GE(best_bic(rows), 0);
    std::ostringstream os;
    write_selection(rows, os);
    EXPECT_NE(os.str().find("quadratic\t2\t"), std::string::npos);
}
