#include <gtest/gtest.h>

#include <sstream>

#include "oracles.hpp"

using namespace lcmm;

TEST(Simulate, DegenerateNoiseLiesOnClassMeans) {
    auto truth = default_truth();
    truth.params.chol_b[0].setZero();
    truth.params.log_sigma[0] = -std::numeric_limits<double>::infinity();
    truth.params.beta.col(0).array() += 2000.0;  // keep every mean positive
    const auto sim = simulate_cohort(truth, 100, 3);
    for (std::size_t i = 0; i < sim.labels.size(); ++i)
        for (const auto& m : sim.cohort.subjects[i].measurements)
            EXPECT_NEAR(m.value, oracle::class_mean(truth.params, sim.labels[i], static_cast<double>(m.time_days), truth.spec),
                        1e-9);
}

TEST(Simulate, SameSeedIdentical) {
    const auto truth = default_truth();
    const auto a = simulate_cohort(truth, 50, 9), b = simulate_cohort(truth, 50, 9), c = simulate_cohort(truth, 50, 10);
    std::ostringstream sa, sb, sc;
    write_longitudinal(a.cohort, sa);
    write_longitudinal(b.cohort, sb);
    write_longitudinal(c.cohort, sc);
    EXPECT_EQ(sa.str(), sb.str());
    EXPECT_NE(sa.str(), sc.str());
    EXPECT_EQ(a.labels, b.labels);
}

TEST(Simulate, PrefixStable) {
    // per-subject streams: the first subjects do not depend on the cohort size
    const auto truth = default_truth();
    const auto a = simulate_cohort(truth, 9, 4), b = simulate_cohort(truth, 99, 4);
    for (std::size_t i = 0; i < 9; ++i) {
        EXPECT_EQ(a.labels[i], b.labels[i]);
        ASSERT_EQ(a.cohort.subjects[i].measurements.size(), b.cohort.subjects[i].measurements.size());
        EXPECT_EQ(a.cohort.subjects[i].measurements.front().value, b.cohort.subjects[i].measurements.front().value);
    }
}

TEST(Simulate, MomentsAtFixedDesignRow) {
    SimTruth t;
    t.spec.n_classes = 1;
    t.params = zero_parameters(t.spec);
    t.params.beta.row(0) << 3000.0, 10.0, 0.5, -100.0, 5.0;
    t.params.chol_b[0] << 40.0, 0.0, 1.0, 6.0;
    t.params.log_sigma[0] = std::log(40.0);
    t.hazard_rates = {0.05};
    t.mean_visits = 3;
    t.visit_start_days = -1;
    t.visit_end_days = 1;
    // visits land on days -1, 0 and 1; use day 0 values
    const auto sim = simulate_cohort(t, 50000, 8);
    double s1 = 0, s2 = 0, n = 0;
    for (const auto& s : sim.cohort.subjects)
        for (const auto& m : s.measurements)
            if (m.time_days == 0) {
                s1 += m.value;
                s2 += m.value * m.value;
                n += 1;
            }
    ASSERT_GT(n, 40000);
    const double mean = s1 / n, var = s2 / n - mean * mean;
    const double want_mean = 3000.0 - 100.0;
    const double want_var = 40.0 * 40.0 + 40.0 * 40.0;  // B00 + sigma^2 at tau = 0
    EXPECT_LT(std::abs(mean - want_mean), 3 * std::sqrt(want_var / n));
    // var of the sample variance for a normal: 2 sigma^4 / n
    EXPECT_LT(std::abs(var - want_var), 3 * std::sqrt(2 * want_var * want_var / n));
}

TEST(Simulate, ClassSharesMatchPriors) {
    const auto truth = default_truth();
    const auto sim = simulate_cohort(truth, 10000, 12);
    const auto pi = truth.params.priors();
    EXPECT_NEAR(pi.sum(), 1.0, 1e-12);
    std::vector<double> obs(4, 0.0);
    for (int g : sim.labels) obs[static_cast<std::size_t>(g)] += 1;
    double chi2 = 0.0;
    for (int g = 0; g < 4; ++g) {
        const double e = 10000 * pi(g);
        chi2 += (obs[static_cast<std::size_t>(g)] - e) * (obs[static_cast<std::size_t>(g)] - e) / e;
    }
    EXPECT_LT(chi2, 11.345);  // chi-square(3) 0.99 quantile
}

TEST(Simulate, IncidenceOrderedByHazard) {
    const auto truth = default_truth();
    const auto sim = simulate_cohort(truth, 6000, 13);
    std::vector<double> ev(4, 0.0), n(4, 0.0);
    for (std::size_t i = 0; i < sim.labels.size(); ++i) {
        ev[static_cast<std::size_t>(sim.labels[i])] += sim.events[i].status;
        n[static_cast<std::size_t>(sim.labels[i])] += 1;
    }
    for (int g = 0; g < 3; ++g) EXPECT_LT(ev[g] / n[g], ev[g + 1] / n[g + 1]);
}

TEST(Simulate, DefaultTruthShape) {
    const auto t = default_truth();
    double prev = -1e300;
    for (int g = 0; g < 4; ++g) {
        const double m0 = oracle::class_mean(t.params, g, 0.0, t.spec);
        EXPECT_GT(m0, prev);
        prev = m0;
    }
    for (std::size_t g = 0; g + 1 < t.hazard_rates.size(); ++g) EXPECT_LT(t.hazard_rates[g], t.hazard_rates[g + 1]);
}

TEST(Simulate, OutputPassesIngestUnchanged) {
    const auto sim = simulate_cohort(default_truth(), 200, 14);
    std::ostringstream lo, ev;
    write_longitudinal(sim.cohort, lo);
    write_events(sim.events, ev);
    const auto loaded = parse_longitudinal(lo.str(), "sim.csv");
    EXPECT_EQ(loaded.cohort.subjects.size(), 200u);
    EXPECT_TRUE(loaded.report.excluded.empty());
    const auto joined = join_cohort(loaded.cohort, parse_events(ev.str(), "ev.csv"));
    ASSERT_EQ(joined.cohort.subjects.size(), 200u);
    for (std::size_t i = 0; i < 200; ++i) {
        const auto& a = sim.cohort.subjects[i];
        const auto& b = joined.cohort.subjects[i];
        EXPECT_EQ(a.id, b.id);
        ASSERT_EQ(a.measurements.size(), b.measurements.size());
        for (std::size_t j = 0; j < a.measurements.size(); ++j) {
            EXPECT_EQ(a.measurements[j].time_days, b.measurements[j].time_days);
            EXPECT_EQ(a.measurements[j].value, b.measurements[j].value);
        }
        if (a.event->status == 1) {
            EXPECT_LE(a.measurements.back().time_days, a.event->event_time_days);
        }
    }
}

TEST(Simulate, RejectsBadTruth) {
    auto t = default_truth();
    t.hazard_rates = {0.1, 0.2};
    EXPECT_THROW(simulate_cohort(t, 10, 1), DataError);
    t = default_truth();
    t.hazard_rates[0] = 0.0;
    EXPECT_THROW(simulate_cohort(t, 10, 1), DataError);
    EXPECT_THROW(simulate_cohort(default_truth(), 0, 1), DataError);
}
