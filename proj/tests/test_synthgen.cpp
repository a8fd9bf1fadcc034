#include "uthp/synthgen.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

using namespace uthp;

namespace {

HawkesParams univariate(double mu, double a, double decay = 1.0) {
    HawkesParams p;
    p.mu = Eigen::VectorXd::Constant(1, mu);
    p.a = Eigen::MatrixXd::Constant(1, 1, a);
    p.decay = decay;
    return p;
}

HawkesParams bivariate() {
    HawkesParams p;
    p.mu = Eigen::Vector2d(0.3, 0.15);
    p.a.resize(2, 2);
    p.a << 0.3, 0.25, 0.1, 0.45;
    p.decay = 1.5;
    return p;
}

/// Log-likelihood with the compensator integrated numerically on a fine grid.
double numeric_loglik(const HawkesParams& p, const EventSequence& s, double horizon, int points_per_unit) {
    double log_term = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        const std::span<const Event> history(s.events.data(), i);
        log_term += std::log(classical_intensity(p, history, s.events[i].time)(s.events[i].type_id - 1));
    }
    const double t1 = s.events.front().time;
    const int points = static_cast<int>((horizon - t1) * points_per_unit);
    const double h = (horizon - t1) / points;
    double integral = 0.0;
    std::size_t seen = 0;
    for (int k = 0; k < points; ++k) {
        const double t = t1 + (k + 0.5) * h;
        while (seen < s.size() && s.events[seen].time < t) ++seen;
        integral += classical_intensity(p, std::span<const Event>(s.events.data(), seen), t).sum() * h;
    }
    return log_term - integral;
}

}  // namespace

TEST(ClassicalIntensity, ScalarExample) {
    const HawkesParams p = univariate(0.2, 0.8);
    const std::vector<Event> history{{0.0, 1}};
    EXPECT_NEAR(classical_intensity(p, history, 1.0)(0), 0.49430, 5e-6);
    EXPECT_DOUBLE_EQ(classical_intensity(p, history, 1.0)(0), 0.2 + 0.8 * std::exp(-1.0));
}

TEST(ClassicalIntensity, EmptyHistoryAndNoExcitation) {
    const HawkesParams p = bivariate();
    EXPECT_EQ(classical_intensity(p, {}, 3.0), p.mu);
    HawkesParams flat = p;
    flat.a.setZero();
    const std::vector<Event> history{{0.5, 1}, {1.0, 2}};
    EXPECT_EQ(classical_intensity(flat, history, 2.0), p.mu);
}

TEST(Validate, NonStationaryAndBadShapesRejected) {
    EXPECT_THROW(univariate(0.2, 1.0).validate(), ConfigError);
    EXPECT_THROW(univariate(0.0, 0.5).validate(), ConfigError);
    EXPECT_THROW(univariate(0.2, -0.1).validate(), ConfigError);
    HawkesParams p = bivariate();
    p.a.resize(3, 3);
    p.a.setZero();
    EXPECT_THROW(p.validate(), ConfigError);
    EXPECT_THROW((void)simulate(univariate(0.2, 1.2), {}), ConfigError);
    EXPECT_NO_THROW(HawkesParams::defaults().validate());
    EXPECT_NEAR(spectral_radius(HawkesParams::defaults().a), 0.6, 1e-12);
}

TEST(Simulate, PoissonCountWithinBound) {
    const Dataset d = simulate(univariate(1.0, 0.0), {1, 1000.0, 3});
    ASSERT_EQ(d.size(), 1u);
    EXPECT_NEAR(static_cast<double>(d.sequences[0].size()), 1000.0, 4.0 * std::sqrt(1000.0));
    std::vector<double> gaps;
    double last = 0.0;
    for (const Event& e : d.sequences[0].events) {
        gaps.push_back(e.time - last);
        last = e.time;
    }
    EXPECT_GT(ks_test_exponential(gaps).p_value, 0.01);
}

TEST(Simulate, PoissonMeanCountOverManySequences) {
    const double mu = 0.5, horizon = 20.0;
    const Dataset d = simulate(univariate(mu, 0.0), {500, horizon, 4});
    std::vector<double> counts;
    for (const auto& s : d.sequences) counts.push_back(static_cast<double>(s.size()));
    const double mean = std::accumulate(counts.begin(), counts.end(), 0.0) / 500.0;
    double var = 0.0;
    for (double c : counts) var += (c - mean) * (c - mean);
    const double se = std::sqrt(var / 499.0 / 500.0);
    // Empty draws are repeated, so the target is the count mean conditioned on at least one event.
    const double m = mu * horizon;
    EXPECT_NEAR(mean, m / (1.0 - std::exp(-m)), 3.0 * se);
}

TEST(Simulate, DeterministicSortedAndInRange) {
    const GenSpec spec{30, 40.0, 9};
    const Dataset a = simulate(bivariate(), spec);
    EXPECT_EQ(a, simulate(bivariate(), spec));
    EXPECT_NE(a, simulate(bivariate(), {30, 40.0, 10}));
    EXPECT_EQ(a.num_types, 2);
    for (const auto& s : a.sequences) {
        ASSERT_FALSE(s.events.empty());
        for (std::size_t i = 0; i < s.size(); ++i) {
            EXPECT_GE(s.events[i].time, 0.0);
            EXPECT_LE(s.events[i].time, 40.0);
            if (i > 0) EXPECT_LT(s.events[i - 1].time, s.events[i].time);
        }
    }
}

TEST(Simulate, TimeRescalingPassesKs) {
    const HawkesParams p = bivariate();
    const Dataset d = simulate(p, {200, 60.0, 5});
    EXPECT_GT(ks_test_exponential(pooled_rescaled_intervals(p, d, 60.0)).p_value, 0.01);

    // The same data under wrong parameters is detected.
    HawkesParams wrong = p;
    wrong.a.setZero();
    EXPECT_LT(ks_test_exponential(pooled_rescaled_intervals(wrong, d, 60.0)).p_value, 0.01);
}

TEST(Simulate, PooledRescalingPassesKsForManyShortPoissonSequences) {
    // Dropping every censored tail would fail here: about 48 gaps per sequence, 10k in total.
    const HawkesParams p = univariate(0.96, 0.0);
    for (std::uint64_t seed : {30u, 31u, 32u}) {
        const Dataset d = simulate(p, {200, 50.0, seed});
        EXPECT_GT(ks_test_exponential(pooled_rescaled_intervals(p, d, 50.0)).p_value, 0.01) << seed;
    }
}

TEST(ExactLoglik, PoissonClosedForm) {
    const double k = 0.8;
    const EventSequence s{{{1.0, 1}, {2.0, 1}, {3.0, 1}}};
    EXPECT_NEAR(exact_loglik(univariate(k, 0.0), s, 3.0), 3 * std::log(k) - 2 * k, 1e-14);
    // Scored form: integral to the last event and the first event left out.
    EXPECT_NEAR(exact_loglik_scored(univariate(k, 0.0), s), 2 * std::log(k) - 2 * k, 1e-14);
}

TEST(ExactLoglik, MatchesFineGridIntegration) {
    const HawkesParams p = bivariate();
    const Dataset d = simulate(p, {3, 15.0, 6});
    for (const auto& s : d.sequences) {
        const double exact = exact_loglik(p, s, 15.0);
        EXPECT_NEAR(exact, numeric_loglik(p, s, 15.0, 20000), 1e-6 * std::abs(exact));
    }
}

TEST(ExactLoglik, EventsAfterHorizonIgnored) {
    const HawkesParams p = bivariate();
    EventSequence s{{{0.5, 1}, {1.5, 2}, {2.0, 1}}};
    const double base = exact_loglik(p, s, 3.0);
    s.events.push_back({3.5, 2});
    EXPECT_EQ(exact_loglik(p, s, 3.0), base);
}

TEST(ExactLoglik, TrueParametersScoreHighest) {
    const HawkesParams p = bivariate();
    const Dataset d = simulate(p, {300, 50.0, 7});
    std::vector<HawkesParams> perturbed(4, p);
    perturbed[0].mu *= 1.5;
    perturbed[1].mu *= 0.6;
    perturbed[2].a *= 0.5;
    perturbed[3].decay *= 3.0;
    for (const auto& q : perturbed) {
        std::vector<double> diff;
        for (const auto& s : d.sequences) diff.push_back(exact_loglik(p, s, 50.0) - exact_loglik(q, s, 50.0));
        const double n = static_cast<double>(diff.size());
        const double mean = std::accumulate(diff.begin(), diff.end(), 0.0) / n;
        double var = 0.0;
        for (double x : diff) var += (x - mean) * (x - mean);
        EXPECT_GT(mean, 3.0 * std::sqrt(var / (n - 1) / n));
    }
}

TEST(RescaledIntervals, PoissonGapsScaledByRate) {
    const EventSequence s{{{0.5, 1}, {2.0, 1}}};
    const auto r = rescaled_intervals(univariate(2.0, 0.0), s);
    ASSERT_EQ(r.size(), 2u);
    EXPECT_DOUBLE_EQ(r[0], 1.0);
    EXPECT_DOUBLE_EQ(r[1], 3.0);
}

TEST(RescaledIntervals, PooledCarriesTailIntoNextSequence) {
    Dataset d;
    d.num_types = 1;
    d.sequences = {EventSequence{{{0.5, 1}, {2.0, 1}}}, EventSequence{{{1.0, 1}}}};
    const auto r = pooled_rescaled_intervals(univariate(2.0, 0.0), d, 3.0);
    ASSERT_EQ(r.size(), 3u);
    EXPECT_DOUBLE_EQ(r[0], 1.0);
    EXPECT_DOUBLE_EQ(r[1], 3.0);
    // Tail of the first sequence is 2 * (3 - 2), plus 2 * 1 to the first event of the second.
    EXPECT_DOUBLE_EQ(r[2], 4.0);
}

TEST(Ks, KnownStatistic) {
    // F(x) = 1 - e^{-x} at x = ln 2 is 0.5, so one sample gives D = 0.5.
    const KsResult r = ks_test_exponential({std::log(2.0)});
    EXPECT_NEAR(r.statistic, 0.5, 1e-15);
    EXPECT_THROW((void)ks_test_exponential({}), DataError);
    std::vector<double> shifted(400, 5.0);
    EXPECT_LT(ks_test_exponential(shifted).p_value, 1e-6);
}

TEST(Sidecar, KeysPresent) {
    const auto j = to_json(HawkesParams::defaults(), {});
    for (const char* k : {"mu", "a", "decay", "seed", "T", "num_sequences"}) EXPECT_TRUE(j.contains(k)) << k;
    EXPECT_EQ(j.at("a").size(), 2u);
}
