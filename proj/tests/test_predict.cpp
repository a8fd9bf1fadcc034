#include "uthp/ad/gradcheck.hpp"
#include "uthp/predict.hpp"

#include "test_util.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace uthp;

namespace {

struct HeadFixture {
    ParameterSet params;
    HeadParams heads;

    HeadFixture(int d, int num_types, std::uint64_t seed = 1) {
        ModelConfig cfg = test_util::tiny_config();
        cfg.d_model = d;
        Rng rng(seed);
        heads = add_heads(params, cfg, num_types, rng);
    }
};

Tensor random_hidden(std::uint64_t seed, Eigen::Index n, Eigen::Index d) {
    Rng rng(seed);
    Matrix m(n, d);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-1, 1);
    return Tensor::constant(m);
}

EventSequence sequence_of(std::initializer_list<Event> events) { return EventSequence{events}; }

}  // namespace

TEST(Heads, ZeroWeightsGiveUniformTypes) {
    HeadFixture f(4, 5);
    f.heads.type_weight.mutable_value().setZero();
    const EventSequence s = sequence_of({{1, 1}, {2, 3}, {4, 2}});
    const HeadOutputs out = prediction_heads(s, random_hidden(1, 3, 4), f.heads);
    ASSERT_EQ(out.probabilities.rows(), 2);
    EXPECT_TRUE(out.probabilities.value().isApproxToConstant(0.2, 1e-15));
}

TEST(Heads, LogThreeLogitsGiveThreeQuarters) {
    HeadFixture f(1, 2);
    f.heads.type_weight.mutable_value() << std::log(3.0), 0.0;
    Matrix h(2, 1);
    h << 1.0, 0.0;
    const HeadOutputs out = prediction_heads(sequence_of({{1, 1}, {2, 1}}), Tensor::constant(h), f.heads);
    EXPECT_NEAR(out.probabilities.value()(0, 0), 0.75, 1e-15);
    EXPECT_NEAR(out.probabilities.value()(0, 1), 0.25, 1e-15);
}

TEST(Heads, TimeHeadAddsGapToLastEvent) {
    HeadFixture f(2, 2);
    f.heads.time_weight.mutable_value() << 0.5, 1.0;
    f.heads.time_bias.mutable_value()(0, 0) = 0.25;
    Matrix h(3, 2);
    h << 1.0, 1.0, 2.0, 0.0, 9.0, 9.0;
    const EventSequence s = sequence_of({{1.0, 1}, {3.0, 2}, {4.0, 1}});
    const HeadOutputs out = prediction_heads(s, Tensor::constant(h), f.heads);
    EXPECT_DOUBLE_EQ(out.time.value()(0, 0), 1.0 + 1.5 + 0.25);
    EXPECT_DOUBLE_EQ(out.time.value()(1, 0), 3.0 + 1.0 + 0.25);
    // (2.75 - 3)^2 + (4.25 - 4)^2
    EXPECT_DOUBLE_EQ(time_loss(out, s).item(), 0.125);
}

TEST(Heads, RowsOnSimplex) {
    HeadFixture f(6, 4, 3);
    test_util::randomize_tensor(f.heads.type_weight, 4, 3.0);
    Rng rng(2);
    const EventSequence s = test_util::random_sequence(rng, 9, 4);
    const HeadOutputs out = prediction_heads(s, random_hidden(3, 9, 6), f.heads);
    for (Eigen::Index i = 0; i < out.probabilities.rows(); ++i) {
        EXPECT_NEAR(out.probabilities.value().row(i).sum(), 1.0, 1e-12);
        EXPECT_GE(out.probabilities.value().row(i).minCoeff(), 0.0);
    }
}

TEST(Heads, ShapeMismatchRejected) {
    HeadFixture f(4, 2);
    EXPECT_THROW((void)prediction_heads(sequence_of({{1, 1}, {2, 1}}), random_hidden(1, 3, 4), f.heads), ShapeError);
}

TEST(TypeLoss, HandComputedAndClamped) {
    HeadFixture f(1, 2);
    f.heads.type_weight.mutable_value() << std::log(3.0), 0.0;
    Matrix h(3, 1);
    h << 1.0, 1.0, 0.0;
    const EventSequence s = sequence_of({{1, 1}, {2, 1}, {3, 2}});
    const HeadOutputs out = prediction_heads(s, Tensor::constant(h), f.heads);
    EXPECT_NEAR(type_loss(out, s).item(), -std::log(0.75) - std::log(0.25), 1e-14);

    f.heads.type_weight.mutable_value() << 1000.0, 0.0;
    const HeadOutputs sharp = prediction_heads(s, Tensor::constant(h), f.heads);
    EXPECT_NEAR(type_loss(sharp, s).item(), -std::log(1e-12), 1e-9);
}

TEST(TypeLoss, SingleEventSequencesContributeNothing) {
    HeadFixture f(4, 2);
    const EventSequence s = sequence_of({{1, 1}});
    const HeadOutputs out = prediction_heads(s, random_hidden(1, 1, 4), f.heads);
    EXPECT_EQ(type_loss(out, s).item(), 0.0);
    EXPECT_EQ(time_loss(out, s).item(), 0.0);
    EXPECT_TRUE(predict_next(s, random_hidden(1, 1, 4), f.heads).empty());
}

TEST(Argmax, TiesGoToSmallerIdAndMonotoneInvariance) {
    EXPECT_EQ(argmax_type(Eigen::Vector3d(0.4, 0.4, 0.2)), 1);
    EXPECT_EQ(argmax_type(Eigen::Vector3d(0.2, 0.4, 0.4)), 2);
    Rng rng(5);
    for (int trial = 0; trial < 100; ++trial) {
        Eigen::VectorXd p(5);
        for (Eigen::Index c = 0; c < 5; ++c) p(c) = rng.uniform();
        const int expected = argmax_type(p);
        EXPECT_EQ(argmax_type(p.array().log().matrix()), expected);
        EXPECT_EQ(argmax_type((3.0 * p.array() + 1.0).matrix()), expected);
    }
}

TEST(Predict, RecordsMatchHeads) {
    HeadFixture f(4, 3, 2);
    Rng rng(6);
    const EventSequence s = test_util::random_sequence(rng, 5, 3);
    const Tensor h = random_hidden(7, 5, 4);
    const auto records = predict_next(s, h, f.heads);
    const HeadOutputs out = prediction_heads(s, h, f.heads);
    ASSERT_EQ(records.size(), 4u);
    for (std::size_t k = 0; k < records.size(); ++k) {
        EXPECT_EQ(records[k].index, k + 2);
        EXPECT_EQ(records[k].time, out.time.value()(static_cast<Eigen::Index>(k), 0));
        EXPECT_EQ(records[k].type_id, argmax_type(records[k].probabilities));
    }
    const auto j = prediction_json(3, records[0]);
    EXPECT_EQ(j.at("seq"), 3);
    EXPECT_EQ(j.at("i"), 2);
    EXPECT_EQ(j.at("p_hat").size(), 3u);
}

TEST(Objective, LinearInWeights) {
    const Tensor ll = Tensor::scalar(-4.0);
    const Tensor ty = Tensor::scalar(2.0);
    const Tensor tm = Tensor::scalar(8.0);
    EXPECT_DOUBLE_EQ(total_objective(ll, ty, tm, 0.0, 0.0).total.item(), 4.0);
    EXPECT_DOUBLE_EQ(total_objective(ll, ty, tm, 1.0, 0.01).total.item(), 4.0 + 2.0 + 0.08);
    for (double a : {0.0, 0.5, 2.0}) {
        const double base = total_objective(ll, ty, tm, a, 0.1).total.item();
        EXPECT_NEAR(total_objective(ll, ty, tm, a + 1.0, 0.1).total.item() - base, 2.0, 1e-12);
        EXPECT_NEAR(total_objective(ll, ty, tm, 0.1, a + 1.0).total.item() - total_objective(ll, ty, tm, 0.1, a).total.item(),
                    8.0, 1e-12);
    }
    EXPECT_THROW((void)total_objective(ll, ty, tm, -1.0, 0.0), ConfigError);
    EXPECT_THROW((void)total_objective(Tensor::scalar(-INFINITY), ty, tm, 1.0, 0.0), NumericError);
}

TEST(Objective, GradientCheck) {
    HeadFixture f(4, 3, 9);
    const Tensor h = f.params.add("hidden", random_hidden(8, 6, 4).value());
    Rng rng(10);
    const EventSequence s = test_util::random_sequence(rng, 6, 3);
    const auto report = ad::gradient_check<double>(f.params, [&] {
        const HeadOutputs out = prediction_heads(s, h, f.heads);
        return total_objective(Tensor::scalar(0.0), type_loss(out, s), time_loss(out, s), 1.0, 0.01).total;
    });
    EXPECT_LT(report.max_error, 1e-5) << report.worst.parameter;
}

TEST(Metrics, HandComputed) {
    MetricAccumulator acc;
    const EventSequence s = sequence_of({{1, 1}, {2, 2}, {4, 1}});
    PredictionRecord a{2, 2.5, 2, Eigen::Vector2d(0.3, 0.7)};
    PredictionRecord b{3, 3.0, 2, Eigen::Vector2d(0.4, 0.6)};
    acc.add_sequence(-3.0, {a, b}, s);
    acc.add_sequence(0.0, {}, sequence_of({{5, 1}}));
    acc.act_positions = 4;
    acc.act_iterations = 6;
    const Metrics m = finalize_metrics(acc);
    EXPECT_DOUBLE_EQ(m.per_event_ll, -1.5);
    EXPECT_DOUBLE_EQ(m.accuracy, 50.0);
    EXPECT_DOUBLE_EQ(m.rmse, std::sqrt((0.25 + 1.0) / 2));
    EXPECT_DOUBLE_EQ(m.act_mean_iters, 1.5);
    const auto j = m.to_json();
    for (const char* key : {"per_event_ll", "accuracy", "rmse", "act_mean_iters"}) EXPECT_TRUE(j.contains(key)) << key;
}

TEST(Metrics, NothingScoredIsError) {
    MetricAccumulator acc;
    acc.add_sequence(0.0, {}, sequence_of({{1, 1}}));
    EXPECT_THROW((void)finalize_metrics(acc), DataError);
}
