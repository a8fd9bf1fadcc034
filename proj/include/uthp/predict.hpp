#pragma once

#include "uthp/encoder.hpp"

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <vector>

namespace uthp {

/// Next-event heads. The time head regresses the gap to the next event, so
/// t_hat_{i+1} = t_i + h(t_i) . w_time + b_time.
struct HeadParams {
    Tensor time_weight;  // D x 1
    Tensor time_bias;    // 1 x 1
    Tensor type_weight;  // D x C
    Tensor type_bias;    // 1 x C
};

HeadParams add_heads(ParameterSet& params, const ModelConfig& cfg, int num_types, Rng& rng);
HeadParams heads_view(const ParameterSet& params);

/// Differentiable head outputs for events 2..I of one sequence.
struct HeadOutputs {
    Tensor time;           // (I-1) x 1 predicted timestamps
    Tensor probabilities;  // (I-1) x C
};

HeadOutputs prediction_heads(const EventSequence& seq, const Tensor& hidden, const HeadParams& heads);

struct PredictionRecord {
    std::size_t index = 0;  // 1-based position of the predicted event
    double time = 0.0;
    int type_id = 1;
    Eigen::VectorXd probabilities;
};

/// Argmax with ties going to the smaller type id.
[[nodiscard]] int argmax_type(const Eigen::Ref<const Eigen::VectorXd>& probabilities);

std::vector<PredictionRecord> predict_next(const EventSequence& seq, const Tensor& hidden, const HeadParams& heads);

/// Sum of squared time errors over events 2..I.
Tensor time_loss(const HeadOutputs& out, const EventSequence& seq);
/// Cross-entropy over events 2..I with log clamped at 1e-12.
Tensor type_loss(const HeadOutputs& out, const EventSequence& seq);

struct ObjectiveTerms {
    Tensor loglik;
    Tensor type_loss;
    Tensor time_loss;
    Tensor total;  // -loglik + alpha_type * type_loss + alpha_time * time_loss
};

ObjectiveTerms total_objective(const Tensor& loglik, const Tensor& type_loss_value, const Tensor& time_loss_value,
                               double alpha_type, double alpha_time);

/// Running totals for the reported metrics, accumulated sequence by sequence.
struct MetricAccumulator {
    double loglik = 0.0;
    std::size_t predicted = 0;
    std::size_t correct = 0;
    double squared_error = 0.0;
    std::size_t act_positions = 0;
    std::size_t act_iterations = 0;

    void add_sequence(double sequence_loglik, const std::vector<PredictionRecord>& preds, const EventSequence& seq);
};

struct Metrics {
    double per_event_ll = 0.0;
    double accuracy = 0.0;  // percent
    double rmse = 0.0;
    double act_mean_iters = 0.0;

    [[nodiscard]] nlohmann::json to_json() const;
    friend bool operator==(const Metrics&, const Metrics&) = default;
};

/// Throws DataError when no event was scored.
Metrics finalize_metrics(const MetricAccumulator& acc);

nlohmann::json prediction_json(std::size_t sequence_index, const PredictionRecord& r);

}  // namespace uthp
