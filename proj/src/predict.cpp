#include "uthp/predict.hpp"

#include <cmath>

namespace uthp {

HeadParams add_heads(ParameterSet& params, const ModelConfig& cfg, int num_types, Rng& rng) {
    params.add("head.time.weight", xavier_uniform(cfg.d_model, 1, rng));
    params.add("head.time.bias", Matrix::Zero(1, 1));
    params.add("head.type.weight", xavier_uniform(cfg.d_model, num_types, rng));
    params.add("head.type.bias", Matrix::Zero(1, num_types));
    return heads_view(params);
}

HeadParams heads_view(const ParameterSet& params) {
    return {params.at("head.time.weight"), params.at("head.time.bias"), params.at("head.type.weight"),
            params.at("head.type.bias")};
}

HeadOutputs prediction_heads(const EventSequence& seq, const Tensor& hidden, const HeadParams& heads) {
    if (static_cast<Eigen::Index>(seq.size()) != hidden.rows())
        throw ShapeError("prediction heads: one hidden row per event required");
    if (seq.size() < 2) return {};
    const Eigen::Index n = hidden.rows() - 1;
    const Tensor history = ad::block(hidden, 0, 0, n, hidden.cols());
    Matrix last(n, 1);
    for (Eigen::Index i = 0; i < n; ++i) last(i, 0) = seq.events[static_cast<std::size_t>(i)].time;

    HeadOutputs out;
    out.time = ad::add_row(ad::matmul(history, heads.time_weight), heads.time_bias) + Tensor::constant(std::move(last));
    out.probabilities = ad::row_softmax(ad::add_row(ad::matmul(history, heads.type_weight), heads.type_bias));
    return out;
}

int argmax_type(const Eigen::Ref<const Eigen::VectorXd>& probabilities) {
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < probabilities.size(); ++c)
        if (probabilities(c) > probabilities(best)) best = c;
    return static_cast<int>(best) + 1;
}

std::vector<PredictionRecord> predict_next(const EventSequence& seq, const Tensor& hidden, const HeadParams& heads) {
    std::vector<PredictionRecord> out;
    if (seq.size() < 2) return out;
    ad::NoGradGuard no_grad;
    const HeadOutputs h = prediction_heads(seq, hidden, heads);
    out.reserve(seq.size() - 1);
    for (Eigen::Index i = 0; i < h.time.rows(); ++i) {
        PredictionRecord r;
        r.index = static_cast<std::size_t>(i) + 2;
        r.time = h.time.value()(i, 0);
        r.probabilities = h.probabilities.value().row(i).transpose();
        r.type_id = argmax_type(r.probabilities);
        out.push_back(std::move(r));
    }
    return out;
}

Tensor time_loss(const HeadOutputs& out, const EventSequence& seq) {
    if (seq.size() < 2) return Tensor::scalar(0.0);
    Matrix truth(static_cast<Eigen::Index>(seq.size()) - 1, 1);
    for (Eigen::Index i = 0; i < truth.rows(); ++i) truth(i, 0) = seq.events[static_cast<std::size_t>(i) + 1].time;
    return ad::sum(ad::square(out.time - Tensor::constant(std::move(truth))));
}

Tensor type_loss(const HeadOutputs& out, const EventSequence& seq) {
    if (seq.size() < 2) return Tensor::scalar(0.0);
    std::vector<int> target(seq.size() - 1);
    for (std::size_t i = 0; i < target.size(); ++i) target[i] = seq.events[i + 1].type_id - 1;
    return -ad::sum(ad::log(ad::clamp_min(ad::pick(out.probabilities, target), 1e-12)));
}

ObjectiveTerms total_objective(const Tensor& loglik, const Tensor& type_loss_value, const Tensor& time_loss_value,
                               double alpha_type, double alpha_time) {
    if (!(alpha_type >= 0.0 && alpha_time >= 0.0)) throw ConfigError("objective weights must be non-negative");
    ObjectiveTerms t{loglik, type_loss_value, time_loss_value, -loglik};
    if (alpha_type != 0.0) t.total = t.total + type_loss_value * alpha_type;
    if (alpha_time != 0.0) t.total = t.total + time_loss_value * alpha_time;
    if (!std::isfinite(t.total.item()))
        throw NumericError("non-finite objective (loglik " + std::to_string(loglik.item()) + ", type loss " +
                           std::to_string(type_loss_value.item()) + ", time loss " +
                           std::to_string(time_loss_value.item()) + ")");
    return t;
}

void MetricAccumulator::add_sequence(double sequence_loglik, const std::vector<PredictionRecord>& preds,
                                     const EventSequence& seq) {
    loglik += sequence_loglik;
    for (const auto& r : preds) {
        const Event& truth = seq.events.at(r.index - 1);
        ++predicted;
        if (r.type_id == truth.type_id) ++correct;
        const double e = r.time - truth.time;
        squared_error += e * e;
    }
}

nlohmann::json Metrics::to_json() const {
    return {{"per_event_ll", per_event_ll}, {"accuracy", accuracy}, {"rmse", rmse}, {"act_mean_iters", act_mean_iters}};
}

Metrics finalize_metrics(const MetricAccumulator& acc) {
    if (acc.predicted == 0) throw DataError("no predicted events: every sequence has length 1");
    const double n = static_cast<double>(acc.predicted);
    Metrics m;
    m.per_event_ll = acc.loglik / n;
    m.accuracy = 100.0 * static_cast<double>(acc.correct) / n;
    m.rmse = std::sqrt(acc.squared_error / n);
    m.act_mean_iters = acc.act_positions == 0
                           ? 0.0
                           : static_cast<double>(acc.act_iterations) / static_cast<double>(acc.act_positions);
    return m;
}

nlohmann::json prediction_json(std::size_t sequence_index, const PredictionRecord& r) {
    std::vector<double> p(r.probabilities.data(), r.probabilities.data() + r.probabilities.size());
    return {{"seq", sequence_index}, {"i", r.index}, {"t_hat", r.time}, {"c_hat", r.type_id}, {"p_hat", p}};
}

}  // namespace uthp
