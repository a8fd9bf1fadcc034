#include "uthp/train.hpp"

#include "uthp/ad/adam.hpp"
#include "uthp/checkpoint.hpp"

#include <chrono>
#include <cmath>
#include <map>
#include <string>

namespace uthp {

namespace {

// Stream tags keep the derived keys of different consumers apart.
constexpr std::uint64_t kShuffleTag = 0x5f1e;
constexpr std::uint64_t kDropoutTag = 0xd40f;
constexpr std::uint64_t kTrainSampleTag = 0x3c71;
constexpr std::uint64_t kEvalSampleTag = 0xe7a1;

struct SequenceTerms {
    ObjectiveTerms objective;
    HeadOutputs heads;
};

SequenceTerms sequence_objective(const UthpModel& model, const EventSequence& seq, const Tensor& hidden,
                                 const EstimatorSpec& est, std::uint64_t sequence_id, double alpha_type,
                                 double alpha_time) {
    const LogLikelihood ll = sequence_loglik(seq, hidden, model.intensity(), est, sequence_id);
    SequenceTerms t;
    t.heads = prediction_heads(seq, hidden, model.heads());
    const bool has_heads = seq.size() >= 2;
    const Tensor type_l = has_heads ? type_loss(t.heads, seq) : Tensor::scalar(0.0);
    const Tensor time_l = has_heads ? time_loss(t.heads, seq) : Tensor::scalar(0.0);
    t.objective = total_objective(ll.total, type_l, time_l, alpha_type, alpha_time);
    return t;
}

double clip_global_norm(ad::NamedGradients<double>& grads, double max_norm) {
    double sq = 0.0;
    for (const auto& [name, g] : grads) sq += g.squaredNorm();
    const double norm = std::sqrt(sq);
    if (norm > max_norm) {
        const double scale = max_norm / norm;
        for (auto& [name, g] : grads) g *= scale;
    }
    return norm;
}

using Snapshot = std::map<std::string, Matrix>;

Snapshot snapshot(const ParameterSet& params) {
    Snapshot s;
    for (const auto& name : params.names()) s.emplace(name, params.at(name).value());
    return s;
}

void restore(ParameterSet& params, const Snapshot& s) {
    for (const auto& [name, value] : s) params.entry(name).tensor.mutable_value() = value;
}

}  // namespace

Dataset to_model_time(const Dataset& d, const ModelConfig& cfg) { return rescale_times(d, cfg.time_scale); }

Evaluation evaluate(const UthpModel& model, const Dataset& data, const EvalOptions& opt) {
    if (data.size() == 0) throw DataError("evaluate: empty dataset");
    if (opt.batch_size < 1) throw ConfigError("evaluate: batch_size must be at least 1");
    ad::NoGradGuard no_grad;
    const double scale = model.config().time_scale;
    const double log_scale = std::log(scale);
    const Dataset scaled = to_model_time(data, model.config());
    const EstimatorSpec est{opt.estimator, opt.mc_samples, derive_key(opt.seed, {kEvalSampleTag})};

    Evaluation ev;
    ev.sequence_loglik.assign(data.size(), 0.0);
    std::vector<double> objective(data.size(), 0.0);
    std::vector<std::vector<PredictionRecord>> preds(data.size());
    std::vector<ActStats> stats(data.size());

    for (const Batch& batch : make_batches(scaled, opt.batch_size)) {
        const auto results = model.forward(batch);
        for (Eigen::Index b = 0; b < batch.batch_size(); ++b) {
            const std::size_t id = batch.sequence_ids[static_cast<std::size_t>(b)];
            const EventSequence& seq = scaled.sequences[id];
            const Tensor& hidden = results[static_cast<std::size_t>(b)].hidden;
            const auto terms = sequence_objective(model, seq, hidden, est, id, opt.alpha_type, opt.alpha_time);
            const double scored = seq.size() >= 2 ? static_cast<double>(seq.size() - 1) : 0.0;
            // Densities pick up a factor `scale` per scored event when mapped back to original units.
            ev.sequence_loglik[id] = terms.objective.loglik.item() + scored * log_scale;
            objective[id] = terms.objective.total.item();
            preds[id] = predict_next(seq, hidden, model.heads());
            for (auto& r : preds[id]) r.time /= scale;
            stats[id] = results[static_cast<std::size_t>(b)].stats;
        }
    }

    // Accumulate in dataset order so the sums do not depend on the batching.
    MetricAccumulator acc;
    for (std::size_t n = 0; n < data.size(); ++n) {
        acc.add_sequence(ev.sequence_loglik[n], preds[n], data.sequences[n]);
        ev.total_loglik += ev.sequence_loglik[n];
        ev.objective += objective[n];
        ev.act.merge(stats[n]);
    }
    acc.act_positions = ev.act.positions;
    acc.act_iterations = ev.act.total_iterations;
    ev.metrics = finalize_metrics(acc);
    return ev;
}

std::vector<std::vector<PredictionRecord>> predict_dataset(const UthpModel& model, const Dataset& data) {
    ad::NoGradGuard no_grad;
    const double scale = model.config().time_scale;
    const Dataset scaled = to_model_time(data, model.config());
    std::vector<std::vector<PredictionRecord>> out;
    out.reserve(data.size());
    for (const auto& seq : scaled.sequences) {
        auto preds = predict_next(seq, model.forward(seq).hidden, model.heads());
        for (auto& r : preds) r.time /= scale;
        out.push_back(std::move(preds));
    }
    return out;
}

nlohmann::json RunReport::to_json(bool include_timing) const {
    nlohmann::json ep = nlohmann::json::array();
    for (const auto& e : epochs) {
        nlohmann::json j = {{"epoch", e.epoch}, {"train_objective", e.train_objective}, {"act", e.act.to_json()}};
        j["dev"] = e.dev ? e.dev->to_json() : nlohmann::json(nullptr);
        ep.push_back(std::move(j));
    }
    nlohmann::json j = {{"epochs", ep},
                        {"best_epoch", best_epoch},
                        {"best_dev_per_event_ll", best_dev_ll ? nlohmann::json(*best_dev_ll) : nlohmann::json(nullptr)},
                        {"stopped_early", stopped_early},
                        {"num_params", num_params}};
    if (include_timing) j["wall_seconds"] = wall_seconds;
    return j;
}

RunReport train(UthpModel& model, const Dataset& train_set, const Dataset* dev_set, const TrainConfig& cfg) {
    cfg.validate();
    if (train_set.size() == 0) throw DataError("train: empty training set");
    const auto started = std::chrono::steady_clock::now();

    const Dataset scaled = to_model_time(train_set, model.config());
    const double alpha_type = cfg.type_weight();
    const double alpha_time = cfg.time_weight();
    const double scored = static_cast<double>(std::max<std::size_t>(scaled.num_predicted_events(), 1));

    ad::AdamState<double> adam;
    adam.options = {cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps, cfg.weight_decay};
    EvalOptions eval_opt{cfg.estimator, cfg.eval_mc_samples, cfg.seed, static_cast<std::size_t>(cfg.batch_size),
                         alpha_type, alpha_time};

    RunReport report;
    report.num_params = model.count_params();
    Snapshot best;
    int since_best = 0;

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const auto epoch_key = static_cast<std::uint64_t>(epoch);
        const auto batches =
            make_batches(scaled, static_cast<std::size_t>(cfg.batch_size), derive_key(cfg.seed, {kShuffleTag, epoch_key}));
        const EstimatorSpec est{cfg.estimator, cfg.mc_samples, derive_key(cfg.seed, {kTrainSampleTag, epoch_key})};

        EpochRecord record;
        record.epoch = epoch;
        double epoch_objective = 0.0;
        for (std::size_t bi = 0; bi < batches.size(); ++bi) {
            const Batch& batch = batches[bi];
            try {
                const ForwardMode mode{true, derive_key(cfg.seed, {kDropoutTag, epoch_key, bi})};
                const auto results = model.forward(batch, mode);
                Tensor total;
                for (Eigen::Index b = 0; b < batch.batch_size(); ++b) {
                    const std::size_t id = batch.sequence_ids[static_cast<std::size_t>(b)];
                    const auto& r = results[static_cast<std::size_t>(b)];
                    const auto terms = sequence_objective(model, scaled.sequences[id], r.hidden, est, id, alpha_type,
                                                          alpha_time);
                    total = b == 0 ? terms.objective.total : total + terms.objective.total;
                    record.act.merge(r.stats);
                }
                if (!std::isfinite(total.item())) throw NumericError("non-finite batch objective");
                auto grads = ad::backward(total, model.params());
                clip_global_norm(grads, cfg.grad_clip);
                ad::adam_step(model.params(), grads, adam);
                epoch_objective += total.item();
            } catch (const NumericError& e) {
                throw NumericError("training aborted at epoch " + std::to_string(epoch) + ", batch " +
                                   std::to_string(bi + 1) + ": " + e.what() +
                                   (cfg.checkpoint_path.empty() ? "" : "; last good checkpoint kept at " +
                                                                           cfg.checkpoint_path));
            }
        }
        record.train_objective = epoch_objective / scored;

        if (dev_set != nullptr && epoch % cfg.eval_every == 0) {
            const Evaluation ev = evaluate(model, *dev_set, eval_opt);
            record.dev = ev.metrics;
            const double ll = ev.metrics.per_event_ll;
            if (!report.best_dev_ll || ll > *report.best_dev_ll) {
                report.best_dev_ll = ll;
                report.best_epoch = epoch;
                best = snapshot(model.params());
                since_best = 0;
                if (!cfg.checkpoint_path.empty()) save_checkpoint(model, cfg.checkpoint_path);
            } else {
                since_best += cfg.eval_every;
            }
        }
        log_info("epoch " + std::to_string(epoch) + " objective/event " + std::to_string(record.train_objective) +
                 (record.dev ? " dev ll/event " + std::to_string(record.dev->per_event_ll) : ""));
        report.epochs.push_back(std::move(record));

        if (cfg.early_stop_patience > 0 && report.best_dev_ll && since_best >= cfg.early_stop_patience) {
            report.stopped_early = epoch < cfg.epochs;
            break;
        }
    }

    if (!best.empty()) {
        restore(model.params(), best);
    } else {
        report.best_epoch = report.epochs.back().epoch;
        if (!cfg.checkpoint_path.empty()) save_checkpoint(model, cfg.checkpoint_path);
    }
    report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return report;
}

}  // namespace uthp
