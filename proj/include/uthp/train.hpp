#pragma once

#include "uthp/model.hpp"

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <vector>

namespace uthp {

struct EvalOptions {
    Estimator estimator = Estimator::MonteCarlo;
    int mc_samples = 10000;
    std::uint64_t seed = 1;
    std::size_t batch_size = 16;
    double alpha_type = 0.0;
    double alpha_time = 0.0;
};

struct Evaluation {
    Metrics metrics;
    std::vector<double> sequence_loglik;  // original time units
    double total_loglik = 0.0;
    /// sum over sequences of -loglik + alpha_type * type_loss + alpha_time * time_loss (model time units)
    double objective = 0.0;
    ActStats act;
};

/// Eval-mode pass (no dropout, no gradients). Results do not depend on batch_size.
Evaluation evaluate(const UthpModel& model, const Dataset& data, const EvalOptions& opt = {});

/// Next-event predictions for every sequence, in dataset order and original time units.
std::vector<std::vector<PredictionRecord>> predict_dataset(const UthpModel& model, const Dataset& data);

struct EpochRecord {
    int epoch = 0;
    double train_objective = 0.0;  // per scored event
    std::optional<Metrics> dev;
    ActStats act;
};

struct RunReport {
    std::vector<EpochRecord> epochs;
    int best_epoch = 0;
    std::optional<double> best_dev_ll;
    bool stopped_early = false;
    std::size_t num_params = 0;
    double wall_seconds = 0.0;

    /// Wall time is left out unless asked for, so reports stay byte-reproducible.
    [[nodiscard]] nlohmann::json to_json(bool include_timing = false) const;
};

/// Trains in place. With a dev set the parameters of the best dev evaluation
/// are restored at the end and, when cfg.checkpoint_path is set, saved there.
RunReport train(UthpModel& model, const Dataset& train_set, const Dataset* dev_set, const TrainConfig& cfg);

/// Rescales by the model's time_scale; a no-op copy at scale 1.
Dataset to_model_time(const Dataset& d, const ModelConfig& cfg);

}  // namespace uthp
