#include "uthp/model.hpp"

#include <cmath>

namespace uthp {

UthpModel::UthpModel(ModelConfig config, int num_types, std::uint64_t seed)
    : config_(std::move(config)), num_types_(num_types) {
    config_.validate();
    if (num_types_ < 1) throw ConfigError("num_types must be positive");
    Rng rng(derive_key(seed, {0x1417}));

    const double scale = 1.0 / std::sqrt(static_cast<double>(config_.d_model));
    Matrix table(num_types_ + 1, config_.d_model);
    for (Eigen::Index i = 0; i < table.size(); ++i) table.data()[i] = scale * rng.normal();
    table.row(0).setZero();
    embedding_ = params_.add("embedding", std::move(table), true, 1);

    for (int k = 0; k < config_.num_layers(); ++k)
        layers_.push_back(add_encoding_layer(params_, config_, "layer" + std::to_string(k), rng));
    if (config_.act) {
        act_.weight = params_.add("act.weight", xavier_uniform(config_.d_model, 1, rng));
        act_.bias = params_.add("act.bias", Matrix::Zero(1, 1));
    }
    if (config_.d_rnn > 0) post_ = add_postprocess(params_, config_, rng);
    intensity_ = add_intensity(params_, config_, num_types_, rng);
    heads_ = add_heads(params_, config_, num_types_, rng);
}

ForwardResult UthpModel::forward(const EventSequence& seq, const ForwardMode& mode) const {
    if (seq.size() == 0) throw DataError("empty sequence");
    const Eigen::VectorXd times = seq.times();
    const std::vector<int> ids = seq.type_ids();
    for (int c : ids)
        if (c < 1 || c > num_types_) throw DataError("type_id out of range");

    const Matrix temporal = temporal_encoding(times, config_.d_model);
    const Tensor embedded = embed_types(ids, embedding_);

    ForwardResult out;
    if (config_.act) {
        ActResult r = run_act(embedded, temporal, layers_.front(), act_, config_, {}, mode);
        out.hidden = std::move(r.hidden);
        out.stats = std::move(r.stats);
    } else {
        out.hidden = run_pure(embedded, temporal, layers_, config_, {}, mode);
        out.stats.positions = seq.size();
        out.stats.total_iterations = seq.size() * static_cast<std::size_t>(config_.max_iterations);
        out.stats.max_iterations = config_.max_iterations;
        out.stats.histogram.assign(static_cast<std::size_t>(config_.max_iterations) + 1, 0);
        out.stats.histogram.back() = seq.size();
    }
    if (config_.d_rnn > 0) out.hidden = postprocess(out.hidden, post_);
    return out;
}

std::vector<ForwardResult> UthpModel::forward(const Batch& batch, const ForwardMode& mode) const {
    std::vector<ForwardResult> out;
    out.reserve(static_cast<std::size_t>(batch.batch_size()));
    for (Eigen::Index b = 0; b < batch.batch_size(); ++b) {
        ForwardMode row_mode = mode;
        row_mode.stream_key = derive_key(mode.stream_key, {static_cast<std::uint64_t>(b)});
        out.push_back(forward(batch.row(b), row_mode));
    }
    return out;
}

std::vector<std::pair<std::string, std::size_t>> UthpModel::count_breakdown() const {
    std::vector<std::pair<std::string, std::size_t>> out;
    for (const auto& name : params_.names()) {
        const auto& e = params_.entry(name);
        if (e.trainable) out.emplace_back(name, ParameterSet::count_of(e));
    }
    return out;
}

std::size_t count_params(const ModelConfig& config, int num_types) {
    return UthpModel(config, num_types, 0).count_params();
}

std::size_t encoding_layer_param_count(const ModelConfig& config) {
    ParameterSet params;
    Rng rng(0);
    add_encoding_layer(params, config, "layer", rng);
    return params.count();
}

}  // namespace uthp
