#include "uthp/recurrence.hpp"

#include <algorithm>

namespace uthp {

void ActStats::merge(const ActStats& other) {
    positions += other.positions;
    total_iterations += other.total_iterations;
    max_iterations = std::max(max_iterations, other.max_iterations);
    halted_before_cap += other.halted_before_cap;
    if (histogram.size() < other.histogram.size()) histogram.resize(other.histogram.size(), 0);
    for (std::size_t i = 0; i < other.histogram.size(); ++i) histogram[i] += other.histogram[i];
}

nlohmann::json ActStats::to_json() const {
    return {{"mean_iterations", mean_iterations()},
            {"max_iterations", max_iterations},
            {"fraction_halted_before_cap", fraction_halted()},
            {"histogram", histogram}};
}

ActState init_act_state(const Tensor& embedded, std::span<const bool> valid) {
    const Eigen::Index n = embedded.rows();
    if (!valid.empty() && static_cast<Eigen::Index>(valid.size()) != n) throw ShapeError("act: mask length");
    ActState st;
    st.valid.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) st.valid(i) = valid.empty() || valid[static_cast<std::size_t>(i)];

    Matrix h(n, 1);
    for (Eigen::Index i = 0; i < n; ++i) h(i, 0) = st.valid(i) ? 0.0 : 1.0;
    st.halting_probability = Tensor::constant(std::move(h));
    st.remainders = Tensor::constant(n, 1, 0.0);
    st.n_updates = Eigen::VectorXi::Zero(n);
    st.still_running = st.valid.cast<double>().matrix();
    st.new_halted = Eigen::VectorXd::Zero(n);
    st.update_weight = Tensor::constant(n, 1, 0.0);
    st.state = embedded;
    st.previous_state = Tensor::constant(n, embedded.cols(), 0.0);
    return st;
}

void act_halting_update(ActState& st, const Tensor& p, double threshold) {
    const Eigen::Index n = st.halting_probability.rows();
    if (p.rows() != n || p.cols() != 1) throw ShapeError("act: halting probabilities must be I x 1");

    const Matrix& h = st.halting_probability.value();
    Matrix run(n, 1);
    Matrix halted(n, 1);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double was_running = st.still_running(i);
        const double tentative = h(i, 0) + p.value()(i, 0) * was_running;
        halted(i, 0) = (tentative > threshold ? 1.0 : 0.0) * was_running;
        run(i, 0) = (tentative <= threshold ? 1.0 : 0.0) * was_running;
    }
    const Tensor run_t = Tensor::constant(run);
    const Tensor halted_t = Tensor::constant(halted);

    const Tensor accumulated = ad::cwise_product(p, run_t);
    st.halting_probability = st.halting_probability + accumulated;
    const Tensor increment = ad::cwise_product(halted_t, 1.0 - st.halting_probability);
    st.remainders = st.remainders + increment;
    st.halting_probability = st.halting_probability + increment;
    st.update_weight = accumulated + increment;

    st.still_running = run.col(0);
    st.new_halted = halted.col(0);
    for (Eigen::Index i = 0; i < n; ++i) st.n_updates(i) += static_cast<int>(run(i, 0) + halted(i, 0));
    st.weight_history.push_back(st.update_weight.value().col(0));
}

bool act_should_continue(const ActState& st, double threshold, int max_iterations) {
    const Matrix& h = st.halting_probability.value();
    for (Eigen::Index i = 0; i < h.rows(); ++i)
        if (st.valid(i) && h(i, 0) < threshold && st.n_updates(i) < max_iterations) return true;
    return false;
}

void act_blend(ActState& st, const Tensor& new_state) {
    const Eigen::Index rows = new_state.rows();
    const Eigen::Index cols = new_state.cols();
    const Tensor w = ad::broadcast_to(st.update_weight, rows, cols);
    const Tensor keep = ad::broadcast_to(1.0 - st.update_weight, rows, cols);
    st.previous_state = ad::cwise_product(new_state, w) + ad::cwise_product(st.previous_state, keep);
}

ActStats act_statistics(const ActState& st, int max_iterations) {
    ActStats stats;
    stats.histogram.assign(static_cast<std::size_t>(max_iterations) + 1, 0);
    for (Eigen::Index i = 0; i < st.n_updates.size(); ++i) {
        if (!st.valid(i)) continue;
        const int n = st.n_updates(i);
        ++stats.positions;
        stats.total_iterations += static_cast<std::size_t>(n);
        stats.max_iterations = std::max(stats.max_iterations, n);
        stats.histogram[static_cast<std::size_t>(std::min(n, max_iterations))]++;
        // Halted means the remainder was assigned, i.e. the position stopped running.
        if (st.still_running(i) == 0.0) ++stats.halted_before_cap;
    }
    return stats;
}

namespace {

Tensor apply_layer(const Tensor& s_in, const EncodingLayerParams& layer, const ModelConfig& cfg,
                   std::span<const bool> valid, const ForwardMode& mode, int iteration) {
    if (mode.train && cfg.dropout > 0.0) {
        Rng rng(mode.layer_key(iteration));
        return encoding_layer(s_in, layer, cfg, valid, DropoutSite{cfg.dropout, true, &rng});
    }
    return encoding_layer(s_in, layer, cfg, valid);
}

}  // namespace

Tensor run_pure(const Tensor& embedded, const Matrix& temporal, std::span<const EncodingLayerParams> layers,
                const ModelConfig& cfg, std::span<const bool> valid, const ForwardMode& mode) {
    if (cfg.max_iterations < 1) throw ConfigError("max_iterations must be at least 1");
    if (layers.size() != 1 && layers.size() != static_cast<std::size_t>(cfg.max_iterations))
        throw ConfigError("stacked recurrence needs one layer per iteration");
    const Tensor x = Tensor::constant(temporal);
    Tensor s = embedded;
    for (int k = 0; k < cfg.max_iterations; ++k) {
        const auto& layer = layers.size() == 1 ? layers.front() : layers[static_cast<std::size_t>(k)];
        s = apply_layer(s + x, layer, cfg, valid, mode, k);
    }
    return s;
}

ActResult run_act(const Tensor& embedded, const Matrix& temporal, const EncodingLayerParams& layer,
                  const ActParams& act, const ModelConfig& cfg, std::span<const bool> valid,
                  const ForwardMode& mode) {
    const double threshold = cfg.act_threshold;
    if (!(threshold > 0.0 && threshold <= 1.0)) throw ConfigError("act_threshold must lie in (0, 1]");
    if (cfg.max_iterations < 1) throw ConfigError("max_iterations must be at least 1");

    const Tensor x = Tensor::constant(temporal);
    ActState st = init_act_state(embedded, valid);
    int k = 0;
    while (act_should_continue(st, threshold, cfg.max_iterations)) {
        const Tensor s_in = st.state + x;
        const Tensor p = ad::sigmoid(ad::add_row(ad::matmul(s_in, act.weight), act.bias));
        act_halting_update(st, p, threshold);
        st.state = apply_layer(s_in, layer, cfg, valid, mode, k);
        act_blend(st, st.state);
        ++k;
    }
    ActResult result;
    result.hidden = st.previous_state;
    result.stats = act_statistics(st, cfg.max_iterations);
    result.state = std::move(st);
    return result;
}

PostprocessParams add_postprocess(ParameterSet& params, const ModelConfig& cfg, Rng& rng) {
    const Eigen::Index d = cfg.d_model;
    const Eigen::Index r = cfg.d_rnn;
    params.add("post.fc3.weight", xavier_uniform(d, r, rng));
    params.add("post.fc3.bias", Matrix::Zero(1, r));
    for (const char* side : {"input", "hidden"}) {
        for (const char* gate : {"update", "reset", "candidate"}) {
            const std::string base = std::string("post.gru.") + side + "_" + gate;
            params.add(base + ".weight", xavier_uniform(r, r, rng));
            params.add(base + ".bias", Matrix::Zero(1, r));
        }
    }
    params.add("post.fc4.weight", xavier_uniform(r, d, rng));
    params.add("post.fc4.bias", Matrix::Zero(1, d));
    return postprocess_view(params);
}

PostprocessParams postprocess_view(const ParameterSet& params) {
    PostprocessParams p;
    p.fc3_weight = params.at("post.fc3.weight");
    p.fc3_bias = params.at("post.fc3.bias");
    auto& g = p.gru;
    g.input_update_weight = params.at("post.gru.input_update.weight");
    g.input_update_bias = params.at("post.gru.input_update.bias");
    g.input_reset_weight = params.at("post.gru.input_reset.weight");
    g.input_reset_bias = params.at("post.gru.input_reset.bias");
    g.input_candidate_weight = params.at("post.gru.input_candidate.weight");
    g.input_candidate_bias = params.at("post.gru.input_candidate.bias");
    g.hidden_update_weight = params.at("post.gru.hidden_update.weight");
    g.hidden_update_bias = params.at("post.gru.hidden_update.bias");
    g.hidden_reset_weight = params.at("post.gru.hidden_reset.weight");
    g.hidden_reset_bias = params.at("post.gru.hidden_reset.bias");
    g.hidden_candidate_weight = params.at("post.gru.hidden_candidate.weight");
    g.hidden_candidate_bias = params.at("post.gru.hidden_candidate.bias");
    p.fc4_weight = params.at("post.fc4.weight");
    p.fc4_bias = params.at("post.fc4.bias");
    return p;
}

Tensor postprocess(const Tensor& h, const PostprocessParams& p, std::span<const bool> valid) {
    const Eigen::Index n = h.rows();
    if (!valid.empty() && static_cast<Eigen::Index>(valid.size()) != n) throw ShapeError("postprocess: mask length");
    const auto& g = p.gru;
    const Tensor x = ad::add_row(ad::matmul(h, p.fc3_weight), p.fc3_bias);
    const Eigen::Index r = x.cols();

    // Input-side gate projections for every position at once.
    const Tensor xz = ad::add_row(ad::matmul(x, g.input_update_weight), g.input_update_bias);
    const Tensor xr = ad::add_row(ad::matmul(x, g.input_reset_weight), g.input_reset_bias);
    const Tensor xn = ad::add_row(ad::matmul(x, g.input_candidate_weight), g.input_candidate_bias);

    Tensor state = Tensor::constant(1, r, 0.0);
    std::vector<Tensor> rows;
    rows.reserve(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
        if (!valid.empty() && !valid[static_cast<std::size_t>(i)]) {
            rows.push_back(Tensor::constant(1, r, 0.0));
            continue;
        }
        const Tensor z = ad::sigmoid(ad::block(xz, i, 0, 1, r) +
                                     ad::matmul(state, g.hidden_update_weight) + g.hidden_update_bias);
        const Tensor reset = ad::sigmoid(ad::block(xr, i, 0, 1, r) +
                                         ad::matmul(state, g.hidden_reset_weight) + g.hidden_reset_bias);
        const Tensor candidate = ad::tanh(
            ad::block(xn, i, 0, 1, r) +
            ad::cwise_product(reset, ad::matmul(state, g.hidden_candidate_weight) + g.hidden_candidate_bias));
        state = ad::cwise_product(1.0 - z, candidate) + ad::cwise_product(z, state);
        rows.push_back(state);
    }
    Tensor out = ad::add_row(ad::matmul(ad::concat_rows(rows), p.fc4_weight), p.fc4_bias);
    bool any_pad = false;
    for (bool v : valid) any_pad = any_pad || !v;
    if (any_pad) {
        Matrix keep(n, out.cols());
        for (Eigen::Index i = 0; i < n; ++i) keep.row(i).setConstant(valid[static_cast<std::size_t>(i)] ? 1.0 : 0.0);
        out = ad::cwise_product(out, Tensor::constant(std::move(keep)));
    }
    return out;
}

}  // namespace uthp
