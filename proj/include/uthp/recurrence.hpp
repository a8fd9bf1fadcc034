#pragma once

#include "uthp/encoder.hpp"

#include <json.hpp>

#include <cstdint>
#include <span>
#include <vector>

namespace uthp {

/// How a forward pass treats dropout. In training mode each layer
/// application k draws from its own stream derive_key(stream_key, {k}).
struct ForwardMode {
    bool train = false;
    std::uint64_t stream_key = 0;

    [[nodiscard]] std::uint64_t layer_key(int iteration) const {
        return derive_key(stream_key, {static_cast<std::uint64_t>(iteration)});
    }
};

struct ActParams {
    Tensor weight;  // D x 1
    Tensor bias;    // 1 x 1
};

/// Halting bookkeeping for one sequence. Vectors are per position.
struct ActState {
    Tensor halting_probability;  // I x 1, padding starts (and stays) at 1
    Tensor remainders;           // I x 1
    Eigen::VectorXi n_updates;
    Eigen::VectorXd still_running;  // 0/1
    Eigen::VectorXd new_halted;     // 0/1, from the latest iteration
    Tensor update_weight;           // I x 1, from the latest iteration
    Tensor state;                   // S, I x D
    Tensor previous_state;          // P_S, I x D
    std::vector<Eigen::VectorXd> weight_history;
    Eigen::Array<bool, Eigen::Dynamic, 1> valid;
};

/// Iteration statistics over real positions; additive across sequences.
struct ActStats {
    std::size_t positions = 0;
    std::size_t total_iterations = 0;
    int max_iterations = 0;
    std::size_t halted_before_cap = 0;
    std::vector<std::size_t> histogram;  // histogram[n] = positions that ran n iterations

    [[nodiscard]] double mean_iterations() const {
        return positions == 0 ? 0.0 : static_cast<double>(total_iterations) / static_cast<double>(positions);
    }
    [[nodiscard]] double fraction_halted() const {
        return positions == 0 ? 0.0 : static_cast<double>(halted_before_cap) / static_cast<double>(positions);
    }
    void merge(const ActStats& other);
    [[nodiscard]] nlohmann::json to_json() const;
};

/// S = embedded; zero halting state; padding positions start halted.
ActState init_act_state(const Tensor& embedded, std::span<const bool> valid = {});

/// One iteration of halting bookkeeping given per-position halting
/// probabilities p (I x 1). Sets update_weight and advances counters:
///   new_halted    = [h + p*run > T] * run
///   run          <- [h + p*run <= T] * run
///   h            += p * run
///   R            += new_halted * (1 - h);  h += that increment
///   n            += run + new_halted
///   W             = p * run + increment
void act_halting_update(ActState& st, const Tensor& p, double threshold);

/// Loop condition: some real position has h < T and n < max_n.
[[nodiscard]] bool act_should_continue(const ActState& st, double threshold, int max_iterations);

/// P_S <- S * W + P_S * (1 - W), row-wise.
void act_blend(ActState& st, const Tensor& new_state);

ActStats act_statistics(const ActState& st, int max_iterations);

/// Fixed-count recurrence: S = embedded; repeat max_n times S = layer_k(S + X).
/// With one layer it is shared by every iteration; otherwise layer k is used at step k.
Tensor run_pure(const Tensor& embedded, const Matrix& temporal, std::span<const EncodingLayerParams> layers,
                const ModelConfig& cfg, std::span<const bool> valid = {}, const ForwardMode& mode = {});

struct ActResult {
    Tensor hidden;
    ActStats stats;
    ActState state;
};

/// Adaptive recurrence over one shared layer. Halting probabilities are
/// computed from S + X, the state entering the layer.
ActResult run_act(const Tensor& embedded, const Matrix& temporal, const EncodingLayerParams& layer,
                  const ActParams& act, const ModelConfig& cfg, std::span<const bool> valid = {},
                  const ForwardMode& mode = {});

struct GruParams {
    Tensor input_update_weight, input_update_bias;
    Tensor input_reset_weight, input_reset_bias;
    Tensor input_candidate_weight, input_candidate_bias;
    Tensor hidden_update_weight, hidden_update_bias;
    Tensor hidden_reset_weight, hidden_reset_bias;
    Tensor hidden_candidate_weight, hidden_candidate_bias;
};

struct PostprocessParams {
    Tensor fc3_weight, fc3_bias;  // D x D_RNN, 1 x D_RNN
    GruParams gru;
    Tensor fc4_weight, fc4_bias;  // D_RNN x D, 1 x D
};

PostprocessParams add_postprocess(ParameterSet& params, const ModelConfig& cfg, Rng& rng);
PostprocessParams postprocess_view(const ParameterSet& params);

/// FC3, a left-to-right gated recurrent pass, then FC4. Invalid rows are
/// skipped (hidden state carried over) and produce zero outputs.
Tensor postprocess(const Tensor& h, const PostprocessParams& p, std::span<const bool> valid = {});

}  // namespace uthp
