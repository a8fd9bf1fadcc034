#pragma once

#include "uthp/ad/ops.hpp"
#include "uthp/ad/parameters.hpp"
#include "uthp/config.hpp"
#include "uthp/data.hpp"

#include <cmath>
#include <span>
#include <string>
#include <vector>

namespace uthp {

using Tensor = ad::Tensor<double>;
using Matrix = ad::Matrix<double>;
using ParameterSet = ad::ParameterSet<double>;

/// Sinusoidal encoding of timestamps, one row per event. For 1-based feature
/// index j: cos(t / 10000^((j-1)/D)) when j is odd, sin(t / 10000^(j/D)) when j is even.
template <typename Derived>
ad::Matrix<typename Derived::Scalar> temporal_encoding(const Eigen::MatrixBase<Derived>& times, int d_model) {
    using Scalar = typename Derived::Scalar;
    if (d_model <= 0 || d_model % 2 != 0) throw ConfigError("temporal encoding needs an even positive dimension");
    const Eigen::Index n = times.size();
    ad::Matrix<Scalar> out(n, d_model);
    const Scalar d = static_cast<Scalar>(d_model);
    for (int j = 1; j <= d_model; ++j) {
        const bool odd = (j % 2) == 1;
        const Scalar denom = std::pow(Scalar(10000), static_cast<Scalar>(odd ? j - 1 : j) / d);
        for (Eigen::Index i = 0; i < n; ++i) {
            const Scalar arg = times(i) / denom;
            out(i, j - 1) = odd ? std::cos(arg) : std::sin(arg);
        }
    }
    return out;
}

/// Batched form: one I_max x D matrix per batch row (padded positions included).
std::vector<Matrix> temporal_encoding(const Batch& batch, int d_model);

/// Type embedding lookup; id 0 (PAD) maps to the all-zero row.
Tensor embed_types(std::span<const int> type_ids, const Tensor& table);

struct AttentionParams {
    std::vector<Tensor> query;  // per head, D x D_K
    std::vector<Tensor> key;    // per head, D x D_K
    std::vector<Tensor> value;  // per head, D x D_V
    Tensor output;              // (L * D_V) x D
};

struct FfnParams {
    Tensor fc1_weight, fc1_bias;  // D x D_H, 1 x D_H
    Tensor conv_kernel, conv_bias;  // 1 x k, 1 x 1 (undefined without the CNN)
    Tensor fc2_weight, fc2_bias;  // reduced x D, 1 x D
};

struct EncodingLayerParams {
    AttentionParams attention;
    FfnParams ffn;
    Tensor norm1_scale, norm1_shift;
    Tensor norm2_scale, norm2_shift;
};

/// Dropout configuration for one application of a layer.
struct DropoutSite {
    double rate = 0.0;
    bool train = false;
    Rng* rng = nullptr;
};

/// Glorot-uniform initialisation bound sqrt(6 / (fan_in + fan_out)).
Matrix xavier_uniform(Eigen::Index rows, Eigen::Index cols, Rng& rng, Eigen::Index fan_in = -1,
                      Eigen::Index fan_out = -1);

/// Registers one encoding layer's parameters under `prefix` and returns views on them.
EncodingLayerParams add_encoding_layer(ParameterSet& params, const ModelConfig& cfg, const std::string& prefix,
                                       Rng& rng);
/// Views on an already registered layer.
EncodingLayerParams encoding_layer_view(const ParameterSet& params, const ModelConfig& cfg, const std::string& prefix);

/// Additive causal + padding mask: entry (i, j) is masked when j > i or key j is padding.
Matrix causal_mask(Eigen::Index n, std::span<const bool> valid = {});

/// Multi-head scaled dot-product attention under the causal/padding mask,
/// heads concatenated and projected by the output matrix.
Tensor masked_attention(const Tensor& s, const AttentionParams& p, std::span<const bool> valid = {},
                        const DropoutSite& drop = {});

/// Position-wise feed-forward: FC1, then conv -> ReLU -> max-pool along the
/// feature axis (or plain ReLU without the CNN), then FC2.
Tensor conv_ffn(const Tensor& a, const FfnParams& p, const ModelConfig& cfg);

/// Post-norm encoding layer: LN(attention(S) + S), then LN(ffn(.) + .).
/// Dropout hits attention weights and the FFN output in training mode.
/// Rows flagged invalid come out as zeros.
Tensor encoding_layer(const Tensor& s, const EncodingLayerParams& p, const ModelConfig& cfg,
                      std::span<const bool> valid = {}, const DropoutSite& drop = {});

}  // namespace uthp
