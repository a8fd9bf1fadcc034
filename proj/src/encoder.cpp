#include "uthp/encoder.hpp"

#include <cmath>

namespace uthp {

std::vector<Matrix> temporal_encoding(const Batch& batch, int d_model) {
    std::vector<Matrix> out;
    out.reserve(static_cast<std::size_t>(batch.batch_size()));
    for (Eigen::Index b = 0; b < batch.batch_size(); ++b)
        out.push_back(temporal_encoding(batch.times.row(b).transpose(), d_model));
    return out;
}

Tensor embed_types(std::span<const int> type_ids, const Tensor& table) {
    return ad::embedding_lookup(table, type_ids);
}

Matrix xavier_uniform(Eigen::Index rows, Eigen::Index cols, Rng& rng, Eigen::Index fan_in, Eigen::Index fan_out) {
    if (fan_in < 0) fan_in = rows;
    if (fan_out < 0) fan_out = cols;
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-bound, bound);
    return m;
}

EncodingLayerParams add_encoding_layer(ParameterSet& params, const ModelConfig& cfg, const std::string& prefix,
                                       Rng& rng) {
    const Eigen::Index d = cfg.d_model;
    for (int l = 0; l < cfg.heads; ++l) {
        const std::string head = prefix + ".attn.head" + std::to_string(l);
        params.add(head + ".query", xavier_uniform(d, cfg.d_key, rng));
        params.add(head + ".key", xavier_uniform(d, cfg.d_key, rng));
        params.add(head + ".value", xavier_uniform(d, cfg.d_value, rng));
    }
    params.add(prefix + ".attn.output", xavier_uniform(Eigen::Index{cfg.heads} * cfg.d_value, d, rng));
    params.add(prefix + ".norm1.scale", Matrix::Ones(1, d));
    params.add(prefix + ".norm1.shift", Matrix::Zero(1, d));

    params.add(prefix + ".ffn.fc1.weight", xavier_uniform(d, cfg.d_hidden, rng));
    params.add(prefix + ".ffn.fc1.bias", Matrix::Zero(1, cfg.d_hidden));
    if (cfg.cnn_ffn) {
        params.add(prefix + ".ffn.conv.kernel", xavier_uniform(1, cfg.conv_kernel, rng, cfg.conv_kernel, cfg.conv_kernel));
        params.add(prefix + ".ffn.conv.bias", Matrix::Zero(1, 1));
    }
    params.add(prefix + ".ffn.fc2.weight", xavier_uniform(cfg.ffn_reduced_length(), d, rng));
    params.add(prefix + ".ffn.fc2.bias", Matrix::Zero(1, d));
    params.add(prefix + ".norm2.scale", Matrix::Ones(1, d));
    params.add(prefix + ".norm2.shift", Matrix::Zero(1, d));
    return encoding_layer_view(params, cfg, prefix);
}

EncodingLayerParams encoding_layer_view(const ParameterSet& params, const ModelConfig& cfg, const std::string& prefix) {
    EncodingLayerParams p;
    for (int l = 0; l < cfg.heads; ++l) {
        const std::string head = prefix + ".attn.head" + std::to_string(l);
        p.attention.query.push_back(params.at(head + ".query"));
        p.attention.key.push_back(params.at(head + ".key"));
        p.attention.value.push_back(params.at(head + ".value"));
    }
    p.attention.output = params.at(prefix + ".attn.output");
    p.norm1_scale = params.at(prefix + ".norm1.scale");
    p.norm1_shift = params.at(prefix + ".norm1.shift");
    p.ffn.fc1_weight = params.at(prefix + ".ffn.fc1.weight");
    p.ffn.fc1_bias = params.at(prefix + ".ffn.fc1.bias");
    if (cfg.cnn_ffn) {
        p.ffn.conv_kernel = params.at(prefix + ".ffn.conv.kernel");
        p.ffn.conv_bias = params.at(prefix + ".ffn.conv.bias");
    }
    p.ffn.fc2_weight = params.at(prefix + ".ffn.fc2.weight");
    p.ffn.fc2_bias = params.at(prefix + ".ffn.fc2.bias");
    p.norm2_scale = params.at(prefix + ".norm2.scale");
    p.norm2_shift = params.at(prefix + ".norm2.shift");
    return p;
}

Matrix causal_mask(Eigen::Index n, std::span<const bool> valid) {
    if (!valid.empty() && static_cast<Eigen::Index>(valid.size()) != n) throw ShapeError("causal_mask: mask length");
    Matrix m = Matrix::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j)
            if (j > i || (!valid.empty() && !valid[static_cast<std::size_t>(j)])) m(i, j) = ad::kMaskedLogit;
    return m;
}

Tensor masked_attention(const Tensor& s, const AttentionParams& p, std::span<const bool> valid,
                        const DropoutSite& drop) {
    const Eigen::Index n = s.rows();
    const Matrix mask = causal_mask(n, valid);
    std::vector<Tensor> heads;
    heads.reserve(p.query.size());
    for (std::size_t l = 0; l < p.query.size(); ++l) {
        const Tensor q = ad::matmul(s, p.query[l]);
        const Tensor k = ad::matmul(s, p.key[l]);
        const Tensor v = ad::matmul(s, p.value[l]);
        const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(p.query[l].cols()));
        Tensor weights = ad::row_softmax(ad::matmul(q, ad::transpose(k)) * inv_sqrt_dk, mask);
        weights = ad::dropout(weights, drop.rate, drop.rng, drop.train);
        heads.push_back(ad::matmul(weights, v));
    }
    const Tensor joined = heads.size() == 1 ? heads.front() : ad::concat_cols(heads);
    return ad::matmul(joined, p.output);
}

Tensor conv_ffn(const Tensor& a, const FfnParams& p, const ModelConfig& cfg) {
    Tensor h = ad::add_row(ad::matmul(a, p.fc1_weight), p.fc1_bias);
    if (cfg.cnn_ffn) {
        h = ad::conv1d_feature(h, p.conv_kernel, p.conv_bias, cfg.conv_stride, cfg.conv_padding);
        h = ad::relu(h);
        h = ad::maxpool1d_feature(h, cfg.pool_size, cfg.pool_stride);
    } else {
        h = ad::relu(h);
    }
    return ad::add_row(ad::matmul(h, p.fc2_weight), p.fc2_bias);
}

Tensor encoding_layer(const Tensor& s, const EncodingLayerParams& p, const ModelConfig& cfg,
                      std::span<const bool> valid, const DropoutSite& drop) {
    const Tensor attended = masked_attention(s, p.attention, valid, drop);
    const Tensor x1 = ad::layer_norm(attended + s, p.norm1_scale, p.norm1_shift);
    const Tensor ff = ad::dropout(conv_ffn(x1, p.ffn, cfg), drop.rate, drop.rng, drop.train);
    Tensor out = ad::layer_norm(ff + x1, p.norm2_scale, p.norm2_shift);

    bool any_pad = false;
    for (bool v : valid) any_pad = any_pad || !v;
    if (any_pad) {
        Matrix keep(out.rows(), out.cols());
        for (Eigen::Index i = 0; i < out.rows(); ++i) keep.row(i).setConstant(valid[static_cast<std::size_t>(i)] ? 1.0 : 0.0);
        out = ad::cwise_product(out, Tensor::constant(std::move(keep)));
    }
    return out;
}

}  // namespace uthp
