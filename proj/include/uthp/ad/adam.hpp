#pragma once

#include "uthp/ad/parameters.hpp"

#include <cmath>
#include <map>
#include <string>

namespace uthp::ad {

struct AdamOptions {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
};

template <typename Scalar>
struct AdamState {
    AdamOptions options;
    std::uint64_t step = 0;
    std::map<std::string, Matrix<Scalar>> first_moment;
    std::map<std::string, Matrix<Scalar>> second_moment;
};

/// One bias-corrected ADAM update of every trainable parameter. All gradients
/// are checked before anything is modified; a non-finite gradient aborts the
/// step and names the parameter.
template <typename Scalar>
void adam_step(ParameterSet<Scalar>& params, const NamedGradients<Scalar>& grads, AdamState<Scalar>& state) {
    const auto& opt = state.options;
    if (!(opt.lr >= 0.0)) throw ConfigError("adam: learning rate must be non-negative");

    for (const auto& name : params.names()) {
        const auto& e = params.entry(name);
        if (!e.trainable) continue;
        auto it = grads.find(name);
        if (it == grads.end()) continue;
        if (it->second.rows() != e.tensor.rows() || it->second.cols() != e.tensor.cols())
            throw ShapeError("adam: gradient shape mismatch for " + name);
        if (!it->second.allFinite()) throw NumericError("adam: non-finite gradient for parameter " + name);
    }

    ++state.step;
    const Scalar bc1 = Scalar(1) - std::pow(Scalar(opt.beta1), static_cast<Scalar>(state.step));
    const Scalar bc2 = Scalar(1) - std::pow(Scalar(opt.beta2), static_cast<Scalar>(state.step));

    for (const auto& name : params.names()) {
        auto& e = params.entry(name);
        if (!e.trainable) continue;
        auto it = grads.find(name);
        if (it == grads.end()) continue;
        auto& p = e.tensor.mutable_value();
        Matrix<Scalar> g = it->second;
        if (opt.weight_decay != 0.0) g += Scalar(opt.weight_decay) * p;

        auto [m_it, m_new] = state.first_moment.try_emplace(name, Matrix<Scalar>::Zero(p.rows(), p.cols()));
        auto [v_it, v_new] = state.second_moment.try_emplace(name, Matrix<Scalar>::Zero(p.rows(), p.cols()));
        auto& m = m_it->second;
        auto& v = v_it->second;
        m = Scalar(opt.beta1) * m + Scalar(1 - opt.beta1) * g;
        v = Scalar(opt.beta2) * v + Scalar(1 - opt.beta2) * g.cwiseAbs2();
        Matrix<Scalar> update =
            ((m.array() / bc1) / ((v.array() / bc2).sqrt() + Scalar(opt.eps))).matrix() * Scalar(opt.lr);
        if (e.fixed_rows > 0) update.topRows(e.fixed_rows).setZero();
        p -= update;
    }
}

}  // namespace uthp::ad
