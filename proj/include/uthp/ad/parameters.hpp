#pragma once

#include "uthp/ad/tensor.hpp"

#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace uthp::ad {

template <typename Scalar>
struct Parameter {
    Tensor<Scalar> tensor;
    bool trainable = true;
    /// Leading rows held fixed and excluded from the parameter count (the PAD embedding row).
    Eigen::Index fixed_rows = 0;
};

/// Named trainable tensors in creation order.
template <typename Scalar>
class ParameterSet {
public:
    using MatrixType = Matrix<Scalar>;

    Tensor<Scalar> add(const std::string& name, MatrixType init, bool trainable = true, Eigen::Index fixed_rows = 0) {
        if (index_.contains(name)) throw ConfigError("duplicate parameter name: " + name);
        index_.emplace(name, entries_.size());
        entries_.push_back({Tensor<Scalar>::parameter(std::move(init), name), trainable, fixed_rows});
        names_.push_back(name);
        return entries_.back().tensor;
    }

    [[nodiscard]] bool contains(const std::string& name) const { return index_.contains(name); }

    [[nodiscard]] const Parameter<Scalar>& entry(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
        return entries_[it->second];
    }
    [[nodiscard]] Parameter<Scalar>& entry(const std::string& name) {
        return const_cast<Parameter<Scalar>&>(std::as_const(*this).entry(name));
    }

    [[nodiscard]] const Tensor<Scalar>& at(const std::string& name) const { return entry(name).tensor; }

    [[nodiscard]] const std::vector<std::string>& names() const noexcept { return names_; }
    [[nodiscard]] std::size_t size() const noexcept { return entries_.size(); }

    /// Number of trainable scalars, excluding fixed rows.
    [[nodiscard]] std::size_t count() const {
        std::size_t n = 0;
        for (const auto& e : entries_) n += count_of(e);
        return n;
    }

    [[nodiscard]] static std::size_t count_of(const Parameter<Scalar>& e) {
        if (!e.trainable) return 0;
        return static_cast<std::size_t>(e.tensor.size() - e.fixed_rows * e.tensor.cols());
    }

    /// Gradients for every parameter; zeros where the loss did not reach.
    [[nodiscard]] NamedGradients<Scalar> collect(const Gradients<Scalar>& grads) const {
        NamedGradients<Scalar> out;
        for (const auto& e : entries_) out.emplace(e.tensor.name(), grads.of(e.tensor));
        return out;
    }

private:
    std::vector<Parameter<Scalar>> entries_;
    std::vector<std::string> names_;
    std::unordered_map<std::string, std::size_t> index_;
};

/// Backward from `loss`, returning a gradient for every named parameter.
template <typename Scalar>
NamedGradients<Scalar> backward(const Tensor<Scalar>& loss, const ParameterSet<Scalar>& params) {
    return params.collect(backward(loss));
}

}  // namespace uthp::ad
