#pragma once

// Reverse-mode differentiation over dense row-major matrices.
//
// A Tensor is a shared handle to a graph node. Nodes produced while any input
// requires gradients record their parents and a backward closure; backward()
// walks the recorded graph from a scalar loss in reverse topological order.

#include "uthp/common.hpp"

#include <Eigen/Dense>

#include <functional>
#include <map>
#include <memory>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace uthp::ad {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
class Tensor;
template <typename Scalar>
class GradientAccumulator;

template <typename Scalar>
struct Node {
    using BackwardFn = std::function<void(const Matrix<Scalar>& grad, GradientAccumulator<Scalar>& acc)>;

    Matrix<Scalar> value;
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    BackwardFn backward;
    std::string name;
};

namespace detail {
inline bool& grad_enabled_flag() {
    thread_local bool enabled = true;
    return enabled;
}
}  // namespace detail

/// While alive, new nodes are not recorded (evaluation-only forward passes).
class NoGradGuard {
public:
    NoGradGuard() : previous_(detail::grad_enabled_flag()) { detail::grad_enabled_flag() = false; }
    ~NoGradGuard() { detail::grad_enabled_flag() = previous_; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

[[nodiscard]] inline bool grad_enabled() { return detail::grad_enabled_flag(); }

template <typename Scalar>
class Tensor {
public:
    using MatrixType = Matrix<Scalar>;
    using NodeType = Node<Scalar>;

    Tensor() = default;
    explicit Tensor(std::shared_ptr<NodeType> node) : node_(std::move(node)) {}

    /// A value that never receives gradients.
    static Tensor constant(MatrixType value) {
        auto n = std::make_shared<NodeType>();
        n->value = std::move(value);
        return Tensor(std::move(n));
    }

    static Tensor constant(Eigen::Index rows, Eigen::Index cols, Scalar fill) {
        return constant(MatrixType::Constant(rows, cols, fill));
    }

    static Tensor scalar(Scalar v) { return constant(1, 1, v); }

    /// A named leaf that receives gradients.
    static Tensor parameter(MatrixType value, std::string name) {
        auto n = std::make_shared<NodeType>();
        n->value = std::move(value);
        n->requires_grad = true;
        n->name = std::move(name);
        return Tensor(std::move(n));
    }

    [[nodiscard]] bool defined() const noexcept { return static_cast<bool>(node_); }
    [[nodiscard]] const MatrixType& value() const { return node_->value; }
    /// In-place access for optimizers; only meaningful on leaves.
    [[nodiscard]] MatrixType& mutable_value() { return node_->value; }
    [[nodiscard]] Eigen::Index rows() const { return node_->value.rows(); }
    [[nodiscard]] Eigen::Index cols() const { return node_->value.cols(); }
    [[nodiscard]] Eigen::Index size() const { return node_->value.size(); }
    [[nodiscard]] bool requires_grad() const { return node_ && node_->requires_grad; }
    [[nodiscard]] const std::string& name() const { return node_->name; }
    [[nodiscard]] Scalar item() const {
        if (node_->value.size() != 1) throw ShapeError("item() on a non-scalar tensor");
        return node_->value(0, 0);
    }
    [[nodiscard]] const std::shared_ptr<NodeType>& node() const noexcept { return node_; }

private:
    std::shared_ptr<NodeType> node_;
};

/// Gradient storage keyed by node, filled during backward().
template <typename Scalar>
class GradientAccumulator {
public:
    using MatrixType = Matrix<Scalar>;

    template <typename Derived>
    void add(const Node<Scalar>* node, const Eigen::MatrixBase<Derived>& g) {
        if (!node->requires_grad) return;
        auto it = grads_.find(node);
        if (it == grads_.end()) {
            grads_.emplace(node, MatrixType(g));
        } else {
            it->second += g;
        }
    }

    template <typename Derived>
    void add(const std::shared_ptr<Node<Scalar>>& node, const Eigen::MatrixBase<Derived>& g) {
        add(node.get(), g);
    }

    [[nodiscard]] const MatrixType* find(const Node<Scalar>* node) const {
        auto it = grads_.find(node);
        return it == grads_.end() ? nullptr : &it->second;
    }

    /// Gradient with respect to `t`; zeros when `t` was not reached.
    [[nodiscard]] MatrixType of(const Tensor<Scalar>& t) const {
        if (const auto* g = find(t.node().get())) return *g;
        return MatrixType::Zero(t.rows(), t.cols());
    }

private:
    std::unordered_map<const Node<Scalar>*, MatrixType> grads_;
};

template <typename Scalar>
using Gradients = GradientAccumulator<Scalar>;

template <typename Scalar>
using NamedGradients = std::map<std::string, Matrix<Scalar>>;

/// Reverse-mode accumulation from a scalar loss.
template <typename Scalar>
Gradients<Scalar> backward(const Tensor<Scalar>& loss) {
    if (!loss.defined() || loss.size() != 1) throw ShapeError("backward() needs a scalar loss");
    if (!std::isfinite(static_cast<double>(loss.item()))) throw NumericError("backward() on a non-finite loss");

    Gradients<Scalar> acc;
    using NodeT = Node<Scalar>;
    const NodeT* root = loss.node().get();
    if (!root->requires_grad) return acc;

    // Iterative post-order DFS; a node met again while still on the stack is a cycle.
    enum class Mark : unsigned char { Open, Done };
    std::unordered_map<const NodeT*, Mark> marks;
    std::vector<const NodeT*> order;
    std::vector<std::pair<const NodeT*, std::size_t>> stack;
    stack.emplace_back(root, 0);
    marks[root] = Mark::Open;
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            const NodeT* parent = node->parents[next++].get();
            if (!parent->requires_grad) continue;
            auto it = marks.find(parent);
            if (it == marks.end()) {
                marks.emplace(parent, Mark::Open);
                stack.emplace_back(parent, 0);
            } else if (it->second == Mark::Open) {
                throw GraphError("cycle detected in computation graph");
            }
        } else {
            marks[node] = Mark::Done;
            order.push_back(node);
            stack.pop_back();
        }
    }

    acc.add(root, Matrix<Scalar>::Ones(1, 1));
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        const NodeT* node = *it;
        if (!node->backward) continue;
        const auto* g = acc.find(node);
        if (g == nullptr) continue;
        const Matrix<Scalar> grad = *g;  // copy: the closure may add to other entries of the map
        node->backward(grad, acc);
    }
    return acc;
}

namespace detail {

template <typename Scalar>
void check_finite(const Matrix<Scalar>& v, const char* op) {
    if (!v.allFinite()) throw NumericError(std::string("non-finite result in ") + op);
}

/// Builds an op result; records parents and the backward closure only when
/// gradients are enabled and some parent requires them.
template <typename Scalar>
Tensor<Scalar> make_result(Matrix<Scalar> value, std::vector<std::shared_ptr<Node<Scalar>>> parents,
                           typename Node<Scalar>::BackwardFn backward, const char* op) {
    check_finite(value, op);
    auto n = std::make_shared<Node<Scalar>>();
    n->value = std::move(value);
    if (grad_enabled()) {
        for (const auto& p : parents) n->requires_grad = n->requires_grad || p->requires_grad;
    }
    if (n->requires_grad) {
        n->parents = std::move(parents);
        n->backward = std::move(backward);
    }
    return Tensor<Scalar>(std::move(n));
}

}  // namespace detail

}  // namespace uthp::ad
