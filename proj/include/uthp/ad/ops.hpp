#pragma once

// Differentiable operations. Every op checks shapes, rejects non-finite
// results, and records a backward closure when an input requires gradients.

#include "uthp/ad/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

namespace uthp::ad {

template <typename T>
using Same = std::type_identity_t<T>;

namespace detail {

inline std::string shape_str(Eigen::Index r, Eigen::Index c) {
    return "(" + std::to_string(r) + "x" + std::to_string(c) + ")";
}

template <typename Scalar>
void require_same_shape(const Tensor<Scalar>& a, const Tensor<Scalar>& b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.rows(), a.cols()) + " vs " +
                         shape_str(b.rows(), b.cols()));
}

template <typename Scalar>
using NodePtr = std::shared_ptr<Node<Scalar>>;

}  // namespace detail

// ---------------------------------------------------------------- linear algebra

template <typename Scalar>
Tensor<Scalar> matmul(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
    if (a.cols() != b.rows())
        throw ShapeError("matmul: inner dimensions differ " + detail::shape_str(a.rows(), a.cols()) + " * " +
                         detail::shape_str(b.rows(), b.cols()));
    auto* an = a.node().get();
    auto* bn = b.node().get();
    return detail::make_result<Scalar>(
        a.value() * b.value(), {a.node(), b.node()},
        [an, bn](const Matrix<Scalar>& g, GradientAccumulator<Scalar>& acc) {
            if (an->requires_grad) acc.add(an, g * bn->value.transpose());
            if (bn->requires_grad) acc.add(bn, an->value.transpose() * g);
        },
        "matmul");
}

template <typename Scalar>
Tensor<Scalar> transpose(const Tensor<Scalar>& a) {
    auto* an = a.node().get();
    return detail::make_result<Scalar>(
        a.value().transpose(), {a.node()},
        [an](const Matrix<Scalar>& g, GradientAccumulator<Scalar>& acc) { acc.add(an, g.transpose()); },
        "transpose");
}

template <typename Scalar>
Tensor<Scalar> operator+(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
    detail::require_same_shape(a, b, "add");
    auto* an = a.node().get();
    auto* bn = b.node().get();
    return detail::make_result<Scalar>(
        a.value() + b.value(), {a.node(), b.node()},
        [an, bn](const Matrix<Scalar>& g, GradientAccumulator<Scalar>& acc) {
            acc.add(an, g);
            acc.add(bn, g);
        },
        "add");
}

template <typename Scalar>
Tensor<Scalar> operator-(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
    detail::require_same_shape(a, b, "sub");
    auto* an = a.node().get();
    auto* bn = b.node().get();
    return detail::make_result<Scalar>(
        a.value() - b.value(), {a.node(), b.node()},
        [an, bn](const Matrix<Scalar>& g, GradientAccumulator<Scalar>& acc) {
            acc.add(an, g);
            acc.add(bn, -g);
        },
        "sub");
}

template <typename Scalar>
Tensor<Scalar> operator-(const Tensor<Scalar>& a) {
    auto* an = a.node().get();
    return detail::make_result<Scalar>(
        -a.value(), {a.node()},
        [an](const Matrix<Scalar>& g, GradientAccumulator<Scalar>& acc) { acc.add(an, -g); }, "neg");
}

template <typename Scalar>
Tensor<Scalar> operator*(const Tensor<Scalar>& a, Same<Scalar> s) {
    auto* an = a.node().get();
    return detail::make_result<Scalar>(
        a.value() * s, {a.node()},
        [an, s](const Matrix<Scalar>& g, GradientAccumulator<Scalar>& acc) { acc.add(an, g * s); }, "scale");
}

template <typename Scalar>
Tensor<Scalar> operator*(Same<Scalar> s, const Tensor<Scalar>& a) {
    return a * s;
}

template <typename Scalar>
Tensor<Scalar> operator+(const Tensor<Scalar>& a, Same<Scalar> s) {
    auto* an = a.node().get();
    return detail::make_result<Scalar>(
        (a.value().array() + s).matrix(), {a.node()},
        [an](const Matrix<Scalar>& g, GradientAccumulator<Scalar>& acc) { acc.add(an, g); }, "add_scalar");
}

template <typename Scalar>
Tensor<Scalar> operator-(Same<Scalar> s, const Tensor<Scalar>& a) {
    auto* an = a.node().get();
    return detail::make_result<Scalar>(
        (s - a.value().array()).matrix(), {a.node()},
        [an](const Matrix<Scalar>& g, GradientAccumulator<Scalar>& acc) { acc.add(an, -g); }, "rsub_scalar");
}

/// Elementwise (Hadamard) product.
template <typename Scalar>
Tensor<Scalar> cwise_product(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
    detail::require_same_shape(a, b, "cwise_product");
    auto* an = a.node().get();
    auto* bn = b.node().get();
    return detail::make_result<Scalar>(
        a.value().cwiseProduct(b.value()), {a.node(), b.node()},
        [an, bn](const Matrix<Scalar>& g, GradientAccumulator<Scalar>& acc) {
            if (an->requires_grad) acc.add(an, g.cwiseProduct(bn->value));
            if (bn->requires_grad) acc.add(bn, g.cwiseProduct(an->value));
        },
        "cwise_product");
}

/// Expands a 1x1, 1xC or Rx1 tensor to rows x cols.
template <typename Scalar>
Tensor<Scalar> broadcast_to(const Tensor<Scalar>& a, Eigen::Index rows, Eigen::Index cols) {
    const Eigen::Index r = a.rows();
    const Eigen::Index c = a.cols();
    if (r == rows && c == cols) return a;
    if (!((r == 1 || r == rows) && (c == 1 || c == cols)))
        throw ShapeError("broadcast_to: cannot expand " + detail::shape_str(r, c) + " to " +
                         detail::shape_str(rows, cols));
    Matrix<Scalar> v(rows, cols);
    if (r == 1 && c == 1) {
        v.setConstant(a.value()(0, 0));
    } else if (r == 1) {
        v = a.value().replicate(rows, 1);
    } else {
        v = a.value().replicate(1, cols);
    }
    auto* an = a.node().get();
    return detail::make_result<Scalar>(
        std::move(v), {a.node()},
        [an, r, c](const Matrix<Scalar>& g, GradientAccumulator<Scalar>& acc) {
            if (r == 1 && c == 1) {
                acc.add(an, Matrix<Scalar>::Constant(1, 1, g.sum()));
            } else if (r == 1) {
                acc.add(an, g.colwise().sum());
            } else {
                acc.add(an, g.rowwise().sum());
            }
        },
        "broadcast_to");
}

/// x + bias where bias is a 1xC row shared by every row of x.
template <typename Scalar>
Tensor<Scalar> add_row(const Tensor<Scalar>& x, const Tensor<Scalar>& row) {
    return x + broadcast_to(row, x.rows(), x.cols());
}

// ---------------------------------------------------------------- elementwise maps

namespace detail {

template <typename Scalar, typename Fwd, typename Deriv>
Tensor<Scalar> unary(const Tensor<Scalar>& a, Fwd fwd, Deriv deriv, const char* op) {
    Matrix<Scalar> y = a.value().unaryExpr(fwd);
    auto* an = a.node().get();
    auto out = make_result<Scalar>(std::move(y), {a.node()}, nullptr, op);
    if (out.requires_grad()) {
        auto* yn = out.node().get();
        // The closure lives in the output node; a raw pointer back to it does not extend its lifetime.
        out.node()->backward = [an, yn, deriv](const Matrix<Scalar>& g, GradientAccumulator<Scalar>& acc) {
            Matrix<Scalar> d(g.rows(), g.cols());
            for (Eigen::Index i = 0; i < g.size(); ++i) d.data()[i] = deriv(an->value.data()[i], yn->value.data()[i]);
            acc.add(an, g.cwiseProduct(d));
        };
    }
    return out;
}

template <typename Scalar>
Scalar stable_sigmoid(Scalar x) {
    if (x >= Scalar(0)) return Scalar(1) / (Scalar(1) + std::exp(-x));
    const Scalar e = std::exp(x);
    return e / (Scalar(1) + e);
}

}  // namespace detail

/// Scalar softplus with softness beta: (1/beta) * log(1 + exp(beta * x)).
template <typename Scalar>
Scalar softplus_value(Scalar x, Scalar beta) {
    const Scalar z = beta * x;
    return (std::max(z, Scalar(0)) + std::log1p(std::exp(-std::abs(z)))) / beta;
}

template <typename Scalar>
Tensor<Scalar> sigmoid(const Tensor<Scalar>& a) {
    return detail::unary(
        a, [](Scalar x) { return detail::stable_sigmoid(x); },
        [](Scalar, Scalar y) { return y * (Scalar(1) - y); }, "sigmoid");
}

template <typename Scalar>
Tensor<Scalar> tanh(const Tensor<Scalar>& a) {
    return detail::unary(
        a, [](Scalar x) { return std::tanh(x); }, [](Scalar, Scalar y) { return Scalar(1) - y * y; }, "tanh");
}

template <typename Scalar>
Tensor<Scalar> relu(const Tensor<Scalar>& a) {
    return detail::unary(
        a, [](Scalar x) { return x > Scalar(0) ? x : Scalar(0); },
        [](Scalar x, Scalar) { return x > Scalar(0) ? Scalar(1) : Scalar(0); }, "relu");
}

template <typename Scalar>
Tensor<Scalar> softplus(const Tensor<Scalar>& a, Same<Scalar> beta) {
    if (!(beta > Scalar(0))) throw ShapeError("softplus: beta must be positive");
    return detail::unary(
        a, [beta](Scalar x) { return softplus_value(x, beta); },
        [beta](Scalar x, Scalar) { return detail::stable_sigmoid(beta * x); }, "softplus");
}

template <typename Scalar>
Tensor<Scalar> log(const Tensor<Scalar>& a) {
    return detail::unary(
        a, [](Scalar x) { return std::log(x); }, [](Scalar x, Scalar) { return Scalar(1) / x; }, "log");
}

template <typename Scalar>
Tensor<Scalar> exp(const Tensor<Scalar>& a) {
    return detail::unary(
        a, [](Scalar x) { return std::exp(x); }, [](Scalar, Scalar y) { return y; }, "exp");
}

template <typename Scalar>
Tensor<Scalar> square(const Tensor<Scalar>& a) {
    return detail::unary(
        a, [](Scalar x) { return x * x; }, [](Scalar x, Scalar) { return Scalar(2) * x; }, "square");
}

/// max(x, lo); gradient passes only where x > lo.
template <typename Scalar>
Tensor<Scalar> clamp_min(const Tensor<Scalar>& a, Same<Scalar> lo) {
    return detail::unary(
        a, [lo](Scalar x) { return x > lo ? x : lo; },
        [lo](Scalar x, Scalar) { return x > lo ? Scalar(1) : Scalar(0); }, "clamp_min");
}

// ---------------------------------------------------------------- reductions and reshaping

template <typename Scalar>
Tensor<Scalar> sum(const Tensor<Scalar>& a) {
    auto* an = a.node().get();
    return detail::make_result<Scalar>(
        Matrix<Scalar>::Constant(1, 1, a.value().sum()), {a.node()},
        [an](const Matrix<Scalar>& g, GradientAccumulator<Scalar>& acc) {
            acc.add(an, Matrix<Scalar>::Constant(an->value.rows(), an->value.cols(), g(0, 0)));
        },
        "sum");
}

template <typename Scalar>
Tensor<Scalar> mean(const Tensor<Scalar>& a) {
    return sum(a) * (Scalar(1) / static_cast<Scalar>(a.size()));
}

/// Sum over columns: R x C -> R x 1.
template <typename Scalar>
Tensor<Scalar> row_sum(const Tensor<Scalar>& a) {
    auto* an = a.node().get();
    return detail::make_result<Scalar>(
        a.value().rowwise().sum(), {a.node()},
        [an](const Matrix<Scalar>& g, GradientAccumulator<Scalar>& acc) {
            acc.add(an, g.replicate(1, an->value.cols()));
        },
        "row_sum");
}

template <typename Scalar>
Tensor<Scalar> row_mean(const Tensor<Scalar>& a) {
    return row_sum(a) * (Scalar(1) / static_cast<Scalar>(a.cols()));
}

template <typename Scalar>
Tensor<Scalar> block(const Tensor<Scalar>& a, Eigen::Index row, Eigen::Index col, Eigen::Index rows,
                     Eigen::Index cols) {
    if (row < 0 || col < 0 || rows < 0 || cols < 0 || row + rows > a.rows() || col + cols > a.cols())
        throw ShapeError("block: out of range");
    auto* an = a.node().get();
    return detail::make_result<Scalar>(
        a.value().block(row, col, rows, cols), {a.node()},
        [an, row, col](const Matrix<Scalar>& g, GradientAccumulator<Scalar>& acc) {
            Matrix<Scalar> full = Matrix<Scalar>::Zero(an->value.rows(), an->value.cols());
            full.block(row, col, g.rows(), g.cols()) = g;
            acc.add(an, full);
        },
        "block");
}

template <typename Scalar>
Tensor<Scalar> concat_cols(const std::vector<Tensor<Scalar>>& parts) {
    if (parts.empty()) throw ShapeError("concat_cols: no inputs");
    const Eigen::Index rows = parts.front().rows();
    Eigen::Index cols = 0;
    for (const auto& p : parts) {
        if (p.rows() != rows) throw ShapeError("concat_cols: row counts differ");
        cols += p.cols();
    }
    Matrix<Scalar> v(rows, cols);
    std::vector<detail::NodePtr<Scalar>> parents;
    std::vector<Node<Scalar>*> raw;
    Eigen::Index at = 0;
    for (const auto& p : parts) {
        v.middleCols(at, p.cols()) = p.value();
        at += p.cols();
        parents.push_back(p.node());
        raw.push_back(p.node().get());
    }
    return detail::make_result<Scalar>(
        std::move(v), std::move(parents),
        [raw](const Matrix<Scalar>& g, GradientAccumulator<Scalar>& acc) {
            Eigen::Index off = 0;
            for (auto* n : raw) {
                if (n->requires_grad) acc.add(n, g.middleCols(off, n->value.cols()));
                off += n->value.cols();
            }
        },
        "concat_cols");
}

template <typename Scalar>
Tensor<Scalar> concat_rows(const std::vector<Tensor<Scalar>>& parts) {
    if (parts.empty()) throw ShapeError("concat_rows: no inputs");
    const Eigen::Index cols = parts.front().cols();
    Eigen::Index rows = 0;
    for (const auto& p : parts) {
        if (p.cols() != cols) throw ShapeError("concat_rows: column counts differ");
        rows += p.rows();
    }
    Matrix<Scalar> v(rows, cols);
    std::vector<detail::NodePtr<Scalar>> parents;
    std::vector<Node<Scalar>*> raw;
    Eigen::Index at = 0;
    for (const auto& p : parts) {
        v.middleRows(at, p.rows()) = p.value();
        at += p.rows();
        parents.push_back(p.node());
        raw.push_back(p.node().get());
    }
    return detail::make_result<Scalar>(
        std::move(v), std::move(parents),
        [raw](const Matrix<Scalar>& g, GradientAccumulator<Scalar>& acc) {
            Eigen::Index off = 0;
            for (auto* n : raw) {
                if (n->requires_grad) acc.add(n, g.middleRows(off, n->value.rows()));
                off += n->value.rows();
            }
        },
        "concat_rows");
}

/// Selects one entry per row: out(r) = a(r, index[r]).
template <typename Scalar>
Tensor<Scalar> pick(const Tensor<Scalar>& a, std::span<const int> index) {
    if (static_cast<Eigen::Index>(index.size()) != a.rows()) throw ShapeError("pick: one index per row required");
    Matrix<Scalar> v(a.rows(), 1);
    for (Eigen::Index r = 0; r < a.rows(); ++r) {
        const int c = index[static_cast<std::size_t>(r)];
        if (c < 0 || c >= a.cols()) throw ShapeError("pick: column index out of range");
        v(r, 0) = a.value()(r, c);
    }
    auto* an = a.node().get();
    std::vector<int> idx(index.begin(), index.end());
    return detail::make_result<Scalar>(
        std::move(v), {a.node()},
        [an, idx = std::move(idx)](const Matrix<Scalar>& g, GradientAccumulator<Scalar>& acc) {
            Matrix<Scalar> full = Matrix<Scalar>::Zero(an->value.rows(), an->value.cols());
            for (std::size_t r = 0; r < idx.size(); ++r)
                full(static_cast<Eigen::Index>(r), idx[r]) = g(static_cast<Eigen::Index>(r), 0);
            acc.add(an, full);
        },
        "pick");
}

// ---------------------------------------------------------------- network layers

/// Sentinel used for additive masking before softmax.
inline constexpr double kMaskedLogit = -1e30;

/// Row-wise softmax of (x + mask). `mask` is additive (0 or kMaskedLogit) and
/// may be empty; masked entries come out exactly 0.
template <typename Scalar>
Tensor<Scalar> row_softmax(const Tensor<Scalar>& x, const Matrix<Scalar>& mask = {}) {
    Matrix<Scalar> z = x.value();
    if (mask.size() != 0) {
        if (mask.rows() != z.rows() || mask.cols() != z.cols()) throw ShapeError("row_softmax: mask shape");
        z += mask;
    }
    for (Eigen::Index r = 0; r < z.rows(); ++r) {
        const Scalar m = z.row(r).maxCoeff();
        z.row(r) = (z.row(r).array() - m).exp().matrix();
        // vectorized exp clamps its argument, so masked entries would be denormal rather than 0
        if (mask.size() != 0)
            z.row(r) = (mask.row(r).array() <= Scalar(kMaskedLogit / 2)).select(Scalar(0), z.row(r).array()).matrix();
        z.row(r) /= z.row(r).sum();
    }
    auto* xn = x.node().get();
    auto out = detail::make_result<Scalar>(std::move(z), {x.node()}, nullptr, "row_softmax");
    if (out.requires_grad()) {
        auto* yn = out.node().get();
        out.node()->backward = [xn, yn](const Matrix<Scalar>& g, GradientAccumulator<Scalar>& acc) {
            const auto& y = yn->value;
            const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> dot = g.cwiseProduct(y).rowwise().sum();
            Matrix<Scalar> gx = y.cwiseProduct(g - dot.replicate(1, g.cols()));
            acc.add(xn, gx);
        };
    }
    return out;
}

/// Row-wise layer normalization with learned 1xC scale and shift.
template <typename Scalar>
Tensor<Scalar> layer_norm(const Tensor<Scalar>& x, const Tensor<Scalar>& scale, const Tensor<Scalar>& shift,
                          Same<Scalar> eps = Scalar(1e-5)) {
    const Eigen::Index n = x.cols();
    if (scale.rows() != 1 || scale.cols() != n || shift.rows() != 1 || shift.cols() != n)
        throw ShapeError("layer_norm: scale/shift must be 1 x features");
    Matrix<Scalar> xhat(x.rows(), n);
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> inv_std(x.rows());
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
        const Scalar mu = x.value().row(r).mean();
        const Scalar var = (x.value().row(r).array() - mu).square().mean();
        inv_std(r) = Scalar(1) / std::sqrt(var + eps);
        xhat.row(r) = (x.value().row(r).array() - mu).matrix() * inv_std(r);
    }
    Matrix<Scalar> y = (xhat.array().rowwise() * scale.value().row(0).array()).matrix();
    y.rowwise() += shift.value().row(0);
    auto* xn = x.node().get();
    auto* sn = scale.node().get();
    auto* bn = shift.node().get();
    return detail::make_result<Scalar>(
        std::move(y), {x.node(), scale.node(), shift.node()},
        [xn, sn, bn, xhat = std::move(xhat), inv_std = std::move(inv_std)](const Matrix<Scalar>& g,
                                                                          GradientAccumulator<Scalar>& acc) {
            if (sn->requires_grad) acc.add(sn, g.cwiseProduct(xhat).colwise().sum());
            if (bn->requires_grad) acc.add(bn, g.colwise().sum());
            if (xn->requires_grad) {
                const Matrix<Scalar> gh = (g.array().rowwise() * sn->value.row(0).array()).matrix();
                Matrix<Scalar> gx(g.rows(), g.cols());
                for (Eigen::Index r = 0; r < g.rows(); ++r) {
                    const Scalar m1 = gh.row(r).mean();
                    const Scalar m2 = gh.row(r).cwiseProduct(xhat.row(r)).mean();
                    gx.row(r) = ((gh.row(r).array() - m1 - xhat.row(r).array() * m2) * inv_std(r)).matrix();
                }
                acc.add(xn, gx);
            }
        },
        "layer_norm");
}

/// Gathers table rows: out.row(i) = table.row(ids[i]). Row 0 is the PAD row and
/// never receives gradient.
template <typename Scalar>
Tensor<Scalar> embedding_lookup(const Tensor<Scalar>& table, std::span<const int> ids) {
    Matrix<Scalar> v(static_cast<Eigen::Index>(ids.size()), table.cols());
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] < 0 || ids[i] >= table.rows())
            throw ShapeError("embedding_lookup: id " + std::to_string(ids[i]) + " out of range");
        v.row(static_cast<Eigen::Index>(i)) = table.value().row(ids[i]);
    }
    auto* tn = table.node().get();
    std::vector<int> idx(ids.begin(), ids.end());
    return detail::make_result<Scalar>(
        std::move(v), {table.node()},
        [tn, idx = std::move(idx)](const Matrix<Scalar>& g, GradientAccumulator<Scalar>& acc) {
            Matrix<Scalar> full = Matrix<Scalar>::Zero(tn->value.rows(), tn->value.cols());
            for (std::size_t i = 0; i < idx.size(); ++i)
                if (idx[i] != 0) full.row(idx[i]) += g.row(static_cast<Eigen::Index>(i));
            acc.add(tn, full);
        },
        "embedding_lookup");
}

[[nodiscard]] constexpr Eigen::Index conv_output_length(Eigen::Index length, Eigen::Index kernel,
                                                        Eigen::Index stride, Eigen::Index padding) {
    const Eigen::Index span = length + 2 * padding - kernel;
    return span < 0 || stride < 1 ? 0 : span / stride + 1;
}

[[nodiscard]] constexpr Eigen::Index pool_output_length(Eigen::Index length, Eigen::Index size,
                                                        Eigen::Index stride) {
    const Eigen::Index span = length - size;
    return span < 0 || stride < 1 ? 0 : span / stride + 1;
}

/// Single-channel 1-D convolution sliding along the feature (column) axis of
/// each row independently. kernel is 1 x k, bias is 1 x 1.
template <typename Scalar>
Tensor<Scalar> conv1d_feature(const Tensor<Scalar>& x, const Tensor<Scalar>& kernel, const Tensor<Scalar>& bias,
                              Eigen::Index stride, Eigen::Index padding) {
    const Eigen::Index k = kernel.cols();
    const Eigen::Index len = x.cols();
    const Eigen::Index out_len = conv_output_length(len, k, stride, padding);
    if (kernel.rows() != 1 || bias.size() != 1 || out_len < 1)
        throw ShapeError("conv1d_feature: bad kernel/bias shape or empty output");
    Matrix<Scalar> y(x.rows(), out_len);
    const auto& xv = x.value();
    const auto& w = kernel.value();
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
        for (Eigen::Index o = 0; o < out_len; ++o) {
            Scalar s = bias.value()(0, 0);
            for (Eigen::Index j = 0; j < k; ++j) {
                const Eigen::Index src = o * stride + j - padding;
                if (src >= 0 && src < len) s += w(0, j) * xv(r, src);
            }
            y(r, o) = s;
        }
    }
    auto* xn = x.node().get();
    auto* kn = kernel.node().get();
    auto* bn = bias.node().get();
    return detail::make_result<Scalar>(
        std::move(y), {x.node(), kernel.node(), bias.node()},
        [xn, kn, bn, stride, padding](const Matrix<Scalar>& g, GradientAccumulator<Scalar>& acc) {
            const Eigen::Index kk = kn->value.cols();
            const Eigen::Index length = xn->value.cols();
            Matrix<Scalar> gx = Matrix<Scalar>::Zero(xn->value.rows(), length);
            Matrix<Scalar> gk = Matrix<Scalar>::Zero(1, kk);
            for (Eigen::Index r = 0; r < g.rows(); ++r) {
                for (Eigen::Index o = 0; o < g.cols(); ++o) {
                    const Scalar go = g(r, o);
                    for (Eigen::Index j = 0; j < kk; ++j) {
                        const Eigen::Index src = o * stride + j - padding;
                        if (src < 0 || src >= length) continue;
                        gx(r, src) += go * kn->value(0, j);
                        gk(0, j) += go * xn->value(r, src);
                    }
                }
            }
            if (xn->requires_grad) acc.add(xn, gx);
            if (kn->requires_grad) acc.add(kn, gk);
            if (bn->requires_grad) acc.add(bn, Matrix<Scalar>::Constant(1, 1, g.sum()));
        },
        "conv1d_feature");
}

/// Max pooling along the feature axis; ties route the gradient to the first maximum.
template <typename Scalar>
Tensor<Scalar> maxpool1d_feature(const Tensor<Scalar>& x, Eigen::Index size, Eigen::Index stride) {
    const Eigen::Index out_len = pool_output_length(x.cols(), size, stride);
    if (out_len < 1) throw ShapeError("maxpool1d_feature: empty output");
    Matrix<Scalar> y(x.rows(), out_len);
    Eigen::Matrix<Eigen::Index, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> arg(x.rows(), out_len);
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
        for (Eigen::Index o = 0; o < out_len; ++o) {
            Eigen::Index best = o * stride;
            for (Eigen::Index j = 1; j < size; ++j)
                if (x.value()(r, o * stride + j) > x.value()(r, best)) best = o * stride + j;
            arg(r, o) = best;
            y(r, o) = x.value()(r, best);
        }
    }
    auto* xn = x.node().get();
    return detail::make_result<Scalar>(
        std::move(y), {x.node()},
        [xn, arg = std::move(arg)](const Matrix<Scalar>& g, GradientAccumulator<Scalar>& acc) {
            Matrix<Scalar> gx = Matrix<Scalar>::Zero(xn->value.rows(), xn->value.cols());
            for (Eigen::Index r = 0; r < g.rows(); ++r)
                for (Eigen::Index o = 0; o < g.cols(); ++o) gx(r, arg(r, o)) += g(r, o);
            acc.add(xn, gx);
        },
        "maxpool1d_feature");
}

/// Inverted dropout. With train == false (or rate == 0) the input tensor is
/// returned unchanged and `rng` is not touched.
template <typename Scalar>
Tensor<Scalar> dropout(const Tensor<Scalar>& x, double rate, Rng* rng, bool train) {
    if (!train || rate == 0.0) return x;
    if (!(rate > 0.0 && rate < 1.0)) throw ShapeError("dropout: rate must be in [0, 1)");
    if (rng == nullptr) throw ShapeError("dropout: training mode needs a random stream");
    const Scalar keep_scale = Scalar(1) / Scalar(1.0 - rate);
    Matrix<Scalar> mask(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < mask.size(); ++i) mask.data()[i] = rng->uniform() < rate ? Scalar(0) : keep_scale;
    return cwise_product(x, Tensor<Scalar>::constant(std::move(mask)));
}

}  // namespace uthp::ad
