#pragma once

#include "uthp/ad/parameters.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>

namespace uthp::ad {

struct GradCheckEntry {
    std::string parameter;
    Eigen::Index index = 0;
    double analytic = 0.0;
    double numeric = 0.0;
    double error = 0.0;  // relative, or absolute when |analytic| < abs_floor
};

struct GradCheckReport {
    std::size_t checked = 0;
    double max_error = 0.0;
    GradCheckEntry worst;
};

/// Compares reverse-mode gradients of `loss_fn` against central finite
/// differences for every entry of every trainable parameter.
/// Error per entry is |a - n| / max(|a|, |n|), or |a - n| when |a| < abs_floor.
template <typename Scalar>
GradCheckReport gradient_check(ParameterSet<Scalar>& params, const std::function<Tensor<Scalar>()>& loss_fn,
                               double step = 1e-5, double abs_floor = 1e-7) {
    const auto analytic = backward(loss_fn(), params);
    GradCheckReport report;
    NoGradGuard no_grad;
    for (const auto& name : params.names()) {
        auto& e = params.entry(name);
        if (!e.trainable) continue;
        auto& value = e.tensor.mutable_value();
        const auto& grad = analytic.at(name);
        for (Eigen::Index i = e.fixed_rows * value.cols(); i < value.size(); ++i) {
            const Scalar saved = value.data()[i];
            value.data()[i] = saved + Scalar(step);
            const double up = static_cast<double>(loss_fn().item());
            value.data()[i] = saved - Scalar(step);
            const double down = static_cast<double>(loss_fn().item());
            value.data()[i] = saved;

            GradCheckEntry entry{name, i, static_cast<double>(grad.data()[i]), (up - down) / (2.0 * step), 0.0};
            const double diff = std::abs(entry.analytic - entry.numeric);
            entry.error = std::abs(entry.analytic) < abs_floor
                              ? diff
                              : diff / std::max(std::abs(entry.analytic), std::abs(entry.numeric));
            ++report.checked;
            if (report.checked == 1 || entry.error > report.max_error) {
                report.max_error = entry.error;
                report.worst = entry;
            }
        }
    }
    return report;
}

}  // namespace uthp::ad
