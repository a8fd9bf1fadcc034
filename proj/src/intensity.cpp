#include "uthp/intensity.hpp"

#include <atomic>
#include <cmath>
#include <string>

namespace uthp {

namespace {

void warn_zero_origin() {
    static std::atomic<bool> warned{false};
    if (!warned.exchange(true))
        log_warning("interval starting at t = 0: elapsed-time term set to 0 for such intervals");
}

std::vector<double> interval_ratios(std::span<const double> times) {
    std::vector<double> r;
    if (times.size() < 2) return r;
    r.reserve(times.size() - 1);
    for (std::size_t i = 0; i + 1 < times.size(); ++i) r.push_back(interval_ratio(times[i + 1], times[i]));
    return r;
}

void check_inputs(std::span<const double> times, const Tensor& hidden, const IntensityParams& p) {
    if (static_cast<Eigen::Index>(times.size()) != hidden.rows())
        throw ShapeError("intensity: one hidden row per event required");
    if (hidden.cols() != p.weight.rows()) throw ShapeError("intensity: hidden width does not match weights");
    if (!(p.beta > 0.0)) throw ConfigError("softplus beta must be positive");
}

}  // namespace

IntensityParams add_intensity(ParameterSet& params, const ModelConfig& cfg, int num_types, Rng& rng) {
    params.add("intensity.bias", Matrix::Zero(1, num_types));
    params.add("intensity.alpha", Matrix::Constant(1, num_types, cfg.alpha_init), cfg.alpha_trainable);
    params.add("intensity.weight", xavier_uniform(cfg.d_model, num_types, rng));
    return intensity_view(params, cfg);
}

IntensityParams intensity_view(const ParameterSet& params, const ModelConfig& cfg) {
    return {params.at("intensity.bias"), params.at("intensity.alpha"), params.at("intensity.weight"),
            cfg.softplus_beta};
}

double interval_ratio(double t, double t_i) {
    if (t_i == 0.0) {
        warn_zero_origin();
        return 0.0;
    }
    return (t - t_i) / t_i;
}

double type_intensity(const IntensityQuery& q, int type_id, const IntensityParams& p) {
    if (q.hidden == nullptr) throw ShapeError("intensity query without hidden rows");
    const int c = type_id - 1;
    if (c < 0 || c >= p.num_types()) throw DataError("type_id out of range");
    const auto i = q.interval;
    if (i < 0 || i >= static_cast<Eigen::Index>(q.times.size())) throw ShapeError("intensity query interval");
    const double t_i = q.times[static_cast<std::size_t>(i)];
    const double history = q.hidden->row(i).dot(p.weight.value().col(c));
    const double logit = p.bias.value()(0, c) + p.alpha.value()(0, c) * interval_ratio(q.t, t_i) + history;
    return ad::softplus_value(logit, p.beta);
}

double total_intensity(const IntensityQuery& q, const IntensityParams& p) {
    double total = 0.0;
    for (int c = 1; c <= p.num_types(); ++c) total += type_intensity(q, c, p);
    return total;
}

Tensor interval_logits(const Tensor& hidden, const IntensityParams& p) {
    const Tensor history = ad::block(hidden, 0, 0, hidden.rows() - 1, hidden.cols());
    return ad::add_row(ad::matmul(history, p.weight), p.bias);
}

Tensor compensator_mc(std::span<const double> times, const Tensor& hidden, const IntensityParams& p, int samples,
                      std::uint64_t stream_key, std::uint64_t sequence_id) {
    if (samples < 1) throw ConfigError("Monte-Carlo compensator needs at least one sample");
    check_inputs(times, hidden, p);
    if (times.size() < 2) return Tensor::scalar(0.0);

    const auto intervals = static_cast<Eigen::Index>(times.size() - 1);
    Matrix ratio(intervals, samples);
    Matrix width(intervals, 1);
    for (Eigen::Index i = 0; i < intervals; ++i) {
        const double lo = times[static_cast<std::size_t>(i)];
        const double hi = times[static_cast<std::size_t>(i) + 1];
        width(i, 0) = hi - lo;
        Rng rng(derive_key(stream_key, {sequence_id, static_cast<std::uint64_t>(i)}));
        for (int m = 0; m < samples; ++m) ratio(i, m) = interval_ratio(rng.uniform(lo, hi), lo);
    }
    const Tensor ratio_t = Tensor::constant(std::move(ratio));
    const Tensor z = interval_logits(hidden, p);

    Tensor per_interval;  // (I-1) x 1, mean total intensity over the samples
    for (int c = 0; c < p.num_types(); ++c) {
        const Tensor column = ad::broadcast_to(ad::block(z, 0, c, intervals, 1), intervals, samples);
        const Tensor slope = ad::broadcast_to(ad::block(p.alpha, 0, c, 1, 1), intervals, samples);
        const Tensor mean_c = ad::row_mean(ad::softplus(column + ad::cwise_product(slope, ratio_t), p.beta));
        per_interval = c == 0 ? mean_c : per_interval + mean_c;
    }
    return ad::sum(ad::cwise_product(per_interval, Tensor::constant(std::move(width))));
}

Tensor compensator_trapezoid(std::span<const double> times, const Tensor& hidden, const IntensityParams& p) {
    check_inputs(times, hidden, p);
    if (times.size() < 2) return Tensor::scalar(0.0);

    const auto intervals = static_cast<Eigen::Index>(times.size() - 1);
    const auto ratios = interval_ratios(times);
    Matrix end_ratio(intervals, p.num_types());
    Matrix half_width(intervals, 1);
    for (Eigen::Index i = 0; i < intervals; ++i) {
        end_ratio.row(i).setConstant(ratios[static_cast<std::size_t>(i)]);
        half_width(i, 0) = 0.5 * (times[static_cast<std::size_t>(i) + 1] - times[static_cast<std::size_t>(i)]);
    }
    const Tensor z = interval_logits(hidden, p);
    const Tensor start = ad::softplus(z, p.beta);
    const Tensor slope = ad::broadcast_to(p.alpha, intervals, p.num_types());
    const Tensor end = ad::softplus(z + ad::cwise_product(slope, Tensor::constant(std::move(end_ratio))), p.beta);
    return ad::sum(ad::cwise_product(ad::row_sum(start + end), Tensor::constant(std::move(half_width))));
}

LogLikelihood sequence_loglik(const EventSequence& seq, const Tensor& hidden, const IntensityParams& p,
                              const EstimatorSpec& est, std::uint64_t sequence_id) {
    const Eigen::VectorXd t = seq.times();
    const std::span<const double> times(t.data(), static_cast<std::size_t>(t.size()));
    check_inputs(times, hidden, p);
    if (seq.size() < 2) {
        const Tensor zero = Tensor::scalar(0.0);
        return {zero, zero, zero};
    }

    const auto intervals = static_cast<Eigen::Index>(seq.size() - 1);
    const auto ratios = interval_ratios(times);
    Matrix end_ratio(intervals, p.num_types());
    std::vector<int> target(static_cast<std::size_t>(intervals));
    for (Eigen::Index i = 0; i < intervals; ++i) {
        end_ratio.row(i).setConstant(ratios[static_cast<std::size_t>(i)]);
        const int c = seq.events[static_cast<std::size_t>(i) + 1].type_id;
        if (c < 1 || c > p.num_types()) throw DataError("type_id out of range at event " + std::to_string(i + 2));
        target[static_cast<std::size_t>(i)] = c - 1;
    }
    const Tensor z = interval_logits(hidden, p);
    const Tensor slope = ad::broadcast_to(p.alpha, intervals, p.num_types());
    const Tensor lambda =
        ad::pick(ad::softplus(z + ad::cwise_product(slope, Tensor::constant(std::move(end_ratio))), p.beta), target);
    for (Eigen::Index i = 0; i < intervals; ++i) {
        const double v = lambda.value()(i, 0);
        if (!(std::isfinite(v) && v > 0.0))
            throw NumericError("intensity underflow or non-finite value at event " + std::to_string(i + 2));
    }
    const Tensor event_term = ad::sum(ad::log(lambda));
    const Tensor compensator = est.kind == Estimator::Trapezoid
                                   ? compensator_trapezoid(times, hidden, p)
                                   : compensator_mc(times, hidden, p, est.samples, est.stream_key, sequence_id);
    return {event_term, compensator, event_term - compensator};
}

}  // namespace uthp
