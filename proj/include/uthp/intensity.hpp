#pragma once

#include "uthp/encoder.hpp"

#include <cstdint>
#include <span>

namespace uthp {

/// Per-type intensity parameters: lambda_c(t) = softplus_beta(b_c + alpha_c * (t - t_i) / t_i + w_c . h(t_i)).
struct IntensityParams {
    Tensor bias;    // 1 x C
    Tensor alpha;   // 1 x C
    Tensor weight;  // D x C
    double beta = 1.0;

    [[nodiscard]] int num_types() const { return static_cast<int>(bias.cols()); }
};

IntensityParams add_intensity(ParameterSet& params, const ModelConfig& cfg, int num_types, Rng& rng);
IntensityParams intensity_view(const ParameterSet& params, const ModelConfig& cfg);

/// A point query inside interval (t_i, t_{i+1}], using hidden row h(t_i).
/// `interval` is the 0-based index i of the history event.
struct IntensityQuery {
    std::span<const double> times;
    const Matrix* hidden = nullptr;  // I x D
    Eigen::Index interval = 0;
    double t = 0.0;
};

/// Normalized elapsed time (t - t_i) / t_i, defined as 0 when t_i = 0.
[[nodiscard]] double interval_ratio(double t, double t_i);

[[nodiscard]] double type_intensity(const IntensityQuery& q, int type_id, const IntensityParams& p);
[[nodiscard]] double total_intensity(const IntensityQuery& q, const IntensityParams& p);

/// History logits b_c + w_c . h(t_i) for every interval: (I-1) x C, row i uses hidden row i.
Tensor interval_logits(const Tensor& hidden, const IntensityParams& p);

struct EstimatorSpec {
    Estimator kind = Estimator::MonteCarlo;
    int samples = 100;
    /// Base key; samples for interval i of sequence n come from derive_key(key, {n, i}).
    std::uint64_t stream_key = 0;
};

/// Monte-Carlo estimate of the integral of the total intensity from t_1 to t_I.
/// Sample points are held fixed, so the result is differentiable in the parameters.
Tensor compensator_mc(std::span<const double> times, const Tensor& hidden, const IntensityParams& p, int samples,
                      std::uint64_t stream_key, std::uint64_t sequence_id = 0);

/// Trapezoid estimate using both endpoint intensities of every interval.
Tensor compensator_trapezoid(std::span<const double> times, const Tensor& hidden, const IntensityParams& p);

struct LogLikelihood {
    Tensor event_term;   // sum of log lambda_{c_i}(t_i) over events 2..I
    Tensor compensator;  // estimated integral
    Tensor total;        // event_term - compensator
};

/// Log-likelihood of one sequence given its hidden rows. Event i is scored with
/// h(t_{i-1}); the first event is not scored. Length-1 sequences give zeros.
LogLikelihood sequence_loglik(const EventSequence& seq, const Tensor& hidden, const IntensityParams& p,
                              const EstimatorSpec& est, std::uint64_t sequence_id = 0);

}  // namespace uthp
