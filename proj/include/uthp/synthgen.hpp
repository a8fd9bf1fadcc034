#pragma once

#include "uthp/common.hpp"
#include "uthp/data.hpp"

#include <Eigen/Dense>
#include <json.hpp>

#include <cstdint>
#include <span>
#include <vector>

namespace uthp {

/// Multivariate Hawkes process with kernel phi_{cc'}(t) = a_{cc'} * w * exp(-w t),
/// so `a` is the branching matrix and stationarity reads spectral_radius(a) < 1.
struct HawkesParams {
    Eigen::VectorXd mu;  // background rate per type
    Eigen::MatrixXd a;   // a(c, c'): jump of type c's intensity when type c' occurs
    double decay = 1.0;

    [[nodiscard]] int num_types() const { return static_cast<int>(mu.size()); }
    /// Throws ConfigError on bad shapes, negative entries or a non-stationary branching matrix.
    void validate() const;

    /// C=2, mu=0.2, a=[[0.4,0.2],[0.2,0.4]], decay 1.
    static HawkesParams defaults();
};

struct GenSpec {
    std::size_t num_sequences = 100;
    double horizon = 50.0;
    std::uint64_t seed = 1;
};

[[nodiscard]] double spectral_radius(const Eigen::MatrixXd& m);

/// lambda_c(t) = mu_c + sum over history events strictly before t of a(c, c_i) * w * exp(-w (t - t_i)).
Eigen::VectorXd classical_intensity(const HawkesParams& p, std::span<const Event> history, double t);

/// Ogata thinning on [0, horizon]. Sequence n uses stream derive_key(seed, {n, attempt});
/// empty draws are repeated with the next attempt.
Dataset simulate(const HawkesParams& p, const GenSpec& spec);

/// Exact log-likelihood with the compensator integrated from t_1 to T. Events after T are ignored.
[[nodiscard]] double exact_loglik(const HawkesParams& p, const EventSequence& seq, double horizon);

/// The same quantity scored the way the neural model scores a sequence:
/// integral from t_1 to t_I and the first event's log-intensity left out.
[[nodiscard]] double exact_loglik_scored(const HawkesParams& p, const EventSequence& seq);

/// Total-compensator increments between consecutive events, the first measured from 0.
/// The censored gap after the last event is not included.
std::vector<double> rescaled_intervals(const HawkesParams& p, const EventSequence& seq);

/// Rescaled gaps of all sequences laid end to end on one compensator axis. The compensator left
/// between a sequence's last event and the horizon joins the next sequence's first gap, so only the
/// final gap is censored. Pooling per-sequence gaps instead drops every censored tail, which biases
/// the sample toward short gaps.
std::vector<double> pooled_rescaled_intervals(const HawkesParams& p, const Dataset& d, double horizon);

struct KsResult {
    double statistic = 0.0;
    double p_value = 1.0;
};

/// One-sample Kolmogorov-Smirnov test against Exponential(1).
KsResult ks_test_exponential(std::vector<double> samples);

nlohmann::json to_json(const HawkesParams& p, const GenSpec& spec);

}  // namespace uthp
