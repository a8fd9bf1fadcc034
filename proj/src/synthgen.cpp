#include "uthp/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace uthp {

void HawkesParams::validate() const {
    const auto c = mu.size();
    if (c < 1) throw ConfigError("hawkes: at least one event type required");
    if (a.rows() != c || a.cols() != c) throw ConfigError("hawkes: excitation matrix must be C x C");
    if (!mu.allFinite() || !a.allFinite() || !std::isfinite(decay)) throw ConfigError("hawkes: non-finite parameter");
    if ((mu.array() <= 0.0).any()) throw ConfigError("hawkes: background rates must be positive");
    if ((a.array() < 0.0).any()) throw ConfigError("hawkes: excitation entries must be non-negative");
    if (!(decay > 0.0)) throw ConfigError("hawkes: decay must be positive");
    const double rho = spectral_radius(a);
    if (!(rho < 1.0)) throw ConfigError("hawkes: non-stationary parameters (spectral radius " + std::to_string(rho) + ")");
}

HawkesParams HawkesParams::defaults() {
    HawkesParams p;
    p.mu = Eigen::VectorXd::Constant(2, 0.2);
    p.a.resize(2, 2);
    p.a << 0.4, 0.2, 0.2, 0.4;
    p.decay = 1.0;
    return p;
}

double spectral_radius(const Eigen::MatrixXd& m) {
    if (m.size() == 0) return 0.0;
    Eigen::EigenSolver<Eigen::MatrixXd> solver(m, false);
    return solver.eigenvalues().cwiseAbs().maxCoeff();
}

Eigen::VectorXd classical_intensity(const HawkesParams& p, std::span<const Event> history, double t) {
    Eigen::VectorXd lambda = p.mu;
    for (const Event& e : history) {
        if (!(e.time < t)) continue;
        lambda += p.a.col(e.type_id - 1) * (p.decay * std::exp(-p.decay * (t - e.time)));
    }
    return lambda;
}

namespace {

EventSequence simulate_one(const HawkesParams& p, double horizon, Rng& rng) {
    const int c = p.num_types();
    const double mu_total = p.mu.sum();
    Eigen::VectorXd excitation = Eigen::VectorXd::Zero(c);
    EventSequence seq;
    double t = 0.0;
    while (true) {
        // Intensity only decays until the next event, so its current value bounds it.
        const double bound = mu_total + excitation.sum();
        const double candidate = t + rng.exponential(bound);
        if (candidate > horizon) break;
        excitation *= std::exp(-p.decay * (candidate - t));
        t = candidate;
        const Eigen::VectorXd lambda = p.mu + excitation;
        const double total = lambda.sum();
        if (rng.uniform() * bound > total) continue;
        double pick = rng.uniform() * total;
        int type = c;
        for (int k = 0; k < c; ++k) {
            pick -= lambda(k);
            if (pick <= 0.0) {
                type = k + 1;
                break;
            }
        }
        seq.events.push_back({t, type});
        excitation += p.a.col(type - 1) * p.decay;
    }
    return seq;
}

}  // namespace

Dataset simulate(const HawkesParams& p, const GenSpec& spec) {
    p.validate();
    if (spec.num_sequences < 1) throw ConfigError("generate: need at least one sequence");
    if (!(spec.horizon > 0.0)) throw ConfigError("generate: horizon must be positive");
    Dataset d;
    d.num_types = p.num_types();
    d.sequences.reserve(spec.num_sequences);
    std::size_t redrawn = 0;
    for (std::size_t n = 0; n < spec.num_sequences; ++n) {
        for (std::uint64_t attempt = 0;; ++attempt) {
            Rng rng(derive_key(spec.seed, {static_cast<std::uint64_t>(n), attempt}));
            EventSequence seq = simulate_one(p, spec.horizon, rng);
            if (!seq.events.empty()) {
                d.sequences.push_back(std::move(seq));
                break;
            }
            ++redrawn;
        }
    }
    if (redrawn > 0) log_info("generate: redrew " + std::to_string(redrawn) + " empty sequence(s)");
    return d;
}

double exact_loglik(const HawkesParams& p, const EventSequence& seq, double horizon) {
    const int c = p.num_types();
    Eigen::VectorXd excitation = Eigen::VectorXd::Zero(c);
    double log_term = 0.0;
    double compensator = 0.0;
    double last = 0.0;
    bool first = true;
    double t1 = 0.0;
    for (const Event& e : seq.events) {
        if (e.time > horizon) break;
        if (first) {
            t1 = e.time;
            first = false;
        } else {
            excitation *= std::exp(-p.decay * (e.time - last));
        }
        log_term += std::log(p.mu(e.type_id - 1) + excitation(e.type_id - 1));
        compensator += p.a.col(e.type_id - 1).sum() * (1.0 - std::exp(-p.decay * (horizon - e.time)));
        excitation += p.a.col(e.type_id - 1) * p.decay;
        last = e.time;
    }
    if (first) return 0.0;
    compensator += p.mu.sum() * (horizon - t1);
    return log_term - compensator;
}

double exact_loglik_scored(const HawkesParams& p, const EventSequence& seq) {
    if (seq.size() < 2) return 0.0;
    const Event& first = seq.events.front();
    return exact_loglik(p, seq, seq.events.back().time) - std::log(p.mu(first.type_id - 1));
}

namespace {

/// Appends the compensator increments of one sequence to out and returns what remains up to the horizon.
double append_rescaled(const HawkesParams& p, const EventSequence& seq, double horizon, std::vector<double>& out) {
    const double mu_total = p.mu.sum();
    // Total excitation carried by past events, in units of a column sum.
    double excitation = 0.0;
    double last = 0.0;
    for (const Event& e : seq.events) {
        const double dt = e.time - last;
        const double decayed = std::exp(-p.decay * dt);
        out.push_back(mu_total * dt + excitation * (1.0 - decayed));
        excitation = excitation * decayed + p.a.col(e.type_id - 1).sum();
        last = e.time;
    }
    const double dt = std::max(horizon - last, 0.0);
    return mu_total * dt + excitation * (1.0 - std::exp(-p.decay * dt));
}

}  // namespace

std::vector<double> rescaled_intervals(const HawkesParams& p, const EventSequence& seq) {
    std::vector<double> out;
    out.reserve(seq.size());
    (void)append_rescaled(p, seq, 0.0, out);
    return out;
}

std::vector<double> pooled_rescaled_intervals(const HawkesParams& p, const Dataset& d, double horizon) {
    std::vector<double> out;
    double carry = 0.0;
    for (const auto& seq : d.sequences) {
        const std::size_t first = out.size();
        const double tail = append_rescaled(p, seq, horizon, out);
        if (out.size() > first) {
            out[first] += carry;
            carry = 0.0;
        }
        carry += tail;
    }
    return out;
}

KsResult ks_test_exponential(std::vector<double> samples) {
    if (samples.empty()) throw DataError("KS test on an empty sample");
    std::sort(samples.begin(), samples.end());
    const double n = static_cast<double>(samples.size());
    double d = 0.0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const double f = 1.0 - std::exp(-samples[i]);
        d = std::max({d, static_cast<double>(i + 1) / n - f, f - static_cast<double>(i) / n});
    }
    // Asymptotic Kolmogorov distribution with the usual small-sample correction.
    const double sqrt_n = std::sqrt(n);
    const double lambda = (sqrt_n + 0.12 + 0.11 / sqrt_n) * d;
    double q = 0.0;
    if (lambda < 1e-3) {
        q = 1.0;
    } else {
        double sign = 1.0;
        for (int j = 1; j <= 200; ++j) {
            const double term = sign * std::exp(-2.0 * j * j * lambda * lambda);
            q += term;
            if (std::abs(term) < 1e-16) break;
            sign = -sign;
        }
        q = std::clamp(2.0 * q, 0.0, 1.0);
    }
    return {d, q};
}

nlohmann::json to_json(const HawkesParams& p, const GenSpec& spec) {
    std::vector<double> mu(p.mu.data(), p.mu.data() + p.mu.size());
    std::vector<std::vector<double>> a;
    for (Eigen::Index r = 0; r < p.a.rows(); ++r) {
        std::vector<double> row;
        for (Eigen::Index c = 0; c < p.a.cols(); ++c) row.push_back(p.a(r, c));
        a.push_back(std::move(row));
    }
    return {{"mu", mu},
            {"a", a},
            {"decay", p.decay},
            {"seed", spec.seed},
            {"T", spec.horizon},
            {"num_sequences", spec.num_sequences}};
}

}  // namespace uthp
