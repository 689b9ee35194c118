#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "driftmon/errors.hpp"

namespace driftmon {

// ---------------------------------------------------------------------------
// Label samples and drift bias
// ---------------------------------------------------------------------------

// A set of labeled steps used by an estimator: strictly increasing query
// times, matching binary outcomes, and the current step the estimate is
// evaluated at.
struct LabelSample {
    std::vector<std::int64_t> times;
    std::vector<int> outcomes;
    std::int64_t now = 0;
};

namespace detail {
inline void require_valid(const LabelSample& sample) {
    if (sample.times.empty())
        throw ValidationError("label sample is empty");
    if (sample.times.size() != sample.outcomes.size())
        throw ValidationError("label times/outcomes length mismatch");
    for (std::size_t i = 0; i < sample.times.size(); ++i) {
        if (i > 0 && sample.times[i] <= sample.times[i - 1])
            throw ValidationError("label times must be strictly increasing");
        if (sample.times[i] > sample.now)
            throw ValidationError("label time after current step");
        if (sample.outcomes[i] != 0 && sample.outcomes[i] != 1)
            throw ValidationError("outcomes must be 0/1");
    }
}
}  // namespace detail

// Worst-case drift bias of the sample mean: under a per-step accuracy drift
// bound delta_lip, a label collected |now - i| steps ago can be biased by at
// most delta_lip * |now - i|, so psi = delta_lip * mean(|now - i|).
inline double psi(const LabelSample& sample, double delta_lip) {
    detail::require_valid(sample);
    if (delta_lip < 0.0) throw ValidationError("delta_lip must be >= 0");
    double age_sum = 0.0;
    for (auto t : sample.times)
        age_sum += static_cast<double>(sample.now - t);
    return delta_lip * age_sum / static_cast<double>(sample.times.size());
}

// ---------------------------------------------------------------------------
// Hoeffding bound with bounded bias
// ---------------------------------------------------------------------------

// Tail bound for the mean of n Bernoulli draws whose individual biases
// average to at most psi:  Pr(|mean - p| >= delta_conf + psi) <= 2 e^{-2 n delta^2},
// clamped to 1 so it stays a probability.
inline double hoeffding_biased_tail(std::int64_t n, double delta_conf) {
    if (n < 1) throw ValidationError("n must be >= 1");
    if (delta_conf < 0.0) throw ValidationError("delta_conf must be >= 0");
    return std::min(1.0, 2.0 * std::exp(-2.0 * static_cast<double>(n) *
                                        delta_conf * delta_conf));
}

// Two-sided interval for the true current accuracy from a stale label
// sample: half-width = psi + delta where delta inverts the tail bound at the
// requested confidence level, clamped into [0, 1].
inline std::pair<double, double> confidence_interval(const LabelSample& sample,
                                                     double delta_lip,
                                                     double confidence_level) {
    detail::require_valid(sample);
    if (confidence_level <= 0.0 || confidence_level >= 1.0)
        throw ValidationError("confidence level must lie in (0, 1)");
    const double n = static_cast<double>(sample.times.size());
    double mean = 0.0;
    for (int o : sample.outcomes) mean += o;
    mean /= n;
    const double delta_conf =
        std::sqrt(std::log(2.0 / (1.0 - confidence_level)) / (2.0 * n));
    const double half = psi(sample, delta_lip) + delta_conf;
    return {std::max(0.0, mean - half), std::min(1.0, mean + half)};
}

// ---------------------------------------------------------------------------
// Tolerance-derived policy constants
// ---------------------------------------------------------------------------

// The (alpha, n) pair that makes a periodic sampler's worst-case estimation
// error at most epsilon under drift bound delta:
//   alpha = eps^3 / (15 delta ln(2/eps)),   n = ceil(9 ln(2/eps) / (2 eps^2)).
// The guarantee's hypothesis requires delta <= eps^3 / (10 ln(2/eps));
// outside it the constants are still returned with hypothesis_ok = false
// (callers warn, they do not fail).
struct ToleranceConstants {
    double alpha = 0.0;
    std::int64_t n = 0;
    double hypothesis_bound = 0.0;
    bool hypothesis_ok = true;
};

inline ToleranceConstants tolerance_constants(double epsilon, double delta) {
    if (!(epsilon > 0.0 && epsilon < 1.0))
        throw ConfigError("epsilon must lie in (0, 1)");
    if (!(delta > 0.0)) throw ConfigError("delta must be > 0");
    const double log_term = std::log(2.0 / epsilon);
    ToleranceConstants out;
    out.alpha = epsilon * epsilon * epsilon / (15.0 * delta * log_term);
    out.n = static_cast<std::int64_t>(
        std::ceil(9.0 * log_term / (2.0 * epsilon * epsilon)));
    out.hypothesis_bound = epsilon * epsilon * epsilon / (10.0 * log_term);
    out.hypothesis_ok = delta <= out.hypothesis_bound * (1.0 + 1e-12);
    return out;
}

// ---------------------------------------------------------------------------
// Risk certificate
// ---------------------------------------------------------------------------

// Checks the two sufficient conditions for a periodic(-style) sampler with
// batch size n and buffer multiplier alpha (plus an optional margin-surplus
// cap for the decision variant) to achieve worst-case expected monitoring
// risk epsilon under drift bound delta:
//   (1) psi_max + delta_conf <= epsilon, with the analytic worst case
//       psi_max = delta*n*(alpha+beta_cap) + delta*(n+1)/2 over the cycle;
//   (2) 2 exp(-2 n delta_conf^2) <= epsilon,  at delta_conf = epsilon/3.
struct RiskCertificate {
    bool pass = false;
    double epsilon = 0.0;
    double delta = 0.0;
    std::int64_t n = 0;
    double alpha = 0.0;
    double beta_cap = 0.0;
    double delta_conf = 0.0;
    double psi_max = 0.0;
    double bias_slack = 0.0;  // epsilon - (psi_max + delta_conf)
    double tail_bound = 0.0;
    double tail_slack = 0.0;  // epsilon - tail_bound
};

inline RiskCertificate certify_risk(double epsilon, double delta,
                                    std::int64_t n, double alpha,
                                    double beta_cap = 0.0) {
    if (!(epsilon > 0.0 && epsilon < 1.0))
        throw ConfigError("epsilon must lie in (0, 1)");
    if (delta < 0.0) throw ConfigError("delta must be >= 0");
    if (n < 1) throw ConfigError("n must be >= 1");
    if (alpha < 0.0) throw ConfigError("alpha must be >= 0");
    if (beta_cap < 0.0) throw ConfigError("beta_cap must be >= 0");

    RiskCertificate cert;
    cert.epsilon = epsilon;
    cert.delta = delta;
    cert.n = n;
    cert.alpha = alpha;
    cert.beta_cap = beta_cap;
    cert.delta_conf = epsilon / 3.0;
    cert.psi_max = delta * static_cast<double>(n) * (alpha + beta_cap) +
                   delta * (static_cast<double>(n) + 1.0) / 2.0;
    cert.bias_slack = epsilon - (cert.psi_max + cert.delta_conf);
    cert.tail_bound = hoeffding_biased_tail(n, cert.delta_conf);
    cert.tail_slack = epsilon - cert.tail_bound;
    cert.pass = cert.bias_slack >= 0.0 && cert.tail_slack >= 0.0;
    return cert;
}

}  // namespace driftmon
