#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <memory>
#include <string>
#include <vector>

#include "driftmon/bounds.hpp"
#include "driftmon/detector.hpp"
#include "driftmon/errors.hpp"

namespace driftmon {

// ---------------------------------------------------------------------------
// Policy interface
// ---------------------------------------------------------------------------

// What a policy sees on every step BEFORE deciding whether to pay for the
// label: the step index and the model's own unlabeled side information.
struct Unlabeled {
    std::int64_t t = 0;
    double confidence = 0.0;
    const std::vector<double>* features = nullptr;  // may be null
};

// How the most recent query was triggered (both can hold at once when an
// organic query coincides with a safety batch step).
struct QueryFlags {
    bool organic = false;
    bool safety = false;
};

// Label-budgeted monitoring policy. The harness drives the per-step
// protocol: decide() is called exactly once per step with the unlabeled view
// and the detector signal; ingest() is called with the true outcome only
// when decide() returned true; estimate() must be readable at any time.
class Policy {
public:
    virtual ~Policy() = default;
    virtual bool decide(const Unlabeled& view, double signal) = 0;
    virtual void ingest(int outcome) = 0;
    virtual double estimate() const = 0;
    virtual QueryFlags last_flags() const { return {}; }
    virtual const char* name() const = 0;
};

// ---------------------------------------------------------------------------
// Periodic querying
// ---------------------------------------------------------------------------

// Uniform duty cycle: wait n*alpha steps, then query a batch of n
// consecutive labels, refresh the estimate with the batch mean, repeat. The
// initial wait is also n*alpha, as if a batch had just finished at t = 0.
// Non-integer waits are honored in the long run by carrying the fractional
// remainder of each wait into the next one.
class PeriodicPolicy final : public Policy {
public:
    PeriodicPolicy(std::int64_t n, double alpha, double mu0)
        : n_(n), alpha_(alpha), estimate_(mu0) {
        if (n < 1) throw ConfigError("periodic policy needs n >= 1");
        if (!(alpha >= 0.0)) throw ConfigError("alpha must be >= 0");
        if (!(mu0 >= 0.0 && mu0 <= 1.0))
            throw ConfigError("initial estimate must lie in [0, 1]");
        wait_remaining_ = static_cast<double>(n_) * alpha_;
    }

    // Query-rate parameterization: a target budget B in (0, 1] corresponds
    // to alpha = 1/B - 1 (asymptotic rate n / (n + n*alpha) = 1/(1+alpha)).
    static PeriodicPolicy from_budget(std::int64_t n, double budget,
                                      double mu0) {
        if (!(budget > 0.0 && budget <= 1.0))
            throw ConfigError("budget must lie in (0, 1]");
        return PeriodicPolicy(n, 1.0 / budget - 1.0, mu0);
    }

    // Accuracy parameterization: (alpha, n) chosen so the worst-case
    // estimation error stays within epsilon under drift bound delta.
    static PeriodicPolicy from_tolerance(double epsilon, double delta,
                                         double mu0,
                                         ToleranceConstants* constants_out =
                                             nullptr) {
        const ToleranceConstants tc = tolerance_constants(epsilon, delta);
        if (constants_out != nullptr) *constants_out = tc;
        return PeriodicPolicy(tc.n, tc.alpha, mu0);
    }

    bool decide(const Unlabeled&, double /*signal ignored by design*/)
        override {
        if (batch_remaining_ > 0) {
            queried_ = true;
        } else if (wait_remaining_ >= 1.0) {
            wait_remaining_ -= 1.0;
            queried_ = false;
        } else {
            // Fractional remainder < 1 carries over into the next wait.
            batch_remaining_ = n_;
            queried_ = true;
        }
        return queried_;
    }

    void ingest(int outcome) override {
        if (!queried_) throw ValidationError("ingest without a query");
        batch_sum_ += outcome;
        if (--batch_remaining_ == 0) {
            estimate_ = static_cast<double>(batch_sum_) /
                        static_cast<double>(n_);
            batch_sum_ = 0;
            wait_remaining_ += static_cast<double>(n_) * alpha_;
        }
    }

    double estimate() const override { return estimate_; }
    const char* name() const override { return "pq"; }

    double alpha() const { return alpha_; }
    std::int64_t batch_size() const { return n_; }

private:
    std::int64_t n_;
    double alpha_;
    double estimate_;
    double wait_remaining_ = 0.0;
    std::int64_t batch_remaining_ = 0;
    std::int64_t batch_sum_ = 0;
    bool queried_ = false;
};

// ---------------------------------------------------------------------------
// Request-and-reverify
// ---------------------------------------------------------------------------

// Purely reactive baseline: no standing query schedule. Whenever the
// detector signal reaches the trigger threshold phi, buy a batch of n
// consecutive labels and refresh the estimate with the batch mean. With a
// quiet detector the estimate stays frozen at mu0 forever.
class ReverifyPolicy final : public Policy {
public:
    ReverifyPolicy(std::int64_t n, double phi, double mu0)
        : n_(n), phi_(phi), estimate_(mu0) {
        if (n < 1) throw ConfigError("reverify policy needs n >= 1");
        if (!(phi >= 0.0)) throw ConfigError("trigger threshold must be >= 0");
        if (!(mu0 >= 0.0 && mu0 <= 1.0))
            throw ConfigError("initial estimate must lie in [0, 1]");
    }

    bool decide(const Unlabeled&, double signal) override {
        if (batch_remaining_ > 0) {
            queried_ = true;
        } else if (signal >= phi_) {
            batch_remaining_ = n_;
            queried_ = true;
        } else {
            queried_ = false;
        }
        return queried_;
    }

    void ingest(int outcome) override {
        if (!queried_) throw ValidationError("ingest without a query");
        batch_sum_ += outcome;
        if (--batch_remaining_ == 0) {
            estimate_ = static_cast<double>(batch_sum_) /
                        static_cast<double>(n_);
            batch_sum_ = 0;
        }
    }

    double estimate() const override { return estimate_; }
    const char* name() const override { return "rr"; }

    double phi() const { return phi_; }

private:
    std::int64_t n_;
    double phi_;
    double estimate_;
    std::int64_t batch_remaining_ = 0;
    std::int64_t batch_sum_ = 0;
    bool queried_ = false;
};

// ---------------------------------------------------------------------------
// Adaptive surveillance (mldemon)
// ---------------------------------------------------------------------------

enum class MldemonMode {
    estimation,  // track accuracy to tolerance epsilon
    decision,    // certify accuracy relative to a threshold rho
};

struct MldemonParams {
    MldemonMode mode = MldemonMode::estimation;
    std::int64_t n = 15;      // labels blended into each estimate refresh
    double alpha = 1.0;       // base surveillance buffer multiplier
    double epsilon = 0.1;     // accuracy tolerance
    double delta = 1e-4;      // per-step drift bound (decision margin scale)
    double nu = 0.15;         // min/max query-period ratio, in (0, 1]
    double b = 1.0;           // margin surplus factor, >= 1
    bool unbiased = true;     // refresh the estimate on every ingested label
    double rho = 0.5;         // decision threshold (decision mode only)
    double mu0 = 0.5;         // estimate before any label arrives
    QuantileMap map{};        // signal-quantile -> period modulation
};

// Detector-modulated query scheduling with a hard safety net.
//
// Every step the policy turns the detector signal into a quantile against
// the full signal history, maps the quantile to a modulation factor, and
// derives a target query period k clipped to [nu*k_max, k_max] with
// k_max = alpha + beta. An "organic" query fires once the steps elapsed
// since the last query reach k.
//
// In decision mode a counter automaton additionally forces a batch of n
// "safety" queries whenever the surveillance budget BC expires; the step
// after a batch completes is a bookkeeping step (never a query) that
// refreshes the estimate from the n most recent labels, converts the
// estimate's margin surplus over the decision threshold into extra buffer
// beta = b * max(|estimate - rho| - epsilon, 0) / delta, and re-arms
// BC = n*(alpha + beta) - 1.
class MldemonPolicy final : public Policy {
public:
    explicit MldemonPolicy(const MldemonParams& params) : p_(params) {
        if (p_.n < 1) throw ConfigError("mldemon needs n >= 1");
        if (!(p_.alpha > 0.0)) throw ConfigError("alpha must be > 0");
        if (!(p_.nu > 0.0 && p_.nu <= 1.0))
            throw ConfigError("nu must lie in (0, 1]");
        if (!(p_.b >= 1.0)) throw ConfigError("b must be >= 1");
        if (!(p_.epsilon > 0.0 && p_.epsilon < 1.0))
            throw ConfigError("epsilon must lie in (0, 1)");
        if (!(p_.delta > 0.0)) throw ConfigError("delta must be > 0");
        if (!(p_.mu0 >= 0.0 && p_.mu0 <= 1.0))
            throw ConfigError("initial estimate must lie in [0, 1]");
        if (p_.mode == MldemonMode::decision &&
            !(p_.rho >= 0.0 && p_.rho <= 1.0))
            throw ConfigError("decision threshold must lie in [0, 1]");
        validate(p_.map);
        estimate_ = p_.mu0;
        if (p_.mode == MldemonMode::decision) {
            // Treat t = 0 as the end of a completed safety batch whose
            // estimate is the (known) starting accuracy: the margin surplus
            // of mu0 buys surveillance buffer immediately instead of forcing
            // a full batch within the first alpha steps.
            beta_ = margin_buffer(estimate_);
            surveillance_countdown_ =
                static_cast<double>(p_.n) * (p_.alpha + beta_) - 1.0;
        }
    }

    // Accuracy parameterization: alpha and n both come from the same closed
    // form as PeriodicPolicy::from_tolerance, so the two policies share
    // constants when built for the same (epsilon, delta).
    static MldemonPolicy from_tolerance(double epsilon, double delta,
                                        double nu, double rho,
                                        MldemonMode mode, double mu0,
                                        double b = 1.0, bool unbiased = true,
                                        QuantileMap map = {},
                                        ToleranceConstants* constants_out =
                                            nullptr) {
        const ToleranceConstants tc = tolerance_constants(epsilon, delta);
        if (constants_out != nullptr) *constants_out = tc;
        MldemonParams p;
        p.mode = mode;
        p.n = tc.n;
        p.alpha = tc.alpha;
        p.epsilon = epsilon;
        p.delta = delta;
        p.nu = nu;
        p.b = b;
        p.unbiased = unbiased;
        p.rho = rho;
        p.mu0 = mu0;
        p.map = map;
        return MldemonPolicy(p);
    }

    bool decide(const Unlabeled&, double signal) override {
        // Margin the estimate must currently meet: the tolerance itself in
        // estimation mode, or the distance to the decision threshold when
        // that is looser.
        last_margin_ = p_.mode == MldemonMode::decision
                           ? std::max(std::abs(p_.rho - estimate_), p_.epsilon)
                           : p_.epsilon;
        const double q = history_.quantile(signal);
        history_.insert(signal);
        const double k_max = p_.alpha + beta_;
        const double k_min = p_.nu * k_max;
        const double factor = modulation_factor(p_.map, q);
        last_period_ = std::clamp(factor * (k_max - k_min) / 2.0, k_min,
                                  k_max);
        last_period_bounds_ = {k_min, k_max};

        ++steps_since_query_;
        flags_ = QueryFlags{};
        bool bookkeeping = false;

        if (p_.mode == MldemonMode::decision) {
            // Mutually exclusive branch order resolves the automaton
            // unambiguously with real-valued countdowns.
            if (surveillance_countdown_ > 0.0) {
                surveillance_countdown_ -= 1.0;
            } else if (batch_countdown_ > 0) {
                flags_.safety = true;
                --batch_countdown_;
            } else if (batch_countdown_ == 0) {
                // Bookkeeping step right after a batch: refresh from the n
                // most recent labels, convert margin surplus into buffer,
                // re-arm the surveillance countdown. Never a query.
                estimate_ = recent_mean();
                beta_ = margin_buffer(estimate_);
                surveillance_countdown_ =
                    static_cast<double>(p_.n) * (p_.alpha + beta_) - 1.0;
                batch_countdown_ = -1;
                bookkeeping = true;
            } else {
                // Countdown expired and no batch pending: trigger one.
                flags_.safety = true;
                batch_countdown_ = p_.n - 1;
                surveillance_countdown_ = -1.0;
            }
        }

        if (!bookkeeping &&
            static_cast<double>(steps_since_query_) >= last_period_)
            flags_.organic = true;

        queried_ = flags_.organic || flags_.safety;
        return queried_;
    }

    void ingest(int outcome) override {
        if (!queried_) throw ValidationError("ingest without a query");
        steps_since_query_ = 0;
        labels_.push_back(outcome);
        label_sum_ += outcome;
        if (static_cast<std::int64_t>(labels_.size()) > p_.n) {
            label_sum_ -= labels_.front();
            labels_.pop_front();
        }
        if (p_.mode == MldemonMode::estimation || p_.unbiased)
            estimate_ = recent_mean();
    }

    double estimate() const override { return estimate_; }
    QueryFlags last_flags() const override { return flags_; }
    const char* name() const override {
        return p_.mode == MldemonMode::estimation ? "mldemon-est"
                                                  : "mldemon-dec";
    }

    // Introspection for tests and trajectory diagnostics.
    double beta() const { return beta_; }
    double last_period() const { return last_period_; }
    double last_margin_requirement() const { return last_margin_; }
    std::pair<double, double> last_period_bounds() const {
        return last_period_bounds_;
    }

private:
    double recent_mean() const {
        if (labels_.empty()) return p_.mu0;
        return static_cast<double>(label_sum_) /
               static_cast<double>(labels_.size());
    }

    double margin_buffer(double mu_hat) const {
        return p_.b *
               std::max(std::abs(mu_hat - p_.rho) - p_.epsilon, 0.0) /
               p_.delta;
    }

    MldemonParams p_;
    SignalHistory history_;
    std::deque<int> labels_;
    std::int64_t label_sum_ = 0;
    double estimate_ = 0.5;
    double beta_ = 0.0;
    std::int64_t steps_since_query_ = 0;
    double surveillance_countdown_ = 0.0;  // BC; unused in estimation mode
    std::int64_t batch_countdown_ = -1;    // QC; -1 = no batch pending
    double last_period_ = 0.0;
    double last_margin_ = 0.0;
    std::pair<double, double> last_period_bounds_{0.0, 0.0};
    QueryFlags flags_{};
    bool queried_ = false;
};

}  // namespace driftmon
