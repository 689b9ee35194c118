#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "driftmon/errors.hpp"
#include "driftmon/rng.hpp"

namespace driftmon {

// ---------------------------------------------------------------------------
// Domain types
// ---------------------------------------------------------------------------

// One stream step: the deployed model's correctness outcome on this input,
// its confidence score, optional raw features, and (synthetic streams only)
// the ground-truth per-step accuracy of the model under the drifting input
// distribution.
struct StreamEvent {
    std::int64_t t = 0;
    int outcome = 0;                       // 1{prediction == label}
    double confidence = 0.0;               // in [0, 1]
    std::vector<double> features;          // empty = absent
    std::optional<double> true_accuracy;   // absent on replayed streams
};

enum class DriftKind {
    random_walk,
    piecewise_linear,
    adversarial_rr,
    rotating_clusters,
    replay,
};

struct Waypoint {
    std::int64_t t = 0;
    double mu = 0.0;
};

// Full description of a stream. `delta` is the per-step Lipschitz bound on
// the accuracy curve; generators that take it as input guarantee
// |mu_t - mu_{t-1}| <= delta on every emitted trajectory.
struct DriftSpec {
    DriftKind kind = DriftKind::random_walk;
    double delta = 0.0;
    std::int64_t horizon = 0;
    double mu0 = 0.9;
    std::uint64_t seed = 0;

    // piecewise_linear
    std::vector<Waypoint> waypoints;

    // adversarial_rr: pad is the detector-window-sized buffer between the
    // feature shift and the accuracy shift; recover=false drops accuracy to
    // 1/2 on the tail, recover=true raises it to 1.
    std::int64_t pad = 75;
    bool recover = false;

    // rotating_clusters
    int cluster_count = 4;
    double rotation_rate = 0.0;    // radians per step
    double cluster_radius = 1.0;
    double cluster_sigma = 0.35;
    double train_fraction = 0.05;
    bool analytic_truth = true;    // false -> true_accuracy left absent

    // replay
    std::string path;
};

// RNG substream ids used by the generators. These are part of the public
// behavior contract: outcome draws can never alias drift-increment or
// confidence-noise draws, and adding a consumer never perturbs the others.
namespace stream_substream {
inline constexpr std::uint64_t outcomes = 0;
inline constexpr std::uint64_t drift = 1;
inline constexpr std::uint64_t confidence_noise = 2;
inline constexpr std::uint64_t features = 3;
}  // namespace stream_substream

// ---------------------------------------------------------------------------
// Shared helpers
// ---------------------------------------------------------------------------

inline double clamp01(double x) {
    if (x < 0.0) return 0.0;
    if (x > 1.0) return 1.0;
    return x;
}

namespace detail {

inline void require_common(const DriftSpec& spec) {
    if (spec.horizon < 1) throw ConfigError("horizon must be >= 1");
    if (spec.delta < 0.0 || spec.delta > 1.0)
        throw ConfigError("delta must lie in [0, 1]");
    if (spec.mu0 < 0.0 || spec.mu0 > 1.0)
        throw ConfigError("mu0 must lie in [0, 1]");
}

// Calibrated-but-noisy confidence for generators whose source model has no
// native score: the emitted confidence tracks mu_t through additive Gaussian
// noise, so confidence-window detectors see drift without reading mu_t
// exactly. Noise comes from a dedicated substream.
inline double noisy_confidence(double mu, Rng& noise_rng) {
    return clamp01(mu + 0.05 * noise_rng.normal());
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Generators
// ---------------------------------------------------------------------------

// Accuracy follows a reflected (clamped) random walk with uniform increments
// in [-delta, +delta]; outcomes are Bernoulli(mu_t). The recurrence is
// mu_t = clamp(mu_{t-1} + Unif(-delta, delta), 0, 1).
inline std::vector<StreamEvent> gen_random_walk(const DriftSpec& spec) {
    if (spec.kind != DriftKind::random_walk)
        throw ConfigError("gen_random_walk: spec.kind mismatch");
    detail::require_common(spec);

    Rng base(spec.seed);
    Rng outcome_rng = base.substream(stream_substream::outcomes);
    Rng drift_rng = base.substream(stream_substream::drift);
    Rng noise_rng = base.substream(stream_substream::confidence_noise);

    std::vector<StreamEvent> events(static_cast<std::size_t>(spec.horizon));
    double mu = spec.mu0;
    for (std::int64_t t = 0; t < spec.horizon; ++t) {
        if (t > 0) mu = clamp01(mu + drift_rng.uniform(-spec.delta, spec.delta));
        auto& ev = events[static_cast<std::size_t>(t)];
        ev.t = t;
        ev.outcome = outcome_rng.bernoulli(mu) ? 1 : 0;
        ev.confidence = detail::noisy_confidence(mu, noise_rng);
        ev.true_accuracy = mu;
    }
    return events;
}

// Accuracy linearly interpolates a sorted waypoint list; every segment's
// slope must respect the Lipschitz bound. Constant extrapolation after the
// last waypoint.
inline std::vector<StreamEvent> gen_piecewise(const DriftSpec& spec) {
    if (spec.kind != DriftKind::piecewise_linear)
        throw ConfigError("gen_piecewise: spec.kind mismatch");
    detail::require_common(spec);
    if (spec.waypoints.empty())
        throw ConfigError("piecewise_linear requires at least one waypoint");
    if (spec.waypoints.front().t != 0)
        throw ConfigError("piecewise_linear waypoints must start at t = 0");
    for (std::size_t i = 0; i < spec.waypoints.size(); ++i) {
        const auto& w = spec.waypoints[i];
        if (w.mu < 0.0 || w.mu > 1.0)
            throw ConfigError("waypoint accuracy outside [0, 1]");
        if (i > 0) {
            const auto& prev = spec.waypoints[i - 1];
            if (w.t <= prev.t)
                throw ConfigError("waypoints must be strictly increasing in t");
            const double slope =
                std::fabs(w.mu - prev.mu) / static_cast<double>(w.t - prev.t);
            if (slope > spec.delta + 1e-12)
                throw LipschitzError(
                    "waypoint segment slope " + std::to_string(slope) +
                    " exceeds delta " + std::to_string(spec.delta));
        }
    }

    Rng base(spec.seed);
    Rng outcome_rng = base.substream(stream_substream::outcomes);
    Rng noise_rng = base.substream(stream_substream::confidence_noise);

    std::vector<StreamEvent> events(static_cast<std::size_t>(spec.horizon));
    std::size_t seg = 0;
    for (std::int64_t t = 0; t < spec.horizon; ++t) {
        while (seg + 1 < spec.waypoints.size() && spec.waypoints[seg + 1].t <= t)
            ++seg;
        double mu;
        if (seg + 1 >= spec.waypoints.size() || t <= spec.waypoints[seg].t) {
            mu = spec.waypoints[seg].mu;
        } else {
            const auto& a = spec.waypoints[seg];
            const auto& b = spec.waypoints[seg + 1];
            const double frac = static_cast<double>(t - a.t) /
                                static_cast<double>(b.t - a.t);
            mu = a.mu + frac * (b.mu - a.mu);
        }
        auto& ev = events[static_cast<std::size_t>(t)];
        ev.t = t;
        ev.outcome = outcome_rng.bernoulli(mu) ? 1 : 0;
        ev.confidence = detail::noisy_confidence(mu, noise_rng);
        ev.true_accuracy = mu;
    }
    return events;
}

// Worst-case stream for threshold-triggered reverification: the feature
// distribution performs a Lipschitz mixture ramp onto a constant point mass,
// sits constant for `pad` steps, and only then does accuracy ramp from mu0
// to its tail value (1/2 by default, 1 when recover is set). Confidence is
// constant throughout, so every window-based signal goes flat before the
// accuracy ever moves — the detector has nothing to say exactly when it
// matters.
inline std::vector<StreamEvent> gen_adversarial_rr(const DriftSpec& spec) {
    if (spec.kind != DriftKind::adversarial_rr)
        throw ConfigError("gen_adversarial_rr: spec.kind mismatch");
    detail::require_common(spec);
    if (spec.delta <= 0.0)
        throw ConfigError("adversarial_rr requires delta > 0 (ramp undefined)");
    if (spec.pad < 0) throw ConfigError("pad must be >= 0");

    const auto ramp = static_cast<std::int64_t>(std::ceil(1.0 / spec.delta));
    const auto ramp2 = static_cast<std::int64_t>(std::ceil(2.0 / spec.delta));
    const std::int64_t accuracy_ramp_start = spec.pad + ramp;
    const std::int64_t accuracy_ramp_end = spec.pad + ramp2;
    const double target = spec.recover ? 1.0 : 0.5;
    const double feature_shifted = 1.0;

    Rng base(spec.seed);
    Rng outcome_rng = base.substream(stream_substream::outcomes);
    Rng feature_rng = base.substream(stream_substream::features);

    std::vector<StreamEvent> events(static_cast<std::size_t>(spec.horizon));
    for (std::int64_t t = 0; t < spec.horizon; ++t) {
        double mu;
        if (t <= accuracy_ramp_start) {
            mu = spec.mu0;
        } else if (t >= accuracy_ramp_end) {
            mu = target;
        } else {
            const double frac =
                static_cast<double>(t - accuracy_ramp_start) /
                static_cast<double>(accuracy_ramp_end - accuracy_ramp_start);
            mu = spec.mu0 + frac * (target - spec.mu0);
        }

        // Mixture ramp: at step t the feature is the shifted point mass with
        // probability min(t/ramp, 1), else the original mass at 0. From step
        // `ramp` onward the feature is constant.
        const double shifted_weight =
            std::min(1.0, static_cast<double>(t) / static_cast<double>(ramp));
        const double feature =
            feature_rng.bernoulli(shifted_weight) ? feature_shifted : 0.0;

        auto& ev = events[static_cast<std::size_t>(t)];
        ev.t = t;
        ev.outcome = outcome_rng.bernoulli(mu) ? 1 : 0;
        ev.confidence = spec.mu0;
        ev.features = {feature};
        ev.true_accuracy = mu;
    }
    return events;
}

namespace detail {

// Deterministic probability that a draw from N(center, sigma^2 I_2) lands
// nearest to fitted centroid `own` among `centroids`. Tensor-grid Simpson
// quadrature over +-5 sigma, self-normalized, so the result is a smooth
// deterministic function of the geometry.
class NearestCentroidAccuracy {
public:
    NearestCentroidAccuracy() {
        const int n = kNodes;
        const double lo = -5.0, hi = 5.0;
        const double h = (hi - lo) / (n - 1);
        nodes_.resize(static_cast<std::size_t>(n));
        weights_.resize(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) {
            const double u = lo + h * i;
            double w = (i == 0 || i == n - 1) ? 1.0 : (i % 2 == 1 ? 4.0 : 2.0);
            nodes_[static_cast<std::size_t>(i)] = u;
            weights_[static_cast<std::size_t>(i)] =
                w * std::exp(-0.5 * u * u);
        }
    }

    double prob_correct(double cx, double cy, double sigma,
                        const std::vector<std::pair<double, double>>& centroids,
                        std::size_t own) const {
        double mass = 0.0, hit = 0.0;
        for (std::size_t a = 0; a < nodes_.size(); ++a) {
            const double x = cx + sigma * nodes_[a];
            const double wa = weights_[a];
            for (std::size_t b = 0; b < nodes_.size(); ++b) {
                const double y = cy + sigma * nodes_[b];
                const double w = wa * weights_[b];
                mass += w;
                std::size_t best = 0;
                double best_d = 1e300;
                for (std::size_t j = 0; j < centroids.size(); ++j) {
                    const double dx = x - centroids[j].first;
                    const double dy = y - centroids[j].second;
                    const double d = dx * dx + dy * dy;
                    if (d < best_d) {
                        best_d = d;
                        best = j;
                    }
                }
                if (best == own) hit += w;
            }
        }
        return hit / mass;
    }

private:
    static constexpr int kNodes = 33;
    std::vector<double> nodes_;
    std::vector<double> weights_;
};

}  // namespace detail

// Gaussian class clusters on a circle, rotating at a fixed angular rate. A
// nearest-centroid classifier is fit on the leading train_fraction of the
// stream and then frozen; outcomes/confidences are that frozen classifier's
// correctness and logistic-squashed top-2 margin. true_accuracy is the
// analytic per-step accuracy of the frozen classifier under the rotated
// mixture (quadrature), or absent when analytic_truth is disabled.
inline std::vector<StreamEvent> gen_rotating_clusters(const DriftSpec& spec) {
    if (spec.kind != DriftKind::rotating_clusters)
        throw ConfigError("gen_rotating_clusters: spec.kind mismatch");
    detail::require_common(spec);
    if (spec.cluster_count < 2)
        throw ConfigError("rotating_clusters requires >= 2 clusters");
    if (spec.rotation_rate < 0.0)
        throw ConfigError("rotation_rate must be >= 0");
    if (spec.cluster_radius <= 0.0)
        throw ConfigError("cluster_radius must be > 0 (identical centers are degenerate)");
    if (spec.cluster_sigma <= 0.0)
        throw ConfigError("cluster_sigma must be > 0");
    if (spec.train_fraction <= 0.0 || spec.train_fraction >= 1.0)
        throw ConfigError("train_fraction must lie in (0, 1)");

    const int k = spec.cluster_count;
    const double two_pi = 2.0 * 3.14159265358979323846;

    Rng base(spec.seed);
    Rng feature_rng = base.substream(stream_substream::features);

    // Sample the raw stream: per step, a uniformly chosen class and a
    // Gaussian draw around that class's rotated center.
    const auto horizon = static_cast<std::size_t>(spec.horizon);
    std::vector<int> labels(horizon);
    std::vector<std::pair<double, double>> points(horizon);
    for (std::size_t t = 0; t < horizon; ++t) {
        const int cls = static_cast<int>(feature_rng.below(static_cast<std::uint64_t>(k)));
        const double angle = two_pi * cls / k +
                             spec.rotation_rate * static_cast<double>(t);
        const double cx = spec.cluster_radius * std::cos(angle);
        const double cy = spec.cluster_radius * std::sin(angle);
        labels[t] = cls;
        points[t] = {cx + spec.cluster_sigma * feature_rng.normal(),
                     cy + spec.cluster_sigma * feature_rng.normal()};
    }

    // Fit: per-class mean over the training prefix.
    const auto train_len = std::max<std::size_t>(
        1, static_cast<std::size_t>(spec.train_fraction *
                                    static_cast<double>(spec.horizon)));
    std::vector<std::pair<double, double>> centroids(
        static_cast<std::size_t>(k), {0.0, 0.0});
    std::vector<std::int64_t> counts(static_cast<std::size_t>(k), 0);
    for (std::size_t t = 0; t < train_len && t < horizon; ++t) {
        auto& c = centroids[static_cast<std::size_t>(labels[t])];
        c.first += points[t].first;
        c.second += points[t].second;
        ++counts[static_cast<std::size_t>(labels[t])];
    }
    for (int j = 0; j < k; ++j) {
        if (counts[static_cast<std::size_t>(j)] == 0)
            throw ConfigError(
                "training prefix too short: class " + std::to_string(j) +
                " has no training samples");
        auto& c = centroids[static_cast<std::size_t>(j)];
        c.first /= static_cast<double>(counts[static_cast<std::size_t>(j)]);
        c.second /= static_cast<double>(counts[static_cast<std::size_t>(j)]);
    }

    detail::NearestCentroidAccuracy quad;
    std::vector<StreamEvent> events(horizon);
    for (std::size_t t = 0; t < horizon; ++t) {
        // Frozen classifier's prediction and top-2 margin on this point.
        std::size_t best = 0, second = 0;
        double best_d = 1e300, second_d = 1e300;
        for (std::size_t j = 0; j < centroids.size(); ++j) {
            const double dx = points[t].first - centroids[j].first;
            const double dy = points[t].second - centroids[j].second;
            const double d = std::sqrt(dx * dx + dy * dy);
            if (d < best_d) {
                second_d = best_d;
                second = best;
                best_d = d;
                best = j;
            } else if (d < second_d) {
                second_d = d;
                second = j;
            }
        }
        (void)second;
        const double margin = second_d - best_d;

        auto& ev = events[t];
        ev.t = static_cast<std::int64_t>(t);
        ev.outcome = (static_cast<int>(best) == labels[t]) ? 1 : 0;
        ev.confidence = 1.0 / (1.0 + std::exp(-margin));
        ev.features = {points[t].first, points[t].second};

        if (spec.analytic_truth) {
            double acc = 0.0;
            for (int i = 0; i < k; ++i) {
                const double angle = two_pi * i / k +
                                     spec.rotation_rate * static_cast<double>(t);
                acc += quad.prob_correct(
                    spec.cluster_radius * std::cos(angle),
                    spec.cluster_radius * std::sin(angle), spec.cluster_sigma,
                    centroids, static_cast<std::size_t>(i));
            }
            ev.true_accuracy = acc / k;
        }
    }
    return events;
}

// ---------------------------------------------------------------------------
// Replay and stream transforms
// ---------------------------------------------------------------------------

// Reads a prediction log in the replay CSV schema:
//   t,outcome,confidence[,f0,f1,...]
// Header required; outcome must be 0/1; confidence in [0,1]; feature column
// count fixed by the header. Errors carry 1-based line numbers.
inline std::vector<StreamEvent> replay_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open stream file: " + path);

    auto split = [](const std::string& line) {
        std::vector<std::string> out;
        std::string field;
        std::istringstream ss(line);
        while (std::getline(ss, field, ',')) out.push_back(field);
        if (!line.empty() && line.back() == ',') out.emplace_back();
        return out;
    };

    std::string line;
    if (!std::getline(in, line)) throw ParseError("line 1: missing header");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto header = split(line);
    if (header.size() < 3 || header[0] != "t" || header[1] != "outcome" ||
        header[2] != "confidence")
        throw ParseError("line 1: header must begin with t,outcome,confidence");
    const std::size_t n_features = header.size() - 3;
    for (std::size_t j = 0; j < n_features; ++j) {
        if (header[3 + j] != "f" + std::to_string(j))
            throw ParseError("line 1: feature columns must be named f0,f1,...");
    }

    std::vector<StreamEvent> events;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto fields = split(line);
        const std::string where = "line " + std::to_string(line_no) + ": ";
        if (fields.size() != header.size())
            throw ParseError(where + "expected " + std::to_string(header.size()) +
                             " fields, got " + std::to_string(fields.size()));
        StreamEvent ev;
        try {
            ev.t = std::stoll(fields[0]);
            const double outcome = std::stod(fields[1]);
            if (outcome != 0.0 && outcome != 1.0)
                throw ValidationError(where + "outcome must be 0 or 1");
            ev.outcome = static_cast<int>(outcome);
            ev.confidence = std::stod(fields[2]);
            if (ev.confidence < 0.0 || ev.confidence > 1.0)
                throw ValidationError(where + "confidence outside [0, 1]");
            ev.features.reserve(n_features);
            for (std::size_t j = 0; j < n_features; ++j)
                ev.features.push_back(std::stod(fields[3 + j]));
        } catch (const ValidationError&) {
            throw;
        } catch (const std::exception&) {
            throw ParseError(where + "malformed numeric field");
        }
        events.push_back(std::move(ev));
    }
    return events;
}

// Uniformly permutes events within consecutive blocks of length block_len.
// The event multiset is preserved exactly; block_len = 1 is the identity.
inline std::vector<StreamEvent> block_bootstrap(std::vector<StreamEvent> events,
                                                std::int64_t block_len,
                                                std::uint64_t seed) {
    if (block_len < 1) throw ValidationError("block_len must be >= 1");
    Rng rng(seed);
    const auto n = static_cast<std::int64_t>(events.size());
    for (std::int64_t start = 0; start < n; start += block_len) {
        const std::int64_t end = std::min(n, start + block_len);
        rng.shuffle(events.begin() + start, events.begin() + end);
    }
    return events;
}

// Sliding-window mean of the binary outcomes; index t averages the most
// recent min(w, t+1) outcomes (warm-up averages the available prefix).
inline std::vector<double> moving_average_truth(const std::vector<int>& outcomes,
                                                std::int64_t w) {
    if (w < 1) throw ValidationError("window length must be >= 1");
    std::vector<double> out(outcomes.size());
    double running = 0.0;
    for (std::size_t t = 0; t < outcomes.size(); ++t) {
        running += outcomes[t];
        if (static_cast<std::int64_t>(t) >= w)
            running -= outcomes[t - static_cast<std::size_t>(w)];
        const auto len = std::min<std::int64_t>(w, static_cast<std::int64_t>(t) + 1);
        out[t] = running / static_cast<double>(len);
    }
    return out;
}

// Dispatch by kind. Replay ignores the synthetic fields.
inline std::vector<StreamEvent> generate(const DriftSpec& spec) {
    switch (spec.kind) {
        case DriftKind::random_walk: return gen_random_walk(spec);
        case DriftKind::piecewise_linear: return gen_piecewise(spec);
        case DriftKind::adversarial_rr: return gen_adversarial_rr(spec);
        case DriftKind::rotating_clusters: return gen_rotating_clusters(spec);
        case DriftKind::replay: return replay_csv(spec.path);
    }
    throw ConfigError("unknown drift kind");
}

}  // namespace driftmon
