#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <string>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

#include "driftmon/errors.hpp"
#include "driftmon/stream.hpp"

namespace driftmon {

// ---------------------------------------------------------------------------
// Quantile normalization of anomaly signals
// ---------------------------------------------------------------------------

// Mid-rank quantile of g within history: fraction strictly below g plus half
// the fraction tied with g. Empty history maps to the neutral 0.5.
inline double quantile_normalize(const std::vector<double>& history, double g) {
    if (history.empty()) return 0.5;
    std::size_t below = 0, ties = 0;
    for (double h : history) {
        if (h < g) ++below;
        else if (h == g) ++ties;
    }
    return (static_cast<double>(below) + 0.5 * static_cast<double>(ties)) /
           static_cast<double>(history.size());
}

// Append-only multiset of past raw signals with O(log n) mid-rank queries —
// the exact same quantile as quantile_normalize() over the full history,
// affordable at long horizons. Implemented as a treap with deterministic
// pseudo-random priorities so structure (and behavior) is reproducible.
class SignalHistory {
public:
    std::size_t size() const { return nodes_.size(); }
    bool empty() const { return nodes_.empty(); }

    void insert(double v) {
        nodes_.push_back(Node{v, next_priority(), -1, -1, 1});
        root_ = insert_node(root_, static_cast<int>(nodes_.size()) - 1);
    }

    // Mid-rank quantile of g against the stored multiset (0.5 when empty).
    double quantile(double g) const {
        if (nodes_.empty()) return 0.5;
        const std::size_t below = count_less(root_, g);
        const std::size_t at_most = count_less_equal(root_, g);
        return (static_cast<double>(below) +
                0.5 * static_cast<double>(at_most - below)) /
               static_cast<double>(nodes_.size());
    }

private:
    struct Node {
        double value;
        std::uint64_t priority;
        int left, right;
        int count;  // subtree size
    };

    std::uint64_t next_priority() {
        prio_state_ += 0x9E3779B97F4A7C15ULL;
        std::uint64_t z = prio_state_;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    int count_of(int node) const { return node < 0 ? 0 : nodes_[static_cast<std::size_t>(node)].count; }

    void pull(int node) {
        auto& n = nodes_[static_cast<std::size_t>(node)];
        n.count = 1 + count_of(n.left) + count_of(n.right);
    }

    // Split by value: everything < v goes left, >= v goes right.
    void split(int node, double v, int& left, int& right) {
        if (node < 0) {
            left = right = -1;
            return;
        }
        auto& n = nodes_[static_cast<std::size_t>(node)];
        if (n.value < v) {
            split(n.right, v, n.right, right);
            left = node;
        } else {
            split(n.left, v, left, n.left);
            right = node;
        }
        pull(node);
    }

    int merge(int a, int b) {
        if (a < 0) return b;
        if (b < 0) return a;
        if (nodes_[static_cast<std::size_t>(a)].priority >
            nodes_[static_cast<std::size_t>(b)].priority) {
            auto& na = nodes_[static_cast<std::size_t>(a)];
            na.right = merge(na.right, b);
            pull(a);
            return a;
        }
        auto& nb = nodes_[static_cast<std::size_t>(b)];
        nb.left = merge(a, nb.left);
        pull(b);
        return b;
    }

    int insert_node(int root, int idx) {
        int left, right;
        split(root, nodes_[static_cast<std::size_t>(idx)].value, left, right);
        return merge(merge(left, idx), right);
    }

    std::size_t count_less(int node, double v) const {
        std::size_t total = 0;
        while (node >= 0) {
            const auto& n = nodes_[static_cast<std::size_t>(node)];
            if (n.value < v) {
                total += static_cast<std::size_t>(count_of(n.left)) + 1;
                node = n.right;
            } else {
                node = n.left;
            }
        }
        return total;
    }

    std::size_t count_less_equal(int node, double v) const {
        std::size_t total = 0;
        while (node >= 0) {
            const auto& n = nodes_[static_cast<std::size_t>(node)];
            if (n.value <= v) {
                total += static_cast<std::size_t>(count_of(n.left)) + 1;
                node = n.right;
            } else {
                node = n.left;
            }
        }
        return total;
    }

    std::vector<Node> nodes_;
    int root_ = -1;
    std::uint64_t prio_state_ = 0x5EEDCAFEF00DULL;
};

// ---------------------------------------------------------------------------
// Quantile -> query-period modulation
// ---------------------------------------------------------------------------

struct QuantileMap {
    double phi_min = 0.125;
    double phi_max = 4.0;
};

inline void validate(const QuantileMap& map) {
    if (!(map.phi_min > 0.0 && map.phi_min <= 1.0 && map.phi_max >= 1.0))
        throw ConfigError("quantile map requires 0 < phi_min <= 1 <= phi_max");
}

// Continuous, non-increasing, piecewise-linear map anchored at
// (0, phi_max), (1/2, 1), (1, phi_min): anomalous quantiles shorten the
// query period, quiet ones lengthen it.
inline double modulation_factor(const QuantileMap& map, double q) {
    validate(map);
    if (q < 0.0 || q > 1.0)
        throw ValidationError("modulation_factor: quantile outside [0, 1]");
    if (q <= 0.5) return map.phi_max - 2.0 * q * (map.phi_max - 1.0);
    return 1.0 - 2.0 * (q - 0.5) * (1.0 - map.phi_min);
}

// ---------------------------------------------------------------------------
// Two-sample window statistics
// ---------------------------------------------------------------------------

// Asymptotic Kolmogorov tail Q(lambda) = 2 sum_{k>=1} (-1)^{k-1} e^{-2 k^2 lambda^2},
// truncated at 100 terms and clamped into [0, 1].
inline double kolmogorov_asymptotic_p(double lambda) {
    if (lambda <= 0.0) return 1.0;
    double sum = 0.0;
    for (int k = 1; k <= 100; ++k) {
        const double term = std::exp(-2.0 * k * k * lambda * lambda);
        sum += (k % 2 == 1) ? term : -term;
        if (term < 1e-18) break;
    }
    const double p = 2.0 * sum;
    return std::min(1.0, std::max(0.0, p));
}

// Two-sample KS anomaly signal G = 1 - p over two equal-length windows.
// Exact-zero statistic maps to p = 1 (identical samples are not anomalous).
inline double two_sample_ks_signal(std::vector<double> older,
                                   std::vector<double> newer) {
    const auto n1 = older.size(), n2 = newer.size();
    if (n1 == 0 || n2 == 0)
        throw ValidationError("ks signal requires nonempty windows");
    std::sort(older.begin(), older.end());
    std::sort(newer.begin(), newer.end());
    double d = 0.0;
    std::size_t i = 0, j = 0;
    while (i < n1 && j < n2) {
        const double x = std::min(older[i], newer[j]);
        while (i < n1 && older[i] <= x) ++i;
        while (j < n2 && newer[j] <= x) ++j;
        d = std::max(d, std::fabs(static_cast<double>(i) / static_cast<double>(n1) -
                                  static_cast<double>(j) / static_cast<double>(n2)));
    }
    if (d == 0.0) return 0.0;
    const double n_eff = static_cast<double>(n1) * static_cast<double>(n2) /
                         static_cast<double>(n1 + n2);
    return 1.0 - kolmogorov_asymptotic_p(std::sqrt(n_eff) * d);
}

// Two-sample mean test (Welch form) anomaly signal G = 1 - p. Degenerate
// zero-variance windows: equal means -> 0, unequal means -> 1.
inline double two_sample_mean_shift_signal(const std::vector<double>& older,
                                           const std::vector<double>& newer) {
    const auto n1 = older.size(), n2 = newer.size();
    if (n1 < 2 || n2 < 2)
        throw ValidationError("mean-shift signal requires windows of >= 2");
    auto mean_var = [](const std::vector<double>& w) {
        double mean = 0.0;
        for (double x : w) mean += x;
        mean /= static_cast<double>(w.size());
        double ss = 0.0;
        for (double x : w) ss += (x - mean) * (x - mean);
        return std::pair<double, double>{mean, ss / static_cast<double>(w.size() - 1)};
    };
    const auto [m1, v1] = mean_var(older);
    const auto [m2, v2] = mean_var(newer);
    const double se1 = v1 / static_cast<double>(n1);
    const double se2 = v2 / static_cast<double>(n2);
    if (se1 + se2 == 0.0) return (m1 == m2) ? 0.0 : 1.0;
    const double t = (m1 - m2) / std::sqrt(se1 + se2);
    const double dof = (se1 + se2) * (se1 + se2) /
                       (se1 * se1 / static_cast<double>(n1 - 1) +
                        se2 * se2 / static_cast<double>(n2 - 1));
    const boost::math::students_t dist(dof);
    const double p = 2.0 * boost::math::cdf(dist, -std::fabs(t));
    return 1.0 - std::min(1.0, std::max(0.0, p));
}

// Scale-normalized distance between window mean vectors: Euclidean distance
// of the means divided by the RMS of the windows' pooled per-coordinate
// standard deviation (within-window, so the separation itself does not
// inflate the denominator).
inline double embedding_distance_signal(
    const std::vector<std::vector<double>>& older,
    const std::vector<std::vector<double>>& newer) {
    if (older.size() < 2 || newer.size() < 2)
        throw ValidationError("embedding signal requires windows of >= 2");
    const std::size_t dim = older.front().size();
    if (dim == 0) throw ValidationError("embedding signal requires nonzero dimension");
    for (const auto& v : older)
        if (v.size() != dim) throw ValidationError("feature dimension mismatch");
    for (const auto& v : newer)
        if (v.size() != dim) throw ValidationError("feature dimension mismatch");

    auto mean_vec = [dim](const std::vector<std::vector<double>>& w) {
        std::vector<double> m(dim, 0.0);
        for (const auto& v : w)
            for (std::size_t j = 0; j < dim; ++j) m[j] += v[j];
        for (auto& x : m) x /= static_cast<double>(w.size());
        return m;
    };
    auto var_vec = [dim](const std::vector<std::vector<double>>& w,
                         const std::vector<double>& m) {
        std::vector<double> var(dim, 0.0);
        for (const auto& v : w)
            for (std::size_t j = 0; j < dim; ++j)
                var[j] += (v[j] - m[j]) * (v[j] - m[j]);
        for (auto& x : var) x /= static_cast<double>(w.size() - 1);
        return var;
    };

    const auto m1 = mean_vec(older), m2 = mean_vec(newer);
    const auto v1 = var_vec(older, m1), v2 = var_vec(newer, m2);
    double dist2 = 0.0, pooled = 0.0;
    for (std::size_t j = 0; j < dim; ++j) {
        dist2 += (m1[j] - m2[j]) * (m1[j] - m2[j]);
        pooled += 0.5 * (v1[j] + v2[j]);
    }
    const double rms = std::sqrt(pooled / static_cast<double>(dim));
    return std::sqrt(dist2) / std::max(rms, 1e-12);
}

// ---------------------------------------------------------------------------
// Streaming detector
// ---------------------------------------------------------------------------

enum class DetectorKind { ks, mean_shift, embedding, constant };

// Sliding two-window anomaly detector. Holds the last 2m summaries
// (confidences for ks/mean_shift, feature vectors for embedding) and
// compares the older m against the newer m. Emits 0 until 2m observations
// have arrived (warm-up), so downstream policies behave like open-loop
// periodic querying until the detector is ready.
class Detector {
public:
    Detector(DetectorKind kind, std::size_t window_len)
        : kind_(kind), m_(window_len) {
        if (kind != DetectorKind::constant && m_ < 2)
            throw ConfigError("detector window length must be >= 2");
    }

    DetectorKind kind() const { return kind_; }
    std::size_t window_len() const { return m_; }

    double observe(const StreamEvent& ev) {
        switch (kind_) {
            case DetectorKind::constant:
                return 0.0;
            case DetectorKind::ks:
            case DetectorKind::mean_shift: {
                scalars_.push_back(ev.confidence);
                if (scalars_.size() > 2 * m_) scalars_.pop_front();
                if (scalars_.size() < 2 * m_) return 0.0;
                std::vector<double> older(scalars_.begin(), scalars_.begin() + static_cast<std::ptrdiff_t>(m_));
                std::vector<double> newer(scalars_.begin() + static_cast<std::ptrdiff_t>(m_), scalars_.end());
                return kind_ == DetectorKind::ks
                           ? two_sample_ks_signal(std::move(older), std::move(newer))
                           : two_sample_mean_shift_signal(older, newer);
            }
            case DetectorKind::embedding: {
                if (ev.features.empty())
                    throw ValidationError("embedding detector requires feature vectors");
                if (!vectors_.empty() && ev.features.size() != vectors_.front().size())
                    throw ValidationError("feature dimension mismatch");
                vectors_.push_back(ev.features);
                if (vectors_.size() > 2 * m_) vectors_.pop_front();
                if (vectors_.size() < 2 * m_) return 0.0;
                std::vector<std::vector<double>> older(vectors_.begin(),
                                                       vectors_.begin() + static_cast<std::ptrdiff_t>(m_));
                std::vector<std::vector<double>> newer(vectors_.begin() + static_cast<std::ptrdiff_t>(m_),
                                                       vectors_.end());
                return embedding_distance_signal(older, newer);
            }
        }
        throw ConfigError("unknown detector kind");
    }

private:
    DetectorKind kind_;
    std::size_t m_;
    std::deque<double> scalars_;
    std::deque<std::vector<double>> vectors_;
};

}  // namespace driftmon
