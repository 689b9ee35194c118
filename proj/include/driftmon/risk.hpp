#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "driftmon/errors.hpp"

namespace driftmon {

// ---------------------------------------------------------------------------
// Pointwise monitoring risks
// ---------------------------------------------------------------------------

namespace detail {
inline void require_unit(double v, const char* what) {
    if (!(v >= 0.0 && v <= 1.0))
        throw ValidationError(std::string(what) + " must lie in [0, 1]");
}
}  // namespace detail

// Absolute estimation error.
inline double r_mae(double mu, double mu_hat) {
    detail::require_unit(mu, "mu");
    detail::require_unit(mu_hat, "mu_hat");
    return std::abs(mu - mu_hat);
}

// Wrong side of the decision threshold. Strict inequalities on both sides:
// sitting exactly on the threshold is never a decision error.
inline int r_bin(double mu, double mu_hat, double rho) {
    detail::require_unit(mu, "mu");
    detail::require_unit(mu_hat, "mu_hat");
    detail::require_unit(rho, "rho");
    const bool wrong = (mu > rho && mu_hat < rho) || (mu < rho && mu_hat > rho);
    return wrong ? 1 : 0;
}

// Decision error weighted by how far the truth is from the threshold;
// exactly |rho - mu| * r_bin, so it vanishes whenever r_bin does.
inline double r_hinge(double mu, double mu_hat, double rho) {
    return std::abs(rho - mu) * static_cast<double>(r_bin(mu, mu_hat, rho));
}

// ---------------------------------------------------------------------------
// Amortized report over a trajectory
// ---------------------------------------------------------------------------

struct RiskReport {
    std::int64_t horizon = 0;
    double query_rate = 0.0;  // Q = (1/T) sum a_t
    double mae = 0.0;         // averaged r_mae
    double hinge = 0.0;       // averaged r_hinge
    double bin = 0.0;         // averaged r_bin
    double rho = 0.0;
    double cost = 0.0;        // label cost c used for the losses below
    double loss_mae = 0.0;    // c*Q + mae
    double loss_hinge = 0.0;  // c*Q + hinge
    // Where the scored truth came from: "generator" when the stream supplies
    // exact accuracies, else the moving-average proxy (window recorded).
    std::string truth_source;
};

// Time-averages the per-step risks of one monitoring run. `actions`,
// `estimates`, and `truth` are parallel per-step vectors.
inline RiskReport amortize(const std::vector<int>& actions,
                           const std::vector<double>& estimates,
                           const std::vector<double>& truth, double rho,
                           double cost) {
    if (actions.empty()) throw ValidationError("empty trajectory");
    if (actions.size() != estimates.size() || actions.size() != truth.size())
        throw ValidationError("trajectory columns differ in length");
    if (cost < 0.0) throw ValidationError("label cost must be >= 0");

    RiskReport report;
    report.horizon = static_cast<std::int64_t>(actions.size());
    report.rho = rho;
    report.cost = cost;
    double queries = 0.0;
    for (std::size_t t = 0; t < actions.size(); ++t) {
        if (actions[t] != 0 && actions[t] != 1)
            throw ValidationError("actions must be 0/1");
        queries += actions[t];
        report.mae += r_mae(truth[t], estimates[t]);
        const int wrong = r_bin(truth[t], estimates[t], rho);
        report.bin += wrong;
        report.hinge += std::abs(rho - truth[t]) * wrong;
    }
    const double T = static_cast<double>(report.horizon);
    report.query_rate = queries / T;
    report.mae /= T;
    report.hinge /= T;
    report.bin /= T;
    report.loss_mae = cost * report.query_rate + report.mae;
    report.loss_hinge = cost * report.query_rate + report.hinge;
    return report;
}

// ---------------------------------------------------------------------------
// Budget/risk frontier
// ---------------------------------------------------------------------------

// One frontier point: seed-averaged operating point of a policy at a fixed
// hyperparameter value. Standard errors are sample-stddev / sqrt(k); with a
// single seed they are zero and the point is flagged low-confidence.
struct FrontierPoint {
    double hyperparam = 0.0;
    double query_rate = 0.0;
    double mae = 0.0;
    double hinge = 0.0;
    double bin = 0.0;
    double stderr_query_rate = 0.0;
    double stderr_mae = 0.0;
    double stderr_hinge = 0.0;
    double stderr_bin = 0.0;
    int seeds = 0;
    bool low_confidence = false;
};

namespace detail {
struct MeanStderr {
    double mean = 0.0;
    double stderr_ = 0.0;
};

inline MeanStderr mean_stderr(const std::vector<double>& xs) {
    MeanStderr out;
    const double k = static_cast<double>(xs.size());
    for (double x : xs) out.mean += x;
    out.mean /= k;
    if (xs.size() > 1) {
        double ss = 0.0;
        for (double x : xs) ss += (x - out.mean) * (x - out.mean);
        out.stderr_ = std::sqrt(ss / (k - 1.0)) / std::sqrt(k);
    }
    return out;
}
}  // namespace detail

// Groups per-seed reports by hyperparameter value and returns the frontier
// sorted by mean query rate (ties broken by hyperparameter value so the
// ordering is deterministic).
inline std::vector<FrontierPoint> build_frontier(
    const std::map<double, std::vector<RiskReport>>& runs) {
    if (runs.empty()) throw ValidationError("frontier needs at least one run");
    std::vector<FrontierPoint> points;
    points.reserve(runs.size());
    for (const auto& [value, reports] : runs) {
        if (reports.empty())
            throw ValidationError("frontier group without reports");
        std::vector<double> q, mae, hinge, bin;
        for (const auto& r : reports) {
            q.push_back(r.query_rate);
            mae.push_back(r.mae);
            hinge.push_back(r.hinge);
            bin.push_back(r.bin);
        }
        FrontierPoint p;
        p.hyperparam = value;
        auto mq = detail::mean_stderr(q);
        auto mm = detail::mean_stderr(mae);
        auto mh = detail::mean_stderr(hinge);
        auto mb = detail::mean_stderr(bin);
        p.query_rate = mq.mean;
        p.stderr_query_rate = mq.stderr_;
        p.mae = mm.mean;
        p.stderr_mae = mm.stderr_;
        p.hinge = mh.mean;
        p.stderr_hinge = mh.stderr_;
        p.bin = mb.mean;
        p.stderr_bin = mb.stderr_;
        p.seeds = static_cast<int>(reports.size());
        p.low_confidence = reports.size() < 2;
        points.push_back(p);
    }
    std::sort(points.begin(), points.end(),
              [](const FrontierPoint& a, const FrontierPoint& b) {
                  if (a.query_rate != b.query_rate)
                      return a.query_rate < b.query_rate;
                  return a.hyperparam < b.hyperparam;
              });
    return points;
}

// ---------------------------------------------------------------------------
// Frontier scalarizations
// ---------------------------------------------------------------------------

// Area under the (query rate, risk) curve after normalizing both axes by
// explicit constants. The curve is extended horizontally from its first
// point to Q = 0 and from its last point to Q = 1, then integrated with the
// trapezoid rule, so a frontier {(0, r_max), (q_max, 0)} scores exactly 0.5.
inline double normalized_auc(const std::vector<std::pair<double, double>>&
                                 frontier,
                             double q_max, double r_max) {
    if (frontier.empty()) throw ValidationError("empty frontier");
    if (!(q_max > 0.0) || !(r_max > 0.0))
        throw ValidationError("normalization constants must be > 0");
    std::vector<std::pair<double, double>> pts = frontier;
    std::sort(pts.begin(), pts.end());
    for (auto& [q, r] : pts) {
        q /= q_max;
        r /= r_max;
    }
    double area = pts.front().second * pts.front().first;  // extend to Q=0
    for (std::size_t i = 1; i < pts.size(); ++i) {
        const double dq = pts[i].first - pts[i - 1].first;
        area += 0.5 * (pts[i].second + pts[i - 1].second) * dq;
    }
    if (pts.back().first < 1.0)
        area += pts.back().second * (1.0 - pts.back().first);  // extend to Q=1
    return area;
}

// Best achievable amortized loss c*Q + R over the frontier at label cost c.
inline double min_loss_over_frontier(
    const std::vector<std::pair<double, double>>& frontier, double cost) {
    if (frontier.empty()) throw ValidationError("empty frontier");
    if (cost < 0.0) throw ValidationError("label cost must be >= 0");
    double best = std::numeric_limits<double>::infinity();
    for (const auto& [q, r] : frontier) best = std::min(best, cost * q + r);
    return best;
}

}  // namespace driftmon
