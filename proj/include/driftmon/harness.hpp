#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "json.hpp"

#include "driftmon/bounds.hpp"
#include "driftmon/config.hpp"
#include "driftmon/detector.hpp"
#include "driftmon/errors.hpp"
#include "driftmon/policy.hpp"
#include "driftmon/risk.hpp"
#include "driftmon/stream.hpp"

namespace driftmon {

// ---------------------------------------------------------------------------
// Deterministic number formatting
// ---------------------------------------------------------------------------

namespace detail {
// Shortest representation that parses back to the exact same double, so
// generated streams replay losslessly and outputs are byte-stable.
inline std::string fmt(double v) {
    std::array<char, 32> buf{};
    auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    return std::string(buf.data(), ptr);
}
}  // namespace detail

// ---------------------------------------------------------------------------
// Deployment: stream + detector signals + scoring truth
// ---------------------------------------------------------------------------

// Everything about one simulated deployment that is independent of the
// policy. Precomputing it keeps policy comparisons on exactly the same
// footing (identical events and signals) and pays detector cost once.
struct Deployment {
    std::vector<StreamEvent> events;
    std::vector<double> signals;
    std::vector<double> truth;
    std::string truth_source;
};

inline Deployment make_deployment(std::vector<StreamEvent> events,
                                  DetectorKind detector_kind,
                                  std::int64_t window,
                                  std::int64_t truth_window) {
    if (events.empty()) throw ValidationError("deployment needs >= 1 event");
    Deployment dep;
    dep.events = std::move(events);
    Detector detector(detector_kind, window);
    dep.signals.reserve(dep.events.size());
    for (const auto& ev : dep.events)
        dep.signals.push_back(detector.observe(ev));
    const bool generator_truth =
        std::all_of(dep.events.begin(), dep.events.end(),
                    [](const StreamEvent& ev) {
                        return ev.true_accuracy.has_value();
                    });
    if (generator_truth) {
        dep.truth.reserve(dep.events.size());
        for (const auto& ev : dep.events)
            dep.truth.push_back(*ev.true_accuracy);
        dep.truth_source = "generator";
    } else {
        std::vector<int> outcomes;
        outcomes.reserve(dep.events.size());
        for (const auto& ev : dep.events) outcomes.push_back(ev.outcome);
        dep.truth = moving_average_truth(outcomes, truth_window);
        dep.truth_source =
            "moving_average(w=" + std::to_string(truth_window) + ")";
    }
    return dep;
}

inline Deployment build_deployment(const DriftSpec& spec,
                                   DetectorKind detector_kind,
                                   std::int64_t window,
                                   std::int64_t truth_window) {
    return make_deployment(generate(spec), detector_kind, window,
                           truth_window);
}

// ---------------------------------------------------------------------------
// Single-policy deployment loop
// ---------------------------------------------------------------------------

struct TrajectoryRecord {
    std::int64_t t = 0;
    int a = 0;
    double mu_hat = 0.0;
    double mu = 0.0;
    double signal = 0.0;
    int organic = 0;
    int safety = 0;
};

struct Trajectory {
    std::vector<TrajectoryRecord> records;
    RiskReport report;
};

// Drives the per-step protocol. The outcome is touched only inside the
// query branch, so a policy can never observe labels it did not pay for.
inline Trajectory run_policy(Policy& policy, const Deployment& dep,
                             double rho, double cost) {
    const std::size_t T = dep.events.size();
    Trajectory out;
    out.records.reserve(T);
    std::vector<int> actions(T, 0);
    std::vector<double> estimates(T, 0.0);
    for (std::size_t t = 0; t < T; ++t) {
        const StreamEvent& ev = dep.events[t];
        Unlabeled view;
        view.t = static_cast<std::int64_t>(t);
        view.confidence = ev.confidence;
        view.features = ev.features.empty() ? nullptr : &ev.features;
        const bool a = policy.decide(view, dep.signals[t]);
        if (a) policy.ingest(ev.outcome);
        const QueryFlags flags = policy.last_flags();
        actions[t] = a ? 1 : 0;
        estimates[t] = policy.estimate();
        TrajectoryRecord rec;
        rec.t = static_cast<std::int64_t>(t);
        rec.a = actions[t];
        rec.mu_hat = estimates[t];
        rec.mu = dep.truth[t];
        rec.signal = dep.signals[t];
        rec.organic = flags.organic ? 1 : 0;
        rec.safety = flags.safety ? 1 : 0;
        out.records.push_back(rec);
    }
    out.report = amortize(actions, estimates, dep.truth, rho, cost);
    out.report.truth_source = dep.truth_source;
    return out;
}

// Mean hinge risk of an already-recorded trajectory at another threshold
// (used for the multi-offset risk tables without re-running the policy).
inline double hinge_at(const Trajectory& traj, double rho) {
    double sum = 0.0;
    for (const auto& rec : traj.records)
        sum += r_hinge(rec.mu, rec.mu_hat, rho);
    return sum / static_cast<double>(traj.records.size());
}

// ---------------------------------------------------------------------------
// Policy construction from configuration
// ---------------------------------------------------------------------------

// `swept` carries the hyperparameter value during sweeps: budget B for pq,
// trigger threshold phi for rr, tolerance epsilon for the mldemon modes.
// Without it, pq prefers an explicit budget, then an explicit alpha, then
// the tolerance-derived (alpha, n) construction.
inline std::unique_ptr<Policy> make_policy(const ExperimentConfig& cfg,
                                           const std::string& name,
                                           std::optional<double> swept,
                                           std::int64_t horizon_hint = 0) {
    const double mu0 = cfg.drift.mu0;
    const double pdelta = cfg.resolved_policy_delta(horizon_hint);
    if (name == "pq") {
        if (swept)
            return std::make_unique<PeriodicPolicy>(
                PeriodicPolicy::from_budget(cfg.n, *swept, mu0));
        if (cfg.budget)
            return std::make_unique<PeriodicPolicy>(
                PeriodicPolicy::from_budget(cfg.n, *cfg.budget, mu0));
        if (cfg.alpha)
            return std::make_unique<PeriodicPolicy>(cfg.n, *cfg.alpha, mu0);
        return std::make_unique<PeriodicPolicy>(
            PeriodicPolicy::from_tolerance(cfg.epsilon, pdelta, mu0));
    }
    if (name == "rr")
        return std::make_unique<ReverifyPolicy>(cfg.n,
                                                swept.value_or(cfg.phi), mu0);
    if (name == "mldemon-est" || name == "mldemon-dec") {
        MldemonParams p;
        p.mode = name == "mldemon-est" ? MldemonMode::estimation
                                       : MldemonMode::decision;
        p.n = cfg.n;
        p.epsilon = swept.value_or(cfg.epsilon);
        p.delta = pdelta;
        p.alpha = tolerance_constants(p.epsilon, p.delta).alpha;
        p.nu = cfg.nu;
        p.b = cfg.b;
        p.unbiased = cfg.unbiased;
        p.rho = cfg.resolved_rho();
        p.mu0 = mu0;
        p.map = cfg.map;
        return std::make_unique<MldemonPolicy>(p);
    }
    throw ConfigError("unknown policy '" + name + "'");
}

// Single deployment with the configured policy and stream seed.
inline Trajectory run_deployment(const ExperimentConfig& cfg) {
    validate(cfg);
    const Deployment dep = build_deployment(cfg.drift, cfg.detector,
                                            cfg.window, cfg.truth_window);
    auto policy = make_policy(cfg, cfg.policy, std::nullopt,
                              static_cast<std::int64_t>(dep.events.size()));
    return run_policy(*policy, dep, cfg.resolved_rho(), cfg.cost);
}

// ---------------------------------------------------------------------------
// File writers
// ---------------------------------------------------------------------------

inline void write_trajectory_csv(const std::string& path,
                                 const Trajectory& traj) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot write " + path);
    out << "t,a,mu_hat,mu,signal,organic,safety\n";
    for (const auto& r : traj.records)
        out << r.t << ',' << r.a << ',' << detail::fmt(r.mu_hat) << ','
            << detail::fmt(r.mu) << ',' << detail::fmt(r.signal) << ','
            << r.organic << ',' << r.safety << '\n';
}

inline void write_frontier_csv(const std::string& path,
                               const std::vector<FrontierPoint>& points) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot write " + path);
    out << "hyperparam,Q,Q_stderr,R_mae,R_hinge,R_bin,"
           "stderr_mae,stderr_hinge,stderr_bin\n";
    for (const auto& p : points)
        out << detail::fmt(p.hyperparam) << ',' << detail::fmt(p.query_rate)
            << ',' << detail::fmt(p.stderr_query_rate) << ','
            << detail::fmt(p.mae) << ',' << detail::fmt(p.hinge) << ','
            << detail::fmt(p.bin) << ',' << detail::fmt(p.stderr_mae) << ','
            << detail::fmt(p.stderr_hinge) << ',' << detail::fmt(p.stderr_bin)
            << '\n';
}

// Emits a generated stream in the replay schema so `gen` output feeds
// straight back into a replay deployment.
inline void write_stream_csv(const std::string& path,
                             const std::vector<StreamEvent>& events) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot write " + path);
    const std::size_t dims = events.empty() ? 0 : events.front().features.size();
    out << "t,outcome,confidence";
    for (std::size_t j = 0; j < dims; ++j) out << ",f" << j;
    out << '\n';
    for (const auto& ev : events) {
        out << ev.t << ',' << ev.outcome << ',' << detail::fmt(ev.confidence);
        for (double f : ev.features) out << ',' << detail::fmt(f);
        out << '\n';
    }
}

inline nlohmann::ordered_json config_json(const ExperimentConfig& cfg,
                                          std::int64_t horizon_hint = 0) {
    nlohmann::ordered_json j;
    nlohmann::ordered_json drift;
    switch (cfg.drift.kind) {
        case DriftKind::random_walk: drift["kind"] = "random_walk"; break;
        case DriftKind::piecewise_linear: drift["kind"] = "piecewise"; break;
        case DriftKind::adversarial_rr: drift["kind"] = "adversarial_rr"; break;
        case DriftKind::rotating_clusters:
            drift["kind"] = "rotating_clusters";
            break;
        case DriftKind::replay: drift["kind"] = "replay"; break;
    }
    drift["delta"] = cfg.drift.delta;
    drift["horizon"] = cfg.drift.horizon;
    drift["mu0"] = cfg.drift.mu0;
    drift["seed"] = cfg.drift.seed;
    if (!cfg.drift.waypoints.empty()) {
        nlohmann::ordered_json wps = nlohmann::ordered_json::array();
        for (const auto& w : cfg.drift.waypoints)
            wps.push_back({{"t", w.t}, {"mu", w.mu}});
        drift["waypoints"] = wps;
    }
    if (cfg.drift.kind == DriftKind::adversarial_rr) {
        drift["pad"] = cfg.drift.pad;
        drift["recover"] = cfg.drift.recover;
    }
    if (cfg.drift.kind == DriftKind::rotating_clusters) {
        drift["clusters"] = cfg.drift.cluster_count;
        drift["rotation"] = cfg.drift.rotation_rate;
        drift["radius"] = cfg.drift.cluster_radius;
        drift["sigma"] = cfg.drift.cluster_sigma;
        drift["train_fraction"] = cfg.drift.train_fraction;
        drift["analytic_truth"] = cfg.drift.analytic_truth;
    }
    if (cfg.drift.kind == DriftKind::replay) drift["path"] = cfg.drift.path;
    j["drift"] = drift;

    nlohmann::ordered_json pol;
    pol["kind"] = cfg.policy;
    pol["n"] = cfg.n;
    pol["epsilon"] = cfg.epsilon;
    pol["delta"] = cfg.resolved_policy_delta(horizon_hint);
    pol["nu"] = cfg.nu;
    pol["b"] = cfg.b;
    pol["unbiased"] = cfg.unbiased;
    if (cfg.budget) pol["budget"] = *cfg.budget;
    if (cfg.alpha) pol["alpha"] = *cfg.alpha;
    pol["phi"] = cfg.phi;
    pol["rho"] = cfg.resolved_rho();
    pol["rho_offset"] = cfg.rho_offset;
    pol["phi_min"] = cfg.map.phi_min;
    pol["phi_max"] = cfg.map.phi_max;
    j["policy"] = pol;

    nlohmann::ordered_json det;
    switch (cfg.detector) {
        case DetectorKind::ks: det["kind"] = "ks"; break;
        case DetectorKind::mean_shift: det["kind"] = "mean_shift"; break;
        case DetectorKind::embedding: det["kind"] = "embedding"; break;
        case DetectorKind::constant: det["kind"] = "constant"; break;
    }
    det["window"] = cfg.window;
    j["detector"] = det;

    nlohmann::ordered_json exp;
    exp["policies"] = cfg.resolved_policies();
    exp["sweep"] = cfg.sweep;
    for (const auto& [family, values] : cfg.sweep_overrides)
        exp["sweep_" + family] = values;
    exp["seeds"] = cfg.seeds;
    exp["cost"] = cfg.cost;
    exp["costs"] = cfg.costs;
    exp["truth_window"] = cfg.truth_window;
    exp["bootstrap_block"] = cfg.bootstrap_block;
    exp["write_trajectories"] = cfg.write_trajectories;
    j["experiment"] = exp;
    return j;
}

// ---------------------------------------------------------------------------
// Sweep orchestration
// ---------------------------------------------------------------------------

// Hinge risks are reported at these threshold offsets from the initial
// accuracy (in addition to the configured primary threshold).
inline const std::array<double, 3>& hinge_offsets() {
    static const std::array<double, 3> offsets = {-0.05, -0.10, -0.20};
    return offsets;
}

inline std::string hinge_key(double offset) {
    // -0.05 -> "hinge_-5%"
    const int pct = static_cast<int>(std::lround(offset * 100.0));
    return "hinge_" + std::to_string(pct) + "%";
}

struct PolicySummary {
    std::string policy;
    std::vector<FrontierPoint> points;  // risks at the primary threshold
    // risk key ("mae", "hinge_-5%", ...) -> (Q, risk) curve sorted by Q
    std::map<std::string, std::vector<std::pair<double, double>>> curves;
    std::map<std::string, double> auc;  // per risk key
    // risk key ("mae", "hinge") -> cost string -> min frontier loss
    std::map<std::string, std::map<std::string, double>> min_loss;
};

struct SweepResult {
    std::vector<PolicySummary> policies;
    double q_max_norm = 0.0;
    std::map<std::string, double> r_max_norm;  // per risk key
    std::vector<std::string> files;
};

struct SweepOptions {
    std::string out_dir = "out";
    int jobs = 1;
    bool write_files = true;
};

namespace detail {

struct RunOutcome {
    RiskReport report;
    std::array<double, 3> offset_hinges{};
};

// Replay seeds resample the recorded stream with the block bootstrap (the
// raw recording is seed-independent, so this is what gives replay sweeps
// across-seed error bars); steps are then renumbered to keep trajectory
// records positional. Synthetic kinds just generate with the seed.
inline std::vector<StreamEvent> events_for_seed(
    const ExperimentConfig& cfg, const std::vector<StreamEvent>& replay_base,
    std::uint64_t seed) {
    if (cfg.drift.kind == DriftKind::replay) {
        std::vector<StreamEvent> events =
            block_bootstrap(replay_base, cfg.bootstrap_block, seed);
        for (std::size_t i = 0; i < events.size(); ++i)
            events[i].t = static_cast<std::int64_t>(i);
        return events;
    }
    DriftSpec spec = cfg.drift;
    spec.seed = seed;
    return generate(spec);
}

inline void run_tasks(std::size_t count, int jobs,
                      const std::function<void(std::size_t)>& task) {
    const int workers = std::max(1, jobs);
    if (workers == 1) {
        for (std::size_t i = 0; i < count; ++i) task(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            while (!failed.load(std::memory_order_relaxed)) {
                const std::size_t i =
                    next.fetch_add(1, std::memory_order_relaxed);
                if (i >= count) break;
                try {
                    task(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(error_mutex);
                    if (!first_error) first_error = std::current_exception();
                    failed.store(true, std::memory_order_relaxed);
                }
            }
        });
    }
    for (auto& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);
}

}  // namespace detail

inline SweepResult run_sweep(const ExperimentConfig& cfg,
                             const SweepOptions& opt) {
    validate(cfg);
    const std::vector<std::string> policies = cfg.resolved_policies();
    for (const auto& pol : policies)
        if (cfg.sweep_for(pol).empty())
            throw ConfigError("policy '" + pol + "' has an empty sweep");

    namespace fs = std::filesystem;
    if (opt.write_files) fs::create_directories(opt.out_dir);

    // Replay recordings are loaded once; synthetic streams are generated
    // per seed inside the deployment builder below.
    std::vector<StreamEvent> replay_base;
    if (cfg.drift.kind == DriftKind::replay)
        replay_base = replay_csv(cfg.drift.path);

    // One deployment per seed, shared by every (policy, hyperparam) pair so
    // all policies face identical events and detector signals.
    std::vector<Deployment> deployments(cfg.seeds.size());
    detail::run_tasks(cfg.seeds.size(), opt.jobs, [&](std::size_t i) {
        deployments[i] = make_deployment(
            detail::events_for_seed(cfg, replay_base, cfg.seeds[i]),
            cfg.detector, cfg.window, cfg.truth_window);
    });

    const double rho = cfg.resolved_rho();
    std::vector<double> offset_rhos;
    for (double off : hinge_offsets())
        offset_rhos.push_back(
            std::clamp(cfg.drift.mu0 * (1.0 + off), 0.0, 1.0));

    // Flatten (policy, hyperparam, seed) into an indexable task list.
    struct Task {
        std::size_t policy_idx;
        double hyperparam;
        std::size_t seed_idx;
    };
    std::vector<Task> tasks;
    for (std::size_t pi = 0; pi < policies.size(); ++pi)
        for (double h : cfg.sweep_for(policies[pi]))
            for (std::size_t si = 0; si < cfg.seeds.size(); ++si)
                tasks.push_back({pi, h, si});

    std::vector<detail::RunOutcome> outcomes(tasks.size());
    std::vector<std::string> traj_files(tasks.size());
    detail::run_tasks(tasks.size(), opt.jobs, [&](std::size_t i) {
        const Task& task = tasks[i];
        const std::string& pol_name = policies[task.policy_idx];
        auto policy = make_policy(
            cfg, pol_name, task.hyperparam,
            static_cast<std::int64_t>(
                deployments[task.seed_idx].events.size()));
        const Trajectory traj =
            run_policy(*policy, deployments[task.seed_idx], rho, cfg.cost);
        detail::RunOutcome& out = outcomes[i];
        out.report = traj.report;
        for (std::size_t k = 0; k < offset_rhos.size(); ++k)
            out.offset_hinges[k] = hinge_at(traj, offset_rhos[k]);
        if (opt.write_files && cfg.write_trajectories) {
            const std::string path =
                opt.out_dir + "/traj_" + pol_name + "_h" +
                detail::fmt(task.hyperparam) + "_s" +
                std::to_string(cfg.seeds[task.seed_idx]) + ".csv";
            write_trajectory_csv(path, traj);
            traj_files[i] = path;
        }
    });

    SweepResult result;
    for (const auto& f : traj_files)
        if (!f.empty()) result.files.push_back(f);

    // Aggregate per policy: frontier at the primary threshold plus mean
    // curves for every reported risk type.
    for (std::size_t pi = 0; pi < policies.size(); ++pi) {
        std::map<double, std::vector<RiskReport>> groups;
        std::map<double, std::array<double, 3>> offset_sums;
        std::map<double, int> counts;
        for (std::size_t i = 0; i < tasks.size(); ++i) {
            if (tasks[i].policy_idx != pi) continue;
            groups[tasks[i].hyperparam].push_back(outcomes[i].report);
            auto& sums = offset_sums[tasks[i].hyperparam];
            for (std::size_t k = 0; k < sums.size(); ++k)
                sums[k] += outcomes[i].offset_hinges[k];
            counts[tasks[i].hyperparam] += 1;
        }
        PolicySummary summary;
        summary.policy = policies[pi];
        summary.points = build_frontier(groups);
        auto& mae_curve = summary.curves["mae"];
        for (const auto& p : summary.points)
            mae_curve.push_back({p.query_rate, p.mae});
        for (std::size_t k = 0; k < hinge_offsets().size(); ++k) {
            auto& curve = summary.curves[hinge_key(hinge_offsets()[k])];
            for (const auto& p : summary.points) {
                const double mean = offset_sums[p.hyperparam][k] /
                                    static_cast<double>(counts[p.hyperparam]);
                curve.push_back({p.query_rate, mean});
            }
        }
        result.policies.push_back(std::move(summary));
    }

    // Axis normalization: the max observed across all compared policies,
    // recorded in the summary so the tables are self-describing.
    for (const auto& summary : result.policies) {
        for (const auto& p : summary.points)
            result.q_max_norm = std::max(result.q_max_norm, p.query_rate);
        for (const auto& [key, curve] : summary.curves)
            for (const auto& [q, r] : curve)
                result.r_max_norm[key] =
                    std::max(result.r_max_norm[key], r);
    }
    const double q_norm = std::max(result.q_max_norm, 1e-12);
    for (auto& summary : result.policies) {
        for (const auto& [key, curve] : summary.curves) {
            const double r_norm = std::max(result.r_max_norm[key], 1e-12);
            summary.auc[key] = normalized_auc(curve, q_norm, r_norm);
        }
        std::vector<std::pair<double, double>> mae_curve =
            summary.curves["mae"];
        std::vector<std::pair<double, double>> hinge_curve;
        for (const auto& p : summary.points)
            hinge_curve.push_back({p.query_rate, p.hinge});
        for (double c : cfg.costs) {
            summary.min_loss["mae"][detail::fmt(c)] =
                min_loss_over_frontier(mae_curve, c);
            summary.min_loss["hinge"][detail::fmt(c)] =
                min_loss_over_frontier(hinge_curve, c);
        }
    }

    if (opt.write_files) {
        for (const auto& summary : result.policies) {
            const std::string path =
                opt.out_dir + "/frontier_" + summary.policy + ".csv";
            write_frontier_csv(path, summary.points);
            result.files.push_back(path);
        }
        nlohmann::ordered_json j;
        j["config"] = config_json(
            cfg, deployments.empty()
                     ? 0
                     : static_cast<std::int64_t>(
                           deployments.front().events.size()));
        nlohmann::ordered_json auc;
        for (const auto& summary : result.policies) {
            nlohmann::ordered_json per;
            for (const auto& [key, value] : summary.auc) per[key] = value;
            auc[summary.policy] = per;
        }
        j["auc"] = auc;
        nlohmann::ordered_json loss;
        for (const auto& summary : result.policies) {
            nlohmann::ordered_json per;
            for (const auto& [risk, table] : summary.min_loss) {
                nlohmann::ordered_json row;
                for (const auto& [c, v] : table) row[c] = v;
                per[risk] = row;
            }
            loss[summary.policy] = per;
        }
        j["min_loss"] = loss;
        nlohmann::ordered_json norm;
        norm["q_max"] = result.q_max_norm;
        for (const auto& [key, value] : result.r_max_norm)
            norm["r_max_" + key] = value;
        norm["rho"] = rho;
        norm["truth_source"] = deployments.front().truth_source;
        j["normalization"] = norm;
        const std::string spath = opt.out_dir + "/summary.json";
        std::ofstream out(spath, std::ios::binary);
        if (!out) throw ValidationError("cannot write " + spath);
        out << j.dump(2) << '\n';
        result.files.push_back(spath);
    }
    return result;
}

}  // namespace driftmon
