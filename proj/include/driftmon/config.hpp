#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "driftmon/detector.hpp"
#include "driftmon/errors.hpp"
#include "driftmon/policy.hpp"
#include "driftmon/stream.hpp"

namespace driftmon {

// ---------------------------------------------------------------------------
// Experiment configuration
// ---------------------------------------------------------------------------

// Everything a deployment run or sweep needs, mapping one-to-one onto the
// key = value config file; CLI flags override individual fields after
// parsing. Unset optionals fall back to documented defaults at resolve time.
struct ExperimentConfig {
    DriftSpec drift;

    // --- policy ---
    std::string policy = "mldemon-est";  // pq | rr | mldemon-est | mldemon-dec
    std::int64_t n = 15;                 // batch / blend size for all policies
    double epsilon = 0.1;                // accuracy tolerance
    double policy_delta = 0.0;           // drift bound; 0 -> default 3/T
    double nu = 0.15;                    // mldemon min/max period ratio
    double b = 1.0;                      // mldemon margin surplus factor
    bool unbiased = true;                // mldemon estimate refresh flag
    std::optional<double> budget;        // pq: query budget B in (0,1]
    std::optional<double> alpha;         // pq: explicit buffer multiplier
    double phi = 0.5;                    // rr trigger threshold
    std::optional<double> rho;           // explicit decision threshold
    double rho_offset = -0.10;           // else rho = mu0 * (1 + rho_offset)
    QuantileMap map{};                   // mldemon period modulation anchors

    // --- detector ---
    DetectorKind detector = DetectorKind::ks;
    std::int64_t window = 75;

    // --- experiment ---
    std::vector<std::string> policies;   // sweep comparison set; empty -> {policy}
    std::vector<double> sweep;           // shared hyperparameter grid
    std::map<std::string, std::vector<double>> sweep_overrides;  // per policy
    std::vector<std::uint64_t> seeds = {1};
    double cost = 0.25;                  // label cost c for reported losses
    std::vector<double> costs = {1.0, 0.5, 0.25};  // min-loss table
    std::int64_t truth_window = 100;     // moving-average truth fallback
    std::int64_t bootstrap_block = 8;    // replay resampling block length
    bool write_trajectories = true;

    // Threshold actually used for decision risks.
    double resolved_rho() const {
        if (rho) return *rho;
        return drift.mu0 * (1.0 + rho_offset);
    }

    // Drift bound the policies assume; defaults to 3/T when not set.
    // Replayed streams leave drift.horizon at 0 until the file is loaded,
    // so callers that know the actual event count pass it as the hint.
    double resolved_policy_delta(std::int64_t horizon_hint = 0) const {
        if (policy_delta > 0.0) return policy_delta;
        const std::int64_t T =
            drift.horizon > 0 ? drift.horizon : horizon_hint;
        if (T <= 0)
            throw ConfigError(
                "policy delta defaults to 3/T but the horizon is unknown; "
                "set [policy] delta explicitly");
        return 3.0 / static_cast<double>(T);
    }

    std::vector<std::string> resolved_policies() const {
        return policies.empty() ? std::vector<std::string>{policy} : policies;
    }

    std::vector<double> sweep_for(const std::string& pol) const {
        const std::string family =
            pol == "mldemon-est" || pol == "mldemon-dec" ? "mldemon" : pol;
        auto it = sweep_overrides.find(family);
        if (it != sweep_overrides.end()) return it->second;
        return sweep;
    }
};

// ---------------------------------------------------------------------------
// Token parsing helpers
// ---------------------------------------------------------------------------

namespace detail {

inline std::string trim(const std::string& s) {
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

inline std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) {
        return static_cast<char>(std::tolower(c));
    });
    return s;
}

inline double parse_real(const std::string& value, const std::string& key) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(value, &pos);
        if (pos != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("key '" + key + "': not a number: '" + value + "'");
    }
}

inline std::int64_t parse_int(const std::string& value,
                              const std::string& key) {
    try {
        std::size_t pos = 0;
        const long long v = std::stoll(value, &pos);
        if (pos != value.size()) throw std::invalid_argument(value);
        return static_cast<std::int64_t>(v);
    } catch (const std::exception&) {
        throw ConfigError("key '" + key + "': not an integer: '" + value +
                          "'");
    }
}

inline bool parse_bool(const std::string& value, const std::string& key) {
    const std::string v = lower(trim(value));
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw ConfigError("key '" + key + "': not a boolean: '" + value + "'");
}

inline std::vector<std::string> split_list(const std::string& value) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream in(value);
    while (std::getline(in, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

inline std::vector<double> parse_real_list(const std::string& value,
                                           const std::string& key) {
    std::vector<double> out;
    for (const auto& item : split_list(value))
        out.push_back(parse_real(item, key));
    return out;
}

// Waypoints serialize as "t0:mu0,t1:mu1,...".
inline std::vector<Waypoint> parse_waypoints(const std::string& value,
                                             const std::string& key) {
    std::vector<Waypoint> out;
    for (const auto& item : split_list(value)) {
        const auto colon = item.find(':');
        if (colon == std::string::npos)
            throw ConfigError("key '" + key + "': expected t:mu pair, got '" +
                              item + "'");
        Waypoint w;
        w.t = parse_int(trim(item.substr(0, colon)), key);
        w.mu = parse_real(trim(item.substr(colon + 1)), key);
        out.push_back(w);
    }
    return out;
}

inline DriftKind parse_drift_kind(const std::string& value) {
    const std::string v = lower(trim(value));
    if (v == "random_walk") return DriftKind::random_walk;
    if (v == "piecewise") return DriftKind::piecewise_linear;
    if (v == "adversarial_rr") return DriftKind::adversarial_rr;
    if (v == "rotating_clusters") return DriftKind::rotating_clusters;
    if (v == "replay") return DriftKind::replay;
    throw ConfigError("unknown drift kind '" + value + "'");
}

inline DetectorKind parse_detector_kind(const std::string& value) {
    const std::string v = lower(trim(value));
    if (v == "ks") return DetectorKind::ks;
    if (v == "mean_shift") return DetectorKind::mean_shift;
    if (v == "embedding") return DetectorKind::embedding;
    if (v == "constant") return DetectorKind::constant;
    throw ConfigError("unknown detector kind '" + value + "'");
}

inline std::string canonical_policy(const std::string& value) {
    const std::string v = lower(trim(value));
    if (v == "pq" || v == "rr" || v == "mldemon-est" || v == "mldemon-dec")
        return v;
    throw ConfigError("unknown policy '" + value + "'");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Config file parsing
// ---------------------------------------------------------------------------

// Declarative `key = value` file with [drift], [policy], [detector], and
// [experiment] sections; '#' and ';' start comments. Unknown sections or
// keys are errors so typos cannot silently fall back to defaults.
inline ExperimentConfig parse_config_text(std::istream& in) {
    ExperimentConfig cfg;
    std::string line;
    std::string section;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto comment = line.find_first_of("#;");
        if (comment != std::string::npos) line = line.substr(0, comment);
        line = detail::trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw ConfigError("line " + std::to_string(lineno) +
                                  ": unterminated section header");
            section = detail::lower(detail::trim(line.substr(1, line.size() - 2)));
            if (section != "drift" && section != "policy" &&
                section != "detector" && section != "experiment")
                throw ConfigError("line " + std::to_string(lineno) +
                                  ": unknown section [" + section + "]");
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("line " + std::to_string(lineno) +
                              ": expected key = value");
        const std::string key = detail::lower(detail::trim(line.substr(0, eq)));
        const std::string value = detail::trim(line.substr(eq + 1));
        if (value.empty()) continue;  // blank value keeps the default

        if (section == "drift") {
            if (key == "kind") cfg.drift.kind = detail::parse_drift_kind(value);
            else if (key == "delta") cfg.drift.delta = detail::parse_real(value, key);
            else if (key == "horizon") cfg.drift.horizon = detail::parse_int(value, key);
            else if (key == "mu0") cfg.drift.mu0 = detail::parse_real(value, key);
            else if (key == "seed") cfg.drift.seed = static_cast<std::uint64_t>(detail::parse_int(value, key));
            else if (key == "waypoints") cfg.drift.waypoints = detail::parse_waypoints(value, key);
            else if (key == "pad") cfg.drift.pad = detail::parse_int(value, key);
            else if (key == "recover") cfg.drift.recover = detail::parse_bool(value, key);
            else if (key == "clusters") cfg.drift.cluster_count = detail::parse_int(value, key);
            else if (key == "rotation") cfg.drift.rotation_rate = detail::parse_real(value, key);
            else if (key == "radius") cfg.drift.cluster_radius = detail::parse_real(value, key);
            else if (key == "sigma") cfg.drift.cluster_sigma = detail::parse_real(value, key);
            else if (key == "train_fraction") cfg.drift.train_fraction = detail::parse_real(value, key);
            else if (key == "analytic_truth") cfg.drift.analytic_truth = detail::parse_bool(value, key);
            else if (key == "path") cfg.drift.path = value;
            else throw ConfigError("line " + std::to_string(lineno) + ": unknown [drift] key '" + key + "'");
        } else if (section == "policy") {
            if (key == "kind") cfg.policy = detail::canonical_policy(value);
            else if (key == "n") cfg.n = detail::parse_int(value, key);
            else if (key == "epsilon") cfg.epsilon = detail::parse_real(value, key);
            else if (key == "delta") cfg.policy_delta = detail::parse_real(value, key);
            else if (key == "nu") cfg.nu = detail::parse_real(value, key);
            else if (key == "b") cfg.b = detail::parse_real(value, key);
            else if (key == "unbiased") cfg.unbiased = detail::parse_bool(value, key);
            else if (key == "budget") cfg.budget = detail::parse_real(value, key);
            else if (key == "alpha") cfg.alpha = detail::parse_real(value, key);
            else if (key == "phi") cfg.phi = detail::parse_real(value, key);
            else if (key == "rho") cfg.rho = detail::parse_real(value, key);
            else if (key == "rho_offset") cfg.rho_offset = detail::parse_real(value, key);
            else if (key == "phi_min") cfg.map.phi_min = detail::parse_real(value, key);
            else if (key == "phi_max") cfg.map.phi_max = detail::parse_real(value, key);
            else throw ConfigError("line " + std::to_string(lineno) + ": unknown [policy] key '" + key + "'");
        } else if (section == "detector") {
            if (key == "kind") cfg.detector = detail::parse_detector_kind(value);
            else if (key == "window") cfg.window = detail::parse_int(value, key);
            else throw ConfigError("line " + std::to_string(lineno) + ": unknown [detector] key '" + key + "'");
        } else if (section == "experiment") {
            if (key == "policies") {
                cfg.policies.clear();
                for (const auto& p : detail::split_list(value))
                    cfg.policies.push_back(detail::canonical_policy(p));
            } else if (key == "sweep") cfg.sweep = detail::parse_real_list(value, key);
            else if (key == "sweep_pq") cfg.sweep_overrides["pq"] = detail::parse_real_list(value, key);
            else if (key == "sweep_rr") cfg.sweep_overrides["rr"] = detail::parse_real_list(value, key);
            else if (key == "sweep_mldemon") cfg.sweep_overrides["mldemon"] = detail::parse_real_list(value, key);
            else if (key == "seeds") {
                cfg.seeds.clear();
                for (const auto& s : detail::split_list(value))
                    cfg.seeds.push_back(static_cast<std::uint64_t>(detail::parse_int(s, key)));
            } else if (key == "cost") cfg.cost = detail::parse_real(value, key);
            else if (key == "costs") cfg.costs = detail::parse_real_list(value, key);
            else if (key == "truth_window") cfg.truth_window = detail::parse_int(value, key);
            else if (key == "bootstrap_block") cfg.bootstrap_block = detail::parse_int(value, key);
            else if (key == "write_trajectories") cfg.write_trajectories = detail::parse_bool(value, key);
            else throw ConfigError("line " + std::to_string(lineno) + ": unknown [experiment] key '" + key + "'");
        } else {
            throw ConfigError("line " + std::to_string(lineno) +
                              ": key outside any section");
        }
    }
    return cfg;
}

inline ExperimentConfig parse_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    return parse_config_text(in);
}

// Cross-field checks shared by run and sweep entry points.
inline void validate(const ExperimentConfig& cfg) {
    if (cfg.cost < 0.0) throw ConfigError("label cost must be >= 0");
    if (cfg.n < 1) throw ConfigError("n must be >= 1");
    if (cfg.window < 2 && cfg.detector != DetectorKind::constant)
        throw ConfigError("detector window must be >= 2");
    if (cfg.truth_window < 1) throw ConfigError("truth_window must be >= 1");
    if (cfg.bootstrap_block < 1)
        throw ConfigError("bootstrap_block must be >= 1");
    if (cfg.seeds.empty()) throw ConfigError("seeds must be nonempty");
    for (double c : cfg.costs)
        if (c < 0.0) throw ConfigError("costs entries must be >= 0");
    validate(cfg.map);
    const double rho = cfg.resolved_rho();
    if (!(rho >= 0.0 && rho <= 1.0))
        throw ConfigError("resolved decision threshold must lie in [0, 1]");
}

}  // namespace driftmon
