#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "driftmon/stream.hpp"

using namespace driftmon;

namespace {

DriftSpec walk_spec(double delta, std::int64_t T, double mu0,
                    std::uint64_t seed) {
    DriftSpec s;
    s.kind = DriftKind::random_walk;
    s.delta = delta;
    s.horizon = T;
    s.mu0 = mu0;
    s.seed = seed;
    return s;
}

double max_step(const std::vector<StreamEvent>& events) {
    double worst = 0.0;
    for (std::size_t t = 1; t < events.size(); ++t)
        worst = std::max(worst, std::abs(*events[t].true_accuracy -
                                         *events[t - 1].true_accuracy));
    return worst;
}

std::string temp_path(const char* name) {
    return std::string("stream_test_") + name + ".csv";
}

}  // namespace

// ---------------------------------------------------------------------------
// Random walk
// ---------------------------------------------------------------------------

TEST_CASE("zero drift freezes the accuracy curve") {
    const auto events = gen_random_walk(walk_spec(0.0, 5, 0.8, 1));
    REQUIRE(events.size() == 5);
    for (const auto& ev : events) {
        REQUIRE(ev.true_accuracy.has_value());
        REQUIRE(*ev.true_accuracy == 0.8);
    }
}

TEST_CASE("random walk starts exactly at mu0 and respects the drift bound") {
    const auto events = gen_random_walk(walk_spec(0.01, 100000, 0.5, 7));
    REQUIRE(*events.front().true_accuracy == 0.5);
    REQUIRE(max_step(events) <= 0.01);
    for (const auto& ev : events) {
        REQUIRE(*ev.true_accuracy >= 0.0);
        REQUIRE(*ev.true_accuracy <= 1.0);
        REQUIRE((ev.outcome == 0 || ev.outcome == 1));
        REQUIRE(ev.confidence >= 0.0);
        REQUIRE(ev.confidence <= 1.0);
    }
}

TEST_CASE("random walk is bit-deterministic in the spec") {
    const auto a = gen_random_walk(walk_spec(0.003, 2000, 0.7, 99));
    const auto b = gen_random_walk(walk_spec(0.003, 2000, 0.7, 99));
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        REQUIRE(a[i].outcome == b[i].outcome);
        REQUIRE(a[i].confidence == b[i].confidence);
        REQUIRE(*a[i].true_accuracy == *b[i].true_accuracy);
    }
}

TEST_CASE("outcomes are unbiased draws of the accuracy curve") {
    const auto events = gen_random_walk(walk_spec(0.0005, 200000, 0.6, 3));
    double mean_outcome = 0.0, mean_mu = 0.0;
    for (const auto& ev : events) {
        mean_outcome += ev.outcome;
        mean_mu += *ev.true_accuracy;
    }
    mean_outcome /= static_cast<double>(events.size());
    mean_mu /= static_cast<double>(events.size());
    REQUIRE(mean_outcome == Catch::Approx(mean_mu).margin(0.01));
}

TEST_CASE("long-run walk explores the whole unit interval") {
    // Guard: the ergodicity claim behind treating the walk as a stress
    // stream — every decile of [0,1] collects more than 1% of mass.
    const auto events = gen_random_walk(walk_spec(0.01, 1000000, 0.5, 21));
    std::array<std::int64_t, 10> mass{};
    for (const auto& ev : events) {
        const int bin = std::min(9, static_cast<int>(*ev.true_accuracy * 10));
        mass[static_cast<std::size_t>(bin)]++;
    }
    for (auto m : mass)
        REQUIRE(static_cast<double>(m) / 1e6 > 0.01);
}

TEST_CASE("random walk rejects invalid specs") {
    REQUIRE_THROWS_AS(gen_random_walk(walk_spec(0.01, 0, 0.5, 1)),
                      ConfigError);
    REQUIRE_THROWS_AS(gen_random_walk(walk_spec(1.5, 10, 0.5, 1)),
                      ConfigError);
    REQUIRE_THROWS_AS(gen_random_walk(walk_spec(0.01, 10, 1.5, 1)),
                      ConfigError);
}

// ---------------------------------------------------------------------------
// Piecewise linear
// ---------------------------------------------------------------------------

TEST_CASE("piecewise interpolates waypoints linearly") {
    DriftSpec s;
    s.kind = DriftKind::piecewise_linear;
    s.delta = 0.005;
    s.horizon = 150;
    s.mu0 = 0.9;
    s.seed = 5;
    s.waypoints = {{0, 0.9}, {100, 0.4}};
    const auto events = gen_piecewise(s);
    REQUIRE(*events[0].true_accuracy == Catch::Approx(0.9));
    REQUIRE(*events[50].true_accuracy == Catch::Approx(0.65));
    REQUIRE(*events[100].true_accuracy == Catch::Approx(0.4));
    // Horizon past the last waypoint holds the final level.
    REQUIRE(*events[149].true_accuracy == Catch::Approx(0.4));
    REQUIRE(max_step(events) <= 0.005 + 1e-12);
}

TEST_CASE("constant waypoints give a constant curve") {
    DriftSpec s;
    s.kind = DriftKind::piecewise_linear;
    s.delta = 0.01;
    s.horizon = 120;
    s.waypoints = {{0, 0.9}, {100, 0.9}};
    for (const auto& ev : gen_piecewise(s))
        REQUIRE(*ev.true_accuracy == Catch::Approx(0.9));
}

TEST_CASE("waypoint slopes steeper than delta are rejected") {
    DriftSpec s;
    s.kind = DriftKind::piecewise_linear;
    s.delta = 0.005;
    s.horizon = 20;
    s.waypoints = {{0, 0.9}, {10, 0.4}};  // slope 0.05 > 0.005
    REQUIRE_THROWS_AS(gen_piecewise(s), LipschitzError);
}

TEST_CASE("piecewise waypoint validation") {
    DriftSpec s;
    s.kind = DriftKind::piecewise_linear;
    s.delta = 0.01;
    s.horizon = 20;
    s.waypoints = {};
    REQUIRE_THROWS_AS(gen_piecewise(s), ConfigError);
    s.waypoints = {{5, 0.5}};  // must start at t = 0
    REQUIRE_THROWS_AS(gen_piecewise(s), ConfigError);
    s.waypoints = {{0, 0.5}, {10, 0.5}, {10, 0.6}};  // non-increasing t
    REQUIRE_THROWS_AS(gen_piecewise(s), ConfigError);
    s.waypoints = {{0, 0.5}, {10, 1.2}};  // accuracy out of range
    REQUIRE_THROWS_AS(gen_piecewise(s), ConfigError);
}

// ---------------------------------------------------------------------------
// Adversarial stream
// ---------------------------------------------------------------------------

TEST_CASE("adversarial stream has the documented three-phase shape") {
    DriftSpec s;
    s.kind = DriftKind::adversarial_rr;
    s.delta = 0.005;
    s.horizon = 1000;
    s.mu0 = 0.9;
    s.pad = 75;
    s.seed = 9;
    const auto events = gen_adversarial_rr(s);
    const std::int64_t ramp = 200;   // ceil(1/delta)
    const std::int64_t ramp2 = 400;  // ceil(2/delta)
    // Accuracy: flat at mu0 through pad+ramp, then a Lipschitz ramp to 1/2
    // reached at pad+ramp2, constant after.
    REQUIRE(*events[0].true_accuracy == 0.9);
    REQUIRE(*events[static_cast<std::size_t>(75 + ramp)].true_accuracy == 0.9);
    REQUIRE(*events[static_cast<std::size_t>(75 + ramp2)].true_accuracy ==
            Catch::Approx(0.5));
    REQUIRE(*events[999].true_accuracy == Catch::Approx(0.5));
    double lowest = 1.0;
    for (const auto& ev : events)
        lowest = std::min(lowest, *ev.true_accuracy);
    REQUIRE(lowest == Catch::Approx(0.5));
    REQUIRE(max_step(events) <= 0.005 + 1e-12);
    // Features: one-dimensional, constant from step ramp onward.
    for (std::size_t t = static_cast<std::size_t>(ramp); t < events.size();
         ++t) {
        REQUIRE(events[t].features.size() == 1);
        REQUIRE(events[t].features[0] == 1.0);
    }
    // Confidence: constant (carries no usable anomaly information).
    for (const auto& ev : events) REQUIRE(ev.confidence == 0.9);
}

TEST_CASE("adversarial recover branch ramps accuracy up to 1") {
    DriftSpec s;
    s.kind = DriftKind::adversarial_rr;
    s.delta = 0.01;
    s.horizon = 600;
    s.mu0 = 0.9;
    s.pad = 75;
    s.recover = true;
    const auto events = gen_adversarial_rr(s);
    REQUIRE(*events[599].true_accuracy == Catch::Approx(1.0));
    REQUIRE(max_step(events) <= 0.01 + 1e-12);
}

TEST_CASE("adversarial stream requires a positive drift bound") {
    DriftSpec s;
    s.kind = DriftKind::adversarial_rr;
    s.delta = 0.0;
    s.horizon = 100;
    REQUIRE_THROWS_AS(gen_adversarial_rr(s), ConfigError);
}

// ---------------------------------------------------------------------------
// Rotating clusters
// ---------------------------------------------------------------------------

namespace {
DriftSpec rotating_spec(int k, double rate, std::int64_t T,
                        std::uint64_t seed) {
    DriftSpec s;
    s.kind = DriftKind::rotating_clusters;
    s.delta = 0.0;
    s.horizon = T;
    s.mu0 = 0.9;
    s.seed = seed;
    s.cluster_count = k;
    s.rotation_rate = rate;
    s.cluster_radius = 1.0;
    s.cluster_sigma = 0.35;
    s.train_fraction = 0.05;
    return s;
}
}  // namespace

TEST_CASE("zero rotation keeps post-training accuracy constant") {
    const auto events = gen_rotating_clusters(rotating_spec(4, 0.0, 2000, 2));
    const double first = *events[200].true_accuracy;
    for (std::size_t t = 200; t < events.size(); ++t)
        REQUIRE(*events[t].true_accuracy == Catch::Approx(first).margin(1e-12));
    REQUIRE(first > 0.9);  // well-separated clusters -> high accuracy
}

TEST_CASE("half rotation of two symmetric clusters inverts the classifier") {
    // Guard: when two antipodal clusters swap positions the frozen
    // nearest-centroid model is maximally wrong.
    const double rate = 3.14159265358979323846 / 1000.0;
    const auto events = gen_rotating_clusters(rotating_spec(2, rate, 1100, 4));
    REQUIRE(*events[100].true_accuracy > 0.95);
    REQUIRE(*events[1050].true_accuracy < 0.5);
}

TEST_CASE("rotating stream: analytic truth matches measured accuracy") {
    const auto events =
        gen_rotating_clusters(rotating_spec(4, 0.00031415926, 20000, 6));
    double mean_outcome = 0.0, mean_mu = 0.0;
    for (const auto& ev : events) {
        mean_outcome += ev.outcome;
        mean_mu += *ev.true_accuracy;
    }
    mean_outcome /= static_cast<double>(events.size());
    mean_mu /= static_cast<double>(events.size());
    REQUIRE(mean_outcome == Catch::Approx(mean_mu).margin(0.015));
    for (const auto& ev : events) {
        REQUIRE(ev.features.size() == 2);
        REQUIRE(ev.confidence > 0.0);
        REQUIRE(ev.confidence < 1.0);
    }
}

TEST_CASE("rotating stream can withhold analytic truth") {
    auto spec = rotating_spec(3, 0.001, 500, 8);
    spec.analytic_truth = false;
    const auto events = gen_rotating_clusters(spec);
    for (const auto& ev : events) REQUIRE_FALSE(ev.true_accuracy.has_value());
}

TEST_CASE("rotating cluster validation") {
    REQUIRE_THROWS_AS(gen_rotating_clusters(rotating_spec(1, 0.0, 100, 1)),
                      ConfigError);
    auto bad_rate = rotating_spec(3, -0.1, 100, 1);
    REQUIRE_THROWS_AS(gen_rotating_clusters(bad_rate), ConfigError);
    auto degenerate = rotating_spec(3, 0.1, 100, 1);
    degenerate.cluster_radius = 0.0;  // identical centers
    REQUIRE_THROWS_AS(gen_rotating_clusters(degenerate), ConfigError);
    auto bad_sigma = rotating_spec(3, 0.1, 100, 1);
    bad_sigma.cluster_sigma = 0.0;
    REQUIRE_THROWS_AS(gen_rotating_clusters(bad_sigma), ConfigError);
    auto bad_train = rotating_spec(3, 0.1, 100, 1);
    bad_train.train_fraction = 1.5;
    REQUIRE_THROWS_AS(gen_rotating_clusters(bad_train), ConfigError);
}

// ---------------------------------------------------------------------------
// Replay
// ---------------------------------------------------------------------------

TEST_CASE("replay reads well-formed rows in order") {
    const auto path = temp_path("ok");
    {
        std::ofstream f(path);
        f << "t,outcome,confidence\n";
        f << "0,1,0.9\n";
        f << "1,0,0.5\n";
        f << "2,1,0.25\n";
    }
    const auto events = replay_csv(path);
    REQUIRE(events.size() == 3);
    REQUIRE(events[1].outcome == 0);
    REQUIRE(events[2].confidence == 0.25);
    REQUIRE_FALSE(events[0].true_accuracy.has_value());
    std::remove(path.c_str());
}

TEST_CASE("replay accepts feature columns and keeps them aligned") {
    const auto path = temp_path("features");
    {
        std::ofstream f(path);
        f << "t,outcome,confidence,f0,f1\n";
        f << "0,1,0.9,0.5,-1.5\n";
        f << "1,0,0.8,0.25,2\n";
    }
    const auto events = replay_csv(path);
    REQUIRE(events[0].features == std::vector<double>{0.5, -1.5});
    REQUIRE(events[1].features == std::vector<double>{0.25, 2.0});
    std::remove(path.c_str());
}

TEST_CASE("replay: header-only file yields an empty sequence") {
    const auto path = temp_path("empty");
    {
        std::ofstream f(path);
        f << "t,outcome,confidence\n";
    }
    REQUIRE(replay_csv(path).empty());
    std::remove(path.c_str());
}

TEST_CASE("replay errors carry line numbers") {
    const auto path = temp_path("bad");
    {
        std::ofstream f(path);
        f << "t,outcome,confidence\n";
        f << "0,1,0.9\n";
        f << "1,2,0.5\n";  // outcome outside {0,1}
    }
    REQUIRE_THROWS_MATCHES(replay_csv(path), ValidationError,
                           Catch::Matchers::MessageMatches(
                               Catch::Matchers::ContainsSubstring("line 3")));
    {
        std::ofstream f(path);
        f << "t,outcome,confidence\n";
        f << "0,1,1.5\n";  // confidence outside [0,1]
    }
    REQUIRE_THROWS_AS(replay_csv(path), ValidationError);
    {
        std::ofstream f(path);
        f << "t,outcome,confidence\n";
        f << "0,1,abc\n";  // malformed numeric
    }
    REQUIRE_THROWS_AS(replay_csv(path), ParseError);
    {
        std::ofstream f(path);
        f << "time,outcome,confidence\n";  // wrong header
        f << "0,1,0.9\n";
    }
    REQUIRE_THROWS_AS(replay_csv(path), ParseError);
    {
        std::ofstream f(path);
        f << "t,outcome,confidence\n";
        f << "0,1\n";  // missing field
    }
    REQUIRE_THROWS_AS(replay_csv(path), ParseError);
    std::remove(path.c_str());
}

// ---------------------------------------------------------------------------
// Block bootstrap
// ---------------------------------------------------------------------------

namespace {
std::vector<StreamEvent> numbered_events(int n) {
    std::vector<StreamEvent> events(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        events[static_cast<std::size_t>(i)].t = i;
        events[static_cast<std::size_t>(i)].outcome = i % 2;
        events[static_cast<std::size_t>(i)].confidence =
            static_cast<double>(i) / n;
    }
    return events;
}
}  // namespace

TEST_CASE("block length one is the identity") {
    const auto base = numbered_events(10);
    const auto out = block_bootstrap(base, 1, 42);
    for (std::size_t i = 0; i < base.size(); ++i)
        REQUIRE(out[i].t == base[i].t);
}

TEST_CASE("permutation is confined to consecutive blocks") {
    const auto base = numbered_events(16);
    const auto out = block_bootstrap(base, 8, 7);
    for (std::size_t i = 0; i < 8; ++i) {
        REQUIRE(out[i].t >= 0);
        REQUIRE(out[i].t < 8);
        REQUIRE(out[i + 8].t >= 8);
        REQUIRE(out[i + 8].t < 16);
    }
}

TEST_CASE("bootstrap preserves the event multiset exactly") {
    const auto base = numbered_events(103);  // ragged final block
    auto out = block_bootstrap(base, 8, 11);
    std::vector<std::int64_t> before, after;
    for (const auto& ev : base) before.push_back(ev.t);
    for (const auto& ev : out) after.push_back(ev.t);
    std::sort(after.begin(), after.end());
    REQUIRE(before == after);  // base t's are already sorted
}

TEST_CASE("bootstrap is deterministic given the seed and rejects bad blocks") {
    const auto base = numbered_events(32);
    const auto a = block_bootstrap(base, 8, 5);
    const auto b = block_bootstrap(base, 8, 5);
    for (std::size_t i = 0; i < base.size(); ++i) REQUIRE(a[i].t == b[i].t);
    REQUIRE_THROWS_AS(block_bootstrap(base, 0, 5), ValidationError);
}

// ---------------------------------------------------------------------------
// Moving-average truth proxy
// ---------------------------------------------------------------------------

TEST_CASE("moving average matches the frozen example") {
    const std::vector<int> outcomes{1, 1, 0, 1};
    const auto truth = moving_average_truth(outcomes, 2);
    REQUIRE(truth == std::vector<double>{1.0, 1.0, 0.5, 0.5});
}

TEST_CASE("moving average warm-up uses the available prefix") {
    const std::vector<int> outcomes{1, 0, 0, 0};
    const auto truth = moving_average_truth(outcomes, 100);
    REQUIRE(truth[0] == 1.0);
    REQUIRE(truth[1] == 0.5);
    REQUIRE(truth[3] == 0.25);
}

TEST_CASE("moving average equals a brute-force window mean everywhere") {
    Rng rng(77);
    std::vector<int> outcomes;
    for (int i = 0; i < 500; ++i)
        outcomes.push_back(rng.bernoulli(0.6) ? 1 : 0);
    const int w = 7;
    const auto truth = moving_average_truth(outcomes, w);
    for (std::size_t t = 0; t < outcomes.size(); ++t) {
        const std::size_t len = std::min<std::size_t>(w, t + 1);
        double sum = 0.0;
        for (std::size_t i = t + 1 - len; i <= t; ++i) sum += outcomes[i];
        REQUIRE(truth[t] == Catch::Approx(sum / static_cast<double>(len)));
        REQUIRE(truth[t] >= 0.0);
        REQUIRE(truth[t] <= 1.0);
    }
    REQUIRE_THROWS_AS(moving_average_truth(outcomes, 0), ValidationError);
}

TEST_CASE("alternating outcomes settle at one half for even windows") {
    std::vector<int> outcomes;
    for (int i = 0; i < 50; ++i) outcomes.push_back(i % 2);
    const auto truth = moving_average_truth(outcomes, 4);
    for (std::size_t t = 10; t < truth.size(); ++t)
        REQUIRE(truth[t] == Catch::Approx(0.5));
}

TEST_CASE("generate() dispatches on the drift kind") {
    const auto walk = generate(walk_spec(0.01, 50, 0.5, 1));
    REQUIRE(walk.size() == 50);
    DriftSpec bad;
    bad.kind = DriftKind::replay;
    bad.horizon = 10;
    bad.path = "does_not_exist_anywhere.csv";
    REQUIRE_THROWS_AS(generate(bad), ParseError);
}
