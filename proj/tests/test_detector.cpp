#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <vector>

#include "driftmon/detector.hpp"
#include "driftmon/rng.hpp"

using namespace driftmon;

// ---------------------------------------------------------------------------
// Quantile normalization
// ---------------------------------------------------------------------------

TEST_CASE("mid-rank quantile matches the frozen examples") {
    const std::vector<double> hist{0.1, 0.2, 0.3, 0.4};
    REQUIRE(quantile_normalize(hist, 0.4) == Catch::Approx(0.875));
    REQUIRE(quantile_normalize(hist, 0.05) == 0.0);
    REQUIRE(quantile_normalize(hist, 0.9) == 1.0);
    REQUIRE(quantile_normalize({}, 0.7) == 0.5);
    // All-ties history sits at the neutral midpoint.
    REQUIRE(quantile_normalize({0.3, 0.3, 0.3}, 0.3) == Catch::Approx(0.5));
}

TEST_CASE("quantile is monotone non-decreasing in the query point") {
    Rng rng(1);
    for (int trial = 0; trial < 1000; ++trial) {
        std::vector<double> hist;
        const int len = 1 + static_cast<int>(rng.below(40));
        for (int i = 0; i < len; ++i) hist.push_back(rng.uniform());
        double g1 = rng.uniform(), g2 = rng.uniform();
        if (g1 > g2) std::swap(g1, g2);
        REQUIRE(quantile_normalize(hist, g1) <=
                quantile_normalize(hist, g2) + 1e-15);
    }
}

TEST_CASE("signal history agrees exactly with the list-scan quantile") {
    // Guard: the O(log n) history must be a drop-in for the reference
    // definition at every prefix, ties included.
    Rng rng(2);
    SignalHistory fast;
    std::vector<double> slow;
    for (int i = 0; i < 400; ++i) {
        // Coarse grid forces many exact ties.
        const double g = std::floor(rng.uniform() * 8.0) / 8.0;
        REQUIRE(fast.quantile(g) == Catch::Approx(quantile_normalize(slow, g)));
        fast.insert(g);
        slow.push_back(g);
    }
    REQUIRE(fast.size() == slow.size());
}

// ---------------------------------------------------------------------------
// Modulation map
// ---------------------------------------------------------------------------

TEST_CASE("modulation factor hits its three anchors exactly") {
    const QuantileMap map{};  // 1/8, 4
    REQUIRE(modulation_factor(map, 0.0) == 4.0);
    REQUIRE(modulation_factor(map, 0.5) == 1.0);
    REQUIRE(modulation_factor(map, 1.0) == 0.125);
    REQUIRE(modulation_factor(map, 0.75) == Catch::Approx(0.5625));
}

TEST_CASE("modulation factor is continuous, monotone, and range-exact") {
    const QuantileMap map{0.25, 2.0};
    double prev = modulation_factor(map, 0.0);
    REQUIRE(prev == 2.0);
    for (int i = 1; i <= 1000; ++i) {
        const double q = static_cast<double>(i) / 1000.0;
        const double f = modulation_factor(map, q);
        REQUIRE(f <= prev + 1e-15);  // non-increasing
        REQUIRE(f >= 0.25);
        REQUIRE(f <= 2.0);
        prev = f;
    }
    REQUIRE(prev == Catch::Approx(0.25));
}

TEST_CASE("modulation factor validates its inputs") {
    REQUIRE_THROWS_AS(modulation_factor(QuantileMap{}, -0.1), ValidationError);
    REQUIRE_THROWS_AS(modulation_factor(QuantileMap{}, 1.1), ValidationError);
    REQUIRE_THROWS_AS(modulation_factor(QuantileMap{0.0, 4.0}, 0.5),
                      ConfigError);
    REQUIRE_THROWS_AS(modulation_factor(QuantileMap{0.5, 0.9}, 0.5),
                      ConfigError);
}

// ---------------------------------------------------------------------------
// KS signal
// ---------------------------------------------------------------------------

TEST_CASE("kolmogorov tail matches the classical value at lambda = 1") {
    // 2(e^-2 - e^-8 + e^-18 - ...) = 0.2699996...
    REQUIRE(kolmogorov_asymptotic_p(1.0) == Catch::Approx(0.26999967).margin(1e-6));
    REQUIRE(kolmogorov_asymptotic_p(0.0) == 1.0);
    REQUIRE(kolmogorov_asymptotic_p(5.0) < 1e-10);
}

TEST_CASE("identical windows produce zero anomaly signal") {
    std::vector<double> w(75, 0.0);
    for (std::size_t i = 0; i < w.size(); ++i)
        w[i] = static_cast<double>(i) / 75.0;
    REQUIRE(two_sample_ks_signal(w, w) == 0.0);
}

TEST_CASE("disjoint windows saturate the KS signal") {
    const std::vector<double> zeros(75, 0.0), ones(75, 1.0);
    const double g = two_sample_ks_signal(zeros, ones);
    // D = 1 at effective size 37.5: p = Q(sqrt(37.5)) ~ 2e-33.
    REQUIRE(g > 1.0 - 1e-12);
    REQUIRE(g <= 1.0);
}

TEST_CASE("ks signal stays within [0, 1] on random inputs") {
    Rng rng(3);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<double> a, b;
        for (int i = 0; i < 40; ++i) {
            a.push_back(rng.uniform());
            b.push_back(rng.uniform() * (trial % 2 ? 0.5 : 1.0));
        }
        const double g = two_sample_ks_signal(a, b);
        REQUIRE(g >= 0.0);
        REQUIRE(g <= 1.0);
    }
}

TEST_CASE("ks null calibration: extreme signals are suitably rare") {
    // Guard: under the null, p-values of the asymptotic approximation are
    // (super-)uniform, so G >= 0.95 must occur in at most ~10% of trials.
    Rng rng(4);
    int extreme = 0;
    const int trials = 600;
    for (int trial = 0; trial < trials; ++trial) {
        std::vector<double> a, b;
        for (int i = 0; i < 75; ++i) {
            a.push_back(rng.uniform());
            b.push_back(rng.uniform());
        }
        if (two_sample_ks_signal(a, b) > 0.95) ++extreme;
    }
    REQUIRE(static_cast<double>(extreme) / trials <= 0.10);
}

// ---------------------------------------------------------------------------
// Mean-shift signal
// ---------------------------------------------------------------------------

TEST_CASE("mean-shift signal: identical windows give zero") {
    std::vector<double> w{0.1, 0.4, 0.2, 0.9, 0.5};
    REQUIRE(two_sample_mean_shift_signal(w, w) == Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("mean-shift signal: well-separated means saturate") {
    std::vector<double> lo, hi;
    for (int i = 0; i < 75; ++i) {
        lo.push_back(0.2 + (i % 2 ? 0.05 : -0.05));
        hi.push_back(0.8 + (i % 2 ? 0.05 : -0.05));
    }
    REQUIRE(two_sample_mean_shift_signal(lo, hi) > 0.99);
}

TEST_CASE("mean-shift signal: degenerate variance rule") {
    const std::vector<double> a(10, 0.5), b(10, 0.5), c(10, 0.7);
    REQUIRE(two_sample_mean_shift_signal(a, b) == 0.0);
    REQUIRE(two_sample_mean_shift_signal(a, c) == 1.0);
    REQUIRE_THROWS_AS(two_sample_mean_shift_signal({0.5}, a), ValidationError);
}

TEST_CASE("mean-shift signal grows with the shift") {
    std::vector<double> base;
    Rng rng(5);
    for (int i = 0; i < 60; ++i) base.push_back(rng.uniform());
    double prev = -1.0;
    for (double shift : {0.0, 0.1, 0.25, 0.5}) {
        std::vector<double> moved = base;
        for (auto& x : moved) x += shift;
        const double g = two_sample_mean_shift_signal(base, moved);
        REQUIRE(g >= prev - 1e-9);
        prev = g;
    }
}

// ---------------------------------------------------------------------------
// Embedding signal
// ---------------------------------------------------------------------------

TEST_CASE("embedding signal: unit-variance antipodal windows score 2") {
    // Windows at +e1 and -e1 with within-window sample variance exactly 1:
    // mean distance 2 over pooled scale 1.
    const std::vector<std::vector<double>> plus{{2.0, 0.0}, {0.0, 0.0}};
    const std::vector<std::vector<double>> minus{{-2.0, 0.0}, {0.0, 0.0}};
    REQUIRE(embedding_distance_signal(plus, minus) == Catch::Approx(2.0));
}

TEST_CASE("embedding signal: identical windows score zero") {
    const std::vector<std::vector<double>> w{{1.0, 2.0}, {3.0, 4.0}, {5.0, 6.0}};
    REQUIRE(embedding_distance_signal(w, w) == Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("embedding signal validates dimensions") {
    const std::vector<std::vector<double>> a{{1.0, 2.0}, {3.0, 4.0}};
    const std::vector<std::vector<double>> bad{{1.0}, {2.0}};
    REQUIRE_THROWS_AS(embedding_distance_signal(a, bad), ValidationError);
    const std::vector<std::vector<double>> ragged{{1.0, 2.0}, {3.0}};
    REQUIRE_THROWS_AS(embedding_distance_signal(a, ragged), ValidationError);
    REQUIRE_THROWS_AS(embedding_distance_signal({{1.0, 2.0}}, a),
                      ValidationError);
}

TEST_CASE("embedding null calibration over 200 seeds") {
    // Guard: same-distribution Gaussian windows (d=8, m=75) should rarely
    // reach signal 1 — the scale normalization keeps the null well below it.
    int below_one = 0;
    const int seeds = 200;
    for (int seed = 0; seed < seeds; ++seed) {
        Rng rng(static_cast<std::uint64_t>(seed) + 1000);
        std::vector<std::vector<double>> a, b;
        for (int i = 0; i < 75; ++i) {
            std::vector<double> va(8), vb(8);
            for (int j = 0; j < 8; ++j) {
                va[static_cast<std::size_t>(j)] = rng.normal();
                vb[static_cast<std::size_t>(j)] = rng.normal();
            }
            a.push_back(va);
            b.push_back(vb);
        }
        if (embedding_distance_signal(a, b) < 1.0) ++below_one;
    }
    REQUIRE(static_cast<double>(below_one) / seeds >= 0.95);
}

// ---------------------------------------------------------------------------
// Streaming detector wrapper
// ---------------------------------------------------------------------------

namespace {
StreamEvent conf_event(std::int64_t t, double confidence) {
    StreamEvent ev;
    ev.t = t;
    ev.outcome = 1;
    ev.confidence = confidence;
    return ev;
}
}  // namespace

TEST_CASE("detector warm-up emits zero until both windows fill") {
    Detector det(DetectorKind::ks, 5);
    Rng rng(6);
    for (int t = 0; t < 9; ++t)
        REQUIRE(det.observe(conf_event(t, rng.uniform())) == 0.0);
    // 10th observation fills 2m = 10 and the signal becomes live.
    const double g = det.observe(conf_event(9, rng.uniform()));
    REQUIRE(g >= 0.0);
    REQUIRE(g <= 1.0);
}

TEST_CASE("detector reacts to a confidence distribution shift") {
    Detector det(DetectorKind::ks, 20);
    Rng rng(7);
    double before = -1.0, after = -1.0;
    for (int t = 0; t < 200; ++t) {
        const double conf =
            t < 100 ? 0.8 + 0.05 * rng.uniform() : 0.2 + 0.05 * rng.uniform();
        const double g = det.observe(conf_event(t, conf));
        if (t == 99) before = g;
        if (t == 119) after = g;  // older window pre-shift, newer post-shift
    }
    REQUIRE(after > 0.99);
    REQUIRE(after > before);
}

TEST_CASE("constant detector never signals") {
    Detector det(DetectorKind::constant, 2);
    Rng rng(8);
    for (int t = 0; t < 100; ++t)
        REQUIRE(det.observe(conf_event(t, rng.uniform())) == 0.0);
}

TEST_CASE("embedding detector rejects missing or ragged features") {
    Detector det(DetectorKind::embedding, 3);
    StreamEvent no_features = conf_event(0, 0.5);
    REQUIRE_THROWS_AS(det.observe(no_features), ValidationError);
    StreamEvent ok = conf_event(0, 0.5);
    ok.features = {1.0, 2.0};
    REQUIRE(det.observe(ok) == 0.0);
    StreamEvent ragged = conf_event(1, 0.5);
    ragged.features = {1.0};
    REQUIRE_THROWS_AS(det.observe(ragged), ValidationError);
}

TEST_CASE("detector construction validates the window") {
    REQUIRE_THROWS_AS(Detector(DetectorKind::ks, 1), ConfigError);
    REQUIRE_NOTHROW(Detector(DetectorKind::constant, 0));
}
