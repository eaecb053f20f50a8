#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "core/metrics.hpp"
#include "core/rng.hpp"

using namespace rili;

TEST_CASE("roc_auc on separated, inverted, and tied examples") {
    std::vector<double> s{0.9, 0.8, 0.3, 0.2};
    CHECK(roc_auc(s, {1, 1, 0, 0}) == 1.0);
    CHECK(roc_auc(s, {0, 0, 1, 1}) == 0.0);
    CHECK(roc_auc({0.6, 0.4, 0.6, 0.4}, {1, 0, 0, 1}) == 0.5);
}

TEST_CASE("roc_auc rejects degenerate inputs") {
    CHECK_THROWS_AS((void)roc_auc({0.5, 0.6}, {1, 1}), ValidationError);
    CHECK_THROWS_AS((void)roc_auc({0.5, 0.6}, {0, 0}), ValidationError);
    CHECK_THROWS_AS((void)roc_auc({}, {}), ValidationError);
    CHECK_THROWS_AS((void)roc_auc({0.5}, {1, 0}), ValidationError);
    CHECK_THROWS_AS((void)roc_auc({0.5, 0.6}, {1, 2}), ValidationError);
}

TEST_CASE("rank-based AUC equals brute-force pairwise counting exactly") {
    Rng rng(101);
    int instances = 0;
    while (instances < 1000) {
        const int n = 2 + static_cast<int>(rng.uniform_int(11)); // n <= 12
        std::vector<double> scores(static_cast<size_t>(n));
        std::vector<int> labels(static_cast<size_t>(n));
        // few distinct score values force plenty of ties
        const int levels = 1 + static_cast<int>(rng.uniform_int(5));
        for (int i = 0; i < n; ++i) {
            scores[static_cast<size_t>(i)] = static_cast<double>(rng.uniform_int(static_cast<uint64_t>(levels))) /
                                             static_cast<double>(levels);
            labels[static_cast<size_t>(i)] = rng.bernoulli(0.5) ? 1 : 0;
        }
        const auto pos = std::count(labels.begin(), labels.end(), 1);
        if (pos == 0 || pos == n) continue;
        ++instances;
        CHECK(roc_auc(scores, labels) == roc_auc_bruteforce(scores, labels));
    }
}

TEST_CASE("roc_auc is invariant under strictly monotone score transforms") {
    Rng rng(7);
    for (int t = 0; t < 20; ++t) {
        const int n = 4 + static_cast<int>(rng.uniform_int(9));
        std::vector<double> scores(static_cast<size_t>(n));
        std::vector<int> labels(static_cast<size_t>(n));
        for (int i = 0; i < n; ++i) {
            scores[static_cast<size_t>(i)] = rng.uniform(-2, 2);
            labels[static_cast<size_t>(i)] = i % 2;
        }
        std::vector<double> warped(scores);
        for (auto& x : warped) x = std::exp(x) + 3.0;
        CHECK(roc_auc(scores, labels) == roc_auc(warped, labels));
    }
}

TEST_CASE("complement labels mirror the AUC") {
    Rng rng(13);
    for (int t = 0; t < 50; ++t) {
        const int n = 4 + static_cast<int>(rng.uniform_int(9));
        std::vector<double> scores(static_cast<size_t>(n));
        std::vector<int> labels(static_cast<size_t>(n)), inv(static_cast<size_t>(n));
        bool has0 = false, has1 = false;
        for (int i = 0; i < n; ++i) {
            scores[static_cast<size_t>(i)] = rng.uniform(0, 1);
            labels[static_cast<size_t>(i)] = rng.bernoulli(0.5) ? 1 : 0;
            inv[static_cast<size_t>(i)] = 1 - labels[static_cast<size_t>(i)];
            (labels[static_cast<size_t>(i)] ? has1 : has0) = true;
        }
        if (!has0 || !has1) continue;
        CHECK(std::abs(roc_auc(scores, labels) + roc_auc(scores, inv) - 1.0) < 1e-12);
    }
}

TEST_CASE("roc_curve enumerates thresholds at distinct scores") {
    auto curve = roc_curve({0.9, 0.8, 0.3, 0.2}, {1, 1, 0, 0});
    REQUIRE(curve.size() == 5);
    const std::vector<RocPoint> want{{0, 0}, {0, 0.5}, {0, 1}, {0.5, 1}, {1, 1}};
    for (size_t i = 0; i < want.size(); ++i) {
        CHECK(curve[i].fpr == want[i].fpr);
        CHECK(curve[i].tpr == want[i].tpr);
    }
}

TEST_CASE("roc_curve of constant scores is the two-point diagonal") {
    auto curve = roc_curve({0.5, 0.5, 0.5, 0.5}, {1, 0, 1, 0});
    REQUIRE(curve.size() == 2);
    CHECK(curve[0].fpr == 0.0);
    CHECK(curve[0].tpr == 0.0);
    CHECK(curve[1].fpr == 1.0);
    CHECK(curve[1].tpr == 1.0);
    CHECK(trapezoid_area(curve) == 0.5);
}

TEST_CASE("roc_curve coordinates are monotone and end at (1,1)") {
    Rng rng(77);
    for (int t = 0; t < 30; ++t) {
        const int n = 4 + static_cast<int>(rng.uniform_int(20));
        std::vector<double> scores(static_cast<size_t>(n));
        std::vector<int> labels(static_cast<size_t>(n));
        for (int i = 0; i < n; ++i) {
            scores[static_cast<size_t>(i)] = static_cast<double>(rng.uniform_int(6)) / 6.0;
            labels[static_cast<size_t>(i)] = i % 2;
        }
        auto curve = roc_curve(scores, labels);
        CHECK(curve.front().fpr == 0.0);
        CHECK(curve.front().tpr == 0.0);
        CHECK(curve.back().fpr == 1.0);
        CHECK(curve.back().tpr == 1.0);
        for (size_t i = 1; i < curve.size(); ++i) {
            CHECK(curve[i].fpr >= curve[i - 1].fpr);
            CHECK(curve[i].tpr >= curve[i - 1].tpr);
        }
    }
}

TEST_CASE("trapezoid area under roc_curve equals roc_auc on 100 random instances") {
    Rng rng(99);
    int done = 0;
    while (done < 100) {
        const int n = 3 + static_cast<int>(rng.uniform_int(30));
        std::vector<double> scores(static_cast<size_t>(n));
        std::vector<int> labels(static_cast<size_t>(n));
        for (int i = 0; i < n; ++i) {
            scores[static_cast<size_t>(i)] =
                rng.bernoulli(0.3) ? 0.5 : rng.uniform(0, 1); // mix in ties
            labels[static_cast<size_t>(i)] = rng.bernoulli(0.4) ? 1 : 0;
        }
        const auto pos = std::count(labels.begin(), labels.end(), 1);
        if (pos == 0 || pos == n) continue;
        ++done;
        CHECK(std::abs(trapezoid_area(roc_curve(scores, labels)) - roc_auc(scores, labels)) < 1e-9);
    }
}

TEST_CASE("confusion metrics match a hand-built confusion matrix") {
    // TP=3 FP=1 FN=1 TN=3 at threshold 0.5
    std::vector<double> s{0.9, 0.8, 0.7, 0.2, 0.6, 0.3, 0.2, 0.1};
    std::vector<int> l{1, 1, 1, 1, 0, 0, 0, 0};
    auto m = confusion_metrics(s, l);
    CHECK(m.precision == 0.75);
    CHECK(m.recall == 0.75);
    CHECK(m.specificity == 0.75);
    CHECK(m.accuracy == 0.75);
    CHECK(m.f1 == doctest::Approx(0.75).epsilon(1e-12));
    CHECK(m.n_samples == 8);
    CHECK(m.n_positive == 4);
    CHECK(m.threshold == 0.5);
    CHECK(std::isfinite(m.roc_auc));
}

TEST_CASE("perfect predictions score 1.0 everywhere") {
    auto m = confusion_metrics({0.9, 0.8, 0.1, 0.2}, {1, 1, 0, 0});
    CHECK(m.precision == 1.0);
    CHECK(m.recall == 1.0);
    CHECK(m.specificity == 1.0);
    CHECK(m.accuracy == 1.0);
    CHECK(m.f1 == 1.0);
    CHECK(m.roc_auc == 1.0);
}

TEST_CASE("no predicted positives gives precision 0 and f1 0") {
    auto m = confusion_metrics({0.1, 0.2, 0.3, 0.4}, {1, 0, 1, 0});
    CHECK(m.precision == 0.0);
    CHECK(m.recall == 0.0);
    CHECK(m.f1 == 0.0);
    CHECK(m.specificity == 1.0);
}

TEST_CASE("threshold extremes saturate recall and specificity") {
    Rng rng(55);
    std::vector<double> s(20);
    std::vector<int> l(20);
    for (int i = 0; i < 20; ++i) {
        s[static_cast<size_t>(i)] = rng.uniform(0.01, 0.99);
        l[static_cast<size_t>(i)] = i % 2;
    }
    CHECK(confusion_metrics(s, l, 0.0).recall == 1.0);
    CHECK(confusion_metrics(s, l, 1.5).specificity == 1.0);
}

TEST_CASE("aggregate_folds computes mean and sample std") {
    std::vector<MetricsRecord> recs(5);
    const std::vector<double> aucs{0.7, 0.8, 0.9, 0.6, 0.75};
    for (size_t i = 0; i < 5; ++i) recs[i].roc_auc = aucs[i];
    auto a = aggregate_folds(recs);
    CHECK(a.fold_count == 5);
    CHECK(a.roc_auc.mean == doctest::Approx(0.75).epsilon(1e-12));
    CHECK(a.roc_auc.std == doctest::Approx(0.1118).epsilon(1e-3));
}

TEST_CASE("identical fold records aggregate with zero std") {
    MetricsRecord r;
    r.roc_auc = 0.8;
    r.f1 = 0.7;
    auto a = aggregate_folds({r, r, r});
    CHECK(a.roc_auc.std == 0.0);
    CHECK(a.f1.std == 0.0);
    CHECK(a.roc_auc.mean == 0.8);
}

TEST_CASE("aggregate_folds rejects a single record") {
    CHECK_THROWS_AS((void)aggregate_folds({MetricsRecord{}}), ValidationError);
}

TEST_CASE("roc_band of identical curves has zero width") {
    auto curve = roc_curve({0.9, 0.7, 0.4, 0.2}, {1, 1, 0, 0});
    auto band = roc_band({curve, curve, curve, curve, curve});
    REQUIRE(band.fpr.size() == 101);
    for (size_t g = 0; g < 101; ++g) CHECK(band.tpr_std[g] == 0.0);
}

TEST_CASE("roc_band of diagonal and perfect curves averages to the midline") {
    std::vector<RocPoint> diag{{0, 0}, {1, 1}};
    std::vector<RocPoint> perfect{{0, 0}, {0, 1}, {1, 1}};
    auto band = roc_band({diag, perfect});
    for (size_t g = 0; g < 101; ++g) {
        const double x = band.fpr[g];
        CHECK(band.tpr_mean[g] == doctest::Approx((x + 1.0) / 2.0).epsilon(1e-12));
    }
    CHECK(band.tpr_mean[100] == 1.0);
    CHECK(band.fpr[0] == 0.0);
    CHECK(band.fpr[100] == 1.0);
}

TEST_CASE("roc_band needs at least two curves") {
    std::vector<RocPoint> diag{{0, 0}, {1, 1}};
    CHECK_THROWS_AS((void)roc_band({diag}), ValidationError);
}
