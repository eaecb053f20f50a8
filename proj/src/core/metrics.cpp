#include "core/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace rili {

namespace {

void validate_scored(const std::vector<double>& scores, const std::vector<int>& labels, const char* op) {
    if (scores.size() != labels.size())
        throw ValidationError(std::string(op) + ": " + std::to_string(scores.size()) + " scores vs " +
                              std::to_string(labels.size()) + " labels");
    if (scores.empty()) throw ValidationError(std::string(op) + ": empty input");
    for (int l : labels)
        if (l != 0 && l != 1) throw ValidationError(std::string(op) + ": labels must be 0 or 1");
}

void require_both_classes(const std::vector<int>& labels, const char* op) {
    const int64_t pos = std::count(labels.begin(), labels.end(), 1);
    if (pos == 0 || pos == static_cast<int64_t>(labels.size()))
        throw ValidationError(std::string(op) + ": both classes must be present");
}

} // namespace

double roc_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
    validate_scored(scores, labels, "roc_auc");
    require_both_classes(labels, "roc_auc");

    std::vector<size_t> order(scores.size());
    std::iota(order.begin(), order.end(), size_t{0});
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) { return scores[a] < scores[b]; });

    // midranks (1-based); tied scores share the average of their rank run
    double pos_rank_sum = 0;
    int64_t pos = 0;
    size_t i = 0;
    while (i < order.size()) {
        size_t j = i;
        while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
        const double midrank = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
        for (size_t k = i; k <= j; ++k) {
            if (labels[order[k]] == 1) {
                pos_rank_sum += midrank;
                ++pos;
            }
        }
        i = j + 1;
    }
    const int64_t neg = static_cast<int64_t>(labels.size()) - pos;
    const double p = static_cast<double>(pos);
    return (pos_rank_sum - p * (p + 1.0) / 2.0) / (p * static_cast<double>(neg));
}

double roc_auc_bruteforce(const std::vector<double>& scores, const std::vector<int>& labels) {
    validate_scored(scores, labels, "roc_auc");
    require_both_classes(labels, "roc_auc");
    double wins = 0;
    int64_t pos = 0, neg = 0;
    for (size_t i = 0; i < scores.size(); ++i) {
        if (labels[i] != 1) continue;
        ++pos;
        for (size_t j = 0; j < scores.size(); ++j) {
            if (labels[j] != 0) continue;
            if (scores[i] > scores[j]) wins += 1.0;
            else if (scores[i] == scores[j]) wins += 0.5;
        }
    }
    neg = static_cast<int64_t>(scores.size()) - pos;
    return wins / (static_cast<double>(pos) * static_cast<double>(neg));
}

std::vector<RocPoint> roc_curve(const std::vector<double>& scores, const std::vector<int>& labels) {
    validate_scored(scores, labels, "roc_curve");
    require_both_classes(labels, "roc_curve");

    std::vector<size_t> order(scores.size());
    std::iota(order.begin(), order.end(), size_t{0});
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) { return scores[a] > scores[b]; });

    const double pos = static_cast<double>(std::count(labels.begin(), labels.end(), 1));
    const double neg = static_cast<double>(labels.size()) - pos;

    std::vector<RocPoint> curve;
    curve.push_back({0, 0});
    int64_t tp = 0, fp = 0;
    size_t i = 0;
    while (i < order.size()) {
        // consume the whole tie run before emitting a point
        size_t j = i;
        while (j < order.size() && scores[order[j]] == scores[order[i]]) {
            if (labels[order[j]] == 1) ++tp;
            else ++fp;
            ++j;
        }
        curve.push_back({static_cast<double>(fp) / neg, static_cast<double>(tp) / pos});
        i = j;
    }
    return curve;
}

double trapezoid_area(const std::vector<RocPoint>& curve) {
    if (curve.size() < 2) throw ValidationError("trapezoid_area: need at least 2 points");
    double area = 0;
    for (size_t i = 1; i < curve.size(); ++i)
        area += (curve[i].fpr - curve[i - 1].fpr) * (curve[i].tpr + curve[i - 1].tpr) / 2.0;
    return area;
}

MetricsRecord confusion_metrics(const std::vector<double>& scores, const std::vector<int>& labels,
                                double threshold) {
    validate_scored(scores, labels, "confusion_metrics");
    int64_t tp = 0, fp = 0, tn = 0, fn = 0;
    for (size_t i = 0; i < scores.size(); ++i) {
        const bool pred = scores[i] >= threshold;
        if (labels[i] == 1) {
            if (pred) ++tp;
            else ++fn;
        } else {
            if (pred) ++fp;
            else ++tn;
        }
    }
    MetricsRecord r;
    r.n_samples = static_cast<int64_t>(scores.size());
    r.n_positive = tp + fn;
    r.threshold = threshold;
    r.precision = tp + fp > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
    r.recall = tp + fn > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
    r.specificity = tn + fp > 0 ? static_cast<double>(tn) / static_cast<double>(tn + fp) : 0.0;
    r.accuracy = static_cast<double>(tp + tn) / static_cast<double>(r.n_samples);
    r.f1 = r.precision + r.recall > 0 ? 2.0 * r.precision * r.recall / (r.precision + r.recall) : 0.0;
    const bool both = r.n_positive > 0 && r.n_positive < r.n_samples;
    r.roc_auc = both ? roc_auc(scores, labels) : std::numeric_limits<double>::quiet_NaN();
    return r;
}

AggregateRecord aggregate_folds(const std::vector<MetricsRecord>& records) {
    if (records.size() < 2)
        throw ValidationError("aggregate_folds: need >= 2 fold records, got " + std::to_string(records.size()));
    auto stat = [&](double MetricsRecord::* field) {
        MetricStat s;
        bool all_equal = true;
        for (const auto& r : records) all_equal = all_equal && r.*field == records[0].*field;
        if (all_equal) {
            s.mean = records[0].*field;
            return s; // avoids accumulation noise; identical folds mean exactly that value
        }
        for (const auto& r : records) s.mean += r.*field;
        s.mean /= static_cast<double>(records.size());
        double ss = 0;
        for (const auto& r : records) {
            const double d = r.*field - s.mean;
            ss += d * d;
        }
        s.std = std::sqrt(ss / static_cast<double>(records.size() - 1));
        return s;
    };
    AggregateRecord a;
    a.roc_auc = stat(&MetricsRecord::roc_auc);
    a.f1 = stat(&MetricsRecord::f1);
    a.precision = stat(&MetricsRecord::precision);
    a.recall = stat(&MetricsRecord::recall);
    a.specificity = stat(&MetricsRecord::specificity);
    a.accuracy = stat(&MetricsRecord::accuracy);
    a.fold_count = static_cast<int>(records.size());
    return a;
}

RocBand roc_band(const std::vector<std::vector<RocPoint>>& curves) {
    if (curves.size() < 2) throw ValidationError("roc_band: need >= 2 curves");
    for (const auto& c : curves)
        if (c.size() < 2) throw ValidationError("roc_band: degenerate curve");

    RocBand band;
    band.fpr.resize(101);
    band.tpr_mean.assign(101, 0.0);
    band.tpr_std.assign(101, 0.0);
    for (int g = 0; g <= 100; ++g) band.fpr[static_cast<size_t>(g)] = static_cast<double>(g) / 100.0;

    // Collapse each curve's vertical runs to their upper TPR, then evaluate by
    // linear interpolation between the surviving points.
    std::vector<std::vector<double>> tprs(curves.size(), std::vector<double>(101));
    for (size_t ci = 0; ci < curves.size(); ++ci) {
        std::vector<RocPoint> pts;
        for (const auto& p : curves[ci]) {
            if (!pts.empty() && p.fpr == pts.back().fpr) pts.back().tpr = std::max(pts.back().tpr, p.tpr);
            else pts.push_back(p);
        }
        for (int g = 0; g <= 100; ++g) {
            const double x = band.fpr[static_cast<size_t>(g)];
            double y;
            if (x <= pts.front().fpr) {
                y = pts.front().tpr;
            } else if (x >= pts.back().fpr) {
                y = pts.back().tpr;
            } else {
                size_t hi = 1;
                while (pts[hi].fpr < x) ++hi;
                const auto& a = pts[hi - 1];
                const auto& b = pts[hi];
                y = b.fpr == a.fpr ? b.tpr : a.tpr + (b.tpr - a.tpr) * (x - a.fpr) / (b.fpr - a.fpr);
            }
            tprs[ci][static_cast<size_t>(g)] = y;
        }
    }
    for (int g = 0; g <= 100; ++g) {
        double m = 0;
        for (const auto& t : tprs) m += t[static_cast<size_t>(g)];
        m /= static_cast<double>(curves.size());
        double ss = 0;
        for (const auto& t : tprs) {
            const double d = t[static_cast<size_t>(g)] - m;
            ss += d * d;
        }
        band.tpr_mean[static_cast<size_t>(g)] = std::clamp(m, 0.0, 1.0);
        band.tpr_std[static_cast<size_t>(g)] = std::sqrt(ss / static_cast<double>(curves.size() - 1));
    }
    return band;
}

} // namespace rili
