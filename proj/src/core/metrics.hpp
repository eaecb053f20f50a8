#pragma once

// Binary-classification metrics: rank-based ROC-AUC, ROC curves, confusion
// metrics at a fixed threshold, cross-fold aggregation, and ROC bands.

#include <cstdint>
#include <vector>

#include "core/error.hpp"

namespace rili {

// Mann-Whitney AUC via midranks; ties credited 0.5. Throws ValidationError
// unless both classes are present.
double roc_auc(const std::vector<double>& scores, const std::vector<int>& labels);

// O(P*N) pairwise counting; same value as roc_auc, kept as an independent
// reference for tests.
double roc_auc_bruteforce(const std::vector<double>& scores, const std::vector<int>& labels);

struct RocPoint {
    double fpr = 0, tpr = 0;
};

// Thresholds at each distinct score, descending; first point (0,0), last
// (1,1), both coordinates non-decreasing.
std::vector<RocPoint> roc_curve(const std::vector<double>& scores, const std::vector<int>& labels);

double trapezoid_area(const std::vector<RocPoint>& curve);

struct MetricsRecord {
    double roc_auc = 0;
    double f1 = 0;
    double precision = 0;
    double recall = 0;
    double specificity = 0;
    double accuracy = 0;
    int64_t n_samples = 0;
    int64_t n_positive = 0;
    double threshold = 0.5;
};

// Predict positive iff score >= threshold. roc_auc is filled when both
// classes are present, NaN otherwise (confusion fields never fail).
MetricsRecord confusion_metrics(const std::vector<double>& scores, const std::vector<int>& labels,
                                double threshold = 0.5);

struct MetricStat {
    double mean = 0, std = 0;
};

struct AggregateRecord {
    MetricStat roc_auc, f1, precision, recall, specificity, accuracy;
    int fold_count = 0;
};

// Elementwise mean and sample (n-1) std across folds; needs >= 2 records.
AggregateRecord aggregate_folds(const std::vector<MetricsRecord>& records);

struct RocBand {
    std::vector<double> fpr;      // fixed grid 0.00, 0.01, ..., 1.00
    std::vector<double> tpr_mean; // clipped to [0,1]
    std::vector<double> tpr_std;
};

// Vertical averaging of >= 2 fold curves on a 101-point FPR grid. Vertical
// curve segments contribute their upper TPR.
RocBand roc_band(const std::vector<std::vector<RocPoint>>& curves);

} // namespace rili
