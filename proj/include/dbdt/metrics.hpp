#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace dbdt {

struct ConfusionMatrix {
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t fn = 0;
    std::size_t tn = 0;

    std::size_t total() const { return tp + fp + fn + tn; }
};

// Predicted positive iff score >= threshold.
ConfusionMatrix confusion(std::span<const double> scores, std::span<const int> labels, double threshold);

struct RocPoint {
    double fpr = 0.0;
    double tpr = 0.0;
};

using RocCurve = std::vector<RocPoint>;

// Step curve from (0,0) to (1,1), one vertex per distinct score.
RocCurve roc_curve(std::span<const double> scores, std::span<const int> labels);

// Mann-Whitney statistic with half credit for ties.
double auc(std::span<const double> scores, std::span<const int> labels);

// Area by the trapezoid rule.
double roc_area(const RocCurve& curve);

struct Severity {
    double shape_a = 2.0;
    double shape_b = 2.0;
};

// Hand's H-measure under a Beta severity over the normalized cost.
double h_measure(std::span<const double> scores, std::span<const int> labels, const Severity& severity = {});

std::string roc_to_csv(const RocCurve& curve);

}  // namespace dbdt
