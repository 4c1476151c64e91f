#pragma once

#include <span>

#include "carve/common.hpp"

namespace carve::detect {

struct DetectionMetrics {
    double f1 = 0.0;
    double auroc = 0.0;
    double auprc = 0.0;
};

// Pair-counting AUROC (Mann-Whitney with average ranks; ties count 0.5).
double auroc(std::span<const double> scores, std::span<const int> labels);

// Step-wise precision-recall integral over score-sorted points.
double auprc(std::span<const double> scores, std::span<const int> labels);

// F1 at threshold tau with anomaly (label 1, score > tau) as positive class.
double f1_at(std::span<const double> scores, std::span<const int> labels, double tau);

// All three; rejects single-class input.
DetectionMetrics detection_metrics(std::span<const double> scores, std::span<const int> labels, double tau);

}  // namespace carve::detect
