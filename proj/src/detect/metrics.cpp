#include "carve/detect/metrics.hpp"

#include <algorithm>
#include <numeric>
#include <vector>

namespace carve::detect {

namespace {

void check_two_classes(std::span<const double> scores, std::span<const int> labels) {
    if (scores.size() != labels.size()) throw ValidationError("metrics: scores/labels size mismatch");
    bool pos = false, neg = false;
    for (int l : labels) (l == 1 ? pos : neg) = true;
    if (!pos || !neg) throw ValidationError("metrics: both classes must be present");
}

}  // namespace

double auroc(std::span<const double> scores, std::span<const int> labels) {
    check_two_classes(scores, labels);
    const std::size_t n = scores.size();
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    // Average ranks over tied score groups, then the rank-sum statistic.
    double pos_rank_sum = 0.0;
    std::size_t n_pos = 0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j < n && scores[idx[j]] == scores[idx[i]]) ++j;
        double avg_rank = 0.5 * static_cast<double>(i + 1 + j);  // ranks are 1-based
        for (std::size_t k = i; k < j; ++k) {
            if (labels[idx[k]] == 1) {
                pos_rank_sum += avg_rank;
                ++n_pos;
            }
        }
        i = j;
    }
    std::size_t n_neg = n - n_pos;
    double u = pos_rank_sum - 0.5 * static_cast<double>(n_pos) * static_cast<double>(n_pos + 1);
    return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

double auprc(std::span<const double> scores, std::span<const int> labels) {
    check_two_classes(scores, labels);
    const std::size_t n = scores.size();
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

    std::size_t n_pos = 0;
    for (int l : labels) n_pos += (l == 1);

    double ap = 0.0;
    double prev_recall = 0.0;
    std::size_t tp = 0, fp = 0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j < n && scores[idx[j]] == scores[idx[i]]) ++j;
        for (std::size_t k = i; k < j; ++k) {
            if (labels[idx[k]] == 1) ++tp;
            else ++fp;
        }
        double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
        double recall = static_cast<double>(tp) / static_cast<double>(n_pos);
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
        i = j;
    }
    return ap;
}

double f1_at(std::span<const double> scores, std::span<const int> labels, double tau) {
    check_two_classes(scores, labels);
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        bool pred = scores[i] > tau;
        bool truth = labels[i] == 1;
        if (pred && truth) ++tp;
        else if (pred && !truth) ++fp;
        else if (!pred && truth) ++fn;
    }
    if (tp == 0) return 0.0;
    return 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn);
}

DetectionMetrics detection_metrics(std::span<const double> scores, std::span<const int> labels, double tau) {
    return {f1_at(scores, labels, tau), auroc(scores, labels), auprc(scores, labels)};
}

}  // namespace carve::detect
