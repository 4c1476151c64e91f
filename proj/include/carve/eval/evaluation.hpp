#pragma once

#include <optional>
#include <string>
#include <vector>

#include "carve/data/bundle.hpp"
#include "carve/recourse/recourse.hpp"

namespace carve::eval {

struct FlipReport {
    std::size_t n_detected = 0;
    double flip_detector = 0.0;      // fraction with g(x(theta)) <= tau
    double flip_ground_truth = 0.0;  // fraction relabeled normal by the ground-truth rule
    std::optional<double> norm_mean;  // ||c . theta||_2 over successfully flipped rows
    std::optional<double> norm_std;
};

// Fraction of counterfactual rows the detector now calls normal (g <= tau).
double flip_ratio(const Matrix& counterfactuals, const detect::Detector& det, double tau);

struct GroundTruthFlip {
    double ratio = 0.0;
    std::vector<bool> flipped;
};

// Exact counterfactuals by stored-noise replay, then the label rule.
GroundTruthFlip ground_truth_flip(const Matrix& x, const Matrix& u, const Matrix& thetas, const scm::Scm& scm,
                                  const data::LabelRule& rule);

struct NormStats {
    bool defined = false;  // empty mask leaves the statistic undefined, not zero
    double mean = 0.0;
    double std = 0.0;
};

NormStats action_norm_on_flipped(const Matrix& thetas, std::span<const double> cost, const std::vector<bool>& mask);

double spearman(std::span<const double> a, std::span<const double> b);

// Everything needed to evaluate one trained policy against one dataset.
struct EvalContext {
    const data::DatasetBundle* bundle = nullptr;
    const scm::Scm* scm = nullptr;
    data::LabelRule rule;
    const detect::Detector* detector = nullptr;
    double tau = 0.0;
    const engine::CounterfactualEngine* engine = nullptr;  // learned engine (case reports); may be null
    // Detector flips are measured on SCM-generated counterfactuals by
    // default; set false to measure them on engine-generated ones.
    bool detector_flip_on_scm_cf = true;
    // Norm column aggregates over ground-truth-flipped rows by default; set
    // false to aggregate over detector-flipped rows.
    bool norm_on_ground_truth_flips = true;
};

// Rows of the unlabeled split the detector flags, with their stored noise.
struct DetectedSet {
    Matrix x;
    Matrix u;
    std::vector<std::size_t> rows;  // indices into the unlabeled split
};

DetectedSet collect_detected(const data::DatasetBundle& bundle, const detect::Detector& det, double tau);

FlipReport evaluate_policy(const EvalContext& ctx, const DetectedSet& det_set, const recourse::ActionPolicy& policy);

struct SweepPoint {
    double value = 0.0;
    bool failed = false;
    std::string error;
    FlipReport report;
};

struct SweepGrid {
    std::string parameter;  // "lambda" | "alpha"
    std::vector<SweepPoint> points;
};

// Retrains the policy per parameter value with a shared seed; detector and
// engine are reused across the grid.
SweepGrid run_sweep(const std::string& parameter, std::span<const double> values, const EvalContext& ctx,
                    const DetectedSet& det_set, const recourse::RecourseConfig& base_cfg);

// Paper-style default grids. The AE lambda grid swaps 5e-4 for a 1e-6 tail.
std::vector<double> default_lambda_values(detect::DetectorKind kind);
std::vector<double> default_alpha_values();

// Per-sample table: factual, actions, engine counterfactual, exact
// counterfactual, with the label quantity per row and "/" on non-actionable
// action cells.
std::string case_report(const std::vector<std::string>& feature_names, const std::string& label_name,
                        bool integer_label, std::span<const double> x, std::span<const double> theta,
                        std::span<const double> cf_engine, std::span<const double> cf_exact,
                        std::span<const std::size_t> actionable, const data::LabelRule& rule);

struct Aggregate {
    double mean = 0.0;
    double std = 0.0;
};

Aggregate aggregate(std::span<const double> values);

void write_flip_reports_csv(const std::filesystem::path& path, const std::vector<std::string>& row_names,
                            const std::vector<FlipReport>& reports);
void write_sweep_csv(const std::filesystem::path& path, const SweepGrid& grid);

}  // namespace carve::eval
