#pragma once

#include <optional>
#include <string>
#include <vector>

#include "carve/detect/detectors.hpp"
#include "carve/engine/engine.hpp"

namespace carve::recourse {

enum class EngineChoice { learned, exact };
enum class Baseline { causal, naive };

struct RecourseConfig {
    double lambda = 1e-3;
    double alpha = 0.5;
    double lr = 0.05;  // fixed step size of the policy update
    std::size_t epochs = 20;
    std::size_t batch = 1;  // per-sample updates by default
    std::uint64_t seed = 1;
    EngineChoice engine = EngineChoice::learned;
    Baseline baseline = Baseline::causal;
    std::vector<std::size_t> actionable;          // node indices, topologically sorted
    std::vector<std::size_t> hidden = {128, 128};

    void validate(std::size_t d) const;
    bool same_architecture_and_schedule(const RecourseConfig& o) const {
        return lr == o.lr && epochs == o.epochs && batch == o.batch && seed == o.seed && hidden == o.hidden &&
               actionable == o.actionable && lambda == o.lambda && alpha == o.alpha;
    }
};

// h_phi: feed-forward network whose outputs are scattered into the
// actionable coordinates of a d-vector; all other coordinates are exactly
// zero. Actions are in raw feature units.
class ActionPolicy {
public:
    ActionPolicy() = default;
    ActionPolicy(std::size_t d, const RecourseConfig& cfg, const nn::Standardizer& input_stats, Rng& rng);

    std::vector<double> predict(std::span<const double> x) const;
    diff::NodeId predict_tape(diff::Tape& t, std::span<const double> x) const;

    const std::vector<std::size_t>& actionable() const { return actionable_; }
    std::size_t dim() const { return d_; }
    std::vector<diff::Parameter*> params() const { return net_.params(); }
    void freeze();

    nlohmann::json to_json() const;
    static ActionPolicy from_json(const nlohmann::json& j);

private:
    std::size_t d_ = 0;
    std::vector<std::size_t> actionable_;
    nn::Standardizer input_stats_;
    mutable nn::Mlp net_;
};

// Eq-style recourse objective: max(g_cf - alpha * tau, 0) + lambda * ||c . theta||_2.
double recourse_loss(double g_score_of_cf, double tau, double alpha, double lambda, std::span<const double> cost,
                     std::span<const double> theta);

// Detector-specialized forms; reject a detector of the wrong kind.
double loss_svdd(const detect::Detector& det, std::span<const double> x_cf, double tau, double alpha, double lambda,
                 std::span<const double> cost, std::span<const double> theta);
double loss_ae(const detect::Detector& det, std::span<const double> x_cf, double tau, double alpha, double lambda,
               std::span<const double> cost, std::span<const double> theta);

// Eq-5 baseline: coordinate-wise x + theta, no causal propagation.
std::vector<double> naive_counterfactual(std::span<const double> x, std::span<const double> theta);

struct TrainLogRow {
    std::size_t epoch;
    double mean_loss;
    double mean_hinge;
    double mean_cost;
};

struct PolicyTrainResult {
    ActionPolicy policy;
    std::vector<TrainLogRow> log;
};

// ADCAR-style loop: per detected anomaly, theta = h_phi(x), counterfactual
// through the engine (or x + theta for the naive baseline), hinge + cost
// objective, plain gradient step on phi. `u_anom` supplies stored noise rows
// for the exact engine; it may be empty otherwise.
PolicyTrainResult train_policy(const Matrix& x_anom, const Matrix& u_anom, const detect::Detector& det, double tau,
                               const engine::CounterfactualEngine& eng, std::span<const double> cost,
                               const RecourseConfig& cfg);

void write_train_log(const std::vector<TrainLogRow>& log, const std::filesystem::path& path);

}  // namespace carve::recourse
