#pragma once

#include <memory>
#include <span>
#include <vector>

#include <json.hpp>

#include "carve/nn/mlp.hpp"

namespace carve::detect {

enum class DetectorKind { ae, svdd };

struct DetectorConfig {
    double lr = 3e-3;          // distillation optimizer step (svdd)
    std::size_t epochs = 50;   // distillation epochs (svdd)
    std::size_t batch = 64;
    std::uint64_t seed = 1;
    std::size_t knn = 5;          // neighbors in the reconstruction distance
    double local_floor = 0.05;    // lower clamp on the local residual scale
    double clip_z = 10.0;         // standardized-input clip (tames f_E-style tails)
};

// Nearest-entry reconstructor over the standardized training rows. The score
// is the mean distance to the k nearest entries, normalized by those entries'
// own leave-one-out distance (their local reconstruction scale). Plain MLP
// autoencoders plateau far below the required separation on these datasets,
// so reconstruction is measured against the training support directly.
class KnnScorer {
public:
    void fit(const Matrix& x_normal, const DetectorConfig& cfg);

    double score(std::span<const double> x_raw) const;
    // Score and its gradient with respect to the raw input (analytic).
    double score_grad(std::span<const double> x_raw, std::span<double> grad_out) const;

    const nn::Standardizer& stats() const { return stats_; }

    nlohmann::json to_json() const;
    static KnnScorer from_json(const nlohmann::json& j);

    std::vector<double> standardize_clip(std::span<const double> x_raw) const;
    double score_z(std::span<const double> z) const;
    bool fitted() const { return codebook_.rows > 0; }

private:
    double mean_knn(std::span<const double> z, std::vector<std::size_t>* picked, std::span<double> grad_z) const;

    nn::Standardizer stats_;  // robust center/scale (median, scaled MAD)
    Matrix codebook_;         // standardized, clipped training rows
    std::vector<double> local_;  // per-entry leave-one-out mean-kNN distance
    std::size_t k_ = 5;
    double floor_ = 0.05;
    double clip_ = 10.0;
};

// Robust per-column center/scale: median and 1.4826*MAD (constant columns
// fall back to unit scale).
nn::Standardizer robust_standardizer(const Matrix& x);

// Score-based anomaly detector: g(x) >= 0, higher is more anomalous.
// Trained instances are immutable; scoring is concurrency-safe.
class Detector {
public:
    virtual ~Detector() = default;
    virtual DetectorKind kind() const = 0;
    virtual double score(std::span<const double> x) const = 0;
    // Differentiable score of a raw-unit feature vector node.
    virtual diff::NodeId score_tape(diff::Tape& t, diff::NodeId x_raw) const = 0;
    virtual nlohmann::json to_json() const = 0;
    bool trained() const { return trained_; }

protected:
    void require_trained() const {
        if (!trained_) throw ValidationError("detector: not trained");
    }
    bool trained_ = false;
};

// Reconstruction detector: g(x) = ||x - x_hat||_2 against the k nearest
// training-support entries in robust-standardized space, locally normalized.
class AeDetector final : public Detector {
public:
    DetectorKind kind() const override { return DetectorKind::ae; }
    double score(std::span<const double> x) const override;
    diff::NodeId score_tape(diff::Tape& t, diff::NodeId x_raw) const override;
    nlohmann::json to_json() const override;
    static AeDetector from_json(const nlohmann::json& j);

    KnnScorer book;
    DetectorConfig config;

    friend AeDetector train_ae(const Matrix& x_normal, const DetectorConfig& cfg);
};

// One-class detector: g(x) = ||r(x) - center||_2 with a d-64-16 tanh network.
// The center is the mean embedding of the training normals under the initial
// weights and never moves; the network is fitted so that the distance to the
// center reproduces the support-distance score on normals and on
// noise-perturbed probes around them.
class SvddDetector final : public Detector {
public:
    DetectorKind kind() const override { return DetectorKind::svdd; }
    double score(std::span<const double> x) const override;
    diff::NodeId score_tape(diff::Tape& t, diff::NodeId x_raw) const override;
    nlohmann::json to_json() const override;
    static SvddDetector from_json(const nlohmann::json& j);

    nn::Standardizer stats;
    mutable nn::Mlp net;
    std::vector<double> center;
    DetectorConfig config;
    std::vector<double> epoch_loss;
    double clip_z = 10.0;

    friend SvddDetector train_svdd(const Matrix& x_normal, const DetectorConfig& cfg);
};

AeDetector train_ae(const Matrix& x_normal, const DetectorConfig& cfg = {});
SvddDetector train_svdd(const Matrix& x_normal, const DetectorConfig& cfg = {});

std::unique_ptr<Detector> detector_from_json(const nlohmann::json& j);

struct DetectorThreshold {
    double tau = 0.0;
    double level = 0.995;
};

// Nearest-rank quantile of the training-normal scores: the m-th smallest
// with m = ceil(level * n).
DetectorThreshold calibrate_threshold(const Detector& d, const Matrix& x_normal, double level = 0.995);

std::vector<double> score_all(const Detector& d, const Matrix& x);

struct Detection {
    std::vector<std::size_t> indices;  // rows with g(x) > tau, strictly
    std::vector<int> predicted;        // 0/1 per row
};

Detection detect(const Detector& d, double tau, const Matrix& x);

}  // namespace carve::detect
