#pragma once

#include <functional>
#include <memory>
#include <span>
#include <vector>

#include <json.hpp>

#include "carve/nn/mlp.hpp"
#include "carve/scm/scm.hpp"

namespace carve::engine {

struct EngineConfig {
    std::size_t latent_dim = 4;
    std::size_t hidden = 32;
    std::size_t rounds = 2;  // message-passing rounds
    double lr = 1e-3;
    std::size_t epochs = 40;
    std::size_t batch = 64;
    std::uint64_t seed = 1;
    double obs_variance = 0.01;  // fixed observation variance, standardized space
    double clip_z = 10.0;        // standardized-input clip
    bool standardize = true;
    // Overwrite the whole vector with the decoder output after a hard
    // intervention instead of only the intervened node and its descendants.
    bool literal_decoder_overwrite = false;
};

struct TrainReport {
    bool untrained = false;
    double recon_mse = 0.0;             // mean-decode squared error per coordinate, standardized
    std::vector<double> kl_per_node;    // mean KL to the standard-normal prior
    std::vector<double> epoch_loss;     // mean negative ELBO per epoch
};

// Counterfactual inference under additive-shift recourse actions. x and the
// returned vector are in raw feature units; theta holds raw additive shifts,
// zero outside the actionable set. `u` (stored exogenous draws) is consulted
// only by the exact implementation.
class CounterfactualEngine {
public:
    virtual ~CounterfactualEngine() = default;
    virtual const scm::CausalGraph& graph() const = 0;
    virtual std::vector<double> soft_counterfactual(std::span<const double> x, std::span<const double> theta,
                                                    std::span<const std::size_t> actionable,
                                                    std::span<const double> u = {}) const = 0;
    // Same computation on a tape; returns the d-vector node for x(theta).
    virtual diff::NodeId soft_counterfactual_tape(diff::Tape& t, std::span<const double> x, diff::NodeId theta,
                                                  std::span<const std::size_t> actionable,
                                                  std::span<const double> u = {}) const = 0;
};

// Graph-conditioned variational autoencoder. Encoder and decoder are
// message-passing networks masked by the (possibly mutilated) adjacency;
// per-node heads emit latent (mean, log-variance) blocks and reconstruction
// means. Intervention-time inference uses encoder means, no sampling.
class GraphVae final : public CounterfactualEngine {
public:
    GraphVae(scm::CausalGraph graph, EngineConfig config);

    const scm::CausalGraph& graph() const override { return graph_; }
    const EngineConfig& config() const { return config_; }
    const nn::Standardizer& stats() const { return stats_; }
    bool trained() const { return trained_; }

    // Four-step hard intervention do(node = value), raw units.
    std::vector<double> counterfactual_hard(std::span<const double> x, std::size_t node, double value) const;

    std::vector<double> soft_counterfactual(std::span<const double> x, std::span<const double> theta,
                                            std::span<const std::size_t> actionable,
                                            std::span<const double> u = {}) const override;
    diff::NodeId soft_counterfactual_tape(diff::Tape& t, std::span<const double> x, diff::NodeId theta,
                                          std::span<const std::size_t> actionable,
                                          std::span<const double> u = {}) const override;

    nlohmann::json to_json() const;
    // Refuses checkpoints whose graph hash differs from `expected`.
    static GraphVae from_json(const nlohmann::json& j, const scm::CausalGraph& expected);

    friend GraphVae train_engine(const Matrix& x, const scm::CausalGraph& graph, const EngineConfig& config,
                                 TrainReport* report, const nn::Standardizer* stats);

private:
    struct MessageBlock {
        std::vector<diff::Parameter> in_w, in_b;            // per node
        std::vector<diff::Parameter> self_w, msg_w, round_b;  // per round
        std::vector<diff::Parameter> head_w, head_b;        // per node
    };

    void init_params(Rng& rng);
    std::vector<diff::Parameter*> params() const;

    // Encoder means (per-node latent blocks) under the given parent lists.
    std::vector<diff::NodeId> encode_mu(diff::Tape& t, const std::vector<diff::NodeId>& x_std,
                                        const std::vector<std::vector<std::size_t>>& parents) const;
    // Encoder (mu, logvar) pairs for training.
    std::pair<std::vector<diff::NodeId>, std::vector<diff::NodeId>> encode(
        diff::Tape& t, const std::vector<diff::NodeId>& x_std,
        const std::vector<std::vector<std::size_t>>& parents) const;
    std::vector<diff::NodeId> decode(diff::Tape& t, const std::vector<diff::NodeId>& z,
                                     const std::vector<std::vector<std::size_t>>& parents) const;

    std::vector<diff::NodeId> message_pass(diff::Tape& t, MessageBlock& block,
                                           const std::vector<diff::NodeId>& inputs,
                                           const std::vector<std::vector<std::size_t>>& parents) const;

    std::vector<diff::NodeId> hard_step_tape(diff::Tape& t, const std::vector<diff::NodeId>& cur_std,
                                             std::size_t node, diff::NodeId xbar_std) const;

    scm::CausalGraph graph_;
    EngineConfig config_;
    nn::Standardizer stats_;
    std::vector<std::vector<std::size_t>> parents_;  // full-graph parent lists
    mutable MessageBlock enc_, dec_;
    mutable std::vector<diff::Parameter> enc_lv_w_, enc_lv_b_;  // second encoder head
    bool trained_ = false;
};

// Maximizes the ELBO (Gaussian likelihood with fixed observation variance,
// KL to a standard-normal prior) with reparameterized sampling.
GraphVae train_engine(const Matrix& x, const scm::CausalGraph& graph, const EngineConfig& config,
                      TrainReport* report = nullptr, const nn::Standardizer* stats = nullptr);

// Ground-truth engine: abduction-action-prediction through the SCM, using
// stored noise when supplied and residual abduction otherwise. The tape path
// exposes gradients through a local finite-difference Jacobian.
class ExactEngine final : public CounterfactualEngine {
public:
    explicit ExactEngine(const scm::Scm& scm, double fd_step = 1e-4) : scm_(&scm), fd_step_(fd_step) {}

    const scm::CausalGraph& graph() const override { return scm_->graph(); }
    std::vector<double> soft_counterfactual(std::span<const double> x, std::span<const double> theta,
                                            std::span<const std::size_t> actionable,
                                            std::span<const double> u = {}) const override;
    diff::NodeId soft_counterfactual_tape(diff::Tape& t, std::span<const double> x, diff::NodeId theta,
                                          std::span<const std::size_t> actionable,
                                          std::span<const double> u = {}) const override;

private:
    const scm::Scm* scm_;
    double fd_step_;
};

struct FidelityResult {
    double mse = 0.0;  // mean over pairs of per-pair mean squared error (raw units)
    double sse = 0.0;  // standard deviation of the per-pair squared errors
};

using ThetaSampler = std::function<std::vector<double>(std::size_t row)>;

// Compares engine counterfactuals with exact counterfactuals on stored
// (x, u) pairs under sampled actions.
FidelityResult cf_fidelity(const CounterfactualEngine& eng, const scm::Scm& scm, const Matrix& x, const Matrix& u,
                           std::span<const std::size_t> actionable, const ThetaSampler& sampler);

// Default fidelity action sampler: theta_i ~ N(0, (0.5 * scale_i)^2) on the
// actionable set.
ThetaSampler default_theta_sampler(std::span<const double> feature_scale, std::span<const std::size_t> actionable,
                                   std::size_t d, std::uint64_t seed);

}  // namespace carve::engine
