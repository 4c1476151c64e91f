#include "carve/recourse/recourse.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "carve/diff/optim.hpp"
#include "carve/serialize.hpp"

namespace carve::recourse {

void RecourseConfig::validate(std::size_t d) const {
    if (lambda < 0.0) throw ValidationError("recourse config: lambda must be >= 0");
    if (!(alpha > 0.0 && alpha <= 1.0)) throw ValidationError("recourse config: alpha must be in (0, 1]");
    if (lr <= 0.0) throw ValidationError("recourse config: learning rate must be positive");
    for (std::size_t a : actionable)
        if (a >= d) throw ValidationError("recourse config: actionable index out of range");
}

ActionPolicy::ActionPolicy(std::size_t d, const RecourseConfig& cfg, const nn::Standardizer& input_stats, Rng& rng)
    : d_(d), actionable_(cfg.actionable), input_stats_(input_stats) {
    std::vector<std::size_t> widths{d};
    widths.insert(widths.end(), cfg.hidden.begin(), cfg.hidden.end());
    widths.push_back(actionable_.size());
    // Zero-initialized final layer: training starts from the no-action policy.
    net_ = nn::Mlp::make(widths, true, rng, true);
}

diff::NodeId ActionPolicy::predict_tape(diff::Tape& t, std::span<const double> x) const {
    diff::NodeId in = input_stats_.apply_tape(t, t.constant(diff::Tensor::vec({x.begin(), x.end()})));
    diff::NodeId raw = net_.forward(t, in);  // |actionable| outputs

    // Scatter into a d-vector; non-actionable coordinates are exact zeros.
    std::vector<diff::NodeId> coords(d_);
    diff::NodeId zero = t.constant_scalar(0.0);
    for (std::size_t i = 0; i < d_; ++i) coords[i] = zero;
    for (std::size_t k = 0; k < actionable_.size(); ++k) coords[actionable_[k]] = t.pick(raw, k);
    return t.concat(coords);
}

std::vector<double> ActionPolicy::predict(std::span<const double> x) const {
    diff::Tape t;
    return t.value(predict_tape(t, x)).v;
}

void ActionPolicy::freeze() {
    for (auto* p : net_.params()) p->trainable = false;
}

nlohmann::json ActionPolicy::to_json() const {
    return {{"kind", "policy"},
            {"d", d_},
            {"actionable", actionable_},
            {"input_stats", serialize::standardizer_to_json(input_stats_)},
            {"net", serialize::mlp_to_json(net_)}};
}

ActionPolicy ActionPolicy::from_json(const nlohmann::json& j) {
    if (j.at("kind").get<std::string>() != "policy") throw ValidationError("checkpoint kind is not 'policy'");
    ActionPolicy p;
    p.d_ = j.at("d").get<std::size_t>();
    p.actionable_ = j.at("actionable").get<std::vector<std::size_t>>();
    p.input_stats_ = serialize::standardizer_from_json(j.at("input_stats"));
    p.net_ = serialize::mlp_from_json(j.at("net"));
    return p;
}

double recourse_loss(double g_score_of_cf, double tau, double alpha, double lambda, std::span<const double> cost,
                     std::span<const double> theta) {
    if (!(tau > 0.0)) throw ValidationError("recourse_loss: tau must be positive");
    if (cost.size() != theta.size()) throw ValidationError("recourse_loss: cost/theta size mismatch");
    double hinge = std::max(g_score_of_cf - alpha * tau, 0.0);
    double norm = 0.0;
    for (std::size_t i = 0; i < cost.size(); ++i) norm += cost[i] * theta[i] * cost[i] * theta[i];
    return hinge + lambda * std::sqrt(norm);
}

double loss_svdd(const detect::Detector& det, std::span<const double> x_cf, double tau, double alpha, double lambda,
                 std::span<const double> cost, std::span<const double> theta) {
    if (det.kind() != detect::DetectorKind::svdd) throw ValidationError("loss_svdd: detector is not a Deep SVDD model");
    return recourse_loss(det.score(x_cf), tau, alpha, lambda, cost, theta);
}

double loss_ae(const detect::Detector& det, std::span<const double> x_cf, double tau, double alpha, double lambda,
               std::span<const double> cost, std::span<const double> theta) {
    if (det.kind() != detect::DetectorKind::ae) throw ValidationError("loss_ae: detector is not an autoencoder model");
    return recourse_loss(det.score(x_cf), tau, alpha, lambda, cost, theta);
}

std::vector<double> naive_counterfactual(std::span<const double> x, std::span<const double> theta) {
    if (x.size() != theta.size()) throw ValidationError("naive_counterfactual: size mismatch");
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] + theta[i];
    return out;
}

namespace {

std::vector<std::size_t> shuffled_indices(std::size_t n, Rng& rng) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    for (std::size_t i = n; i > 1; --i) {
        std::size_t j = rng.next_u64() % i;
        std::swap(idx[i - 1], idx[j]);
    }
    return idx;
}

}  // namespace

PolicyTrainResult train_policy(const Matrix& x_anom, const Matrix& u_anom, const detect::Detector& det, double tau,
                               const engine::CounterfactualEngine& eng, std::span<const double> cost,
                               const RecourseConfig& cfg) {
    if (x_anom.rows == 0) throw ValidationError("train_policy: no detected anomalies to train on");
    const std::size_t d = x_anom.cols;
    cfg.validate(d);
    if (cost.size() != d) throw ValidationError("train_policy: cost vector size mismatch");
    if (cfg.engine == EngineChoice::exact && u_anom.rows != 0 && u_anom.rows != x_anom.rows) {
        throw ValidationError("train_policy: stored noise rows do not match anomaly rows");
    }

    nn::Standardizer input_stats = nn::Standardizer::fit(x_anom);
    Rng init_rng = derive_stream(cfg.seed, fnv1a("policy_init"));
    PolicyTrainResult result;
    result.policy = ActionPolicy(d, cfg, input_stats, init_rng);
    ActionPolicy& policy = result.policy;

    auto params = policy.params();
    diff::Sgd opt{cfg.lr};
    diff::Tape t;

    std::vector<double> cost_v(cost.begin(), cost.end());
    const double neg_alpha_tau = -cfg.alpha * tau;

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng order_rng = derive_stream(cfg.seed, fnv1a("policy_shuffle") + epoch);
        auto order = shuffled_indices(x_anom.rows, order_rng);
        double sum_loss = 0.0, sum_hinge = 0.0, sum_cost = 0.0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch) {
            std::size_t end = std::min(order.size(), start + cfg.batch);
            double inv_b = 1.0 / static_cast<double>(end - start);
            diff::zero_grads(params);
            for (std::size_t k = start; k < end; ++k) {
                std::size_t row = order[k];
                auto x = x_anom.row(row);
                t.reset();
                diff::NodeId theta = policy.predict_tape(t, x);

                diff::NodeId x_cf;
                if (cfg.baseline == Baseline::naive) {
                    x_cf = t.add(t.constant(diff::Tensor::vec({x.begin(), x.end()})), theta);
                } else {
                    std::span<const double> u =
                        u_anom.rows == x_anom.rows ? std::span<const double>(u_anom.row(row)) : std::span<const double>{};
                    x_cf = eng.soft_counterfactual_tape(t, x, theta, cfg.actionable, u);
                }

                diff::NodeId score = det.score_tape(t, x_cf);
                diff::NodeId hinge = t.hinge_max0(t.add(score, t.constant_scalar(neg_alpha_tau)));
                diff::NodeId cost_term =
                    t.scale(t.l2norm(t.mul(t.constant_vec(std::vector<double>(cost_v)), theta)), cfg.lambda);
                diff::NodeId loss = t.add(hinge, cost_term);

                double lv = t.value(loss).v[0];
                if (!std::isfinite(lv)) {
                    throw ValidationError("train_policy: non-finite loss at sample index " + std::to_string(row));
                }
                sum_loss += lv;
                sum_hinge += t.value(hinge).v[0];
                sum_cost += t.value(cost_term).v[0];
                t.backward(t.scale(loss, inv_b));
            }
            opt.step(params);
        }
        double n = static_cast<double>(x_anom.rows);
        result.log.push_back({epoch, sum_loss / n, sum_hinge / n, sum_cost / n});
    }
    policy.freeze();
    return result;
}

void write_train_log(const std::vector<TrainLogRow>& log, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << "epoch,mean_loss,mean_hinge,mean_cost\n";
    for (const auto& row : log) {
        out << row.epoch << "," << format_double(row.mean_loss) << "," << format_double(row.mean_hinge) << ","
            << format_double(row.mean_cost) << "\n";
    }
}

}  // namespace carve::recourse
