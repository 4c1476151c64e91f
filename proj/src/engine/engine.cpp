#include "carve/engine/engine.hpp"

#include <algorithm>
#include <cmath>

#include "carve/diff/optim.hpp"
#include "carve/serialize.hpp"

namespace carve::engine {

namespace {

std::vector<std::vector<std::size_t>> parent_lists(const scm::CausalGraph& g) {
    std::vector<std::vector<std::size_t>> out(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) out[i] = g.parents(i);
    return out;
}

void check_actionable_order(const scm::CausalGraph& g, std::span<const std::size_t> actionable) {
    for (std::size_t i = 0; i < actionable.size(); ++i) {
        if (actionable[i] >= g.size()) throw ValidationError("actionable set: node index out of range");
        if (i > 0 && g.topo_position(actionable[i]) <= g.topo_position(actionable[i - 1])) {
            throw ValidationError("actionable set must be sorted by the graph's topological order");
        }
    }
}

std::vector<double> clip_all(std::vector<double> v, double clip) {
    for (double& x : v) x = std::clamp(x, -clip, clip);
    return v;
}

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

GraphVae::GraphVae(scm::CausalGraph graph, EngineConfig config)
    : graph_(std::move(graph)), config_(config), stats_(nn::Standardizer::identity(graph_.size())),
      parents_(parent_lists(graph_)) {}

void GraphVae::init_params(Rng& rng) {
    const std::size_t d = graph_.size();
    const std::size_t h = config_.hidden;
    const std::size_t dz = config_.latent_dim;
    auto mat = [&rng](std::size_t rows, std::size_t cols) {
        double a = std::sqrt(6.0 / static_cast<double>(rows + cols));
        std::vector<double> w(rows * cols);
        for (double& v : w) v = (2.0 * rng.uniform() - 1.0) * a;
        return diff::Parameter(diff::Tensor::matrix(rows, cols, std::move(w)));
    };
    auto vec = [](std::size_t n) { return diff::Parameter(diff::Tensor::zeros({n})); };

    auto build_block = [&](MessageBlock& b, std::size_t in_dim, std::size_t out_dim) {
        b.in_w.clear();
        b.in_b.clear();
        b.head_w.clear();
        b.head_b.clear();
        b.self_w.clear();
        b.msg_w.clear();
        b.round_b.clear();
        for (std::size_t i = 0; i < d; ++i) {
            b.in_w.push_back(mat(h, in_dim));
            b.in_b.push_back(vec(h));
        }
        for (std::size_t t = 0; t < config_.rounds; ++t) {
            b.self_w.push_back(mat(h, h));
            b.msg_w.push_back(mat(h, h));
            b.round_b.push_back(vec(h));
        }
        for (std::size_t i = 0; i < d; ++i) {
            b.head_w.push_back(mat(out_dim, h));
            b.head_b.push_back(vec(out_dim));
        }
    };
    build_block(enc_, 1, dz);
    build_block(dec_, dz, 1);
    enc_lv_w_.clear();
    enc_lv_b_.clear();
    for (std::size_t i = 0; i < d; ++i) {
        enc_lv_w_.push_back(mat(dz, config_.hidden));
        enc_lv_b_.push_back(vec(dz));
    }
}

std::vector<diff::Parameter*> GraphVae::params() const {
    std::vector<diff::Parameter*> out;
    auto collect = [&out](const std::vector<diff::Parameter>& v) {
        for (const auto& p : v) out.push_back(const_cast<diff::Parameter*>(&p));
    };
    for (const MessageBlock* b : {&enc_, &dec_}) {
        collect(b->in_w);
        collect(b->in_b);
        collect(b->self_w);
        collect(b->msg_w);
        collect(b->round_b);
        collect(b->head_w);
        collect(b->head_b);
    }
    collect(enc_lv_w_);
    collect(enc_lv_b_);
    return out;
}

std::vector<diff::NodeId> GraphVae::message_pass(diff::Tape& t, MessageBlock& block,
                                                 const std::vector<diff::NodeId>& inputs,
                                                 const std::vector<std::vector<std::size_t>>& parents) const {
    const std::size_t d = graph_.size();
    std::vector<diff::NodeId> h(d);
    for (std::size_t i = 0; i < d; ++i) {
        h[i] = t.tanh(t.affine(t.use(block.in_w[i]), inputs[i], t.use(block.in_b[i])));
    }
    diff::NodeId zero_h = t.constant(diff::Tensor::zeros({config_.hidden}));
    for (std::size_t round = 0; round < config_.rounds; ++round) {
        std::vector<diff::NodeId> next(d);
        for (std::size_t i = 0; i < d; ++i) {
            diff::NodeId self_term = t.affine(t.use(block.self_w[round]), h[i], t.use(block.round_b[round]));
            diff::NodeId msg = zero_h;
            for (std::size_t p : parents[i]) msg = (msg == zero_h) ? h[p] : t.add(msg, h[p]);
            if (!parents[i].empty()) {
                self_term = t.add(self_term, t.affine(t.use(block.msg_w[round]), msg, zero_h));
            }
            next[i] = t.tanh(self_term);
        }
        h = std::move(next);
    }
    return h;
}

std::vector<diff::NodeId> GraphVae::encode_mu(diff::Tape& t, const std::vector<diff::NodeId>& x_std,
                                              const std::vector<std::vector<std::size_t>>& parents) const {
    auto h = message_pass(t, enc_, x_std, parents);
    std::vector<diff::NodeId> mu(graph_.size());
    for (std::size_t i = 0; i < graph_.size(); ++i) {
        mu[i] = t.affine(t.use(enc_.head_w[i]), h[i], t.use(enc_.head_b[i]));
    }
    return mu;
}

std::pair<std::vector<diff::NodeId>, std::vector<diff::NodeId>> GraphVae::encode(
    diff::Tape& t, const std::vector<diff::NodeId>& x_std,
    const std::vector<std::vector<std::size_t>>& parents) const {
    auto h = message_pass(t, enc_, x_std, parents);
    std::vector<diff::NodeId> mu(graph_.size()), lv(graph_.size());
    for (std::size_t i = 0; i < graph_.size(); ++i) {
        mu[i] = t.affine(t.use(enc_.head_w[i]), h[i], t.use(enc_.head_b[i]));
        lv[i] = t.affine(t.use(enc_lv_w_[i]), h[i], t.use(enc_lv_b_[i]));
    }
    return {std::move(mu), std::move(lv)};
}

std::vector<diff::NodeId> GraphVae::decode(diff::Tape& t, const std::vector<diff::NodeId>& z,
                                           const std::vector<std::vector<std::size_t>>& parents) const {
    auto h = message_pass(t, dec_, z, parents);
    std::vector<diff::NodeId> rec(graph_.size());
    for (std::size_t i = 0; i < graph_.size(); ++i) {
        rec[i] = t.affine(t.use(dec_.head_w[i]), h[i], t.use(dec_.head_b[i]));
    }
    return rec;
}

std::vector<diff::NodeId> GraphVae::hard_step_tape(diff::Tape& t, const std::vector<diff::NodeId>& cur_std,
                                                   std::size_t node, diff::NodeId xbar_std) const {
    // Abduct under the full graph, re-abduct the intervened node under the
    // mutilated graph, splice its latent block, decode under the mutilated
    // graph.
    std::vector<diff::NodeId> z = encode_mu(t, cur_std, parents_);
    std::vector<diff::NodeId> xbar = cur_std;
    xbar[node] = xbar_std;
    std::vector<std::vector<std::size_t>> mutilated = parents_;
    mutilated[node].clear();
    std::vector<diff::NodeId> zbar = encode_mu(t, xbar, mutilated);
    z[node] = zbar[node];
    std::vector<diff::NodeId> rec = decode(t, z, mutilated);

    std::vector<diff::NodeId> out = cur_std;
    out[node] = xbar_std;
    if (config_.literal_decoder_overwrite) {
        for (std::size_t i = 0; i < out.size(); ++i)
            if (i != node) out[i] = rec[i];
    } else {
        for (std::size_t dsc : graph_.descendants(node)) out[dsc] = rec[dsc];
    }
    return out;
}

std::vector<double> GraphVae::counterfactual_hard(std::span<const double> x, std::size_t node, double value) const {
    if (!trained_) throw ValidationError("engine: not trained");
    if (node >= graph_.size()) throw ValidationError("counterfactual_hard: unknown node");
    diff::Tape t;
    std::vector<double> xs = clip_all(stats_.apply(x), config_.clip_z);
    std::vector<diff::NodeId> cur(graph_.size());
    for (std::size_t i = 0; i < graph_.size(); ++i) cur[i] = t.constant(diff::Tensor::scalar(xs[i]));
    double vbar = (value - stats_.mean[node]) / stats_.std[node];
    auto out = hard_step_tape(t, cur, node, t.constant(diff::Tensor::scalar(vbar)));
    std::vector<double> res(graph_.size());
    for (std::size_t i = 0; i < graph_.size(); ++i) res[i] = t.value(out[i]).v[0] * stats_.std[i] + stats_.mean[i];
    return res;
}

diff::NodeId GraphVae::soft_counterfactual_tape(diff::Tape& t, std::span<const double> x, diff::NodeId theta,
                                                std::span<const std::size_t> actionable,
                                                std::span<const double>) const {
    if (!trained_) throw ValidationError("engine: not trained");
    check_actionable_order(graph_, actionable);
    std::vector<double> xs = clip_all(stats_.apply(x), config_.clip_z);
    std::vector<diff::NodeId> cur(graph_.size());
    for (std::size_t i = 0; i < graph_.size(); ++i) cur[i] = t.constant(diff::Tensor::scalar(xs[i]));

    for (std::size_t node : actionable) {
        diff::NodeId shift_std = t.scale(t.pick(theta, node), 1.0 / stats_.std[node]);
        diff::NodeId xbar = t.add(cur[node], shift_std);
        cur = hard_step_tape(t, cur, node, xbar);
    }

    // Back to raw units.
    std::vector<diff::NodeId> raw(graph_.size());
    for (std::size_t i = 0; i < graph_.size(); ++i) {
        raw[i] = t.add(t.scale(cur[i], stats_.std[i]), t.constant(diff::Tensor::scalar(stats_.mean[i])));
    }
    return t.concat(raw);
}

std::vector<double> GraphVae::soft_counterfactual(std::span<const double> x, std::span<const double> theta,
                                                  std::span<const std::size_t> actionable,
                                                  std::span<const double> u) const {
    diff::Tape t;
    diff::NodeId th = t.constant(diff::Tensor::vec({theta.begin(), theta.end()}));
    diff::NodeId out = soft_counterfactual_tape(t, x, th, actionable, u);
    return t.value(out).v;
}

GraphVae train_engine(const Matrix& x, const scm::CausalGraph& graph, const EngineConfig& config,
                      TrainReport* report, const nn::Standardizer* stats) {
    if (x.cols != graph.size()) throw ValidationError("train_engine: column count does not match graph");
    if (x.rows < 2) throw ValidationError("train_engine: need at least 2 rows");

    GraphVae eng(graph, config);
    if (config.standardize) {
        eng.stats_ = stats ? *stats : nn::Standardizer::fit(x);
    }
    Rng init_rng = derive_stream(config.seed, fnv1a("engine_init"));
    eng.init_params(init_rng);

    const std::size_t d = graph.size();
    const std::size_t dz = config.latent_dim;
    Matrix z(x.rows, d);
    for (std::size_t r = 0; r < x.rows; ++r) {
        auto zr = clip_all(eng.stats_.apply(x.row(r)), config.clip_z);
        std::copy(zr.begin(), zr.end(), z.row(r).begin());
    }

    TrainReport local;
    TrainReport& rep = report ? *report : local;
    rep.untrained = (config.epochs == 0);
    rep.epoch_loss.clear();

    auto params = eng.params();
    diff::Adam opt;
    opt.lr = config.lr;
    diff::Tape t;
    Rng noise_rng = derive_stream(config.seed, fnv1a("engine_reparam"));
    const double inv_two_var = 1.0 / (2.0 * config.obs_variance);

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        Rng order_rng = derive_stream(config.seed, fnv1a("engine_shuffle") + epoch);
        auto order = shuffled_indices(z.rows, order_rng);
        double epoch_sum = 0.0;
        for (std::size_t start = 0; start < order.size(); start += config.batch) {
            std::size_t end = std::min(order.size(), start + config.batch);
            double inv_b = 1.0 / static_cast<double>(end - start);
            t.reset();
            diff::NodeId batch_loss = t.constant_scalar(0.0);
            for (std::size_t k = start; k < end; ++k) {
                auto row = z.row(order[k]);
                std::vector<diff::NodeId> xin(d);
                for (std::size_t i = 0; i < d; ++i) xin[i] = t.constant(diff::Tensor::scalar(row[i]));
                auto [mu, lv] = eng.encode(t, xin, eng.parents_);

                std::vector<diff::NodeId> zs(d);
                for (std::size_t i = 0; i < d; ++i) {
                    std::vector<double> eps(dz);
                    for (double& e : eps) e = noise_rng.normal();
                    diff::NodeId sigma = t.exp(t.scale(lv[i], 0.5));
                    zs[i] = t.add(mu[i], t.mul(sigma, t.constant_vec(std::move(eps))));
                }
                auto rec = eng.decode(t, zs, eng.parents_);

                // Negative ELBO: Gaussian reconstruction + KL, constants dropped.
                diff::NodeId loss = t.constant_scalar(0.0);
                for (std::size_t i = 0; i < d; ++i) {
                    diff::NodeId err = t.sub(rec[i], xin[i]);
                    loss = t.add(loss, t.scale(t.square_sum(err), inv_two_var));
                    diff::NodeId ones = t.constant(diff::Tensor::vec(std::vector<double>(dz, 1.0)));
                    diff::NodeId kl_inner =
                        t.add(t.add(t.mul(mu[i], mu[i]), t.exp(lv[i])), t.scale(t.add(lv[i], ones), -1.0));
                    loss = t.add(loss, t.scale(t.sum(kl_inner), 0.5));
                }
                double lval = t.value(loss).v[0];
                if (!std::isfinite(lval)) {
                    throw ValidationError("train_engine: non-finite loss at epoch " + std::to_string(epoch) +
                                          ", batch " + std::to_string(start / config.batch));
                }
                epoch_sum += lval;
                batch_loss = t.add(batch_loss, loss);
            }
            diff::zero_grads(params);
            t.backward(t.scale(batch_loss, inv_b));
            opt.step(params);
        }
        rep.epoch_loss.push_back(epoch_sum / static_cast<double>(z.rows));
    }

    eng.trained_ = true;
    for (auto* p : params) p->trainable = false;

    // Mean-decode diagnostics.
    rep.kl_per_node.assign(d, 0.0);
    double mse_sum = 0.0;
    std::size_t probe = std::min<std::size_t>(z.rows, 2000);
    for (std::size_t r = 0; r < probe; ++r) {
        t.reset();
        auto row = z.row(r);
        std::vector<diff::NodeId> xin(d);
        for (std::size_t i = 0; i < d; ++i) xin[i] = t.constant(diff::Tensor::scalar(row[i]));
        auto [mu, lv] = eng.encode(t, xin, eng.parents_);
        auto rec = eng.decode(t, mu, eng.parents_);
        for (std::size_t i = 0; i < d; ++i) {
            double e = t.value(rec[i]).v[0] - row[i];
            mse_sum += e * e;
            const auto& m = t.value(mu[i]).v;
            const auto& l = t.value(lv[i]).v;
            double kl = 0.0;
            for (std::size_t q = 0; q < dz; ++q) kl += 0.5 * (m[q] * m[q] + std::exp(l[q]) - 1.0 - l[q]);
            rep.kl_per_node[i] += kl;
        }
    }
    if (probe > 0) {
        mse_sum /= static_cast<double>(probe * d);
        for (double& v : rep.kl_per_node) v /= static_cast<double>(probe);
    }
    rep.recon_mse = mse_sum;
    return eng;
}

nlohmann::json GraphVae::to_json() const {
    nlohmann::json tensors;
    auto put = [&tensors](const std::string& name, const std::vector<diff::Parameter>& v) {
        for (std::size_t i = 0; i < v.size(); ++i) {
            tensors[name + "." + std::to_string(i)] = serialize::tensor_to_json(v[i].value);
        }
    };
    put("enc.in_w", enc_.in_w);
    put("enc.in_b", enc_.in_b);
    put("enc.self_w", enc_.self_w);
    put("enc.msg_w", enc_.msg_w);
    put("enc.round_b", enc_.round_b);
    put("enc.head_w", enc_.head_w);
    put("enc.head_b", enc_.head_b);
    put("enc.lv_w", enc_lv_w_);
    put("enc.lv_b", enc_lv_b_);
    put("dec.in_w", dec_.in_w);
    put("dec.in_b", dec_.in_b);
    put("dec.self_w", dec_.self_w);
    put("dec.msg_w", dec_.msg_w);
    put("dec.round_b", dec_.round_b);
    put("dec.head_w", dec_.head_w);
    put("dec.head_b", dec_.head_b);

    nlohmann::json edges = nlohmann::json::array();
    for (const auto& [p, c] : graph_.edges()) edges.push_back({p, c});
    return {{"kind", "engine"},
            {"graph_hash", scm::graph_hash(graph_)},
            {"graph", {{"nodes", graph_.names()}, {"edges", edges}}},
            {"config",
             {{"latent_dim", config_.latent_dim},
              {"hidden", config_.hidden},
              {"rounds", config_.rounds},
              {"lr", config_.lr},
              {"epochs", config_.epochs},
              {"batch", config_.batch},
              {"seed", config_.seed},
              {"obs_variance", config_.obs_variance},
              {"clip_z", config_.clip_z},
              {"standardize", config_.standardize},
              {"literal_decoder_overwrite", config_.literal_decoder_overwrite}}},
            {"stats", serialize::standardizer_to_json(stats_)},
            {"tensors", tensors}};
}

GraphVae GraphVae::from_json(const nlohmann::json& j, const scm::CausalGraph& expected) {
    if (j.at("kind").get<std::string>() != "engine") throw ValidationError("checkpoint kind is not 'engine'");
    std::uint64_t h = j.at("graph_hash").get<std::uint64_t>();
    if (h != scm::graph_hash(expected)) {
        throw ValidationError("engine checkpoint was trained on a different causal graph (hash mismatch)");
    }
    EngineConfig cfg;
    const auto& cj = j.at("config");
    cfg.latent_dim = cj.at("latent_dim").get<std::size_t>();
    cfg.hidden = cj.at("hidden").get<std::size_t>();
    cfg.rounds = cj.at("rounds").get<std::size_t>();
    cfg.lr = cj.at("lr").get<double>();
    cfg.epochs = cj.at("epochs").get<std::size_t>();
    cfg.batch = cj.at("batch").get<std::size_t>();
    cfg.seed = cj.at("seed").get<std::uint64_t>();
    cfg.obs_variance = cj.at("obs_variance").get<double>();
    cfg.clip_z = cj.value("clip_z", 10.0);
    cfg.standardize = cj.at("standardize").get<bool>();
    cfg.literal_decoder_overwrite = cj.at("literal_decoder_overwrite").get<bool>();

    GraphVae eng(expected, cfg);
    eng.stats_ = serialize::standardizer_from_json(j.at("stats"));
    Rng dummy(0);
    eng.init_params(dummy);
    const auto& tensors = j.at("tensors");
    auto fill = [&tensors](const std::string& name, std::vector<diff::Parameter>& v) {
        for (std::size_t i = 0; i < v.size(); ++i) {
            auto key = name + "." + std::to_string(i);
            if (!tensors.contains(key)) throw ValidationError("engine checkpoint missing tensor " + key);
            diff::Tensor t = serialize::tensor_from_json(tensors.at(key));
            if (t.shape != v[i].value.shape) throw ValidationError("engine checkpoint tensor shape mismatch at " + key);
            v[i] = diff::Parameter(std::move(t), false);
        }
    };
    fill("enc.in_w", eng.enc_.in_w);
    fill("enc.in_b", eng.enc_.in_b);
    fill("enc.self_w", eng.enc_.self_w);
    fill("enc.msg_w", eng.enc_.msg_w);
    fill("enc.round_b", eng.enc_.round_b);
    fill("enc.head_w", eng.enc_.head_w);
    fill("enc.head_b", eng.enc_.head_b);
    fill("enc.lv_w", eng.enc_lv_w_);
    fill("enc.lv_b", eng.enc_lv_b_);
    fill("dec.in_w", eng.dec_.in_w);
    fill("dec.in_b", eng.dec_.in_b);
    fill("dec.self_w", eng.dec_.self_w);
    fill("dec.msg_w", eng.dec_.msg_w);
    fill("dec.round_b", eng.dec_.round_b);
    fill("dec.head_w", eng.dec_.head_w);
    fill("dec.head_b", eng.dec_.head_b);
    eng.trained_ = true;
    return eng;
}

// ---- exact engine ----

std::vector<double> ExactEngine::soft_counterfactual(std::span<const double> x, std::span<const double> theta,
                                                     std::span<const std::size_t> actionable,
                                                     std::span<const double> u) const {
    check_actionable_order(scm_->graph(), actionable);
    std::vector<double> noise;
    if (u.empty()) {
        noise = scm::abduct_residual(*scm_, x);
    } else {
        noise.assign(u.begin(), u.end());
    }
    return scm::counterfactual_exact(*scm_, x, noise, theta);
}

diff::NodeId ExactEngine::soft_counterfactual_tape(diff::Tape& t, std::span<const double> x, diff::NodeId theta,
                                                   std::span<const std::size_t> actionable,
                                                   std::span<const double> u) const {
    const std::size_t d = scm_->size();
    std::vector<double> th = t.value(theta).v;
    if (th.size() != d) throw ValidationError("exact engine: theta size mismatch");
    std::vector<double> base = soft_counterfactual(x, th, actionable, u);

    // Local Jacobian by central differences over the actionable coordinates.
    Matrix jac(d, d, 0.0);
    std::vector<double> probe = th;
    for (std::size_t a : actionable) {
        probe[a] = th[a] + fd_step_;
        auto hi = soft_counterfactual(x, probe, actionable, u);
        probe[a] = th[a] - fd_step_;
        auto lo = soft_counterfactual(x, probe, actionable, u);
        probe[a] = th[a];
        for (std::size_t i = 0; i < d; ++i) jac.at(i, a) = (hi[i] - lo[i]) / (2.0 * fd_step_);
    }
    return t.external(theta, diff::Tensor::vec(std::move(base)), std::move(jac));
}

// ---- fidelity ----

FidelityResult cf_fidelity(const CounterfactualEngine& eng, const scm::Scm& scm, const Matrix& x, const Matrix& u,
                           std::span<const std::size_t> actionable, const ThetaSampler& sampler) {
    if (x.rows == 0) throw ValidationError("cf_fidelity: empty test set");
    if (x.rows != u.rows) throw ValidationError("cf_fidelity: x/u row mismatch");
    const std::size_t d = x.cols;
    std::vector<double> per_pair(x.rows);
    for (std::size_t r = 0; r < x.rows; ++r) {
        std::vector<double> theta = sampler(r);
        auto approx = eng.soft_counterfactual(x.row(r), theta, actionable, u.row(r));
        auto exact = scm::counterfactual_exact(scm, x.row(r), u.row(r), theta);
        double se = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
            double e = approx[i] - exact[i];
            se += e * e;
        }
        per_pair[r] = se / static_cast<double>(d);
    }
    double mean = 0.0;
    for (double v : per_pair) mean += v;
    mean /= static_cast<double>(per_pair.size());
    double var = 0.0;
    for (double v : per_pair) var += (v - mean) * (v - mean);
    var /= static_cast<double>(per_pair.size());
    return {mean, std::sqrt(var)};
}

ThetaSampler default_theta_sampler(std::span<const double> feature_scale, std::span<const std::size_t> actionable,
                                   std::size_t d, std::uint64_t seed) {
    std::vector<double> scale(feature_scale.begin(), feature_scale.end());
    std::vector<std::size_t> act(actionable.begin(), actionable.end());
    return [scale, act, d, seed](std::size_t row) {
        Rng rng = derive_stream(seed, row);
        std::vector<double> theta(d, 0.0);
        for (std::size_t a : act) theta[a] = rng.normal(0.0, 0.25 * scale[a] * scale[a]);
        return theta;
    };
}

}  // namespace carve::engine
