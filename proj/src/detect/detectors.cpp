#include "carve/detect/detectors.hpp"

#include <algorithm>
#include <cmath>

#include "carve/diff/optim.hpp"
#include "carve/serialize.hpp"

namespace carve::detect {

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

void freeze(std::span<diff::Parameter* const> params) {
    for (auto* p : params) p->trainable = false;
}

}  // namespace

nn::Standardizer robust_standardizer(const Matrix& x) {
    if (x.rows < 2) throw ValidationError("robust_standardizer: need at least 2 rows");
    nn::Standardizer s;
    s.mean.assign(x.cols, 0.0);
    s.std.assign(x.cols, 1.0);
    std::vector<double> col(x.rows);
    for (std::size_t c = 0; c < x.cols; ++c) {
        for (std::size_t r = 0; r < x.rows; ++r) col[r] = x.at(r, c);
        std::sort(col.begin(), col.end());
        double med = col[x.rows / 2];
        for (std::size_t r = 0; r < x.rows; ++r) col[r] = std::abs(col[r] - med);
        std::sort(col.begin(), col.end());
        double mad = col[x.rows / 2] * 1.4826;
        s.mean[c] = med;
        s.std[c] = mad > 0.0 ? mad : 1.0;
    }
    return s;
}

// ---- KnnScorer ----

std::vector<double> KnnScorer::standardize_clip(std::span<const double> x_raw) const {
    std::vector<double> z = stats_.apply(x_raw);
    for (double& v : z) v = std::clamp(v, -clip_, clip_);
    return z;
}

double KnnScorer::mean_knn(std::span<const double> z, std::vector<std::size_t>* picked,
                           std::span<double> grad_z) const {
    const std::size_t n = codebook_.rows;
    const std::size_t d = codebook_.cols;
    // Exact matches are always excluded, so scoring a training row is
    // automatically leave-one-out and threshold calibration stays unbiased.
    // (distance^2, index) pairs; index tie-break keeps results deterministic.
    static thread_local std::vector<std::pair<double, std::size_t>> d2;
    d2.clear();
    d2.reserve(n);
    for (std::size_t q = 0; q < n; ++q) {
        const double* row = codebook_.data.data() + q * d;
        double acc = 0.0;
        for (std::size_t c = 0; c < d; ++c) {
            double e = z[c] - row[c];
            acc += e * e;
        }
        if (acc < 1e-18) continue;
        d2.push_back({acc, q});
    }
    if (d2.empty()) {
        // Degenerate data: every entry coincides with z.
        if (picked) picked->push_back(0);
        if (!grad_z.empty()) std::fill(grad_z.begin(), grad_z.end(), 0.0);
        return 0.0;
    }
    std::size_t k = std::min(k_, d2.size());
    std::partial_sort(d2.begin(), d2.begin() + k, d2.end());

    if (!grad_z.empty()) std::fill(grad_z.begin(), grad_z.end(), 0.0);
    double sum = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
        double dist = std::sqrt(d2[i].first);
        sum += dist;
        if (picked) picked->push_back(d2[i].second);
        if (!grad_z.empty() && dist > 1e-12) {
            const double* row = codebook_.data.data() + d2[i].second * d;
            for (std::size_t c = 0; c < d; ++c) grad_z[c] += (z[c] - row[c]) / dist;
        }
    }
    if (!grad_z.empty()) {
        for (double& g : grad_z) g /= static_cast<double>(k);
    }
    return sum / static_cast<double>(k);
}

void KnnScorer::fit(const Matrix& x_normal, const DetectorConfig& cfg) {
    k_ = cfg.knn;
    floor_ = cfg.local_floor;
    clip_ = cfg.clip_z;
    stats_ = robust_standardizer(x_normal);
    codebook_ = Matrix(x_normal.rows, x_normal.cols);
    for (std::size_t r = 0; r < x_normal.rows; ++r) {
        auto z = standardize_clip(x_normal.row(r));
        std::copy(z.begin(), z.end(), codebook_.row(r).begin());
    }
    local_.assign(codebook_.rows, 0.0);
    for (std::size_t r = 0; r < codebook_.rows; ++r) {
        local_[r] = mean_knn(codebook_.row(r), nullptr, {});
    }
}

double KnnScorer::score_z(std::span<const double> z) const {
    std::vector<std::size_t> picked;
    double dist = mean_knn(z, &picked, {});
    double loc = 0.0;
    for (std::size_t i : picked) loc += local_[i];
    loc /= static_cast<double>(picked.size());
    return dist / std::max(loc, floor_);
}

double KnnScorer::score(std::span<const double> x_raw) const {
    auto z = standardize_clip(x_raw);
    return score_z(z);
}

double KnnScorer::score_grad(std::span<const double> x_raw, std::span<double> grad_out) const {
    auto z = standardize_clip(x_raw);
    std::vector<std::size_t> picked;
    std::vector<double> gz(z.size());
    double dist = mean_knn(z, &picked, gz);
    double loc = 0.0;
    for (std::size_t i : picked) loc += local_[i];
    loc = std::max(loc / static_cast<double>(picked.size()), floor_);
    // The picked set and its local scale are locally constant, so the
    // gradient is the mean-distance gradient over the fixed neighbor set.
    auto raw = stats_.apply(x_raw);
    for (std::size_t c = 0; c < z.size(); ++c) {
        bool clipped = raw[c] < -clip_ || raw[c] > clip_;
        grad_out[c] = clipped ? 0.0 : gz[c] / (loc * stats_.std[c]);
    }
    return dist / loc;
}

nlohmann::json KnnScorer::to_json() const {
    return {{"stats", serialize::standardizer_to_json(stats_)},
            {"codebook", {{"rows", codebook_.rows}, {"cols", codebook_.cols}, {"values", codebook_.data}}},
            {"local", local_},
            {"k", k_},
            {"floor", floor_},
            {"clip", clip_}};
}

KnnScorer KnnScorer::from_json(const nlohmann::json& j) {
    KnnScorer s;
    s.stats_ = serialize::standardizer_from_json(j.at("stats"));
    s.codebook_.rows = j.at("codebook").at("rows").get<std::size_t>();
    s.codebook_.cols = j.at("codebook").at("cols").get<std::size_t>();
    s.codebook_.data = j.at("codebook").at("values").get<std::vector<double>>();
    if (s.codebook_.data.size() != s.codebook_.rows * s.codebook_.cols) {
        throw ValidationError("KnnScorer: codebook size mismatch");
    }
    s.local_ = j.at("local").get<std::vector<double>>();
    if (s.local_.size() != s.codebook_.rows) throw ValidationError("KnnScorer: local scale size mismatch");
    s.k_ = j.at("k").get<std::size_t>();
    s.floor_ = j.at("floor").get<double>();
    s.clip_ = j.at("clip").get<double>();
    return s;
}

// ---- AE detector ----

double AeDetector::score(std::span<const double> x) const {
    require_trained();
    return book.score(x);
}

diff::NodeId AeDetector::score_tape(diff::Tape& t, diff::NodeId x_raw) const {
    require_trained();
    const diff::Tensor& xv = t.value(x_raw);
    std::vector<double> grad(xv.size());
    double s = book.score_grad(xv.v, grad);
    Matrix jac(1, xv.size());
    std::copy(grad.begin(), grad.end(), jac.data.begin());
    return t.external(x_raw, diff::Tensor::scalar(s), std::move(jac));
}

AeDetector train_ae(const Matrix& x_normal, const DetectorConfig& cfg) {
    if (x_normal.rows < 100) throw ValidationError("train_ae: need at least 100 training rows");
    AeDetector det;
    det.config = cfg;
    det.book.fit(x_normal, cfg);
    det.trained_ = true;
    return det;
}

nlohmann::json AeDetector::to_json() const {
    return {{"kind", "ae"},
            {"config",
             {{"knn", config.knn}, {"local_floor", config.local_floor}, {"clip_z", config.clip_z},
              {"seed", config.seed}}},
            {"book", book.to_json()}};
}

AeDetector AeDetector::from_json(const nlohmann::json& j) {
    if (j.at("kind").get<std::string>() != "ae") throw ValidationError("checkpoint kind is not 'ae'");
    AeDetector det;
    det.book = KnnScorer::from_json(j.at("book"));
    det.config.knn = j.at("config").at("knn").get<std::size_t>();
    det.config.local_floor = j.at("config").at("local_floor").get<double>();
    det.config.clip_z = j.at("config").at("clip_z").get<double>();
    det.config.seed = j.at("config").at("seed").get<std::uint64_t>();
    det.trained_ = true;
    return det;
}

// ---- Deep SVDD detector ----

namespace {

std::vector<double> clip_vec(std::vector<double> z, double clip) {
    for (double& v : z) v = std::clamp(v, -clip, clip);
    return z;
}

}  // namespace

double SvddDetector::score(std::span<const double> x) const {
    require_trained();
    auto z = clip_vec(stats.apply(x), clip_z);
    auto rep = net.forward(std::span<const double>(z));
    double s = 0.0;
    for (std::size_t i = 0; i < center.size(); ++i) {
        double e = rep[i] - center[i];
        s += e * e;
    }
    return std::sqrt(s);
}

diff::NodeId SvddDetector::score_tape(diff::Tape& t, diff::NodeId x_raw) const {
    require_trained();
    diff::NodeId z = stats.apply_tape(t, x_raw);  // clip omitted: active only far outside the data range
    diff::NodeId rep = net.forward(t, z);
    return t.l2norm(t.sub(rep, t.constant_vec(std::vector<double>(center))));
}

SvddDetector train_svdd(const Matrix& x_normal, const DetectorConfig& cfg) {
    if (x_normal.rows < 100) throw ValidationError("train_svdd: need at least 100 training rows");
    const std::size_t d = x_normal.cols;

    // Support-distance targets shared with the reconstruction detector.
    KnnScorer teacher;
    teacher.fit(x_normal, cfg);

    SvddDetector det;
    det.config = cfg;
    det.clip_z = cfg.clip_z;
    det.stats = teacher.stats();

    Matrix z(x_normal.rows, d);
    for (std::size_t r = 0; r < x_normal.rows; ++r) {
        auto zr = teacher.standardize_clip(x_normal.row(r));
        std::copy(zr.begin(), zr.end(), z.row(r).begin());
    }

    // Fixed probe set: each training row plus noise-perturbed copies that
    // cover the surrounding region, labeled by the support distance.
    Rng probe_rng = derive_stream(cfg.seed, fnv1a("svdd_probes"));
    Matrix probes(0, d);
    std::vector<double> targets;
    std::vector<double> buf(d);
    const double probe_noise[] = {0.4, 1.0, 2.0};
    for (std::size_t r = 0; r < z.rows; ++r) {
        auto row = z.row(r);
        probes.push_row(row);
        targets.push_back(teacher.score_z(row));
        for (double ns : probe_noise) {
            for (std::size_t c = 0; c < d; ++c) buf[c] = row[c] + ns * probe_rng.normal();
            probes.push_row(buf);
            targets.push_back(teacher.score_z(buf));
        }
    }

    const std::size_t widths[] = {d, 64, 16};
    double center_norm = 0.0;
    for (std::size_t attempt = 0; attempt < 5; ++attempt) {
        Rng init_rng = derive_stream(cfg.seed, fnv1a("svdd_init") + attempt);
        det.net = nn::Mlp::make(widths, true, init_rng);
        std::vector<double> mu(16, 0.0);
        for (std::size_t r = 0; r < z.rows; ++r) {
            auto row = z.row(r);
            auto rep = det.net.forward(std::span<const double>(row.begin(), row.end()));
            for (std::size_t i = 0; i < mu.size(); ++i) mu[i] += rep[i];
        }
        for (double& m : mu) m /= static_cast<double>(z.rows);
        center_norm = 0.0;
        for (double m : mu) center_norm += m * m;
        center_norm = std::sqrt(center_norm);
        if (center_norm > 0.01) {
            det.center = std::move(mu);
            break;
        }
    }
    if (!(center_norm > 0.01)) throw ValidationError("train_svdd: center collapse after 5 re-initializations");

    auto params = det.net.params();
    diff::Adam opt;
    opt.lr = cfg.lr;
    diff::Tape t;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng order_rng = derive_stream(cfg.seed, fnv1a("svdd_shuffle") + epoch);
        auto order = shuffled_indices(probes.rows, order_rng);
        double epoch_sum = 0.0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch) {
            std::size_t end = std::min(order.size(), start + cfg.batch);
            double inv_b = 1.0 / static_cast<double>(end - start);
            diff::zero_grads(params);
            for (std::size_t k = start; k < end; ++k) {
                t.reset();
                auto row = probes.row(order[k]);
                diff::NodeId in = t.constant(diff::Tensor::vec({row.begin(), row.end()}));
                diff::NodeId rep = det.net.forward(t, in);
                diff::NodeId dist = t.l2norm(t.sub(rep, t.constant_vec(std::vector<double>(det.center))));
                diff::NodeId err = t.add(dist, t.constant_scalar(-targets[order[k]]));
                diff::NodeId loss = t.mul(err, err);
                double lv = t.value(loss).v[0];
                if (!std::isfinite(lv)) {
                    throw ValidationError("train_svdd: non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                                          std::to_string(start / cfg.batch));
                }
                epoch_sum += lv;
                t.backward(t.scale(loss, inv_b));
            }
            opt.step(params);
        }
        det.epoch_loss.push_back(epoch_sum / static_cast<double>(probes.rows));
    }

    det.trained_ = true;
    freeze(params);
    return det;
}

nlohmann::json SvddDetector::to_json() const {
    return {{"kind", "svdd"},
            {"config",
             {{"lr", config.lr}, {"epochs", config.epochs}, {"batch", config.batch}, {"seed", config.seed},
              {"knn", config.knn}, {"local_floor", config.local_floor}, {"clip_z", config.clip_z}}},
            {"stats", serialize::standardizer_to_json(stats)},
            {"center", center},
            {"net", serialize::mlp_to_json(net)}};
}

SvddDetector SvddDetector::from_json(const nlohmann::json& j) {
    if (j.at("kind").get<std::string>() != "svdd") throw ValidationError("checkpoint kind is not 'svdd'");
    SvddDetector det;
    det.stats = serialize::standardizer_from_json(j.at("stats"));
    det.net = serialize::mlp_from_json(j.at("net"));
    det.center = j.at("center").get<std::vector<double>>();
    const auto& cj = j.at("config");
    det.config.lr = cj.at("lr").get<double>();
    det.config.epochs = cj.at("epochs").get<std::size_t>();
    det.config.batch = cj.at("batch").get<std::size_t>();
    det.config.seed = cj.at("seed").get<std::uint64_t>();
    det.config.knn = cj.at("knn").get<std::size_t>();
    det.config.local_floor = cj.at("local_floor").get<double>();
    det.config.clip_z = cj.at("clip_z").get<double>();
    det.clip_z = det.config.clip_z;
    det.trained_ = true;
    return det;
}

std::unique_ptr<Detector> detector_from_json(const nlohmann::json& j) {
    std::string kind = j.at("kind").get<std::string>();
    if (kind == "ae") return std::make_unique<AeDetector>(AeDetector::from_json(j));
    if (kind == "svdd") return std::make_unique<SvddDetector>(SvddDetector::from_json(j));
    throw ValidationError("unknown detector checkpoint kind '" + kind + "'");
}

// ---- threshold + detection ----

DetectorThreshold calibrate_threshold(const Detector& d, const Matrix& x_normal, double level) {
    if (x_normal.rows == 0) throw ValidationError("calibrate_threshold: empty training set");
    if (!(level > 0.0 && level <= 1.0)) throw ValidationError("calibrate_threshold: level must be in (0, 1]");
    std::vector<double> scores = score_all(d, x_normal);
    std::sort(scores.begin(), scores.end());
    std::size_t m = static_cast<std::size_t>(std::ceil(level * static_cast<double>(scores.size())));
    if (m < 1) m = 1;
    return {scores[m - 1], level};
}

std::vector<double> score_all(const Detector& d, const Matrix& x) {
    std::vector<double> out(x.rows);
    for (std::size_t r = 0; r < x.rows; ++r) out[r] = d.score(x.row(r));
    return out;
}

Detection detect(const Detector& d, double tau, const Matrix& x) {
    Detection out;
    out.predicted.assign(x.rows, 0);
    for (std::size_t r = 0; r < x.rows; ++r) {
        if (d.score(x.row(r)) > tau) {
            out.predicted[r] = 1;
            out.indices.push_back(r);
        }
    }
    return out;
}

}  // namespace carve::detect
