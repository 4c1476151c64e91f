#include "carve/nn/mlp.hpp"

#include <cmath>

namespace carve::nn {

Standardizer Standardizer::fit(const Matrix& x) {
    if (x.rows < 2) throw ValidationError("Standardizer::fit: need at least 2 rows");
    Standardizer s;
    s.mean.assign(x.cols, 0.0);
    s.std.assign(x.cols, 0.0);
    for (std::size_t c = 0; c < x.cols; ++c) {
        double m = 0.0;
        for (std::size_t r = 0; r < x.rows; ++r) m += x.at(r, c);
        m /= static_cast<double>(x.rows);
        double ss = 0.0;
        for (std::size_t r = 0; r < x.rows; ++r) {
            double d = x.at(r, c) - m;
            ss += d * d;
        }
        s.mean[c] = m;
        s.std[c] = std::sqrt(ss / static_cast<double>(x.rows - 1));
        if (!(s.std[c] > 0.0)) throw ValidationError("Standardizer::fit: constant feature " + std::to_string(c));
    }
    return s;
}

Standardizer Standardizer::identity(std::size_t d) {
    Standardizer s;
    s.mean.assign(d, 0.0);
    s.std.assign(d, 1.0);
    return s;
}

std::vector<double> Standardizer::apply(std::span<const double> x) const {
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = (x[i] - mean[i]) / std[i];
    return out;
}

std::vector<double> Standardizer::invert(std::span<const double> z) const {
    std::vector<double> out(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) out[i] = z[i] * std[i] + mean[i];
    return out;
}

diff::NodeId Standardizer::apply_tape(diff::Tape& t, diff::NodeId x) const {
    std::vector<double> neg_mean(mean.size()), inv_std(std.size());
    for (std::size_t i = 0; i < mean.size(); ++i) {
        neg_mean[i] = -mean[i];
        inv_std[i] = 1.0 / std[i];
    }
    return t.mul(t.add(x, t.constant_vec(std::move(neg_mean))), t.constant_vec(std::move(inv_std)));
}

Mlp Mlp::make(std::span<const std::size_t> widths, bool bias, Rng& rng, bool zero_init_last) {
    if (widths.size() < 2) throw ValidationError("Mlp::make: need at least input and output widths");
    Mlp net;
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
        std::size_t fan_in = widths[l], fan_out = widths[l + 1];
        bool last = (l + 2 == widths.size());
        double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        std::vector<double> w(fan_in * fan_out);
        for (double& v : w) v = (last && zero_init_last) ? 0.0 : (2.0 * rng.uniform() - 1.0) * a;
        Layer layer;
        layer.w = diff::Parameter(diff::Tensor::matrix(fan_out, fan_in, std::move(w)));
        layer.has_bias = bias;
        if (bias) {
            layer.b = diff::Parameter(diff::Tensor::zeros({fan_out}));
        }
        net.layers.push_back(std::move(layer));
    }
    return net;
}

diff::NodeId Mlp::forward(diff::Tape& t, diff::NodeId input) {
    diff::NodeId h = input;
    for (std::size_t l = 0; l < layers.size(); ++l) {
        Layer& layer = layers[l];
        diff::NodeId b = layer.has_bias ? t.use(layer.b)
                                        : t.constant(diff::Tensor::zeros({layer.w.value.shape[0]}));
        h = t.affine(t.use(layer.w), h, b);
        if (l + 1 < layers.size()) h = t.tanh(h);
    }
    return h;
}

std::vector<double> Mlp::forward(std::span<const double> x) {
    diff::Tape t;
    diff::NodeId in = t.constant(diff::Tensor::vec({x.begin(), x.end()}));
    diff::NodeId out = forward(t, in);
    return t.value(out).v;
}

std::vector<diff::Parameter*> Mlp::params() {
    std::vector<diff::Parameter*> out;
    for (Layer& l : layers) {
        out.push_back(&l.w);
        if (l.has_bias) out.push_back(&l.b);
    }
    return out;
}

}  // namespace carve::nn
