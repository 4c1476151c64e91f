#pragma once

#include <cmath>
#include <span>
#include <unordered_map>
#include <vector>

#include "carve/diff/tensor.hpp"

namespace carve::diff {

inline void zero_grads(std::span<Parameter* const> params) {
    for (Parameter* p : params) p->zero_grad();
}

// Plain gradient descent with a fixed step size.
struct Sgd {
    double lr = 0.01;

    void step(std::span<Parameter* const> params) const {
        for (Parameter* p : params) {
            if (!p->trainable) continue;
            for (std::size_t i = 0; i < p->value.size(); ++i) p->value.v[i] -= lr * p->grad.v[i];
        }
    }
};

struct Adam {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    void step(std::span<Parameter* const> params) {
        ++t_;
        double c1 = 1.0 - std::pow(beta1, static_cast<double>(t_));
        double c2 = 1.0 - std::pow(beta2, static_cast<double>(t_));
        for (Parameter* p : params) {
            if (!p->trainable) continue;
            Slot& s = state_[p];
            if (s.m.size() != p->value.size()) {
                s.m.assign(p->value.size(), 0.0);
                s.v.assign(p->value.size(), 0.0);
            }
            for (std::size_t i = 0; i < p->value.size(); ++i) {
                double g = p->grad.v[i];
                s.m[i] = beta1 * s.m[i] + (1.0 - beta1) * g;
                s.v[i] = beta2 * s.v[i] + (1.0 - beta2) * g * g;
                double mhat = s.m[i] / c1;
                double vhat = s.v[i] / c2;
                p->value.v[i] -= lr * mhat / (std::sqrt(vhat) + eps);
            }
        }
    }

private:
    struct Slot {
        std::vector<double> m, v;
    };
    std::unordered_map<Parameter*, Slot> state_;
    long t_ = 0;
};

}  // namespace carve::diff
