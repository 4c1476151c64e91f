#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <string>
#include <vector>

#include "carve/common.hpp"

namespace carve::diff {

// Dense row-major tensor. Rank is 1 or 2 in practice (vectors and weight
// matrices); scalars are shape {1}.
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> v;

    Tensor() = default;
    Tensor(std::vector<std::size_t> s, std::vector<double> values) : shape(std::move(s)), v(std::move(values)) {
        if (size_from_shape() != v.size()) throw ValidationError("Tensor: shape/value count mismatch");
    }

    static Tensor scalar(double x) { return Tensor({1}, {x}); }
    static Tensor vec(std::vector<double> values) {
        std::size_t n = values.size();
        return Tensor({n}, std::move(values));
    }
    static Tensor zeros(std::vector<std::size_t> s) {
        std::size_t n = 1;
        for (auto d : s) n *= d;
        return Tensor(std::move(s), std::vector<double>(n, 0.0));
    }
    static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
        return Tensor({rows, cols}, std::move(values));
    }

    std::size_t size() const { return v.size(); }
    std::size_t size_from_shape() const {
        std::size_t n = 1;
        for (auto d : shape) n *= d;
        return shape.empty() ? (v.empty() ? 0 : 1) : n;
    }

    double& operator[](std::size_t i) { return v[i]; }
    double operator[](std::size_t i) const { return v[i]; }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    bool all_finite() const {
        for (double x : v)
            if (!std::isfinite(x)) return false;
        return true;
    }

    std::string shape_str() const {
        std::string s = "(";
        for (std::size_t i = 0; i < shape.size(); ++i) {
            if (i) s += ",";
            s += std::to_string(shape[i]);
        }
        return s + ")";
    }
};

// Trainable tensor with its gradient accumulator.
struct Parameter {
    Tensor value;
    Tensor grad;
    bool trainable = true;

    Parameter() = default;
    explicit Parameter(Tensor t, bool train = true)
        : value(std::move(t)), grad(Tensor::zeros(value.shape)), trainable(train) {}

    void zero_grad() { std::fill(grad.v.begin(), grad.v.end(), 0.0); }
};

}  // namespace carve::diff
