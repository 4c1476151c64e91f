#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "carve/common.hpp"

namespace carve::scm {

// One structural equation x_i = f_i(parents, u). `parents` fixes the order in
// which parent values are passed to fn. `noise_index` is the exogenous slot
// the mechanism reads; it is the node's own slot except where a model shares
// a noise variable across equations.
struct Mechanism {
    std::string kind;
    std::vector<std::size_t> parents;
    std::size_t noise_index = 0;
    bool additive = false;  // f(pa, u) == f(pa, 0) + u for all inputs
    nlohmann::json params;
    std::function<double(std::span<const double>, double)> fn;

    double operator()(std::span<const double> parent_values, double u) const { return fn(parent_values, u); }
};

// Catalog factory for user-defined models: linear, logistic,
// indicator_threshold, product, exp, clamp. Builtin dataset equations are
// registered under "loan.<node>" and "adult.<node>".
Mechanism make_mechanism(const std::string& kind, const nlohmann::json& params, std::vector<std::size_t> parents,
                         std::size_t node_index);

bool is_known_mechanism(const std::string& kind);

}  // namespace carve::scm
