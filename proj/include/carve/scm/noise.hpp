#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "carve/rng.hpp"

namespace carve::scm {

// Exogenous noise distribution. `normal` takes (mean, variance); `gamma`
// takes (shape, scale); `gaussian_mixture` takes k weights, k means,
// k variances; `point` is the degenerate constant (handy in tests).
struct NoiseSpec {
    enum class Kind { normal, gamma, bernoulli, categorical, gaussian_mixture, point };

    Kind kind = Kind::point;
    std::vector<double> params{0.0};

    static NoiseSpec normal(double mean, double variance) { return {Kind::normal, {mean, variance}}; }
    static NoiseSpec gamma(double shape, double scale) { return {Kind::gamma, {shape, scale}}; }
    static NoiseSpec bernoulli(double p) { return {Kind::bernoulli, {p}}; }
    static NoiseSpec categorical(std::vector<double> probs) { return {Kind::categorical, std::move(probs)}; }
    static NoiseSpec gaussian_mixture(std::vector<double> weights, std::vector<double> means,
                                      std::vector<double> variances) {
        NoiseSpec s{Kind::gaussian_mixture, {}};
        s.params = std::move(weights);
        s.params.insert(s.params.end(), means.begin(), means.end());
        s.params.insert(s.params.end(), variances.begin(), variances.end());
        return s;
    }
    static NoiseSpec point(double v) { return {Kind::point, {v}}; }

    double sample(Rng& rng) const {
        switch (kind) {
            case Kind::normal: return rng.normal(params[0], params[1]);
            case Kind::gamma: return rng.gamma(params[0], params[1]);
            case Kind::bernoulli: return rng.bernoulli(params[0]);
            case Kind::categorical: return rng.categorical(params);
            case Kind::gaussian_mixture: {
                std::size_t k = params.size() / 3;
                return rng.gaussian_mixture({params.data(), k}, {params.data() + k, k}, {params.data() + 2 * k, k});
            }
            case Kind::point: return params[0];
        }
        throw ValidationError("NoiseSpec: bad kind");
    }

    std::string kind_name() const {
        switch (kind) {
            case Kind::normal: return "normal";
            case Kind::gamma: return "gamma";
            case Kind::bernoulli: return "bernoulli";
            case Kind::categorical: return "categorical";
            case Kind::gaussian_mixture: return "gaussian_mixture";
            case Kind::point: return "point";
        }
        return "?";
    }

    nlohmann::json to_json() const { return {{"kind", kind_name()}, {"params", params}}; }

    static NoiseSpec from_json(const nlohmann::json& j) {
        std::string k = j.at("kind").get<std::string>();
        NoiseSpec s;
        s.params = j.at("params").get<std::vector<double>>();
        if (k == "normal") s.kind = Kind::normal;
        else if (k == "gamma") s.kind = Kind::gamma;
        else if (k == "bernoulli") s.kind = Kind::bernoulli;
        else if (k == "categorical") s.kind = Kind::categorical;
        else if (k == "gaussian_mixture") s.kind = Kind::gaussian_mixture;
        else if (k == "point") s.kind = Kind::point;
        else throw ValidationError("NoiseSpec: unknown kind '" + k + "'");
        return s;
    }
};

}  // namespace carve::scm
