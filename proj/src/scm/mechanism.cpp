#include "carve/scm/mechanism.hpp"

#include <algorithm>
#include <cmath>

namespace carve::scm {

namespace {

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Truncation toward zero.
double to_int(double x) { return std::trunc(x); }

double indicator(bool b) { return b ? 1.0 : 0.0; }

// Most frequent value; ties broken by smallest value. Exact double equality:
// the inputs are small integer codes except where a model deliberately feeds
// a continuous value (then that value is almost surely unique).
double mode_of(std::vector<double> vals) {
    std::sort(vals.begin(), vals.end());
    double best = vals[0];
    std::size_t best_count = 0;
    std::size_t i = 0;
    while (i < vals.size()) {
        std::size_t j = i;
        while (j < vals.size() && vals[j] == vals[i]) ++j;
        if (j - i > best_count) {
            best_count = j - i;
            best = vals[i];
        }
        i = j;
    }
    return best;
}

std::vector<double> get_weights(const nlohmann::json& params, std::size_t n_parents) {
    auto w = params.value("weights", std::vector<double>{});
    if (w.size() != n_parents) {
        throw ValidationError("mechanism: expected " + std::to_string(n_parents) + " weights, got " +
                              std::to_string(w.size()));
    }
    return w;
}

// ---- catalog forms (all additive) ----

Mechanism make_linear(const nlohmann::json& params, std::vector<std::size_t> parents) {
    double bias = params.value("bias", 0.0);
    auto w = get_weights(params, parents.size());
    Mechanism m;
    m.additive = true;
    m.fn = [bias, w](std::span<const double> pa, double u) {
        double acc = bias;
        for (std::size_t i = 0; i < w.size(); ++i) acc += w[i] * pa[i];
        return acc + u;
    };
    return m;
}

Mechanism make_logistic(const nlohmann::json& params, std::vector<std::size_t> parents) {
    double bias = params.value("bias", 0.0);
    double scale = params.value("scale", 1.0);
    auto w = get_weights(params, parents.size());
    Mechanism m;
    m.additive = true;
    m.fn = [bias, scale, w](std::span<const double> pa, double u) {
        double acc = bias;
        for (std::size_t i = 0; i < w.size(); ++i) acc += w[i] * pa[i];
        return scale * logistic(acc) + u;
    };
    return m;
}

Mechanism make_indicator_threshold(const nlohmann::json& params, std::vector<std::size_t> parents) {
    double bias = params.value("bias", 0.0);
    auto w = get_weights(params, parents.size());
    auto t = params.value("thresholds", std::vector<double>{});
    if (t.size() != parents.size()) throw ValidationError("indicator_threshold: thresholds/parents size mismatch");
    Mechanism m;
    m.additive = true;
    m.fn = [bias, w, t](std::span<const double> pa, double u) {
        double acc = bias;
        for (std::size_t i = 0; i < w.size(); ++i) acc += w[i] * indicator(pa[i] >= t[i]);
        return acc + u;
    };
    return m;
}

Mechanism make_product(const nlohmann::json& params, std::vector<std::size_t>) {
    double bias = params.value("bias", 0.0);
    double coeff = params.value("coeff", 1.0);
    Mechanism m;
    m.additive = true;
    m.fn = [bias, coeff](std::span<const double> pa, double u) {
        double prod = 1.0;
        for (double p : pa) prod *= p;
        return bias + coeff * prod + u;
    };
    return m;
}

Mechanism make_exp(const nlohmann::json& params, std::vector<std::size_t> parents) {
    double bias = params.value("bias", 0.0);
    double coeff = params.value("coeff", 1.0);
    double inner_bias = params.value("inner_bias", 0.0);
    auto w = get_weights(params, parents.size());
    Mechanism m;
    m.additive = true;
    m.fn = [bias, coeff, inner_bias, w](std::span<const double> pa, double u) {
        double acc = inner_bias;
        for (std::size_t i = 0; i < w.size(); ++i) acc += w[i] * pa[i];
        return bias + coeff * std::exp(acc) + u;
    };
    return m;
}

Mechanism make_clamp(const nlohmann::json& params, std::vector<std::size_t> parents) {
    double bias = params.value("bias", 0.0);
    double lo = params.value("lo", -1.0);
    double hi = params.value("hi", 1.0);
    auto w = get_weights(params, parents.size());
    Mechanism m;
    m.additive = true;
    m.fn = [bias, lo, hi, w](std::span<const double> pa, double u) {
        double acc = bias;
        for (std::size_t i = 0; i < w.size(); ++i) acc += w[i] * pa[i];
        return std::clamp(acc, lo, hi) + u;
    };
    return m;
}

// ---- Loan equations (nodes G, A, E, L, D, I, S in that order) ----

Mechanism make_loan(const std::string& node) {
    Mechanism m;
    if (node == "G") {
        m.additive = true;
        m.fn = [](std::span<const double>, double u) { return u; };
    } else if (node == "A") {
        m.additive = true;
        m.fn = [](std::span<const double>, double u) { return -35.0 + u; };
    } else if (node == "E") {
        // parents (G, A); noise enters inside the reciprocal, so not additive.
        // Denominator clamped away from zero to guard rare draws.
        m.fn = [](std::span<const double> pa, double u) {
            double g = pa[0], a = pa[1];
            double denom = 1.0 + std::exp(1.0 - 0.5 * g - logistic(0.1 * a)) - u;
            return -0.5 + 1.0 / std::max(denom, 1e-3);
        };
    } else if (node == "L") {
        // parents (G, A)
        m.additive = true;
        m.fn = [](std::span<const double> pa, double u) {
            double g = pa[0], a = pa[1];
            return 1.0 + 0.01 * (a - 5.0) * (5.0 - a) + g + u;
        };
    } else if (node == "D") {
        // parents (G, A, L)
        m.additive = true;
        m.fn = [](std::span<const double> pa, double u) {
            double g = pa[0], a = pa[1], l = pa[2];
            return -1.0 + 0.1 * a + 2.0 * g + l + u;
        };
    } else if (node == "I") {
        // parents (G, A, E)
        m.additive = true;
        m.fn = [](std::span<const double> pa, double u) {
            double g = pa[0], a = pa[1], e = pa[2];
            return -4.0 + 0.1 * (a + 35.0) + 2.0 * g + g * e + u;
        };
    } else if (node == "S") {
        // parents (I)
        m.additive = true;
        m.fn = [](std::span<const double> pa, double u) {
            double inc = pa[0];
            return -4.0 + 1.5 * indicator(inc > 0.0) * inc + u;
        };
    } else {
        throw ValidationError("unknown loan mechanism node '" + node + "'");
    }
    return m;
}

// ---- Adult equations (nodes R, A, N, S, E, H, W, M, O, L in that order) ----

Mechanism make_adult(const std::string& node) {
    Mechanism m;
    if (node == "R" || node == "N" || node == "S") {
        m.additive = true;
        m.fn = [](std::span<const double>, double u) { return u; };
    } else if (node == "A") {
        m.additive = true;
        m.fn = [](std::span<const double>, double u) { return u + 17.0; };
    } else if (node == "E") {
        // parents (R, A, N, S)
        m.additive = true;
        m.fn = [](std::span<const double> pa, double u) {
            double r = pa[0], a = pa[1], n = pa[2], s = pa[3];
            double first = std::exp(2.0 * indicator(r == 0.0) + indicator(r == 1.0) + logistic(a - 30.0));
            double second = (0.5 * indicator(s == 0.0) + indicator(s == 1.0)) *
                            (2.0 * indicator(n == 1.0) + 5.0 * indicator(n == 2.0) + indicator(n == 3.0));
            return first + second + u;
        };
    } else if (node == "H") {
        // parents (R, A, N, S, E); the whole sum, noise included, is gated by 1{A<70}.
        m.fn = [](std::span<const double> pa, double u) {
            double r = pa[0], a = pa[1], n = pa[2], s = pa[3], e = pa[4];
            double base = (40.0 * indicator(n == 0.0) + 36.0 * indicator(n == 1.0) + 50.0 * indicator(n == 2.0) +
                           30.0 * indicator(n == 3.0)) *
                          (0.5 * indicator(r == 0.0) + indicator(r == 1.0) + 1.3 * indicator(r == 2.0));
            double sum = base + 2.0 * std::exp(-(a - 30.0) * (a - 30.0)) + 5.0 * std::abs(std::tanh(e - 2.0)) +
                         2.0 * indicator(s == 0.0) + u;
            return sum * indicator(a < 70.0);
        };
    } else if (node == "W") {
        // parents (A, N, E, H)
        m.fn = [](std::span<const double> pa, double u) {
            double a = pa[0], n = pa[1], e = pa[2], h = pa[3];
            double w1 = indicator(5.0 * std::abs(std::tanh(e - 2.0)) + logistic(h - 30.0 + u) > 0.3) +
                        indicator(logistic(h - 30.0 + u) > 0.3) * indicator(a + 1.5 * u > 50.0) -
                        indicator(n == 0.0) + indicator(n == 1.0) + 3.0 * indicator(n == 3.0);
            double w2 = w1 * indicator(w1 <= 3.0) + 3.0 * indicator(w1 > 3.0);
            return w2 * indicator(w2 >= 0.0);
        };
    } else if (node == "M") {
        // parents (R, A, S, W, H); sex stands in for the G symbol.
        m.fn = [](std::span<const double> pa, double u) {
            double r = pa[0], a = pa[1], s = pa[2], w = pa[3], h = pa[4];
            double r1 = to_int(r + 0.2 * u) * indicator(r >= 0.0 && r <= 2.0) + 2.0 * indicator(r == 2.0);
            double r2 = 2.0 * indicator(r1 == 1.0) + indicator(r1 == 2.0);
            double g1 = to_int(s + 0.5 * u);
            double g2 = indicator(g1 > 1.0) + g1 * indicator(g1 >= 0.0 && g1 <= 1.0);
            double g3 = indicator(g2 == 0.0) + 2.0 * indicator(g2 == 1.0);
            double a1 = 0.0 * indicator(a > 0.0);
            double h1 = 3.0 * to_int(logistic(h - 30.0));
            double h2 = h1 * indicator(h1 <= 2.0) + 2.0 * indicator(h1 > 2.0);
            return mode_of({r2, a1, w, h2, h, g3});
        };
    } else if (node == "O") {
        // parents (R, A, S, E, W, M)
        m.fn = [](std::span<const double> pa, double u) {
            double r = pa[0], a = pa[1], s = pa[2], e = pa[3], w = pa[4], mm = pa[5];
            double ka = 2.0 * std::exp(-(a + u - 20.0) * (a + u - 20.0));
            double ke = -logistic(e * u - 30.0);
            double k = r + ka + ke + w + 3.0 * mm + 4.0 * s;
            return indicator(k >= 1.0 && k <= 4.0) + 2.0 * indicator(k >= 4.0);
        };
    } else if (node == "L") {
        // parents (A, N, S, E, M); reads the occupation noise slot, as printed.
        m.fn = [](std::span<const double> pa, double u) {
            double a = pa[0], n = pa[1], s = pa[2], e = pa[3], mm = pa[4];
            double cn = u * indicator(n == 0.0) - u * indicator(n == 1.0) + 2.0 * u * indicator(n == 2.0) +
                        2.0 * indicator(n == 3.0);
            double ce = logistic(e - 30.0);
            double c = cn + ce + 2.0 * indicator(a < 20.0) - 2.0 * indicator(s == 0.0);
            bool married = (mm == 1.0);
            if (married) return c < -1.0 ? 0.0 : 1.0;
            return c >= -1.0 ? 2.0 : 1.0;
        };
    } else {
        throw ValidationError("unknown adult mechanism node '" + node + "'");
    }
    return m;
}

}  // namespace

Mechanism make_mechanism(const std::string& kind, const nlohmann::json& params, std::vector<std::size_t> parents,
                         std::size_t node_index) {
    Mechanism m;
    if (kind == "linear") m = make_linear(params, parents);
    else if (kind == "logistic") m = make_logistic(params, parents);
    else if (kind == "indicator_threshold") m = make_indicator_threshold(params, parents);
    else if (kind == "product") m = make_product(params, parents);
    else if (kind == "exp") m = make_exp(params, parents);
    else if (kind == "clamp") m = make_clamp(params, parents);
    else if (kind.starts_with("loan.")) m = make_loan(kind.substr(5));
    else if (kind.starts_with("adult.")) m = make_adult(kind.substr(6));
    else throw ValidationError("unknown mechanism kind '" + kind + "'");
    m.kind = kind;
    m.parents = std::move(parents);
    m.params = params;
    m.noise_index = (kind == "adult.L") ? 8 : node_index;  // L reads U_O
    return m;
}

bool is_known_mechanism(const std::string& kind) {
    static const char* catalog[] = {"linear", "logistic", "indicator_threshold", "product", "exp", "clamp"};
    for (const char* c : catalog)
        if (kind == c) return true;
    return kind.starts_with("loan.") || kind.starts_with("adult.");
}

}  // namespace carve::scm
