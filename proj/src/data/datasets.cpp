#include "carve/data/datasets.hpp"

#include <cmath>

namespace carve::data {

double loan_label(std::span<const double> x) {
    double l = x[3], d = x[4], inc = x[5], s = x[6];
    return 1.0 / (1.0 + std::exp(-0.3 * (-l - d + inc + s + inc * s)));
}

double adult_income(std::span<const double> x) {
    auto ind = [](bool b) { return b ? 1.0 : 0.0; };
    double r = x[0], a = x[1], n = x[2], s = x[3], e = x[4], h = x[5], w = x[6], m = x[7], o = x[8], l = x[9];
    // The race indicators are swapped relative to their usual printing; this
    // orientation is the one consistent with the reference case studies.
    return 20000.0 * ind(r > 1.5) + 10000.0 * ind(r < 1.5) + 2816.0 * ind(a >= 30.0) + 9488.0 * ind(e >= 10.0) +
           5000.0 * ind(o == 1.0) + 15000.0 * ind(o == 2.0) + 5000.0 * ind(w == 0.0) + 7000.0 * ind(w == 1.0) +
           1000.0 * ind(m == 0.0) + 4000.0 * ind(m == 1.0) - 2000.0 * ind(m == 2.0) + 15000.0 * ind(h > 45.0) +
           10000.0 * ind(n >= 2.0) + 4000.0 * ind(s == 1.0) + 3000.0 * ind(l <= 1.0);
}

scm::Scm loan_scm() {
    scm::CausalGraph g({"G", "A", "E", "L", "D", "I", "S"},
                       {{0, 2}, {1, 2},                  // G, A -> E
                        {0, 3}, {1, 3},                  // G, A -> L
                        {0, 4}, {1, 4}, {3, 4},          // G, A, L -> D
                        {0, 5}, {1, 5}, {2, 5},          // G, A, E -> I
                        {5, 6}});                        // I -> S
    auto mk = [](const char* kind, std::vector<std::size_t> parents, std::size_t node) {
        return scm::make_mechanism(kind, nlohmann::json::object(), std::move(parents), node);
    };
    std::vector<scm::Mechanism> mechs;
    mechs.push_back(mk("loan.G", {}, 0));
    mechs.push_back(mk("loan.A", {}, 1));
    mechs.push_back(mk("loan.E", {0, 1}, 2));
    mechs.push_back(mk("loan.L", {0, 1}, 3));
    mechs.push_back(mk("loan.D", {0, 1, 3}, 4));
    mechs.push_back(mk("loan.I", {0, 1, 2}, 5));
    mechs.push_back(mk("loan.S", {5}, 6));
    std::vector<scm::NoiseSpec> noise{
        scm::NoiseSpec::bernoulli(0.5),    // U_G
        scm::NoiseSpec::gamma(10.0, 3.5),  // U_A
        scm::NoiseSpec::normal(0.0, 0.25),  // U_E
        scm::NoiseSpec::normal(0.0, 4.0),   // U_L
        scm::NoiseSpec::normal(0.0, 9.0),   // U_D
        scm::NoiseSpec::normal(0.0, 4.0),   // U_I
        scm::NoiseSpec::normal(0.0, 25.0),  // U_S
    };
    return scm::Scm(std::move(g), std::move(mechs), std::move(noise));
}

scm::Scm adult_scm() {
    scm::CausalGraph g({"R", "A", "N", "S", "E", "H", "W", "M", "O", "L"},
                       {{0, 4}, {1, 4}, {2, 4}, {3, 4},                  // R, A, N, S -> E
                        {0, 5}, {1, 5}, {2, 5}, {3, 5}, {4, 5},          // R, A, N, S, E -> H
                        {1, 6}, {2, 6}, {4, 6}, {5, 6},                  // A, N, E, H -> W
                        {0, 7}, {1, 7}, {3, 7}, {5, 7}, {6, 7},          // R, A, S, H, W -> M
                        {0, 8}, {1, 8}, {3, 8}, {4, 8}, {6, 8}, {7, 8},  // R, A, S, E, W, M -> O
                        {1, 9}, {2, 9}, {3, 9}, {4, 9}, {7, 9}});        // A, N, S, E, M -> L
    auto mk = [](const char* kind, std::vector<std::size_t> parents, std::size_t node) {
        return scm::make_mechanism(kind, nlohmann::json::object(), std::move(parents), node);
    };
    std::vector<scm::Mechanism> mechs;
    mechs.push_back(mk("adult.R", {}, 0));
    mechs.push_back(mk("adult.A", {}, 1));
    mechs.push_back(mk("adult.N", {}, 2));
    mechs.push_back(mk("adult.S", {}, 3));
    mechs.push_back(mk("adult.E", {0, 1, 2, 3}, 4));
    mechs.push_back(mk("adult.H", {0, 1, 2, 3, 4}, 5));
    mechs.push_back(mk("adult.W", {1, 2, 4, 5}, 6));
    mechs.push_back(mk("adult.M", {0, 1, 3, 6, 5}, 7));
    mechs.push_back(mk("adult.O", {0, 1, 3, 4, 6, 7}, 8));
    mechs.push_back(mk("adult.L", {1, 2, 3, 4, 7}, 9));
    std::vector<scm::NoiseSpec> noise{
        scm::NoiseSpec::categorical({0.85, 0.1, 0.05}),       // U_R
        scm::NoiseSpec::gamma(3.0, 10.0),                     // U_A
        scm::NoiseSpec::categorical({0.3, 0.5, 0.1, 0.1}),    // U_N
        scm::NoiseSpec::bernoulli(0.67),                      // U_S (printed as U_G)
        scm::NoiseSpec::gamma(1.0, 1.0),                      // U_E
        scm::NoiseSpec::normal(0.0, 1.0),                     // U_H
        scm::NoiseSpec::normal(0.0, 1.0),                     // U_W
        scm::NoiseSpec::normal(0.0, 1.0),                     // U_M
        scm::NoiseSpec::gaussian_mixture({0.5, 0.5}, {-2.5, 2.5}, {1.0, 1.0}),  // U_O
        scm::NoiseSpec::normal(0.0, 1.0),                     // U_L (drawn and stored, unused by f_L)
    };
    return scm::Scm(std::move(g), std::move(mechs), std::move(noise));
}

LabelRule loan_rule() {
    LabelRule r;
    r.name = "Y";
    r.integer_label = false;
    r.value = loan_label;
    r.is_normal = [](double y) { return y > 0.9; };
    r.is_anomaly = [](double y) { return y < 0.1; };
    return r;
}

LabelRule adult_rule() {
    LabelRule r;
    r.name = "I";
    r.integer_label = true;
    r.value = adult_income;
    r.is_normal = [](double i) { return i <= 50000.0; };
    r.is_anomaly = [](double i) { return i > 50000.0; };
    return r;
}

std::vector<std::size_t> loan_actionable_default() { return {3, 4, 5, 6}; }        // L, D, I, S
std::vector<std::size_t> loan_actionable_case_study() { return {1, 2, 3, 4, 5, 6}; }  // A, E, L, D, I, S
std::vector<std::size_t> adult_actionable_default() { return {1, 4, 5}; }          // A, E, H

}  // namespace carve::data
