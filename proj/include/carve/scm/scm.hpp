#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "carve/rng.hpp"
#include "carve/scm/graph.hpp"
#include "carve/scm/mechanism.hpp"
#include "carve/scm/noise.hpp"

namespace carve::scm {

// A requested intervention. Hard replaces the target's mechanism with a
// constant; soft-shift adds a delta after mechanism and noise.
struct Intervention {
    enum class Kind { hard, soft_shift };
    Kind kind = Kind::soft_shift;
    std::size_t target = 0;
    double value = 0.0;

    void validate(const CausalGraph& g) const {
        if (target >= g.size()) throw ValidationError("Intervention: unknown target node");
        if (!std::isfinite(value)) throw ValidationError("Intervention: non-finite value");
    }
};

struct SampleDiagnostics {
    std::size_t redrawn_rows = 0;  // rows rejected for non-finite mechanism output
};

struct SampleResult {
    Matrix x;
    Matrix u;
    SampleDiagnostics diag;
};

// Structural causal model: graph + one mechanism and one noise spec per node.
// Immutable after construction and freely shareable across threads.
class Scm {
public:
    Scm(CausalGraph graph, std::vector<Mechanism> mechanisms, std::vector<NoiseSpec> noise);

    const CausalGraph& graph() const { return graph_; }
    const Mechanism& mechanism(std::size_t i) const { return mechanisms_[i]; }
    const NoiseSpec& noise(std::size_t i) const { return noise_[i]; }
    std::size_t size() const { return graph_.size(); }

    bool all_additive() const;

    // Evaluate mechanisms in topological order for a full noise vector.
    void evaluate(std::span<const double> u, std::span<double> x_out) const;
    std::vector<double> evaluate(std::span<const double> u) const;

    // Evaluate with an additive shift theta applied after mechanism + noise.
    void evaluate_shifted(std::span<const double> u, std::span<const double> theta, std::span<double> x_out) const;

    nlohmann::json to_json() const;
    static Scm from_json(const nlohmann::json& j);

private:
    CausalGraph graph_;
    std::vector<Mechanism> mechanisms_;
    std::vector<NoiseSpec> noise_;
};

// Draw n rows. Row r uses the derived stream mix(seed, r), so parallel and
// sequential generation agree bit for bit. Rows with non-finite mechanism
// output are redrawn within their stream and counted.
SampleResult sample(const Scm& scm, std::size_t n, std::uint64_t seed);

// u_i = x_i - f_i(parents of x_i, 0). Requires every mechanism additive with
// its own noise slot; otherwise use the stored draws from generation.
std::vector<double> abduct_residual(const Scm& scm, std::span<const double> x);

// Abduction-action-prediction with stored noise: x_i(theta) in topological
// order. (x, u) must be consistent: re-simulation reproduces x within tol.
std::vector<double> counterfactual_exact(const Scm& scm, std::span<const double> x, std::span<const double> u,
                                         std::span<const double> theta, double tol = 1e-9);

}  // namespace carve::scm
