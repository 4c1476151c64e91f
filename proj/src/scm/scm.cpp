#include "carve/scm/scm.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace carve::scm {

Scm::Scm(CausalGraph graph, std::vector<Mechanism> mechanisms, std::vector<NoiseSpec> noise)
    : graph_(std::move(graph)), mechanisms_(std::move(mechanisms)), noise_(std::move(noise)) {
    const std::size_t n = graph_.size();
    if (mechanisms_.size() != n) throw ValidationError("Scm: need exactly one mechanism per node");
    if (noise_.size() != n) throw ValidationError("Scm: need exactly one noise spec per node");
    for (std::size_t i = 0; i < n; ++i) {
        const auto& m = mechanisms_[i];
        std::set<std::size_t> declared(m.parents.begin(), m.parents.end());
        std::set<std::size_t> from_graph(graph_.parents(i).begin(), graph_.parents(i).end());
        if (declared != from_graph) {
            throw ValidationError("Scm: mechanism parents of node " + graph_.name(i) + " do not match graph edges");
        }
        if (m.noise_index >= n) throw ValidationError("Scm: noise index out of range for node " + graph_.name(i));
        if (!m.fn) throw ValidationError("Scm: mechanism for node " + graph_.name(i) + " has no function");
    }
}

bool Scm::all_additive() const {
    for (std::size_t i = 0; i < size(); ++i) {
        if (!mechanisms_[i].additive || mechanisms_[i].noise_index != i) return false;
    }
    return true;
}

void Scm::evaluate(std::span<const double> u, std::span<double> x_out) const {
    evaluate_shifted(u, {}, x_out);
}

std::vector<double> Scm::evaluate(std::span<const double> u) const {
    std::vector<double> x(size());
    evaluate(u, x);
    return x;
}

void Scm::evaluate_shifted(std::span<const double> u, std::span<const double> theta, std::span<double> x_out) const {
    if (u.size() != size()) throw ValidationError("Scm::evaluate: noise vector size mismatch");
    std::vector<double> pa_vals;
    for (std::size_t node : graph_.topo_order()) {
        const Mechanism& m = mechanisms_[node];
        pa_vals.clear();
        for (std::size_t p : m.parents) pa_vals.push_back(x_out[p]);
        double v = m.fn(pa_vals, u[m.noise_index]);
        if (!theta.empty()) v += theta[node];
        x_out[node] = v;
    }
}

SampleResult sample(const Scm& scm, std::size_t n, std::uint64_t seed) {
    if (n < 1) throw ValidationError("sample: n must be >= 1");
    const std::size_t d = scm.size();
    SampleResult out;
    out.x = Matrix(n, d);
    out.u = Matrix(n, d);
    std::vector<double> u(d), x(d);
    for (std::size_t r = 0; r < n; ++r) {
        Rng rng = derive_stream(seed, r);
        for (;;) {
            for (std::size_t i = 0; i < d; ++i) u[i] = scm.noise(i).sample(rng);
            scm.evaluate(u, x);
            bool finite = true;
            for (double v : x) finite = finite && std::isfinite(v);
            if (finite) break;
            ++out.diag.redrawn_rows;
        }
        std::copy(x.begin(), x.end(), out.x.row(r).begin());
        std::copy(u.begin(), u.end(), out.u.row(r).begin());
    }
    return out;
}

std::vector<double> abduct_residual(const Scm& scm, std::span<const double> x) {
    const std::size_t d = scm.size();
    if (x.size() != d) throw ValidationError("abduct_residual: feature vector size mismatch");
    std::vector<double> u(d);
    std::vector<double> pa_vals;
    for (std::size_t i = 0; i < d; ++i) {
        const Mechanism& m = scm.mechanism(i);
        if (!m.additive || m.noise_index != i) {
            throw ValidationError("abduct_residual: mechanism for node " + scm.graph().name(i) +
                                  " is not additive; use the stored noise instead");
        }
        pa_vals.clear();
        for (std::size_t p : m.parents) pa_vals.push_back(x[p]);
        u[i] = x[i] - m.fn(pa_vals, 0.0);
    }
    return u;
}

std::vector<double> counterfactual_exact(const Scm& scm, std::span<const double> x, std::span<const double> u,
                                         std::span<const double> theta, double tol) {
    const std::size_t d = scm.size();
    if (x.size() != d || u.size() != d || theta.size() != d) {
        throw ValidationError("counterfactual_exact: vector size mismatch");
    }
    for (double t : theta)
        if (!std::isfinite(t)) throw ValidationError("counterfactual_exact: non-finite action value");

    // Consistency: replaying the stored noise must reproduce the factual.
    std::vector<double> x_sim(d);
    scm.evaluate(u, x_sim);
    std::string residuals;
    bool consistent = true;
    for (std::size_t i = 0; i < d; ++i) {
        double r = std::abs(x_sim[i] - x[i]);
        if (r > tol) {
            consistent = false;
            residuals += " " + scm.graph().name(i) + "=" + format_double(r);
        }
    }
    if (!consistent) {
        throw ValidationError("counterfactual_exact: (x, u) inconsistent; per-node residuals:" + residuals);
    }

    std::vector<double> x_cf(d);
    scm.evaluate_shifted(u, theta, x_cf);
    return x_cf;
}

nlohmann::json Scm::to_json() const {
    nlohmann::json j;
    j["nodes"] = graph_.names();
    nlohmann::json edges = nlohmann::json::array();
    for (const auto& [p, c] : graph_.edges()) edges.push_back({graph_.name(p), graph_.name(c)});
    j["edges"] = edges;
    nlohmann::json mechs = nlohmann::json::array();
    for (std::size_t i = 0; i < size(); ++i) {
        nlohmann::json pm = nlohmann::json::array();
        for (std::size_t p : mechanisms_[i].parents) pm.push_back(graph_.name(p));
        mechs.push_back({{"node", graph_.name(i)},
                         {"kind", mechanisms_[i].kind},
                         {"params", mechanisms_[i].params},
                         {"parents", pm}});
    }
    j["mechanisms"] = mechs;
    nlohmann::json ns = nlohmann::json::array();
    for (std::size_t i = 0; i < size(); ++i) {
        nlohmann::json e = noise_[i].to_json();
        e["node"] = graph_.name(i);
        ns.push_back(e);
    }
    j["noise"] = ns;
    return j;
}

Scm Scm::from_json(const nlohmann::json& j) {
    auto names = j.at("nodes").get<std::vector<std::string>>();
    std::vector<CausalGraph::Edge> edges;

    // Build a temporary name->index map for the given order.
    auto index_of = [&names](const std::string& s) -> std::size_t {
        for (std::size_t i = 0; i < names.size(); ++i)
            if (names[i] == s) return i;
        throw ValidationError("scm json: unknown node '" + s + "'");
    };
    for (const auto& e : j.at("edges")) {
        edges.emplace_back(index_of(e.at(0).get<std::string>()), index_of(e.at(1).get<std::string>()));
    }
    CausalGraph given(names, edges);  // validates acyclicity, reports cycles

    // Canonicalize to topological node order so that feature columns and
    // engine blocks always follow evaluation order.
    const auto& topo = given.topo_order();
    std::vector<std::size_t> new_index(names.size());
    for (std::size_t pos = 0; pos < topo.size(); ++pos) new_index[topo[pos]] = pos;

    std::vector<std::string> canon_names;
    for (std::size_t old : topo) canon_names.push_back(names[old]);
    std::vector<CausalGraph::Edge> canon_edges;
    for (const auto& [p, c] : given.edges()) canon_edges.emplace_back(new_index[p], new_index[c]);
    CausalGraph graph(canon_names, canon_edges);

    auto canon_index = [&graph](const std::string& s) { return graph.index_of(s); };

    std::vector<Mechanism> mechs(graph.size());
    std::vector<bool> seen(graph.size(), false);
    for (const auto& mj : j.at("mechanisms")) {
        std::size_t node = canon_index(mj.at("node").get<std::string>());
        if (seen[node]) throw ValidationError("scm json: duplicate mechanism for node " + graph.name(node));
        seen[node] = true;
        std::vector<std::size_t> parents;
        for (const auto& p : mj.at("parents")) parents.push_back(canon_index(p.get<std::string>()));
        mechs[node] = make_mechanism(mj.at("kind").get<std::string>(), mj.value("params", nlohmann::json::object()),
                                     std::move(parents), node);
    }
    for (std::size_t i = 0; i < graph.size(); ++i)
        if (!seen[i]) throw ValidationError("scm json: missing mechanism for node " + graph.name(i));

    std::vector<NoiseSpec> noise(graph.size());
    std::vector<bool> nseen(graph.size(), false);
    for (const auto& nj : j.at("noise")) {
        std::size_t node = canon_index(nj.at("node").get<std::string>());
        noise[node] = NoiseSpec::from_json(nj);
        nseen[node] = true;
    }
    for (std::size_t i = 0; i < graph.size(); ++i)
        if (!nseen[i]) throw ValidationError("scm json: missing noise spec for node " + graph.name(i));

    return Scm(std::move(graph), std::move(mechs), std::move(noise));
}

}  // namespace carve::scm
