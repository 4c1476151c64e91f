#include "carve/scm/graph.hpp"

#include <algorithm>
#include <set>

namespace carve::scm {

CausalGraph::CausalGraph(std::vector<std::string> names, std::vector<Edge> edges)
    : names_(std::move(names)), edges_(std::move(edges)) {
    const std::size_t n = names_.size();
    {
        std::set<std::string> uniq(names_.begin(), names_.end());
        if (uniq.size() != n) throw ValidationError("CausalGraph: duplicate node names");
    }
    std::sort(edges_.begin(), edges_.end());
    edges_.erase(std::unique(edges_.begin(), edges_.end()), edges_.end());

    parents_.assign(n, {});
    children_.assign(n, {});
    for (const auto& [p, c] : edges_) {
        if (p >= n || c >= n) throw ValidationError("CausalGraph: edge endpoint out of range");
        if (p == c) throw ValidationError("CausalGraph: self-loop on node " + names_[p]);
        parents_[c].push_back(p);
        children_[p].push_back(c);
    }
    for (auto& v : parents_) std::sort(v.begin(), v.end());
    for (auto& v : children_) std::sort(v.begin(), v.end());

    // Kahn's algorithm, always taking the smallest-index ready node.
    std::vector<std::size_t> indeg(n);
    for (std::size_t i = 0; i < n; ++i) indeg[i] = parents_[i].size();
    std::vector<bool> done(n, false);
    topo_.reserve(n);
    for (std::size_t step = 0; step < n; ++step) {
        std::size_t pick = n;
        for (std::size_t i = 0; i < n; ++i) {
            if (!done[i] && indeg[i] == 0) {
                pick = i;
                break;
            }
        }
        if (pick == n) {
            // Remaining nodes all sit on cycles; walk parent links to print one.
            std::size_t cur = 0;
            while (done[cur]) ++cur;
            std::vector<std::size_t> path;
            std::vector<int> seen_at(n, -1);
            while (seen_at[cur] < 0) {
                seen_at[cur] = static_cast<int>(path.size());
                path.push_back(cur);
                for (std::size_t p : parents_[cur]) {
                    if (!done[p]) {
                        cur = p;
                        break;
                    }
                }
            }
            std::string msg = "CausalGraph: cycle detected: ";
            for (std::size_t i = path.size(); i-- > static_cast<std::size_t>(seen_at[cur]);) {
                msg += names_[path[i]] + " -> ";
            }
            msg += names_[cur];
            throw ValidationError(msg);
        }
        done[pick] = true;
        topo_.push_back(pick);
        for (std::size_t c : children_[pick]) --indeg[c];
    }
    topo_pos_.assign(n, 0);
    for (std::size_t i = 0; i < n; ++i) topo_pos_[topo_[i]] = i;
}

std::size_t CausalGraph::index_of(const std::string& name) const {
    for (std::size_t i = 0; i < names_.size(); ++i)
        if (names_[i] == name) return i;
    throw ValidationError("CausalGraph: unknown node '" + name + "'");
}

bool CausalGraph::has_edge(std::size_t parent, std::size_t child) const {
    return std::binary_search(edges_.begin(), edges_.end(), Edge{parent, child});
}

std::vector<std::vector<std::uint8_t>> CausalGraph::adjacency() const {
    std::vector<std::vector<std::uint8_t>> a(size(), std::vector<std::uint8_t>(size(), 0));
    for (const auto& [p, c] : edges_) a[p][c] = 1;
    return a;
}

std::vector<std::size_t> CausalGraph::descendants(std::size_t node) const {
    if (node >= size()) throw ValidationError("descendants: node out of range");
    std::vector<bool> mark(size(), false);
    std::vector<std::size_t> stack{node};
    while (!stack.empty()) {
        std::size_t cur = stack.back();
        stack.pop_back();
        for (std::size_t c : children_[cur]) {
            if (!mark[c]) {
                mark[c] = true;
                stack.push_back(c);
            }
        }
    }
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < size(); ++i)
        if (mark[i]) out.push_back(i);
    return out;
}

CausalGraph apply_hard_intervention(const CausalGraph& g, std::size_t node) {
    if (node >= g.size()) throw ValidationError("apply_hard_intervention: unknown node index " + std::to_string(node));
    std::vector<CausalGraph::Edge> kept;
    kept.reserve(g.edges().size());
    for (const auto& e : g.edges())
        if (e.second != node) kept.push_back(e);
    return CausalGraph(g.names(), std::move(kept));
}

std::uint64_t graph_hash(const CausalGraph& g) {
    std::string canon;
    for (const auto& n : g.names()) {
        canon += n;
        canon += ';';
    }
    for (const auto& [p, c] : g.edges()) {
        canon += std::to_string(p) + ">" + std::to_string(c) + ";";
    }
    return fnv1a(canon);
}

}  // namespace carve::scm
