#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "carve/common.hpp"

namespace carve::scm {

// Directed acyclic causal graph over named nodes. Immutable after
// construction; construction validates acyclicity and caches the
// topological order (ties broken by node index).
class CausalGraph {
public:
    using Edge = std::pair<std::size_t, std::size_t>;  // parent -> child

    CausalGraph(std::vector<std::string> names, std::vector<Edge> edges);

    std::size_t size() const { return names_.size(); }
    const std::vector<std::string>& names() const { return names_; }
    const std::string& name(std::size_t i) const { return names_[i]; }
    std::size_t index_of(const std::string& name) const;

    const std::vector<Edge>& edges() const { return edges_; }
    bool has_edge(std::size_t parent, std::size_t child) const;

    const std::vector<std::size_t>& parents(std::size_t node) const { return parents_[node]; }
    const std::vector<std::size_t>& children(std::size_t node) const { return children_[node]; }
    const std::vector<std::size_t>& topo_order() const { return topo_; }
    std::size_t topo_position(std::size_t node) const { return topo_pos_[node]; }

    // Binary adjacency, row = parent, column = child.
    std::vector<std::vector<std::uint8_t>> adjacency() const;

    // All nodes reachable from `node` by directed paths, ascending order.
    std::vector<std::size_t> descendants(std::size_t node) const;

    bool operator==(const CausalGraph& other) const {
        return names_ == other.names_ && edges_ == other.edges_;
    }

private:
    std::vector<std::string> names_;
    std::vector<Edge> edges_;  // sorted, deduplicated
    std::vector<std::vector<std::size_t>> parents_;
    std::vector<std::vector<std::size_t>> children_;
    std::vector<std::size_t> topo_;
    std::vector<std::size_t> topo_pos_;
};

// Stable topological ordering (parents before children, index tie-break).
inline const std::vector<std::size_t>& topo_order(const CausalGraph& g) { return g.topo_order(); }

// Mutilated graph for do(node): all incoming edges of `node` removed.
CausalGraph apply_hard_intervention(const CausalGraph& g, std::size_t node);

// FNV-1a over the canonical node/edge listing; identifies a graph in checkpoints.
std::uint64_t graph_hash(const CausalGraph& g);

}  // namespace carve::scm
