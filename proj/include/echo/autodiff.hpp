#pragma once

#include "echo/graph.hpp"

#include <map>
#include <set>

namespace echo {

struct GradInfo {
    std::map<EdgeRef, EdgeRef> grad_of_edge;
    std::set<NodeId> grad_nodes;
    // Gradient node -> forward node whose gradient builder emitted it. Fan-in sums and seeds
    // have no owner.
    std::map<NodeId, NodeId> owner;
    std::set<EdgeRef> feature_map_edges;
    EdgeRef loss;
    std::vector<EdgeRef> forward_outputs;
};

struct GradientResult {
    Graph graph;
    GradInfo info;
};

// Appends the backward graph for a scalar loss. The result's outputs are the original outputs
// followed by the gradient of every placeholder that receives one.
GradientResult build_gradient_graph(const Graph& g, EdgeRef loss);
GradientResult build_gradient_graph(const Graph& g);  // loss = first output

// Forward edges read by gradient nodes.
std::set<EdgeRef> scan_feature_maps(const Graph& g, const std::set<NodeId>& grad_nodes);

}  // namespace echo
