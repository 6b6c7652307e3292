#pragma once

#include "echo/graph.hpp"

#include <map>
#include <vector>

namespace echo {

// Edge -> tensor type, indexed by producer id.
class ShapeMap {
public:
    bool contains(EdgeRef e) const;
    const TensorType& at(EdgeRef e) const;
    const std::vector<TensorType>& outputs_of(NodeId id) const;
    void set(NodeId id, std::vector<TensorType> types);
    std::size_t edge_count() const;

private:
    std::vector<std::vector<TensorType>> by_node_;
};

ShapeMap infer_shapes(const Graph& g);

std::int64_t node_cost(const Graph& g, const ShapeMap& shapes, NodeId id);
std::int64_t node_workspace(const Graph& g, const ShapeMap& shapes, NodeId id);

// Distinct consumer count per edge, plus one if the edge is a graph output.
using UseRefMap = std::map<EdgeRef, std::size_t>;
UseRefMap edge_use_refs(const Graph& g);

// Removes non-placeholder nodes whose outputs nobody reads, to a fixed point.
Graph eliminate_dead_nodes(const Graph& g);

}  // namespace echo
