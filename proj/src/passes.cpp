#include "echo/passes.hpp"

#include "echo/ops.hpp"

#include <set>

namespace echo {

bool ShapeMap::contains(EdgeRef e) const
{
    return e.node < by_node_.size() && e.index < by_node_[e.node].size();
}

const TensorType& ShapeMap::at(EdgeRef e) const
{
    if (!contains(e))
        throw ShapeError("no shape for edge (" + std::to_string(e.node) + "," + std::to_string(e.index) + ")");
    return by_node_[e.node][e.index];
}

const std::vector<TensorType>& ShapeMap::outputs_of(NodeId id) const
{
    if (id >= by_node_.size()) throw ShapeError("no shapes for node " + std::to_string(id));
    return by_node_[id];
}

void ShapeMap::set(NodeId id, std::vector<TensorType> types)
{
    if (id >= by_node_.size()) by_node_.resize(id + 1);
    by_node_[id] = std::move(types);
}

std::size_t ShapeMap::edge_count() const
{
    std::size_t n = 0;
    for (const auto& v : by_node_) n += v.size();
    return n;
}

ShapeMap infer_shapes(const Graph& g)
{
    ShapeMap m;
    for (auto id : topo_order(g)) {
        const Node& n = g.node(id);
        if (n.is_placeholder()) {
            m.set(id, {n.placeholder->type});
            continue;
        }
        std::vector<TensorType> in;
        in.reserve(n.inputs.size());
        for (auto e : n.inputs) in.push_back(m.at(e));
        try {
            auto out = registry().infer_shape(n.op, in, n.attrs);
            if (out.size() != g.num_outputs(id))
                throw ShapeError("shape rule returned " + std::to_string(out.size()) + " outputs");
            m.set(id, std::move(out));
        } catch (const ShapeError& e) {
            throw ShapeError("node " + std::to_string(id) + " (" + n.op + "): " + e.what());
        }
    }
    return m;
}

namespace {

std::vector<TensorType> input_types(const Graph& g, const ShapeMap& shapes, const Node& n)
{
    std::vector<TensorType> in;
    for (auto e : n.inputs) in.push_back(shapes.at(e));
    return in;
}

}  // namespace

std::int64_t node_cost(const Graph& g, const ShapeMap& shapes, NodeId id)
{
    const Node& n = g.node(id);
    if (n.is_placeholder()) return 0;
    const auto& def = registry().lookup(n.op);
    auto in = input_types(g, shapes, n);
    const auto& out = shapes.outputs_of(id);
    for (const auto& t : in)
        if (t.shape.numel() == 0) return 0;
    return def.cost_fn(in, out, n.attrs);
}

std::int64_t node_workspace(const Graph& g, const ShapeMap& shapes, NodeId id)
{
    const Node& n = g.node(id);
    if (n.is_placeholder()) return 0;
    const auto& def = registry().lookup(n.op);
    if (!def.workspace_fn) return 0;
    auto in = input_types(g, shapes, n);
    return def.workspace_fn(in, shapes.outputs_of(id), n.attrs);
}

UseRefMap edge_use_refs(const Graph& g)
{
    UseRefMap refs;
    for (auto id : g.node_ids())
        for (auto e : g.output_edges(id)) refs[e] = 0;
    for (auto id : g.node_ids()) {
        std::set<EdgeRef> distinct(g.node(id).inputs.begin(), g.node(id).inputs.end());
        for (auto e : distinct) ++refs[e];
    }
    std::set<EdgeRef> outs(g.outputs().begin(), g.outputs().end());
    for (auto e : outs) ++refs[e];
    return refs;
}

Graph eliminate_dead_nodes(const Graph& g)
{
    Graph out = g;
    std::vector<std::size_t> readers(out.id_bound(), 0);
    for (auto id : out.node_ids())
        for (auto e : out.node(id).inputs) ++readers[e.node];
    for (auto e : out.outputs()) ++readers[e.node];
    for (const auto& t : out.grad_targets()) ++readers[t.grad.node];

    std::vector<NodeId> work;
    for (auto id : out.node_ids())
        if (readers[id] == 0 && !out.node(id).is_placeholder()) work.push_back(id);
    while (!work.empty()) {
        auto id = work.back();
        work.pop_back();
        if (!out.contains(id)) continue;
        auto inputs = out.node(id).inputs;
        out.erase(id);
        for (auto e : inputs)
            if (--readers[e.node] == 0 && out.contains(e.node) && !out.node(e.node).is_placeholder())
                work.push_back(e.node);
    }
    return out;
}

}  // namespace echo
