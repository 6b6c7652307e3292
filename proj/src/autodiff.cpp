#include "echo/autodiff.hpp"

#include "echo/ops.hpp"
#include "echo/passes.hpp"

#include <algorithm>

namespace echo {

namespace {

std::string node_label(const Node& n) { return "node " + std::to_string(n.id) + " (" + n.op + ")"; }

}  // namespace

std::set<EdgeRef> scan_feature_maps(const Graph& g, const std::set<NodeId>& grad_nodes)
{
    std::set<EdgeRef> fm;
    for (auto id : grad_nodes) {
        if (!g.contains(id)) continue;
        for (auto e : g.node(id).inputs)
            if (g.node(e.node).kind == NodeKind::forward) fm.insert(e);
    }
    return fm;
}

GradientResult build_gradient_graph(const Graph& g)
{
    if (g.outputs().empty()) throw GraphError("graph has no outputs to differentiate");
    return build_gradient_graph(g, g.outputs().front());
}

GradientResult build_gradient_graph(const Graph& g, EdgeRef loss)
{
    g.validate();
    for (auto id : g.node_ids())
        if (g.node(id).kind != NodeKind::forward)
            throw GraphError("gradient pass expects a forward-only graph; " + node_label(g.node(id)));
    const ShapeMap shapes = infer_shapes(g);
    if (shapes.at(loss).shape.numel() != 1)
        throw GraphError("loss must be scalar, got shape " + to_string(shapes.at(loss).shape));

    const auto order = topo_order(g);
    std::vector<bool> active(g.id_bound(), false);
    active[loss.node] = true;
    for (auto it = order.rbegin(); it != order.rend(); ++it)
        if (active[*it])
            for (auto e : g.node(*it).inputs) active[e.node] = true;

    GradientResult res{g, {}};
    Graph& out = res.graph;
    GradInfo& info = res.info;
    info.loss = loss;
    info.forward_outputs = g.outputs();

    std::map<EdgeRef, std::vector<EdgeRef>> contrib;
    auto accumulate = [&](EdgeRef fwd_edge, const std::vector<EdgeRef>& parts) {
        if (parts.size() == 1) return parts.front();
        auto id = out.add_node("sum_n", parts, {}, g.node(fwd_edge.node).tag, NodeKind::gradient);
        info.grad_nodes.insert(id);
        return EdgeRef{id, 0};
    };

    std::vector<GradTarget> targets;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        const NodeId id = *it;
        if (!active[id]) continue;
        const Node& n = g.node(id);
        const std::size_t nout = g.num_outputs(id);
        for (std::uint32_t k = 1; k < nout; ++k)
            if (contrib.contains({id, k}))
                throw GraphError(node_label(n) + ": output " + std::to_string(k) +
                                 " is not differentiable but lies on an active path");

        const bool seed = id == loss.node;
        std::optional<EdgeRef> dy;
        if (!seed) {
            auto c = contrib.find({id, 0});
            if (c == contrib.end()) continue;
            dy = accumulate({id, 0}, c->second);
            info.grad_of_edge[{id, 0}] = *dy;
        } else if (loss.index != 0) {
            throw GraphError(node_label(n) + ": loss must be output 0");
        }

        if (n.is_placeholder()) {
            if (seed) {
                const auto& t = n.placeholder->type;
                auto ones = out.add_node("ones", {},
                                         {{"shape", t.shape.dims()}, {"dtype", std::string(to_string(t.dtype))}},
                                         n.tag, NodeKind::gradient);
                info.grad_nodes.insert(ones);
                dy = EdgeRef{ones, 0};
                info.grad_of_edge[{id, 0}] = *dy;
            }
            targets.push_back({id, *dy});
            continue;
        }

        const auto& def = registry().lookup(n.op);
        if (!def.differentiable()) throw GraphError(node_label(n) + ": op is not differentiable");
        std::vector<TensorType> in_types;
        for (auto e : n.inputs) in_types.push_back(shapes.at(e));
        const auto& out_types = shapes.outputs_of(id);

        GradContext ctx(out, n, in_types, out_types, dy);
        auto grads = def.grad_fn(ctx);
        for (auto gid : ctx.emitted()) {
            info.grad_nodes.insert(gid);
            info.owner[gid] = id;
        }
        for (std::size_t i = 0; i < grads.size() && i < n.inputs.size(); ++i)
            if (grads[i]) contrib[n.inputs[i]].push_back(*grads[i]);
    }

    std::sort(targets.begin(), targets.end(),
              [](const GradTarget& a, const GradTarget& b) { return a.placeholder < b.placeholder; });
    auto outs = g.outputs();
    for (const auto& t : targets)
        if (std::find(outs.begin(), outs.end(), t.grad) == outs.end()) outs.push_back(t.grad);
    out.set_outputs(std::move(outs));
    out.set_grad_targets(std::move(targets));
    info.feature_map_edges = scan_feature_maps(out, info.grad_nodes);
    return res;
}

}  // namespace echo
