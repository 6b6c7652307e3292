#include "echo/planner.hpp"

#include <algorithm>
#include <functional>
#include <queue>
#include <set>

namespace echo {

bool in_forward_region(const Node& n)
{
    return n.kind == NodeKind::forward || n.kind == NodeKind::encode;
}

namespace {

using MinHeap = std::priority_queue<NodeId, std::vector<NodeId>, std::greater<>>;

std::vector<NodeId> distinct_producers(const Node& n)
{
    std::vector<NodeId> p;
    for (auto e : n.inputs) p.push_back(e.node);
    std::sort(p.begin(), p.end());
    p.erase(std::unique(p.begin(), p.end()), p.end());
    return p;
}

}  // namespace

Schedule build_schedule(const Graph& g)
{
    const auto bound = g.id_bound();
    Schedule s;
    std::vector<bool> done(bound, false);

    // Forward region.
    {
        std::vector<std::size_t> pending(bound, 0);
        std::vector<std::vector<NodeId>> readers(bound);
        for (auto id : g.node_ids()) {
            const Node& n = g.node(id);
            if (!in_forward_region(n)) continue;
            for (auto p : distinct_producers(n)) {
                if (!in_forward_region(g.node(p)))
                    throw GraphError("forward node " + std::to_string(id) + " reads a backward node");
                ++pending[id];
                readers[p].push_back(id);
            }
        }
        MinHeap ready;
        for (auto id : g.node_ids())
            if (in_forward_region(g.node(id)) && pending[id] == 0) ready.push(id);
        while (!ready.empty()) {
            auto id = ready.top();
            ready.pop();
            s.steps.push_back(id);
            done[id] = true;
            for (auto r : readers[id])
                if (--pending[r] == 0) ready.push(r);
        }
    }
    s.backward_begin = s.steps.size();

    // Mirror/decode chains are pulled in on demand.
    std::vector<bool> visiting(bound, false);
    std::function<void(NodeId)> pull = [&](NodeId id) {
        if (done[id]) return;
        if (visiting[id]) throw GraphError("cycle detected while scheduling");
        visiting[id] = true;
        for (auto e : g.node(id).inputs) {
            const Node& p = g.node(e.node);
            if (!done[e.node] && p.kind != NodeKind::gradient) pull(e.node);
        }
        visiting[id] = false;
        done[id] = true;
        s.steps.push_back(id);
    };

    std::vector<std::size_t> pending(bound, 0);
    std::vector<std::vector<NodeId>> readers(bound);
    for (auto id : g.node_ids()) {
        const Node& n = g.node(id);
        if (n.kind != NodeKind::gradient) continue;
        for (auto p : distinct_producers(n))
            if (g.node(p).kind == NodeKind::gradient) {
                ++pending[id];
                readers[p].push_back(id);
            }
    }
    MinHeap ready;
    for (auto id : g.node_ids())
        if (g.node(id).kind == NodeKind::gradient && pending[id] == 0) ready.push(id);
    while (!ready.empty()) {
        auto id = ready.top();
        ready.pop();
        pull(id);
        for (auto r : readers[id])
            if (--pending[r] == 0) ready.push(r);
    }

    // Whatever nobody in the backward pass reads (e.g. dead mirrors) goes last.
    for (auto id : topo_order(g))
        if (!done[id]) {
            if (g.node(id).kind == NodeKind::gradient)
                throw GraphError("cycle detected among gradient nodes");
            pull(id);
        }
    return s;
}

std::int64_t activation_bytes(const Graph& g, const ShapeMap& shapes, EdgeRef e)
{
    const Node& p = g.node(e.node);
    if (p.is_trainable()) return 0;
    for (const auto& t : g.grad_targets())
        if (t.grad == e && g.node(t.placeholder).is_trainable()) return 0;
    return shapes.at(e).bytes();
}

std::int64_t weight_bytes(const Graph& g, std::int64_t multiplier)
{
    std::int64_t w = 0;
    for (auto id : g.placeholders()) {
        const Node& n = g.node(id);
        if (n.is_trainable()) w += n.placeholder->type.bytes() * multiplier;
    }
    return w;
}

MemoryReport plan_memory(const Graph& g, const ShapeMap& shapes, const Schedule& s,
                         std::int64_t weight_multiplier)
{
    MemoryReport r;
    const auto n = s.steps.size();
    if (n == 0) return r;
    if (n != g.size()) throw GraphError("schedule does not cover the graph");

    std::vector<std::size_t> pos(g.id_bound(), 0);
    for (std::size_t i = 0; i < n; ++i) pos[s.steps[i]] = i;

    // Last step reading each edge.
    std::map<EdgeRef, std::size_t> last;
    for (auto id : g.node_ids())
        for (auto e : g.output_edges(id)) last[e] = pos[id];
    for (auto id : g.node_ids())
        for (auto e : g.node(id).inputs) {
            if (pos[id] < pos[e.node]) throw GraphError("schedule runs a consumer before its producer");
            last[e] = std::max(last[e], pos[id]);
        }
    for (auto e : g.outputs()) last[e] = n - 1;

    const auto weights = weight_bytes(g, weight_multiplier);
    std::vector<std::int64_t> delta(n + 1, 0);
    for (const auto& [e, end] : last) {
        const auto b = activation_bytes(g, shapes, e);
        delta[pos[e.node]] += b;
        delta[end + 1] -= b;
    }
    std::vector<std::int64_t> fm(n, 0);
    std::int64_t run = 0;
    r.timeline.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        run += delta[i];
        fm[i] = run;
        r.timeline[i] = run + weights + node_workspace(g, shapes, s.steps[i]);
    }
    auto peak = std::max_element(r.timeline.begin(), r.timeline.end());
    r.peak_bytes = *peak;
    r.peak_step = static_cast<std::size_t>(peak - r.timeline.begin());
    r.by_category.feature_maps = fm[r.peak_step];
    r.by_category.weights = weights;
    r.by_category.workspace = node_workspace(g, shapes, s.steps[r.peak_step]);

    for (const auto& [e, end] : last) {
        if (pos[e.node] > r.peak_step || end < r.peak_step) continue;
        const auto b = activation_bytes(g, shapes, e);
        if (b == 0) continue;
        const auto& tag = g.node(e.node).tag;
        r.by_tag[tag.empty() ? "untagged" : tag] += b;
    }

    std::set<EdgeRef> stashed;
    for (auto id : g.node_ids()) {
        if (in_forward_region(g.node(id))) continue;
        for (auto e : g.node(id).inputs)
            if (in_forward_region(g.node(e.node))) stashed.insert(e);
    }
    for (auto e : stashed) r.stashed_feature_map_bytes += activation_bytes(g, shapes, e);
    return r;
}

std::vector<std::int64_t> live_bytes_oracle(const Graph& g, const Schedule& s, const ShapeMap& shapes,
                                            std::int64_t weight_multiplier)
{
    std::int64_t weights = 0;
    for (auto id : g.node_ids())
        if (g.node(id).is_trainable()) weights += shapes.at({id, 0}).bytes() * weight_multiplier;

    std::set<EdgeRef> outs(g.outputs().begin(), g.outputs().end());
    std::set<EdgeRef> weight_grads;
    for (const auto& t : g.grad_targets())
        if (g.node(t.placeholder).is_trainable()) weight_grads.insert(t.grad);

    std::map<EdgeRef, std::size_t> remaining;
    for (auto id : s.steps)
        for (auto e : g.node(id).inputs) ++remaining[e];

    std::set<EdgeRef> live;
    std::vector<std::int64_t> out;
    for (auto id : s.steps) {
        for (auto e : g.output_edges(id)) live.insert(e);
        std::int64_t bytes = weights + node_workspace(g, shapes, id);
        for (auto e : live)
            if (!g.node(e.node).is_trainable() && !weight_grads.contains(e)) bytes += shapes.at(e).bytes();
        out.push_back(bytes);
        for (auto e : g.node(id).inputs)
            if (--remaining[e] == 0 && !outs.contains(e)) live.erase(e);
        for (auto e : g.output_edges(id))
            if (remaining[e] == 0 && !outs.contains(e)) live.erase(e);
    }
    return out;
}

}  // namespace echo
