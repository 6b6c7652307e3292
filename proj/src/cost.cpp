#include "echo/cost.hpp"

namespace echo {

CostReport estimate_cost(const Graph& g, const RecomputePlan& plan, const ShapeMap& shapes)
{
    CostReport r;
    for (auto id : g.node_ids()) {
        const auto c = node_cost(g, shapes, id);
        switch (g.node(id).kind) {
        case NodeKind::forward: r.forward_flops += c; break;
        case NodeKind::gradient: r.backward_flops += c; break;
        case NodeKind::mirror: r.recompute_flops += c; break;
        case NodeKind::encode:
        case NodeKind::decode: r.encode_decode_flops += c; break;
        case NodeKind::dead_mirror: break;
        }
    }
    if (plan.strategy == Strategy::baseline) r.recompute_flops = 0;
    const auto base = r.forward_flops + r.backward_flops;
    if (base > 0)
        r.overhead_ratio = static_cast<double>(r.recompute_flops + r.encode_decode_flops) / static_cast<double>(base);
    return r;
}

}  // namespace echo
