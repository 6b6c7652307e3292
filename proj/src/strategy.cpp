#include "echo/strategy.hpp"

#include "echo/ops.hpp"
#include "echo/planner.hpp"

#include <algorithm>
#include <deque>

namespace echo {

std::string_view to_string(Strategy s)
{
    switch (s) {
    case Strategy::baseline: return "baseline";
    case Strategy::mirror: return "mirror";
    case Strategy::echo: return "echo";
    }
    return "?";
}

Strategy strategy_from_string(std::string_view s)
{
    if (s == "baseline") return Strategy::baseline;
    if (s == "mirror") return Strategy::mirror;
    if (s == "echo") return Strategy::echo;
    throw std::invalid_argument("unknown strategy '" + std::string(s) + "'");
}

StrategyConfig StrategyConfig::defaults(Strategy s)
{
    StrategyConfig c;
    c.strategy = s;
    for (const auto& name : registry().names()) {
        const auto& def = registry().lookup(name);
        if (def.compute_heavy) c.compute_heavy.insert(name);
        if (def.binarizable) c.binarizable.insert(name);
    }
    return c;
}

bool is_compute_heavy(const Graph& g, const ShapeMap* shapes, NodeId id, const StrategyConfig& cfg)
{
    const Node& n = g.node(id);
    if (n.is_placeholder()) return false;
    if (cfg.compute_heavy.contains(n.op)) return true;
    return cfg.flop_threshold && shapes && node_cost(g, *shapes, id) >= *cfg.flop_threshold;
}

namespace {

std::vector<std::size_t> topo_positions(const Graph& g, const std::vector<NodeId>& order)
{
    std::vector<std::size_t> pos(g.id_bound(), 0);
    for (std::size_t i = 0; i < order.size(); ++i) pos[order[i]] = i;
    return pos;
}

std::vector<NodeId> producers_reversed(const Node& n)
{
    std::vector<NodeId> out;
    for (auto it = n.inputs.rbegin(); it != n.inputs.rend(); ++it) out.push_back(it->node);
    return out;
}

// Mirror-path bookkeeping shared by both strategies. Every query derives from the current
// mirrored set, so trimming can flip membership and re-ask.
class MirrorState {
public:
    // heavy_reads: whether gradients of compute-heavy ops read mirrors (Mirror always, Echo
    // only through dead mirrors).
    enum class HeavyReads { never, dead_node, always };

    MirrorState(const Graph& g, const GradInfo& info, const ShapeMap& shapes, const StrategyConfig& cfg,
                const UseRefMap* refs, bool cross_subgraph, HeavyReads heavy_reads)
        : mirrored(g.id_bound(), 0), sub(g.id_bound(), -1), region(g.id_bound(), -1), g_(g), info_(info),
          shapes_(shapes), cfg_(cfg), refs_(refs), cross_(cross_subgraph), heavy_reads_(heavy_reads),
          order_(topo_order(g)), heavy_(g.id_bound(), 0), dead_ok_(g.id_bound(), 0), readers_(g.id_bound()),
          grad_reads_(g.id_bound())
    {
        for (auto e : info.forward_outputs) forward_outputs_.insert(e);
        for (auto id : g.node_ids()) {
            const Node& n = g.node(id);
            if (n.kind != NodeKind::forward || n.is_placeholder()) continue;
            heavy_[id] = is_compute_heavy(g, &shapes, id, cfg);
            if (heavy_[id] && heavy_reads == HeavyReads::dead_node && registry().lookup(n.op).differentiable())
                dead_ok_[id] = registry().grad_deps(n.op).outputs.empty();
        }
        for (auto id : g.node_ids()) {
            const Node& n = g.node(id);
            if (n.kind == NodeKind::forward) {
                for (auto e : n.inputs) {
                    auto& r = readers_[e.node];
                    if (r.empty() || r.back() != id) r.push_back(id);
                }
            } else if (n.kind == NodeKind::gradient) {
                for (auto e : n.inputs)
                    if (g.node(e.node).kind == NodeKind::forward) grad_reads_[e.node].push_back({id, e});
            }
        }
    }

    const Graph& graph() const { return g_; }
    const std::vector<NodeId>& order() const { return order_; }
    bool heavy(NodeId id) const { return heavy_[id] != 0; }
    bool dead_ok(NodeId id) const { return dead_ok_[id] != 0; }

    std::optional<NodeId> owner(NodeId grad) const
    {
        auto it = info_.owner.find(grad);
        if (it == info_.owner.end()) return std::nullopt;
        return it->second;
    }

    bool mirror_reads(NodeId consumer, EdgeRef e) const
    {
        return mirrored[e.node] && (cross_ || region[e.node] == region[consumer]);
    }

    bool binarized_read(NodeId grad, EdgeRef e) const
    {
        return binarized.contains(e) && owner(grad) == e.node;
    }

    bool grad_redirected(NodeId grad, EdgeRef e) const
    {
        if (!mirrored[e.node]) return false;
        auto o = owner(grad);
        if (!o || !heavy_[*o] || heavy_reads_ == HeavyReads::always) return true;
        return dead_ok_[*o] != 0;
    }

    // Whether e must persist from the forward pass into the backward pass. skip_owner excludes
    // the reads made by that forward node's own gradient.
    bool stashed(EdgeRef e, std::optional<NodeId> skip_owner = std::nullopt) const
    {
        for (const auto& [grad, edge] : grad_reads_[e.node]) {
            if (edge != e) continue;
            if (skip_owner && owner(grad) == skip_owner) continue;
            if (!binarized_read(grad, e) && !grad_redirected(grad, e)) return true;
        }
        for (auto c : readers_[e.node]) {
            if (!mirrored[c]) continue;
            for (auto in : g_.node(c).inputs)
                if (in == e && !mirror_reads(c, e)) return true;
        }
        return false;
    }

    std::int64_t weight(EdgeRef e) const
    {
        if (g_.node(e.node).is_trainable() || forward_outputs_.contains(e)) return 0;
        return shapes_.at(e).bytes();
    }

    std::int64_t bit_weight(EdgeRef e) const { return byte_size(shapes_.at(e).shape.numel(), Dtype::bit); }

    // Full bytes when stashed, packed bits when only a binarized copy persists.
    std::int64_t edge_cost(EdgeRef e) const
    {
        if (stashed(e)) return weight(e);
        return binarized.contains(e) ? bit_weight(e) : 0;
    }

    std::vector<EdgeRef> stashed_edges() const
    {
        std::vector<EdgeRef> out;
        for (auto id : order_) {
            if (g_.node(id).kind != NodeKind::forward) continue;
            for (auto e : g_.output_edges(id))
                if (stashed(e)) out.push_back(e);
        }
        return out;
    }

    std::int64_t stash_bytes() const
    {
        std::int64_t b = 0;
        for (auto e : stashed_edges()) b += weight(e);
        for (auto e : binarized) b += bit_weight(e);
        return b;
    }

    void mark_binarizable()
    {
        for (auto id : order_) {
            const Node& n = g_.node(id);
            if (n.kind != NodeKind::forward || n.is_placeholder() || !cfg_.binarizable.contains(n.op)) continue;
            const auto& def = registry().lookup(n.op);
            if (!def.differentiable()) continue;
            for (auto k : def.grad_deps.outputs) {
                EdgeRef e{id, static_cast<std::uint32_t>(k)};
                for (const auto& [grad, edge] : grad_reads_[id])
                    if (edge == e && owner(grad) == id) binarized.insert(e);
            }
        }
    }

    // Keeps a 1-bit copy only where it replaces a full-width stash and no live mirror could
    // serve the read for free.
    void drop_useless_binarization()
    {
        const auto need = needed();
        for (auto it = binarized.begin(); it != binarized.end();) {
            if (stashed(*it, it->node) || (mirrored[it->node] && need[it->node])) it = binarized.erase(it);
            else ++it;
        }
    }

    // Mirrors whose output some gradient (directly or through other mirrors) reads.
    std::vector<char> needed() const
    {
        std::vector<char> need(g_.id_bound(), 0);
        for (NodeId p = 0; p < g_.id_bound(); ++p)
            for (const auto& [grad, e] : grad_reads_[p])
                if (!binarized_read(grad, e) && grad_redirected(grad, e)) need[p] = 1;
        for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
            if (!need[*it] || !mirrored[*it]) continue;
            for (auto e : g_.node(*it).inputs)
                if (mirror_reads(*it, e)) need[e.node] = 1;
        }
        return need;
    }

    void prune()
    {
        auto need = needed();
        for (NodeId id = 0; id < g_.id_bound(); ++id)
            if (mirrored[id] && !need[id]) mirrored[id] = 0;
    }

    // Greedy forward trimming of one subgraph: remove a co-removal group from the mirror path
    // when the bytes it releases cover the bytes it newly stashes.
    void trim(int k, const std::vector<NodeId>& members)
    {
        for (auto s : members) {
            if (!mirrored[s]) continue;
            std::vector<NodeId> group{s};
            std::set<NodeId> in_group{s};
            for (std::size_t i = 0; i < group.size(); ++i)
                for (auto e : g_.node(group[i]).inputs) {
                    if (refs_ && refs_->contains(e) && refs_->at(e) < 2) continue;
                    if (!stashed(e)) continue;
                    for (auto c : readers_[e.node])
                        if (mirrored[c] && sub[c] == k && !in_group.contains(c) && reads(c, e)) {
                            in_group.insert(c);
                            group.push_back(c);
                        }
                }

            std::set<EdgeRef> affected;
            for (auto x : group) {
                for (auto e : g_.output_edges(x)) affected.insert(e);
                for (auto e : g_.node(x).inputs) affected.insert(e);
            }
            std::vector<std::int64_t> before;
            for (auto e : affected) before.push_back(edge_cost(e));
            for (auto x : group) mirrored[x] = 0;
            std::int64_t alloc = 0, rel = 0;
            std::size_t i = 0;
            for (auto e : affected) {
                const auto after = edge_cost(e);
                if (after > before[i]) alloc += after - before[i];
                else rel += before[i] - after;
                ++i;
            }
            if (rel < alloc)
                for (auto x : group) mirrored[x] = 1;
        }
    }

    std::vector<char> mirrored;
    std::vector<int> sub;
    std::vector<int> region;
    std::set<EdgeRef> binarized;

private:
    bool reads(NodeId c, EdgeRef e) const
    {
        const auto& ins = g_.node(c).inputs;
        return std::find(ins.begin(), ins.end(), e) != ins.end();
    }

    const Graph& g_;
    const GradInfo& info_;
    const ShapeMap& shapes_;
    const StrategyConfig& cfg_;
    const UseRefMap* refs_;
    bool cross_;
    HeavyReads heavy_reads_;
    std::vector<NodeId> order_;
    std::vector<char> heavy_;
    std::vector<char> dead_ok_;
    std::vector<std::vector<NodeId>> readers_;
    std::vector<std::vector<std::pair<NodeId, EdgeRef>>> grad_reads_;
    std::set<EdgeRef> forward_outputs_;
};

// Materializes mirror, encode/decode and dead-mirror nodes for the state's decisions.
StrategyResult apply(const MirrorState& st, const GradInfo& info, const ShapeMap& shapes, Strategy strategy)
{
    const Graph& g = st.graph();
    StrategyResult res{g, {}};
    Graph& out = res.graph;
    RecomputePlan& plan = res.plan;
    plan.strategy = strategy;

    for (auto x : st.order()) {
        if (!st.mirrored[x]) continue;
        const Node& n = g.node(x);
        std::vector<EdgeRef> ins;
        for (auto e : n.inputs)
            ins.push_back(st.mirror_reads(x, e) ? EdgeRef{plan.mirror_node.at(e.node), e.index} : e);
        plan.mirror_node[x] = out.add_node(n.op, ins, n.attrs, n.tag, NodeKind::mirror, x);
        plan.mirrored.push_back(x);
    }

    std::map<EdgeRef, std::size_t> bin_index;
    for (auto e : st.binarized) {
        auto enc = out.add_node("encode", {e}, {}, g.node(e.node).tag, NodeKind::encode);
        bin_index[e] = plan.binarized.size();
        plan.binarized.push_back({e, enc, {}});
    }

    for (auto gid : info.grad_nodes) {
        const auto inputs = g.node(gid).inputs;
        for (std::size_t i = 0; i < inputs.size(); ++i) {
            auto e = inputs[i];
            if (g.node(e.node).kind != NodeKind::forward) continue;
            if (st.binarized_read(gid, e)) {
                auto& b = plan.binarized[bin_index.at(e)];
                auto dec = out.add_node("decode", {EdgeRef{b.encode, 0}},
                                        {{"dtype", std::string(to_string(shapes.at(e).dtype))}},
                                        g.node(e.node).tag, NodeKind::decode);
                b.decodes.push_back(dec);
                out.set_input(gid, i, {dec, 0});
            } else if (st.grad_redirected(gid, e)) {
                out.set_input(gid, i, {plan.mirror_node.at(e.node), e.index});
            }
        }
    }

    // A heavy node whose gradient now reads recomputed inputs gets a dead mirror: it stands on
    // the recomputation path but nothing reads it, so it never runs.
    for (auto h : st.order()) {
        if (!st.dead_ok(h)) continue;
        bool redirected = false;
        for (const auto& [gid, fwd] : info.owner)
            if (fwd == h)
                for (auto e : g.node(gid).inputs)
                    if (g.node(e.node).kind == NodeKind::forward && st.grad_redirected(gid, e)) redirected = true;
        if (!redirected) continue;
        const Node& n = g.node(h);
        std::vector<EdgeRef> ins;
        for (auto e : n.inputs)
            ins.push_back(st.mirrored[e.node] ? EdgeRef{plan.mirror_node.at(e.node), e.index} : e);
        auto id = out.add_node(n.op, ins, n.attrs, n.tag, NodeKind::dead_mirror, h);
        plan.dead_mirrors.push_back({h, id});
    }

    plan.stashed_edges = st.stashed_edges();
    plan.stashed_bytes_estimate = st.stash_bytes();
    auto need = st.needed();
    for (auto x : plan.mirrored)
        if (need[x]) plan.recompute_flops_estimate += node_cost(g, shapes, x);
    return res;
}

void fill_subgraph_plans(const MirrorState& st, const std::vector<Subgraph>& subs, RecomputePlan& plan)
{
    for (std::size_t k = 0; k < subs.size(); ++k) {
        SubgraphPlan sp;
        sp.subgraph = subs[k];
        std::set<EdgeRef> frontier;
        for (auto m : subs[k].members) {
            if (st.mirrored[m]) {
                sp.mirrored.push_back(m);
                for (auto e : st.graph().node(m).inputs)
                    if (!st.mirror_reads(m, e)) frontier.insert(e);
            } else {
                sp.removed.push_back(m);
            }
        }
        sp.frontier_stash.assign(frontier.begin(), frontier.end());
        plan.subgraphs.push_back(std::move(sp));
    }
}

struct PeakCheck {
    std::int64_t peak = 0;
    std::optional<NodeId> mirror_of;  // original of a mirror live at the peak step
    std::optional<NodeId> decode;     // or a decode node live there
};

PeakCheck check_peak(const Graph& g)
{
    Graph clean = eliminate_dead_nodes(g);
    auto shapes = infer_shapes(clean);
    auto sched = build_schedule(clean);
    auto mem = plan_memory(clean, shapes, sched, 1);
    PeakCheck r;
    r.peak = mem.peak_bytes;

    std::vector<std::size_t> last(clean.id_bound(), 0);
    for (std::size_t i = 0; i < sched.steps.size(); ++i)
        for (auto e : clean.node(sched.steps[i]).inputs) last[e.node] = std::max(last[e.node], i);
    for (std::size_t i = mem.peak_step + 1; i-- > sched.backward_begin;) {
        const Node& n = clean.node(sched.steps[i]);
        if (last[n.id] < mem.peak_step) continue;
        if (n.kind == NodeKind::mirror) {
            r.mirror_of = n.mirror_of;
            break;
        }
        if (n.kind == NodeKind::decode) {
            r.decode = n.id;
            break;
        }
    }
    return r;
}

std::int64_t baseline_stash(const Graph& g, const GradInfo& info)
{
    std::int64_t b = 0;
    auto shapes = infer_shapes(g);
    for (auto e : info.feature_map_edges)
        if (!g.node(e.node).is_trainable()) b += shapes.at(e).bytes();
    return b;
}

MirrorState make_echo_state(const Graph& g, const GradInfo& info, const ShapeMap& shapes, const UseRefMap& refs,
                            const StrategyConfig& cfg, const std::vector<Subgraph>& subs)
{
    MirrorState st(g, info, shapes, cfg, &refs, false,
                   cfg.dead_node ? MirrorState::HeavyReads::dead_node : MirrorState::HeavyReads::never);
    for (std::size_t k = 0; k < subs.size(); ++k)
        for (auto m : subs[k].members) {
            st.sub[m] = static_cast<int>(k);
            st.region[m] = static_cast<int>(subs[k].region);
            st.mirrored[m] = 1;
        }
    if (cfg.binarization) st.mark_binarizable();
    st.prune();
    return st;
}

}  // namespace

std::vector<Subgraph> partition_subgraphs(const Graph& g, const StrategyConfig& cfg)
{
    std::optional<ShapeMap> shapes;
    if (cfg.flop_threshold) shapes = infer_shapes(g);
    const ShapeMap* sp = shapes ? &*shapes : nullptr;
    const auto order = topo_order(g);
    const auto pos = topo_positions(g, order);

    std::vector<char> visited(g.id_bound(), 0);
    struct Seed {
        NodeId node;
        std::optional<std::size_t> region;
    };
    std::deque<Seed> work;
    for (auto e : g.outputs())
        if (g.node(e.node).kind == NodeKind::forward) work.push_back({e.node, std::nullopt});

    std::vector<Subgraph> subs;
    std::size_t regions = 0;
    while (!work.empty()) {
        const auto [h, from] = work.front();
        work.pop_front();
        if (visited[h]) continue;
        visited[h] = 1;
        const Node& hn = g.node(h);
        if (hn.is_placeholder()) continue;

        Subgraph sg;
        sg.seed = h;
        sg.region = from.value_or(regions);
        std::vector<NodeId> stack = producers_reversed(hn);
        if (!is_compute_heavy(g, sp, h, cfg)) sg.members.push_back(h);
        while (!stack.empty()) {
            const NodeId w = stack.back();
            stack.pop_back();
            if (visited[w]) continue;
            const Node& wn = g.node(w);
            if (wn.is_placeholder()) continue;
            const bool full = cfg.max_subgraph_nodes != 0 && sg.members.size() >= cfg.max_subgraph_nodes;
            if (is_compute_heavy(g, sp, w, cfg)) {
                work.push_back({w, std::nullopt});
                continue;
            }
            if (full) {
                work.push_back({w, sg.region});
                continue;
            }
            visited[w] = 1;
            sg.members.push_back(w);
            for (auto p : producers_reversed(wn)) stack.push_back(p);
        }
        if (sg.members.empty()) continue;
        if (!from) ++regions;
        std::sort(sg.members.begin(), sg.members.end(), [&](NodeId a, NodeId b) { return pos[a] < pos[b]; });
        std::set<NodeId> in(sg.members.begin(), sg.members.end());
        std::set<EdgeRef> seen;
        for (auto m : sg.members)
            for (auto e : g.node(m).inputs)
                if (!in.contains(e.node) && seen.insert(e).second) sg.frontier.push_back(e);
        subs.push_back(std::move(sg));
    }
    return subs;
}

TrimResult trim_forward(const Graph& g, const GradInfo& info, const ShapeMap& shapes, const UseRefMap& refs,
                        const Subgraph& sub, const StrategyConfig& cfg)
{
    MirrorState st = make_echo_state(g, info, shapes, refs, cfg, {sub});
    st.trim(0, sub.members);
    st.prune();
    TrimResult r;
    for (auto m : sub.members) (st.mirrored[m] ? r.mirrored : r.removed).push_back(m);
    r.stashed = st.stashed_edges();
    return r;
}

StrategyResult run_mirror(const Graph& g, const GradInfo& info, const ShapeMap& shapes, const StrategyConfig& cfg)
{
    MirrorState st(g, info, shapes, cfg, nullptr, true, MirrorState::HeavyReads::always);
    std::vector<NodeId> stack;
    for (auto e : info.feature_map_edges) {
        const Node& n = g.node(e.node);
        if (!n.is_placeholder() && !st.heavy(e.node)) stack.push_back(e.node);
    }
    while (!stack.empty()) {
        auto id = stack.back();
        stack.pop_back();
        if (st.mirrored[id]) continue;
        st.mirrored[id] = 1;
        for (auto e : g.node(id).inputs) {
            const Node& p = g.node(e.node);
            if (!p.is_placeholder() && !st.heavy(e.node) && !st.mirrored[e.node]) stack.push_back(e.node);
        }
    }
    auto res = apply(st, info, shapes, Strategy::mirror);
    return res;
}

StrategyResult run_echo(const Graph& g, const GradInfo& info, const ShapeMap& shapes, const UseRefMap& refs,
                        const StrategyConfig& cfg)
{
    const auto subs = partition_subgraphs(g, cfg);
    MirrorState st = make_echo_state(g, info, shapes, refs, cfg, subs);
    for (std::size_t k = 0; k < subs.size(); ++k) st.trim(static_cast<int>(k), subs[k].members);
    st.prune();
    st.drop_useless_binarization();

    const auto base_peak = cfg.peak_guard ? check_peak(g).peak : 0;
    const auto base_stash = baseline_stash(g, info);
    bool reverted = false;
    // Each round reverts the subgraph (or binarized edge) holding memory at the peak step
    // until the rewrite no longer exceeds the baseline.
    for (;;) {
        auto res = apply(st, info, shapes, Strategy::echo);
        fill_subgraph_plans(st, subs, res.plan);
        res.plan.guard_reverted = reverted;
        if (!cfg.peak_guard) return res;
        const bool any = std::find(st.mirrored.begin(), st.mirrored.end(), 1) != st.mirrored.end() ||
                         !st.binarized.empty();
        if (!any) return res;
        const auto check = check_peak(res.graph);
        if (res.plan.stashed_bytes_estimate <= base_stash && check.peak <= base_peak) return res;

        reverted = true;
        if (res.plan.stashed_bytes_estimate > base_stash) {
            std::fill(st.mirrored.begin(), st.mirrored.end(), 0);
            st.binarized.clear();
        } else if (check.mirror_of) {
            const int k = st.sub[*check.mirror_of];
            for (auto m : subs[static_cast<std::size_t>(k)].members) st.mirrored[m] = 0;
        } else if (check.decode) {
            for (const auto& b : res.plan.binarized)
                if (std::find(b.decodes.begin(), b.decodes.end(), *check.decode) != b.decodes.end())
                    st.binarized.erase(b.edge);
        } else {
            std::fill(st.mirrored.begin(), st.mirrored.end(), 0);
            st.binarized.clear();
        }
        st.prune();
        st.drop_useless_binarization();
    }
}

}  // namespace echo
