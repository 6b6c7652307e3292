#include "echo/ops.hpp"
#include "echo/pipeline.hpp"
#include "echo/strategy.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"
#include "random_graph.hpp"

#include <doctest.h>

#include <set>

using namespace echo;

namespace {

PipelineResult run(const Graph& g, Strategy s, std::int64_t mult = 4)
{
    return run_pipeline(g, StrategyConfig::defaults(s), mult);
}

// Two FC layers feeding an add and a tanh.
Graph fc_add_tanh(std::int64_t n)
{
    Graph g;
    auto x1 = g.add_placeholder("x1", {1, n});
    auto x2 = g.add_placeholder("x2", {1, n});
    auto w1 = g.add_placeholder("w1", {n, n}, Dtype::f32, true);
    auto w2 = g.add_placeholder("w2", {n, n}, Dtype::f32, true);
    auto f1 = g.add_node("fully_connected", {{x1, 0}, {w1, 0}});
    auto f2 = g.add_node("fully_connected", {{x2, 0}, {w2, 0}});
    auto a = g.add_node("add", {{f1, 0}, {f2, 0}});
    auto t = g.add_node("tanh", {{a, 0}});
    g.add_output({g.add_node("sum_reduce", {{t, 0}}), 0});
    return g;
}

Graph cheap_chain(int n)
{
    Graph g;
    EdgeRef e{g.add_placeholder("x", {8}), 0};
    for (int i = 0; i < n; ++i) e = {g.add_node(i % 2 ? "sigmoid" : "tanh", {e}), 0};
    g.add_output(e);
    return g;
}

std::set<NodeId> members_of(const std::vector<Subgraph>& subs)
{
    std::set<NodeId> all;
    for (const auto& s : subs)
        for (auto m : s.members) CHECK(all.insert(m).second);
    return all;
}

}  // namespace

TEST_SUITE("strategy") {

TEST_CASE("strategy names")
{
    for (auto s : {Strategy::baseline, Strategy::mirror, Strategy::echo})
        CHECK(strategy_from_string(to_string(s)) == s);
    CHECK_THROWS(strategy_from_string("sqrt"));
}

TEST_CASE("baseline leaves the graph untouched")
{
    auto g = zoo::lstm_cell(2, 3);
    auto r = run(g, Strategy::baseline);
    CHECK(r.rewritten == r.gradient_graph);
    CHECK(r.plan.mirrored.empty());
}

TEST_CASE("partition stops at heavy nodes and reseeds there")
{
    auto g = fc_add_tanh(4);
    auto subs = partition_subgraphs(g, StrategyConfig::defaults());
    REQUIRE(subs.size() == 1);
    std::set<std::string> ops;
    for (auto m : subs[0].members) ops.insert(g.node(m).op);
    CHECK(ops == std::set<std::string>{"add", "tanh", "sum_reduce"});
    CHECK(subs[0].frontier.size() == 2);
    for (auto e : subs[0].frontier) CHECK(g.node(e.node).op == "fully_connected");
}

TEST_CASE("a pure chain of five cheap ops is one subgraph")
{
    auto subs = partition_subgraphs(cheap_chain(5), StrategyConfig::defaults());
    REQUIRE(subs.size() == 1);
    CHECK(subs[0].members.size() == 5);
}

TEST_CASE("the size cap splits long chains into continuing subgraphs")
{
    auto subs = partition_subgraphs(cheap_chain(25), StrategyConfig::defaults());
    REQUIRE(subs.size() == 3);
    for (const auto& s : subs) {
        CHECK(s.members.size() <= 10);
        CHECK(s.region == subs[0].region);
    }
    auto cfg = StrategyConfig::defaults();
    cfg.max_subgraph_nodes = 0;
    CHECK(partition_subgraphs(cheap_chain(25), cfg).size() == 1);
}

TEST_CASE("subgraphs are disjoint, cheap and connected to their seed")
{
    auto check = [](const Graph& g) {
        auto subs = partition_subgraphs(g, StrategyConfig::defaults());
        members_of(subs);
        for (const auto& s : subs) {
            CHECK(s.members.size() <= 10);
            std::set<NodeId> in(s.members.begin(), s.members.end());
            for (auto m : s.members) {
                CHECK_FALSE(registry().lookup(g.node(m).op).compute_heavy);
                CHECK_FALSE(g.node(m).is_placeholder());
            }
            for (auto e : s.frontier) CHECK_FALSE(in.contains(e.node));
        }
    };
    for (const auto& c : testing::zoo_cases()) {
        CAPTURE(c.name);
        check(build_gradient_graph(c.graph).graph);
    }
    for (std::uint64_t s = 0; s < 50; ++s) check(build_gradient_graph(testing::random_graph(s)).graph);
}

TEST_CASE("heavy-op config and flop threshold change the partition")
{
    auto g = fc_add_tanh(4);
    auto cfg = StrategyConfig::defaults();
    cfg.compute_heavy.insert("tanh");
    auto subs = partition_subgraphs(g, cfg);
    for (const auto& s : subs)
        for (auto m : s.members) CHECK(g.node(m).op != "tanh");
    cfg = StrategyConfig::defaults();
    cfg.flop_threshold = 1;
    CHECK(partition_subgraphs(g, cfg).empty());
}

TEST_CASE("add-tanh: mirror doubles the stash, echo keeps the baseline")
{
    auto g = zoo::add_tanh(1024);
    CHECK(run(g, Strategy::baseline, 1).memory.stashed_feature_map_bytes == 4096);
    CHECK(run(g, Strategy::mirror, 1).memory.stashed_feature_map_bytes == 8192);
    auto e = run(g, Strategy::echo, 1);
    CHECK(e.memory.stashed_feature_map_bytes == 4096);
    CHECK(e.plan.mirrored.empty());
}

TEST_CASE("trim_forward removes the add and then the tanh")
{
    auto g = zoo::add_tanh(16);
    auto grad = build_gradient_graph(g);
    auto shapes = infer_shapes(grad.graph);
    auto subs = partition_subgraphs(grad.graph, StrategyConfig::defaults());
    REQUIRE(subs.size() == 1);
    auto t = trim_forward(grad.graph, grad.info, shapes, edge_use_refs(grad.graph), subs[0], StrategyConfig::defaults());
    CHECK(t.mirrored.empty());
    CHECK(t.removed.size() == subs[0].members.size());
}

TEST_CASE("broadcast attention keeps every add and tanh mirrored")
{
    const std::int64_t T = 8, N = 16;
    auto g = zoo::broadcast_attn(T, N);
    auto b = run(g, Strategy::baseline);
    auto e = run(g, Strategy::echo);
    CHECK(b.memory.stashed_feature_map_bytes == T * T * N * 4);
    CHECK(e.memory.stashed_feature_map_bytes == 2 * T * N * 4);
    std::size_t adds = 0, tanhs = 0;
    for (auto id : e.plan.mirrored) {
        adds += g.node(id).op == "broadcast_add";
        tanhs += g.node(id).op == "tanh";
    }
    CHECK(adds == static_cast<std::size_t>(T));
    CHECK(tanhs == static_cast<std::size_t>(T));
}

TEST_CASE("dead node releases the FC input")
{
    auto g = zoo::tanh_fc(4, 16);
    auto base = run(g, Strategy::baseline);
    auto e = run(g, Strategy::echo);
    REQUIRE(e.plan.dead_mirrors.size() == 1);
    const auto& dm = e.plan.dead_mirrors[0];
    CHECK(g.node(dm.heavy).op == "fully_connected");
    CHECK(e.rewritten.node(dm.mirror).kind == NodeKind::dead_mirror);
    CHECK_FALSE(e.final_graph.contains(dm.mirror));
    CHECK(e.memory.stashed_feature_map_bytes < base.memory.stashed_feature_map_bytes);

    auto cfg = StrategyConfig::defaults();
    cfg.dead_node = false;
    auto off = run_pipeline(g, cfg);
    CHECK(off.plan.dead_mirrors.empty());
    CHECK(off.memory.stashed_feature_map_bytes == base.memory.stashed_feature_map_bytes);
}

TEST_CASE("FC feeding FC has nothing to release")
{
    Graph g;
    auto x = g.add_placeholder("x", {2, 4});
    auto w1 = g.add_placeholder("w1", {4, 4}, Dtype::f32, true);
    auto w2 = g.add_placeholder("w2", {4, 4}, Dtype::f32, true);
    auto f1 = g.add_node("fully_connected", {{x, 0}, {w1, 0}});
    auto f2 = g.add_node("fully_connected", {{f1, 0}, {w2, 0}});
    g.add_output({g.add_node("sum_reduce", {{f2, 0}}), 0});
    auto b = run(g, Strategy::baseline);
    auto e = run(g, Strategy::echo);
    CHECK(e.plan.mirrored.empty());
    CHECK(e.plan.dead_mirrors.empty());
    CHECK(e.memory.peak_bytes == b.memory.peak_bytes);
}

TEST_CASE("only compute-heavy nodes: mirror has nothing to do")
{
    Graph g;
    auto x = g.add_placeholder("x", {1, 4});
    auto w = g.add_placeholder("w", {4, 1}, Dtype::f32, true);
    g.add_output({g.add_node("matmul", {{x, 0}, {w, 0}}), 0});
    CHECK(run(g, Strategy::mirror).plan.mirrored.empty());
}

TEST_CASE("pinned input keeps a node mirrored, and that plan has the least stash")
{
    // x -> tanh -> sigmoid -> sum; the tanh gradient pins the tanh output
    Graph g;
    auto x = g.add_placeholder("x", {32});
    auto t = g.add_node("tanh", {{x, 0}});
    auto s = g.add_node("sigmoid", {{t, 0}});
    g.add_output({g.add_node("sum_reduce", {{s, 0}}), 0});
    auto grad = build_gradient_graph(g);

    auto e = run(g, Strategy::echo);
    std::set<NodeId> chosen(e.plan.mirrored.begin(), e.plan.mirrored.end());
    CHECK(chosen == std::set<NodeId>{s});

    std::int64_t best = INT64_MAX;
    for (const auto& m : std::vector<std::set<NodeId>>{{}, {t}, {s}, {t, s}})
        best = std::min(best, testing::stash_bytes_oracle(testing::rewrite_with_mirrors(grad.graph, grad.info, m), grad.info));
    CHECK(e.memory.stashed_feature_map_bytes == best);
    CHECK(testing::stash_bytes_oracle(e.final_graph, grad.info) == best);
}

TEST_CASE("binarization stashes a relu sign mask as bits")
{
    auto g = zoo::conv_chain(2, 4, 8, 3);
    auto e = run(g, Strategy::echo);
    REQUIRE_FALSE(e.plan.binarized.empty());
    for (const auto& b : e.plan.binarized) {
        CHECK(e.final_graph.node(b.encode).op == "encode");
        CHECK(e.shapes.at({b.encode, 0}).dtype == Dtype::bit);
        CHECK_FALSE(b.decodes.empty());
    }
    auto cfg = StrategyConfig::defaults();
    cfg.binarization = false;
    auto off = run_pipeline(g, cfg);
    CHECK(off.plan.binarized.empty());
    CHECK(off.memory.stashed_feature_map_bytes > e.memory.stashed_feature_map_bytes);
}

TEST_CASE("dropout mask alone: 128 bytes of bits instead of 4096")
{
    Graph g;
    auto x = g.add_placeholder("x", {8, 128});
    auto w = g.add_placeholder("w", {128, 128}, Dtype::f32, true);
    auto d = g.add_node("dropout", {{x, 0}});
    auto f = g.add_node("fully_connected", {{d, 0}, {w, 0}});
    g.add_output({g.add_node("sum_reduce", {{f, 0}}), 0});
    auto e = run(g, Strategy::echo);
    REQUIRE(e.plan.binarized.size() == 1);
    CHECK(e.plan.binarized[0].edge == EdgeRef{d, 1});
    CHECK(e.shapes.at({e.plan.binarized[0].encode, 0}).bytes() == 128);
}

TEST_CASE("plan invariants on zoo and random graphs")
{
    auto check = [](const Graph& g) {
        auto r = run(g, Strategy::echo);
        std::map<NodeId, int> mirrors;
        for (auto id : r.rewritten.node_ids()) {
            const Node& n = r.rewritten.node(id);
            if (n.kind == NodeKind::mirror) {
                CHECK_FALSE(registry().lookup(n.op).compute_heavy);
                ++mirrors[*n.mirror_of];
            }
            if (n.kind == NodeKind::dead_mirror) {
                CHECK(registry().lookup(n.op).compute_heavy);
                CHECK(registry().grad_deps(n.op).outputs.empty());
            }
        }
        for (const auto& [id, count] : mirrors) CHECK(count == 1);
        for (const auto& sp : r.plan.subgraphs) {
            std::set<NodeId> both(sp.mirrored.begin(), sp.mirrored.end());
            both.insert(sp.removed.begin(), sp.removed.end());
            CHECK(both == std::set<NodeId>(sp.subgraph.members.begin(), sp.subgraph.members.end()));
        }
        CHECK(r.plan.stashed_bytes_estimate <= run(g, Strategy::baseline, 1).memory.stashed_feature_map_bytes);
    };
    for (const auto& c : testing::zoo_cases()) {
        CAPTURE(c.name);
        check(c.graph);
    }
    for (std::uint64_t s = 0; s < 50; ++s) {
        CAPTURE(s);
        check(testing::random_graph(s));
    }
}

}  // TEST_SUITE
