#include "echo/interpreter.hpp"
#include "echo/passes.hpp"
#include "echo/pipeline.hpp"
#include "fixtures.hpp"

#include <doctest.h>

using namespace echo;

TEST_SUITE("passes") {

TEST_CASE("shape errors name the node")
{
    Graph g;
    auto a = g.add_placeholder("a", {2, 3});
    auto b = g.add_placeholder("b", {3, 2});
    auto s = g.add_node("add", {{a, 0}, {b, 0}});
    try {
        infer_shapes(g);
        FAIL("expected ShapeError");
    } catch (const ShapeError& e) {
        CHECK(std::string(e.what()).find("node " + std::to_string(s)) != std::string::npos);
    }
}

TEST_CASE("use refs count distinct consumers plus outputs")
{
    Graph g;
    auto x = g.add_placeholder("x", {4});
    auto t = g.add_node("tanh", {{x, 0}});
    auto m = g.add_node("mul", {{t, 0}, {t, 0}});
    auto a = g.add_node("add", {{t, 0}, {m, 0}});
    g.add_output({a, 0});
    g.add_output({t, 0});
    auto refs = edge_use_refs(g);
    CHECK(refs.at({x, 0}) == 1);
    CHECK(refs.at({t, 0}) == 3);
    CHECK(refs.at({m, 0}) == 1);
    CHECK(refs.at({a, 0}) == 1);
}

TEST_CASE("dead-node elimination runs to a fixed point")
{
    Graph g;
    auto x = g.add_placeholder("x", {4});
    auto unused = g.add_placeholder("unused", {4});
    auto t = g.add_node("tanh", {{x, 0}});
    auto d1 = g.add_node("sigmoid", {{t, 0}});
    auto d2 = g.add_node("relu", {{d1, 0}});
    auto s = g.add_node("sum_reduce", {{t, 0}});
    g.add_output({s, 0});
    auto out = eliminate_dead_nodes(g);
    CHECK_FALSE(out.contains(d1));
    CHECK_FALSE(out.contains(d2));
    CHECK(out.contains(unused));
    CHECK(out.contains(t));
    CHECK(out.node(s) == g.node(s));
}

TEST_CASE("dead-node elimination preserves output values")
{
    for (const auto& c : testing::small_zoo_cases()) {
        CAPTURE(c.name);
        Graph g = c.graph;
        // graft a dead branch onto every placeholder
        for (auto p : c.graph.placeholders()) g.add_node("tanh", {{p, 0}});
        auto clean = eliminate_dead_nodes(g);
        CHECK(clean.size() == c.graph.size());
        auto env = random_env(c.graph, 3);
        auto before = execute(c.graph, env);
        auto after = execute(clean, env);
        CHECK(before.outputs == after.outputs);
    }
}

TEST_CASE("pipeline re-infers consistent shapes after elimination")
{
    for (const auto& c : testing::zoo_cases()) {
        CAPTURE(c.name);
        for (auto s : {Strategy::baseline, Strategy::mirror, Strategy::echo}) {
            auto r = run_pipeline(c.graph, StrategyConfig::defaults(s));
            auto again = infer_shapes(r.final_graph);
            for (auto id : r.final_graph.node_ids()) CHECK(again.outputs_of(id) == r.shapes.outputs_of(id));
            for (auto id : r.final_graph.node_ids()) CHECK(r.final_graph.node(id).kind != NodeKind::dead_mirror);
            topo_order(r.final_graph);
        }
    }
}

TEST_CASE("passes keep the ids of pre-existing nodes")
{
    auto g = zoo::mlp_chain(2, 4, 2);
    auto r = run_pipeline(g, StrategyConfig::defaults(Strategy::echo));
    for (auto id : g.node_ids()) {
        REQUIRE(r.final_graph.contains(id));
        CHECK(r.final_graph.node(id) == g.node(id));
    }
}

}  // TEST_SUITE
