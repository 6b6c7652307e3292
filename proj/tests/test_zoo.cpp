#include "echo/passes.hpp"
#include "echo/zoo.hpp"

#include <doctest.h>

#include <algorithm>
#include <stdexcept>

using namespace echo;

namespace {

std::size_t count_op(const Graph& g, std::string_view op)
{
    const auto ids = g.node_ids();
    return static_cast<std::size_t>(std::count_if(ids.begin(), ids.end(), [&](NodeId id) { return g.node(id).op == op; }));
}

}  // namespace

TEST_SUITE("zoo") {

TEST_CASE("every model builds a valid forward graph with a scalar loss")
{
    for (const auto& m : zoo::model_names()) {
        CAPTURE(m);
        for (auto dt : {Dtype::f32, Dtype::f64}) {
            auto spec = zoo::parse_spec(m);
            spec.dtype = dt;
            const auto g = zoo::build(spec);
            CHECK_NOTHROW(g.validate());
            REQUIRE(g.outputs().size() == 1);
            const auto shapes = infer_shapes(g);
            CHECK(shapes.at(g.outputs()[0]).shape.numel() == 1);
            for (auto id : g.node_ids()) CHECK(g.node(id).kind == NodeKind::forward);
        }
    }
}

TEST_CASE("model list")
{
    const auto names = zoo::model_names();
    for (const auto* m : {"add_tanh", "broadcast_attn", "lstm_cell", "lstm_rnn", "nmt_like", "mlp_chain",
                          "conv_chain", "tanh_fc"})
        CHECK(std::find(names.begin(), names.end(), m) != names.end());
}

TEST_CASE("add_tanh structure")
{
    const auto g = zoo::add_tanh(1024);
    CHECK(g.size() == 5);
    CHECK(g.placeholders().size() == 2);
    CHECK(count_op(g, "add") == 1);
    CHECK(count_op(g, "tanh") == 1);
    const auto shapes = infer_shapes(g);
    for (auto id : g.node_ids())
        if (g.node(id).op == "tanh") CHECK(shapes.at({id, 0}).bytes() == 4096);
}

TEST_CASE("broadcast_attn structure")
{
    const auto g = zoo::broadcast_attn(64, 256);
    CHECK(count_op(g, "broadcast_add") == 64);
    CHECK(count_op(g, "tanh") == 64);
    const auto shapes = infer_shapes(g);
    for (auto id : g.node_ids()) {
        const auto& n = g.node(id);
        if (n.op == "tanh") CHECK(shapes.at({id, 0}).shape == Shape{64, 256});
        if (n.op == "broadcast_add") CHECK(shapes.at(n.inputs[0]).shape == Shape{256});
    }
}

TEST_CASE("lstm cell block inputs are 9BH elements")
{
    for (auto [b, h] : {std::pair<std::int64_t, std::int64_t>{2, 3}, {4, 8}}) {
        Graph g;
        auto x = EdgeRef{g.add_placeholder("x", {b, h}), 0};
        auto hp = EdgeRef{g.add_placeholder("h", {b, h}), 0};
        auto cp = EdgeRef{g.add_placeholder("c", {b, h}), 0};
        zoo::LstmWeights w{{g.add_placeholder("wx", {4 * h, h}, Dtype::f32, true), 0},
                           {g.add_placeholder("wh", {4 * h, h}, Dtype::f32, true), 0},
                           {g.add_placeholder("b", {4 * h}, Dtype::f32, true), 0}};
        const auto cell = zoo::lstm_cell_block(g, x, hp, cp, w, h, "rnn");
        const auto shapes = infer_shapes(g);
        std::int64_t elems = 0;
        for (auto e : cell.block_inputs) elems += shapes.at(e).shape.numel();
        CHECK(elems == 9 * b * h);
        CHECK(shapes.at(cell.h).shape == Shape{b, h});
        CHECK(shapes.at(cell.c).shape == Shape{b, h});
    }
}

TEST_CASE("nmt encoder states are read by every decoder step")
{
    const std::int64_t t = 5;
    const auto g = zoo::nmt_like(2, t, 4, 1, 1);
    const auto refs = edge_use_refs(g);
    NodeId states = 0;
    for (auto id : g.node_ids()) {
        const auto& n = g.node(id);
        if (n.op == "concat" && n.attrs.contains("new_axis")) states = id;
    }
    REQUIRE(states != 0);
    CHECK(refs.at({states, 0}) >= static_cast<std::size_t>(t));
    CHECK(count_op(g, "softmax_ce_loss") == 1);
}

TEST_CASE("nmt layer counts")
{
    const auto one = zoo::nmt_like(2, 3, 4, 1, 1);
    const auto two = zoo::nmt_like(2, 3, 4, 2, 2);
    CHECK(count_op(two, "sigmoid") > count_op(one, "sigmoid"));
    CHECK(count_op(one, "sigmoid") == 3 * 3 * 2);
}

TEST_CASE("spec parsing")
{
    auto s = zoo::parse_spec("broadcast_attn:T=8,N=32");
    CHECK(s.model == "broadcast_attn");
    CHECK(s.params.at("T") == 8);
    CHECK(s.params.at("N") == 32);

    s = zoo::parse_spec("broadcast_attn:T=8");
    CHECK(s.params.at("N") == zoo::default_params("broadcast_attn").at("N"));
    CHECK(zoo::parse_spec("lstm_cell").params == zoo::default_params("lstm_cell"));

    CHECK_THROWS_AS(zoo::parse_spec("transformer"), std::invalid_argument);
    CHECK_THROWS_AS(zoo::parse_spec("add_tanh:M=3"), std::invalid_argument);
    CHECK_THROWS_AS(zoo::parse_spec("add_tanh:N"), std::invalid_argument);
    CHECK_THROWS_AS(zoo::parse_spec("add_tanh:N=abc"), std::invalid_argument);
    CHECK_THROWS_AS(zoo::build(zoo::parse_spec("add_tanh:N=0")), std::invalid_argument);
    CHECK(zoo::parse_spec("add_tanh:N=4,dtype=f64").dtype == Dtype::f64);
}

TEST_CASE("spec text round trips")
{
    for (const auto& m : zoo::model_names()) {
        const auto s = zoo::parse_spec(m);
        const auto again = zoo::parse_spec(zoo::to_string(s));
        CHECK(again.model == s.model);
        CHECK(again.params == s.params);
    }
}

TEST_CASE("builders are deterministic")
{
    for (const auto& m : zoo::model_names()) {
        CAPTURE(m);
        const auto spec = zoo::parse_spec(m);
        CHECK(serialize(zoo::build(spec)) == serialize(zoo::build(spec)));
    }
}

}  // TEST_SUITE
