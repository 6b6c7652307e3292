#include "echo/ops.hpp"
#include "echo/passes.hpp"

#include <doctest.h>

#include <algorithm>

using namespace echo;

namespace {

TensorType f32(Shape s) { return {std::move(s), Dtype::f32}; }

struct ProbeCase {
    std::string op;
    std::vector<TensorType> in;
    Attrs attrs;
};

std::vector<ProbeCase> probe_cases()
{
    return {
        {"fully_connected", {f32({3, 4}), f32({5, 4})}, {}},
        {"fully_connected", {f32({3, 4}), f32({5, 4}), f32({5})}, {{"units", std::int64_t{5}}}},
        {"matmul", {f32({3, 4}), f32({4, 2})}, {}},
        {"batched_dot", {f32({2, 3, 4}), f32({2, 4, 5})}, {}},
        {"conv2d", {f32({1, 2, 5, 5}), f32({3, 2, 3, 3})}, {{"pad", std::int64_t{1}}}},
        {"add", {f32({3, 4}), f32({3, 4})}, {}},
        {"mul", {f32({3, 4}), f32({3, 4})}, {}},
        {"tanh", {f32({3, 4})}, {}},
        {"sigmoid", {f32({3, 4})}, {}},
        {"relu", {f32({3, 4})}, {}},
        {"dropout", {f32({3, 4})}, {{"rate", 0.5}}},
        {"broadcast_add", {f32({3, 4}), f32({4})}, {}},
        {"broadcast_add", {f32({2, 3, 4}), f32({2, 4})}, {{"axis", std::int64_t{1}}}},
        {"concat", {f32({3, 4}), f32({3, 2})}, {{"axis", std::int64_t{1}}}},
        {"concat", {f32({3, 4}), f32({3, 4})}, {{"axis", std::int64_t{1}}, {"new_axis", std::int64_t{1}}}},
        {"slice", {f32({3, 6})}, {{"axis", std::int64_t{1}}, {"begin", std::int64_t{1}}, {"end", std::int64_t{4}}}},
        {"softmax_ce_loss", {f32({3, 4}), f32({3, 4})}, {}},
        {"sum_reduce", {f32({3, 4})}, {}},
        {"sum_reduce", {f32({3, 4})}, {{"axis", std::int64_t{1}}}},
    };
}

std::int64_t forward_cost(const ProbeCase& c)
{
    Graph g;
    std::vector<EdgeRef> ins;
    for (std::size_t i = 0; i < c.in.size(); ++i)
        ins.push_back({g.add_placeholder("p" + std::to_string(i), c.in[i].shape, c.in[i].dtype), 0});
    auto id = g.add_node(c.op, ins, c.attrs);
    return node_cost(g, infer_shapes(g), id);
}

}  // namespace

TEST_SUITE("ops") {

TEST_CASE("shipped forward set")
{
    auto names = registry().shipped();
    std::sort(names.begin(), names.end());
    const std::vector<std::string> expected{"add",     "batched_dot", "broadcast_add",   "concat",
                                            "conv2d",  "dropout",     "fully_connected", "matmul",
                                            "mul",     "placeholder", "relu",            "sigmoid",
                                            "slice",   "softmax_ce_loss", "sum_reduce",  "tanh"};
    CHECK(names == expected);
}

TEST_CASE("heavy and binarizable flags")
{
    std::vector<std::string> heavy, bin;
    for (const auto& n : registry().shipped()) {
        if (registry().lookup(n).compute_heavy) heavy.push_back(n);
        if (registry().lookup(n).binarizable) bin.push_back(n);
    }
    CHECK(heavy == std::vector<std::string>{"batched_dot", "conv2d", "fully_connected", "matmul"});
    CHECK(bin == std::vector<std::string>{"dropout", "relu"});
}

TEST_CASE("duplicate registration throws")
{
    Registry r = Registry::make_default();
    OpDef d;
    d.name = "tanh";
    CHECK_THROWS(r.add(d));
    CHECK_THROWS(r.lookup("nope"));
    CHECK(r.find("nope") == nullptr);
}

TEST_CASE("self-test: gradient builders read exactly the declared edges")
{
    for (const auto& c : probe_cases()) {
        CAPTURE(c.op);
        const auto probed = probe_grad_deps(c.op, c.in, c.attrs);
        const auto& declared = registry().grad_deps(c.op);
        CHECK(probed.inputs == declared.inputs);
        CHECK(probed.outputs == declared.outputs);
    }
    CHECK(probe_cases().size() >= registry().shipped().size() - 1);
}

TEST_CASE("placeholder has no gradient rule")
{
    CHECK_FALSE(registry().lookup("placeholder").differentiable());
    CHECK_THROWS(registry().grad_deps("placeholder"));
}

TEST_CASE("cost rules")
{
    auto cost = [](std::string op, std::vector<TensorType> in, Attrs a = {}) {
        return forward_cost({std::move(op), std::move(in), std::move(a)});
    };
    CHECK(cost("fully_connected", {f32({3, 4}), f32({5, 4})}) == 2 * 3 * 4 * 5);
    CHECK(cost("matmul", {f32({3, 4}), f32({4, 2})}) == 2 * 3 * 4 * 2);
    CHECK(cost("batched_dot", {f32({2, 3, 4}), f32({2, 4, 5})}) == 2 * 3 * 4 * 5 * 2);
    CHECK(cost("conv2d", {f32({2, 2, 5, 5}), f32({3, 2, 3, 3})}) == 2 * 9 * 2 * 3 * 3 * 3 * 2);
    CHECK(cost("conv2d", {f32({1, 2, 5, 5}), f32({3, 2, 3, 3})}, {{"pad", std::int64_t{1}}}) == 2 * 9 * 2 * 3 * 25);
    CHECK(cost("add", {f32({3, 4}), f32({3, 4})}) == 12);
    CHECK(cost("tanh", {f32({3, 4})}) == 12);
    CHECK(cost("dropout", {f32({3, 4})}) == 24);
    CHECK(cost("broadcast_add", {f32({3, 4}), f32({4})}) == 12);
    CHECK(cost("concat", {f32({3, 4}), f32({3, 2})}, {{"axis", std::int64_t{1}}}) == 18);
    CHECK(cost("slice", {f32({3, 6})}, {{"axis", std::int64_t{1}}, {"begin", std::int64_t{0}}, {"end", std::int64_t{2}}}) == 6);
    CHECK(cost("sum_reduce", {f32({3, 4})}) == 1);
}

TEST_CASE("shape inference")
{
    const auto& r = registry();
    CHECK(r.infer_shape("fully_connected", std::vector{f32({3, 4}), f32({5, 4})}, {})[0].shape == Shape{3, 5});
    CHECK(r.infer_shape("conv2d", std::vector{f32({1, 2, 5, 5}), f32({3, 2, 3, 3})}, {})[0].shape == Shape{1, 3, 3, 3});
    CHECK(r.infer_shape("concat", std::vector{f32({3, 4}), f32({3, 4})}, {{"new_axis", std::int64_t{1}}, {"axis", std::int64_t{1}}})[0].shape ==
          Shape{3, 2, 4});
    CHECK(r.infer_shape("sum_reduce", std::vector{f32({3, 4})}, {})[0].shape == Shape{});
    auto d = r.infer_shape("dropout", std::vector{f32({3, 4})}, {});
    REQUIRE(d.size() == 2);
    CHECK(d[1].shape == Shape{3, 4});
    CHECK(r.infer_shape("encode", std::vector{f32({3, 4})}, {})[0].dtype == Dtype::bit);
    CHECK_THROWS_AS(r.infer_shape("add", std::vector{f32({3, 4}), f32({4, 3})}, {}), ShapeError);
    CHECK_THROWS_AS(r.infer_shape("fully_connected", std::vector{f32({3, 4}), f32({5, 3})}, {}), ShapeError);
    CHECK_THROWS_AS(r.infer_shape("slice", std::vector{f32({3, 4})}, {{"axis", std::int64_t{1}}, {"begin", std::int64_t{3}}, {"end", std::int64_t{9}}}),
                    ShapeError);
}

TEST_CASE("conv2d declares an im2col workspace")
{
    Graph g;
    auto x = g.add_placeholder("x", {1, 2, 5, 5});
    auto k = g.add_placeholder("k", {3, 2, 3, 3});
    auto c = g.add_node("conv2d", {{x, 0}, {k, 0}});
    auto t = g.add_node("tanh", {{c, 0}});
    auto shapes = infer_shapes(g);
    CHECK(node_workspace(g, shapes, c) > 0);
    CHECK(node_workspace(g, shapes, t) == 0);
}

}  // TEST_SUITE
