#include "random_graph.hpp"

#include <algorithm>
#include <random>
#include <string>

namespace echo::testing {

namespace {

class Builder {
public:
    Builder(std::uint64_t seed, const RandomGraphOptions& opt) : rng_(seed), opt_(opt) {}

    Graph build()
    {
        conv_ = pick(5) == 0;
        b_ = 2 + pick(2);
        h_ = 3 + pick(3);
        const auto data = 1 + pick(3);
        for (std::int64_t i = 0; i < data; ++i)
            pool_.push_back(ph("x" + std::to_string(i), act_shape(), false));

        // a step adds at most three nodes and finish() at most two more
        const auto budget = opt_.max_nodes - 5;
        while (g_.size() < budget) step();
        finish();
        return std::move(g_);
    }

private:
    std::int64_t pick(std::int64_t n) { return std::uniform_int_distribution<std::int64_t>(0, n - 1)(rng_); }

    Shape act_shape() const { return conv_ ? Shape{b_, h_, 4, 4} : Shape{b_, h_}; }

    EdgeRef ph(const std::string& name, Shape s, bool trainable)
    {
        return {g_.add_placeholder(name, std::move(s), Dtype::f64, trainable), 0};
    }

    // Recent edges are favored so chains grow, older ones give fan-out.
    EdgeRef any()
    {
        const auto n = static_cast<std::int64_t>(pool_.size());
        const auto i = pick(3) == 0 ? pick(n) : std::max<std::int64_t>(0, n - 1 - pick(3));
        const auto e = pool_[static_cast<std::size_t>(i)];
        used_.push_back(e);
        return e;
    }

    void push(NodeId id) { pool_.push_back({id, 0}); }

    void step()
    {
        const auto r = pick(conv_ ? 9 : 12);
        switch (r) {
        case 0: push(g_.add_node("add", {any(), any()})); break;
        case 1: push(g_.add_node("mul", {any(), any()})); break;
        case 2: push(g_.add_node("tanh", {any()})); break;
        case 3: push(g_.add_node("sigmoid", {any()})); break;
        case 4: push(g_.add_node("relu", {any()})); break;
        case 5:
            if (opt_.allow_dropout) push(g_.add_node("dropout", {any()}, {{"rate", 0.5}}));
            else push(g_.add_node("tanh", {any()}));
            break;
        case 6:
        case 7: heavy(); break;
        case 8: push(g_.add_node("add", {any(), any()})); break;
        case 9: {
            // rank-1 broadcast operand from a reduction over the batch axis
            auto v = g_.add_node("sum_reduce", {any()}, {{"axis", std::int64_t{0}}});
            push(g_.add_node("broadcast_add", {any(), {v, 0}}));
            break;
        }
        case 10: {
            auto c = g_.add_node("concat", {any(), any()}, {{"axis", std::int64_t{1}}});
            const auto begin = pick(h_ + 1);
            push(g_.add_node("slice", {{c, 0}}, {{"axis", std::int64_t{1}}, {"begin", begin}, {"end", begin + h_}}));
            break;
        }
        default: heavy(); break;
        }
    }

    void heavy()
    {
        const auto k = std::to_string(params_++);
        if (conv_) {
            auto w = ph("K" + k, {h_, h_, 3, 3}, true);
            push(g_.add_node("conv2d", {any(), w}, {{"pad", std::int64_t{1}}}));
        } else if (pick(2) == 0) {
            auto w = ph("W" + k, {h_, h_}, true);
            auto bias = ph("b" + k, {h_}, true);
            push(g_.add_node("fully_connected", {any(), w, bias}, {{"units", h_}}));
        } else {
            auto w = ph("M" + k, {h_, h_}, true);
            push(g_.add_node("matmul", {any(), w}));
        }
    }

    // Every dangling edge joins the loss so all nodes are live.
    void finish()
    {
        std::vector<EdgeRef> tails;
        for (auto e : pool_)
            if (!g_.node(e.node).is_placeholder() && std::find(used_.begin(), used_.end(), e) == used_.end())
                tails.push_back(e);
        if (tails.empty()) tails.push_back(pool_.back());
        if (tails.size() == 1 && !conv_ && pick(3) == 0) {
            auto labels = ph("labels", act_shape(), false);
            g_.add_output({g_.add_node("softmax_ce_loss", {tails[0], labels}), 0});
            return;
        }
        EdgeRef acc = tails[0];
        if (tails.size() > 1) acc = {g_.add_node("concat", tails, {{"axis", std::int64_t{1}}}), 0};
        g_.add_output({g_.add_node("sum_reduce", {acc}), 0});
    }

    std::mt19937_64 rng_;
    RandomGraphOptions opt_;
    Graph g_;
    bool conv_ = false;
    std::int64_t b_ = 2, h_ = 3;
    std::vector<EdgeRef> pool_;
    std::vector<EdgeRef> used_;
    int params_ = 0;
};

}  // namespace

Graph random_graph(std::uint64_t seed, const RandomGraphOptions& opt)
{
    return Builder(seed, opt).build();
}

ExecEnv scaled_env(const Graph& g, std::uint64_t seed)
{
    auto env = random_env(g, seed);
    for (auto& [id, t] : env.bindings) {
        if (!g.node(id).is_trainable()) continue;
        const auto& dims = t.type.shape.dims();
        double fan_in = 1.0;
        for (std::size_t i = 1; i < dims.size(); ++i) fan_in *= static_cast<double>(dims[i]);
        for (auto& v : t.values) v /= fan_in;
    }
    return env;
}

}  // namespace echo::testing
