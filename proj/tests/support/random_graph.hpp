#pragma once

#include "echo/graph.hpp"
#include "echo/interpreter.hpp"

#include <cstdint>

namespace echo::testing {

struct RandomGraphOptions {
    std::size_t max_nodes = 60;  // forward nodes, placeholders included
    bool allow_dropout = true;
};

// Seeded forward graph with a scalar loss. Mixes cheap elementwise ops, compute-heavy ops,
// binarizable ops, broadcasts, concat/slice pairs and fan-out. Parameters only feed
// compute-heavy ops.
Graph random_graph(std::uint64_t seed, const RandomGraphOptions& opt = {});

// random_env with every trainable placeholder divided by its fan-in (product of all dims but
// the first), so activations stay O(1) and central differences stay well conditioned.
ExecEnv scaled_env(const Graph& g, std::uint64_t seed);

}  // namespace echo::testing
