#pragma once

#include "echo/autodiff.hpp"
#include "echo/cost.hpp"
#include "echo/graph.hpp"
#include "echo/passes.hpp"
#include "echo/planner.hpp"
#include "echo/strategy.hpp"

namespace echo {

struct PipelineResult {
    GradInfo info;
    Graph gradient_graph;   // after the gradient pass
    RecomputePlan plan;
    Graph rewritten;        // strategy output, before dead-node elimination
    Graph final_graph;      // after dead-node elimination
    ShapeMap shapes;        // of final_graph
    Schedule schedule;
    MemoryReport memory;
    CostReport cost;
    std::size_t subgraph_count = 0;
};

// Gradient -> shapes -> use refs -> strategy -> dead-node elimination -> shapes -> memory plan
// and cost estimate.
PipelineResult run_pipeline(const Graph& forward, const StrategyConfig& cfg,
                            std::int64_t weight_multiplier = default_weight_multiplier);

// Applies only the strategy step to an already differentiated graph.
StrategyResult apply_strategy(const Graph& gradient_graph, const GradInfo& info, const StrategyConfig& cfg);

}  // namespace echo
