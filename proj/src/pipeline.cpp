#include "echo/pipeline.hpp"

namespace echo {

StrategyResult apply_strategy(const Graph& gradient_graph, const GradInfo& info, const StrategyConfig& cfg)
{
    const auto shapes = infer_shapes(gradient_graph);
    switch (cfg.strategy) {
    case Strategy::baseline: return {gradient_graph, RecomputePlan{}};
    case Strategy::mirror: return run_mirror(gradient_graph, info, shapes, cfg);
    case Strategy::echo: return run_echo(gradient_graph, info, shapes, edge_use_refs(gradient_graph), cfg);
    }
    return {gradient_graph, RecomputePlan{}};
}

PipelineResult run_pipeline(const Graph& forward, const StrategyConfig& cfg, std::int64_t weight_multiplier)
{
    PipelineResult r;
    auto grad = build_gradient_graph(forward);
    r.info = std::move(grad.info);
    r.gradient_graph = std::move(grad.graph);

    auto applied = apply_strategy(r.gradient_graph, r.info, cfg);
    r.plan = std::move(applied.plan);
    r.rewritten = std::move(applied.graph);
    r.subgraph_count = r.plan.subgraphs.size();

    r.final_graph = eliminate_dead_nodes(r.rewritten);
    r.final_graph.validate();
    r.shapes = infer_shapes(r.final_graph);
    r.schedule = build_schedule(r.final_graph);
    r.memory = plan_memory(r.final_graph, r.shapes, r.schedule, weight_multiplier);
    r.cost = estimate_cost(r.final_graph, r.plan, r.shapes);
    return r;
}

}  // namespace echo
