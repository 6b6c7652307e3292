#pragma once

#include "echo/graph.hpp"
#include "echo/passes.hpp"
#include "echo/strategy.hpp"

namespace echo {

struct CostReport {
    std::int64_t forward_flops = 0;
    std::int64_t backward_flops = 0;
    std::int64_t recompute_flops = 0;
    std::int64_t encode_decode_flops = 0;
    double overhead_ratio = 0.0;
};

// Flop totals for a rewritten graph. Dead mirrors never run and cost nothing.
CostReport estimate_cost(const Graph& g, const RecomputePlan& plan, const ShapeMap& shapes);

}  // namespace echo
