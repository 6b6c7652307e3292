#pragma once

#include "echo/graph.hpp"
#include "echo/passes.hpp"

#include <map>
#include <string>
#include <vector>

namespace echo {

struct Schedule {
    std::vector<NodeId> steps;
    std::size_t backward_begin = 0;  // first step of the backward region
};

// Forward region: placeholders, forward and encode nodes. Backward region: gradient nodes in
// dependency order, with mirror and decode nodes placed right before their first reader.
Schedule build_schedule(const Graph& g);

bool in_forward_region(const Node& n);

struct CategoryBytes {
    std::int64_t feature_maps = 0;
    std::int64_t weights = 0;
    std::int64_t workspace = 0;

    std::int64_t total() const { return feature_maps + weights + workspace; }
};

struct MemoryReport {
    std::int64_t peak_bytes = 0;
    std::size_t peak_step = 0;
    CategoryBytes by_category;
    std::map<std::string, std::int64_t> by_tag;
    std::vector<std::int64_t> timeline;
    std::int64_t stashed_feature_map_bytes = 0;
};

constexpr std::int64_t default_weight_multiplier = 4;

// Bytes an edge contributes to the feature-map category; weights and their gradients are
// charged through the multiplier instead.
std::int64_t activation_bytes(const Graph& g, const ShapeMap& shapes, EdgeRef e);
std::int64_t weight_bytes(const Graph& g, std::int64_t multiplier);

MemoryReport plan_memory(const Graph& g, const ShapeMap& shapes, const Schedule& s,
                         std::int64_t weight_multiplier = default_weight_multiplier);

// Step-by-step set simulation used to cross-check plan_memory.
std::vector<std::int64_t> live_bytes_oracle(const Graph& g, const Schedule& s, const ShapeMap& shapes,
                                            std::int64_t weight_multiplier = default_weight_multiplier);

}  // namespace echo
