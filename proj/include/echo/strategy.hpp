#pragma once

#include "echo/autodiff.hpp"
#include "echo/graph.hpp"
#include "echo/passes.hpp"

#include <optional>
#include <set>
#include <string>
#include <vector>

namespace echo {

enum class Strategy { baseline, mirror, echo };

std::string_view to_string(Strategy s);
Strategy strategy_from_string(std::string_view s);

struct StrategyConfig {
    Strategy strategy = Strategy::echo;
    std::set<std::string> compute_heavy;  // defaults to the registry's compute-heavy ops
    std::set<std::string> binarizable;    // defaults to the registry's binarizable ops
    bool dead_node = true;
    bool binarization = true;
    std::optional<std::int64_t> flop_threshold;  // ops at or above this cost count as heavy
    std::size_t max_subgraph_nodes = 10;         // 0 = unbounded
    bool peak_guard = true;                      // revert rewrites that would raise the planner peak

    static StrategyConfig defaults(Strategy s = Strategy::echo);
};

struct Subgraph {
    std::vector<NodeId> members;  // topological order
    std::vector<EdgeRef> frontier;
    NodeId seed = 0;
    // Subgraphs cut off by the size cap continue the region of the subgraph they overflowed
    // from; mirrors read across such cuts. Heavy boundaries start a new region.
    std::size_t region = 0;
};

struct BinarizedEdge {
    EdgeRef edge;
    NodeId encode = 0;
    std::vector<NodeId> decodes;
};

struct DeadMirror {
    NodeId heavy = 0;
    NodeId mirror = 0;
};

struct SubgraphPlan {
    Subgraph subgraph;
    std::vector<NodeId> mirrored;
    std::vector<NodeId> removed;
    std::vector<EdgeRef> frontier_stash;
};

struct RecomputePlan {
    Strategy strategy = Strategy::baseline;
    std::vector<SubgraphPlan> subgraphs;
    std::vector<NodeId> mirrored;                // forward nodes with a mirror
    std::map<NodeId, NodeId> mirror_node;        // forward node -> its mirror in the rewritten graph
    std::vector<DeadMirror> dead_mirrors;
    std::vector<BinarizedEdge> binarized;
    std::vector<EdgeRef> stashed_edges;          // forward edges read during the backward pass
    std::int64_t stashed_bytes_estimate = 0;
    std::int64_t recompute_flops_estimate = 0;
    bool guard_reverted = false;
};

struct StrategyResult {
    Graph graph;
    RecomputePlan plan;
};

bool is_compute_heavy(const Graph& g, const ShapeMap* shapes, NodeId id, const StrategyConfig& cfg);

std::vector<Subgraph> partition_subgraphs(const Graph& g, const StrategyConfig& cfg);

struct TrimResult {
    std::vector<NodeId> mirrored;
    std::vector<NodeId> removed;
    std::vector<EdgeRef> stashed;
};

// Runs forward trimming on one subgraph with every other subgraph left unmirrored.
TrimResult trim_forward(const Graph& g, const GradInfo& info, const ShapeMap& shapes,
                        const UseRefMap& refs, const Subgraph& sub, const StrategyConfig& cfg);

StrategyResult run_mirror(const Graph& g, const GradInfo& info, const ShapeMap& shapes,
                          const StrategyConfig& cfg);
StrategyResult run_echo(const Graph& g, const GradInfo& info, const ShapeMap& shapes,
                        const UseRefMap& refs, const StrategyConfig& cfg);

}  // namespace echo
