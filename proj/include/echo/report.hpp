#pragma once

#include "echo/pipeline.hpp"

#include <json.hpp>

#include <span>
#include <string>
#include <string_view>

namespace echo {

inline constexpr std::string_view analyze_schema = "echo.analyze/1";
inline constexpr std::string_view compare_schema = "echo.compare/1";
inline constexpr std::string_view verify_schema = "echo.verify/1";

struct PlanSummary {
    std::size_t mirrored = 0;
    std::size_t removed = 0;
    std::size_t dead = 0;
    std::size_t binarized = 0;
};

PlanSummary summarize(const RecomputePlan& plan);

// Data-flow edges: one per node input slot.
std::size_t count_edges(const Graph& g);

struct Analysis {
    std::string input;
    StrategyConfig config;
    std::int64_t weight_multiplier = default_weight_multiplier;
    PipelineResult result;
    PipelineResult baseline;
};

Analysis analyze(const Graph& forward, std::string input, const StrategyConfig& cfg,
                 std::int64_t weight_multiplier = default_weight_multiplier);

// Field order is fixed; identical inputs give byte-identical dumps.
nlohmann::ordered_json to_json(const Analysis& a);
std::string to_table(const Analysis& a);

// Rows follow the given order; ratios are against the first row.
nlohmann::ordered_json compare_json(std::span<const Analysis> rows);
std::string compare_table(std::span<const Analysis> rows);

}  // namespace echo
