#pragma once

#include "echo/graph.hpp"
#include "echo/strategy.hpp"

#include <string>

namespace echo {

// Graphviz rendering. Mirror nodes are drawn dashed; stashed edges from the plan are bold red.
std::string export_dot(const Graph& g, const RecomputePlan* plan = nullptr);

}  // namespace echo
