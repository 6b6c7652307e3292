#pragma once

#include "echo/graph.hpp"
#include "echo/planner.hpp"
#include "echo/strategy.hpp"

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace echo {

class CapExceeded : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct VerifyOptions {
    std::uint64_t seed = 0;
    std::int64_t max_elements = 100000;  // largest single tensor the interpreter will take
    std::int64_t weight_multiplier = default_weight_multiplier;
    bool corrupt_plan = false;           // test hook: perturbs the memory plan before checking it
};

struct VerifyResult {
    bool outputs_match = false;
    bool gradients_match = false;
    bool live_bytes_match = false;
    std::int64_t largest_tensor = 0;
    std::vector<std::string> mismatches;

    bool ok() const { return outputs_match && gradients_match && live_bytes_match; }
};

// Interprets the baseline and transformed graphs on the same bindings and checks that outputs
// and trainable gradients agree bitwise and that the transformed plan's timeline matches the
// bytes the interpreter actually holds. Throws CapExceeded before running anything too large.
VerifyResult verify(const Graph& forward, const StrategyConfig& cfg, const VerifyOptions& opt = {});

}  // namespace echo
