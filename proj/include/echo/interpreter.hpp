#pragma once

#include "echo/graph.hpp"
#include "echo/planner.hpp"

#include <cstdint>
#include <map>
#include <vector>

namespace echo {

class ExecError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Values are held in f64 whatever the declared dtype; bit tensors are packed.
struct Tensor {
    TensorType type;
    std::vector<double> values;
    std::vector<std::uint8_t> bits;

    static Tensor zeros(TensorType t);
    std::int64_t numel() const { return type.shape.numel(); }
    std::int64_t bytes() const;
    bool bit(std::int64_t i) const { return (bits[static_cast<std::size_t>(i / 8)] >> (i % 8)) & 1u; }

    bool operator==(const Tensor&) const = default;
};

struct ExecEnv {
    std::uint64_t seed = 0;
    std::map<NodeId, Tensor> bindings;
};

// Binds every placeholder to deterministic pseudo-random values in [-1, 1].
ExecEnv random_env(const Graph& g, std::uint64_t seed);

struct ExecResult {
    std::vector<Tensor> outputs;
    std::map<NodeId, Tensor> gradients;  // placeholder id -> gradient
    std::vector<std::int64_t> live_bytes;
};

// Runs the graph in planner schedule order, dropping each buffer after its last reader.
ExecResult execute(const Graph& g, const ExecEnv& env, std::int64_t weight_multiplier = default_weight_multiplier);
ExecResult execute(const Graph& g, const ExecEnv& env, const Schedule& s,
                   std::int64_t weight_multiplier = default_weight_multiplier);

std::vector<std::int64_t> measure_live_bytes(const Graph& g, const ExecEnv& env, const Schedule& s,
                                             std::int64_t weight_multiplier = default_weight_multiplier);

// Value of one edge, computing only its ancestors.
Tensor evaluate(const Graph& g, const ExecEnv& env, EdgeRef e);

// Central differences of a scalar edge with respect to placeholder elements. The step for
// element x is eps * max(1, |x|). max_per_placeholder = 0 probes every element; otherwise
// that many evenly spaced elements are probed.
struct Probe {
    std::int64_t index = 0;
    double value = 0.0;
};
std::map<NodeId, std::vector<Probe>> finite_diff(const Graph& g, const ExecEnv& env, EdgeRef loss,
                                                 double eps = 1e-5, std::size_t max_per_placeholder = 0);

// Dropout keep decision for element i of the node whose original id is `node`.
bool dropout_keep(std::uint64_t seed, NodeId node, std::int64_t i, double rate);

}  // namespace echo
