#pragma once

#include "echo/graph.hpp"

#include <functional>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace echo {

struct GradDeps {
    std::set<std::size_t> inputs;
    std::set<std::size_t> outputs;
    bool needs_output_grad = true;

    bool operator==(const GradDeps&) const = default;
};

// Handed to a gradient builder. Emitted nodes are gradient nodes carrying the forward tag.
class GradContext {
public:
    GradContext(Graph& g, const Node& fwd, std::span<const TensorType> in_types,
                std::span<const TensorType> out_types, std::optional<EdgeRef> dy);

    const Node& forward() const { return fwd_; }
    EdgeRef in(std::size_t i) const { return fwd_.inputs.at(i); }
    EdgeRef out(std::size_t i) const { return {fwd_.id, static_cast<std::uint32_t>(i)}; }
    const TensorType& in_type(std::size_t i) const { return in_types_[i]; }
    const TensorType& out_type(std::size_t i) const { return out_types_[i]; }

    // Output gradient of output 0. Materializes a ones node when the output is the loss seed.
    EdgeRef dy();
    bool dy_is_seed() const { return !dy_.has_value(); }

    NodeId emit(std::string_view op, std::vector<EdgeRef> inputs, Attrs attrs = {});
    const std::vector<NodeId>& emitted() const { return emitted_; }

private:
    Graph& g_;
    Node fwd_;
    std::span<const TensorType> in_types_;
    std::span<const TensorType> out_types_;
    std::optional<EdgeRef> dy_;
    std::vector<NodeId> emitted_;
};

using ShapeFn = std::function<std::vector<TensorType>(std::span<const TensorType>, const Attrs&)>;
using CostFn = std::function<std::int64_t(std::span<const TensorType> in,
                                          std::span<const TensorType> out, const Attrs&)>;
// Returns one optional gradient edge per forward input; nullopt means no gradient.
using GradFn = std::function<std::vector<std::optional<EdgeRef>>(GradContext&)>;
using NumOutputsFn = std::function<std::size_t(const Attrs&, std::size_t num_inputs)>;

struct OpDef {
    std::string name;
    std::size_t min_arity = 0;
    std::size_t max_arity = 0;  // SIZE_MAX for variadic
    NumOutputsFn num_outputs;
    ShapeFn shape_fn;
    GradFn grad_fn;  // empty for non-differentiable ops
    GradDeps grad_deps;
    CostFn cost_fn;
    CostFn workspace_fn;  // bytes; empty means none
    bool compute_heavy = false;
    bool binarizable = false;
    bool auxiliary = false;  // gradient/encoding helpers, not part of the shipped forward set

    bool differentiable() const { return static_cast<bool>(grad_fn); }
};

class Registry {
public:
    void add(OpDef def);
    const OpDef& lookup(std::string_view name) const;
    const OpDef* find(std::string_view name) const;
    bool contains(std::string_view name) const { return find(name) != nullptr; }

    std::vector<std::string> names() const;
    std::vector<std::string> shipped() const;

    const GradDeps& grad_deps(std::string_view name) const;
    std::vector<TensorType> infer_shape(std::string_view name, std::span<const TensorType> in,
                                        const Attrs& attrs) const;

    static const Registry& global();
    static Registry make_default();

private:
    std::map<std::string, OpDef, std::less<>> ops_;
};

inline const Registry& registry() { return Registry::global(); }

// Builds the gradient of a lone probe node and reports which forward edges it reads.
GradDeps probe_grad_deps(std::string_view op, std::span<const TensorType> in_types,
                         const Attrs& attrs);

}  // namespace echo
