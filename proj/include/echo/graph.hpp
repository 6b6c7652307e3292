#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace echo {

class GraphError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ShapeError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class Dtype { f32, f64, bit };

std::string_view to_string(Dtype d);
Dtype dtype_from_string(std::string_view s);

class Shape {
public:
    Shape() = default;
    Shape(std::initializer_list<std::int64_t> dims);
    explicit Shape(std::vector<std::int64_t> dims);

    const std::vector<std::int64_t>& dims() const { return dims_; }
    std::size_t rank() const { return dims_.size(); }
    std::int64_t operator[](std::size_t i) const { return dims_.at(i); }
    std::int64_t numel() const;

    bool operator==(const Shape&) const = default;

private:
    std::vector<std::int64_t> dims_;
};

std::string to_string(const Shape& s);

struct TensorType {
    Shape shape;
    Dtype dtype = Dtype::f32;

    std::int64_t bytes() const;
    bool operator==(const TensorType&) const = default;
};

std::int64_t byte_size(std::int64_t numel, Dtype d);

using NodeId = std::uint32_t;

struct EdgeRef {
    NodeId node = 0;
    std::uint32_t index = 0;

    auto operator<=>(const EdgeRef&) const = default;
};

struct EdgeRefHash {
    std::size_t operator()(const EdgeRef& e) const noexcept
    {
        return std::hash<std::uint64_t>{}((std::uint64_t{e.node} << 32) | e.index);
    }
};

enum class NodeKind { forward, gradient, mirror, dead_mirror, encode, decode };

std::string_view to_string(NodeKind k);
NodeKind node_kind_from_string(std::string_view s);

using IntList = std::vector<std::int64_t>;
using AttrValue = std::variant<std::int64_t, double, std::string, IntList>;
using Attrs = std::map<std::string, AttrValue, std::less<>>;

std::int64_t attr_int(const Attrs& a, std::string_view key, std::int64_t fallback);
std::int64_t attr_int(const Attrs& a, std::string_view key);
double attr_double(const Attrs& a, std::string_view key, double fallback);
IntList attr_ints(const Attrs& a, std::string_view key);
bool has_attr(const Attrs& a, std::string_view key);

struct PlaceholderInfo {
    std::string name;
    TensorType type;
    bool trainable = false;

    bool operator==(const PlaceholderInfo&) const = default;
};

struct Node {
    NodeId id = 0;
    std::string op;
    std::vector<EdgeRef> inputs;
    Attrs attrs;
    std::string tag;
    NodeKind kind = NodeKind::forward;
    std::optional<NodeId> mirror_of;
    std::optional<PlaceholderInfo> placeholder;

    bool is_placeholder() const { return placeholder.has_value(); }
    bool is_trainable() const { return placeholder && placeholder->trainable; }

    bool operator==(const Node&) const = default;
};

// Pairs a placeholder with the edge carrying its gradient.
struct GradTarget {
    NodeId placeholder = 0;
    EdgeRef grad;

    bool operator==(const GradTarget&) const = default;
};

class Graph {
public:
    NodeId add_placeholder(std::string name, Shape shape, Dtype dtype = Dtype::f32,
                           bool trainable = false, std::string tag = {});
    NodeId add_node(std::string_view op, std::vector<EdgeRef> inputs, Attrs attrs = {},
                    std::string tag = {}, NodeKind kind = NodeKind::forward,
                    std::optional<NodeId> mirror_of = std::nullopt);

    // Inserts a node with an explicit id; used by deserialization. Ids must be unused.
    void insert_node(Node n);

    bool contains(NodeId id) const { return id < slots_.size() && slots_[id].has_value(); }
    const Node& node(NodeId id) const;
    Node& mutable_node(NodeId id);
    void erase(NodeId id);

    std::vector<NodeId> node_ids() const;
    std::size_t size() const { return live_; }
    NodeId id_bound() const { return static_cast<NodeId>(slots_.size()); }
    bool empty() const { return live_ == 0; }

    std::size_t num_outputs(NodeId id) const;
    std::vector<EdgeRef> output_edges(NodeId id) const;

    void set_input(NodeId id, std::size_t slot, EdgeRef e);

    const std::vector<EdgeRef>& outputs() const { return outputs_; }
    void add_output(EdgeRef e);
    void set_outputs(std::vector<EdgeRef> outs);

    const std::vector<GradTarget>& grad_targets() const { return grad_targets_; }
    void set_grad_targets(std::vector<GradTarget> t) { grad_targets_ = std::move(t); }

    std::vector<NodeId> placeholders() const;

    // Structural checks: registry membership, arity, edge validity, acyclicity.
    void validate() const;

    bool operator==(const Graph& other) const;

private:
    void check_edge(EdgeRef e) const;

    std::vector<std::optional<Node>> slots_;
    std::size_t live_ = 0;
    std::vector<EdgeRef> outputs_;
    std::vector<GradTarget> grad_targets_;
};

// Kahn's algorithm; ties broken by ascending id. Throws GraphError on a cycle.
std::vector<NodeId> topo_order(const Graph& g);

// Consumers of each node, by node id (deduplicated, ascending).
std::vector<std::vector<NodeId>> consumer_lists(const Graph& g);

std::string serialize(const Graph& g);
Graph deserialize(std::string_view text);

}  // namespace echo
