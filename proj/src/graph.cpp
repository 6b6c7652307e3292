#include "echo/graph.hpp"

#include "echo/ops.hpp"

#include <json.hpp>

#include <algorithm>
#include <limits>
#include <queue>

namespace echo {

using json = nlohmann::ordered_json;

std::string_view to_string(Dtype d)
{
    switch (d) {
    case Dtype::f32: return "f32";
    case Dtype::f64: return "f64";
    case Dtype::bit: return "bit";
    }
    return "?";
}

Dtype dtype_from_string(std::string_view s)
{
    if (s == "f32") return Dtype::f32;
    if (s == "f64") return Dtype::f64;
    if (s == "bit") return Dtype::bit;
    throw GraphError("unknown dtype '" + std::string(s) + "'");
}

Shape::Shape(std::initializer_list<std::int64_t> dims) : Shape(std::vector<std::int64_t>(dims)) {}

Shape::Shape(std::vector<std::int64_t> dims) : dims_(std::move(dims))
{
    for (auto d : dims_)
        if (d < 1) throw ShapeError("non-positive dimension in shape " + to_string(*this));
    (void)numel();
}

std::int64_t Shape::numel() const
{
    std::int64_t n = 1;
    for (auto d : dims_) {
        if (n > std::numeric_limits<std::int64_t>::max() / d)
            throw ShapeError("element count overflows 64 bits");
        n *= d;
    }
    return n;
}

std::string to_string(const Shape& s)
{
    std::string out = "[";
    for (std::size_t i = 0; i < s.rank(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

std::int64_t byte_size(std::int64_t numel, Dtype d)
{
    switch (d) {
    case Dtype::f32: return numel * 4;
    case Dtype::f64: return numel * 8;
    case Dtype::bit: return (numel + 7) / 8;
    }
    return 0;
}

std::int64_t TensorType::bytes() const { return byte_size(shape.numel(), dtype); }

std::string_view to_string(NodeKind k)
{
    switch (k) {
    case NodeKind::forward: return "forward";
    case NodeKind::gradient: return "gradient";
    case NodeKind::mirror: return "mirror";
    case NodeKind::dead_mirror: return "dead_mirror";
    case NodeKind::encode: return "encode";
    case NodeKind::decode: return "decode";
    }
    return "?";
}

NodeKind node_kind_from_string(std::string_view s)
{
    for (auto k : {NodeKind::forward, NodeKind::gradient, NodeKind::mirror, NodeKind::dead_mirror,
                   NodeKind::encode, NodeKind::decode})
        if (to_string(k) == s) return k;
    throw GraphError("unknown node kind '" + std::string(s) + "'");
}

std::int64_t attr_int(const Attrs& a, std::string_view key, std::int64_t fallback)
{
    auto it = a.find(key);
    if (it == a.end()) return fallback;
    if (auto p = std::get_if<std::int64_t>(&it->second)) return *p;
    if (auto p = std::get_if<double>(&it->second)) return static_cast<std::int64_t>(*p);
    throw ShapeError("attribute '" + std::string(key) + "' is not an integer");
}

std::int64_t attr_int(const Attrs& a, std::string_view key)
{
    if (!has_attr(a, key)) throw ShapeError("missing attribute '" + std::string(key) + "'");
    return attr_int(a, key, 0);
}

double attr_double(const Attrs& a, std::string_view key, double fallback)
{
    auto it = a.find(key);
    if (it == a.end()) return fallback;
    if (auto p = std::get_if<double>(&it->second)) return *p;
    if (auto p = std::get_if<std::int64_t>(&it->second)) return static_cast<double>(*p);
    throw ShapeError("attribute '" + std::string(key) + "' is not numeric");
}

IntList attr_ints(const Attrs& a, std::string_view key)
{
    auto it = a.find(key);
    if (it == a.end()) throw ShapeError("missing attribute '" + std::string(key) + "'");
    if (auto p = std::get_if<IntList>(&it->second)) return *p;
    throw ShapeError("attribute '" + std::string(key) + "' is not an integer list");
}

bool has_attr(const Attrs& a, std::string_view key) { return a.find(key) != a.end(); }

// ---------------------------------------------------------------------------

NodeId Graph::add_placeholder(std::string name, Shape shape, Dtype dtype, bool trainable,
                              std::string tag)
{
    Node n;
    n.id = id_bound();
    n.op = "placeholder";
    n.tag = std::move(tag);
    n.placeholder = PlaceholderInfo{std::move(name), TensorType{std::move(shape), dtype}, trainable};
    slots_.emplace_back(std::move(n));
    ++live_;
    return slots_.back()->id;
}

NodeId Graph::add_node(std::string_view op, std::vector<EdgeRef> inputs, Attrs attrs,
                       std::string tag, NodeKind kind, std::optional<NodeId> mirror_of)
{
    const OpDef* def = registry().find(op);
    if (!def) throw GraphError("unknown op '" + std::string(op) + "'");
    if (op == "placeholder") throw GraphError("placeholders are added with add_placeholder");
    if (inputs.size() < def->min_arity || inputs.size() > def->max_arity)
        throw GraphError("arity mismatch for '" + std::string(op) + "': got " +
                         std::to_string(inputs.size()) + " inputs");
    for (auto e : inputs) check_edge(e);
    const bool is_mirror = kind == NodeKind::mirror || kind == NodeKind::dead_mirror;
    if (is_mirror != mirror_of.has_value())
        throw GraphError("mirror-of must be set exactly for mirror kinds");

    Node n;
    n.id = id_bound();
    n.op = std::string(op);
    n.inputs = std::move(inputs);
    n.attrs = std::move(attrs);
    n.tag = std::move(tag);
    n.kind = kind;
    n.mirror_of = mirror_of;
    slots_.emplace_back(std::move(n));
    ++live_;
    return slots_.back()->id;
}

void Graph::insert_node(Node n)
{
    if (n.id >= slots_.size()) slots_.resize(n.id + 1);
    if (slots_[n.id]) throw GraphError("duplicate node id " + std::to_string(n.id));
    slots_[n.id] = std::move(n);
    ++live_;
}

const Node& Graph::node(NodeId id) const
{
    if (!contains(id)) throw GraphError("no node with id " + std::to_string(id));
    return *slots_[id];
}

Node& Graph::mutable_node(NodeId id)
{
    if (!contains(id)) throw GraphError("no node with id " + std::to_string(id));
    return *slots_[id];
}

void Graph::erase(NodeId id)
{
    if (!contains(id)) throw GraphError("no node with id " + std::to_string(id));
    slots_[id].reset();
    --live_;
}

std::vector<NodeId> Graph::node_ids() const
{
    std::vector<NodeId> ids;
    ids.reserve(live_);
    for (NodeId i = 0; i < slots_.size(); ++i)
        if (slots_[i]) ids.push_back(i);
    return ids;
}

std::size_t Graph::num_outputs(NodeId id) const
{
    const Node& n = node(id);
    if (n.is_placeholder()) return 1;
    return registry().lookup(n.op).num_outputs(n.attrs, n.inputs.size());
}

std::vector<EdgeRef> Graph::output_edges(NodeId id) const
{
    std::vector<EdgeRef> out;
    const auto k = num_outputs(id);
    for (std::uint32_t i = 0; i < k; ++i) out.push_back({id, i});
    return out;
}

void Graph::set_input(NodeId id, std::size_t slot, EdgeRef e)
{
    check_edge(e);
    mutable_node(id).inputs.at(slot) = e;
}

void Graph::add_output(EdgeRef e)
{
    check_edge(e);
    outputs_.push_back(e);
}

void Graph::set_outputs(std::vector<EdgeRef> outs)
{
    for (auto e : outs) check_edge(e);
    outputs_ = std::move(outs);
}

std::vector<NodeId> Graph::placeholders() const
{
    std::vector<NodeId> out;
    for (auto id : node_ids())
        if (slots_[id]->is_placeholder()) out.push_back(id);
    return out;
}

void Graph::check_edge(EdgeRef e) const
{
    if (!contains(e.node))
        throw GraphError("dangling edge: node " + std::to_string(e.node) + " does not exist");
    if (e.index >= num_outputs(e.node))
        throw GraphError("dangling edge: node " + std::to_string(e.node) + " has no output " +
                         std::to_string(e.index));
}

void Graph::validate() const
{
    for (auto id : node_ids()) {
        const Node& n = *slots_[id];
        if (n.is_placeholder()) {
            if (!n.inputs.empty()) throw GraphError("placeholder " + std::to_string(id) + " has inputs");
            continue;
        }
        const OpDef* def = registry().find(n.op);
        if (!def) throw GraphError("node " + std::to_string(id) + ": unknown op '" + n.op + "'");
        if (n.inputs.size() < def->min_arity || n.inputs.size() > def->max_arity)
            throw GraphError("node " + std::to_string(id) + ": arity mismatch for '" + n.op + "'");
        for (auto e : n.inputs) check_edge(e);
        const bool is_mirror = n.kind == NodeKind::mirror || n.kind == NodeKind::dead_mirror;
        if (is_mirror != n.mirror_of.has_value())
            throw GraphError("node " + std::to_string(id) + ": mirror-of inconsistent with kind");
    }
    for (auto e : outputs_) check_edge(e);
    for (const auto& t : grad_targets_) {
        check_edge(t.grad);
        if (!contains(t.placeholder) || !node(t.placeholder).is_placeholder())
            throw GraphError("gradient target is not a placeholder");
    }
    (void)topo_order(*this);
}

bool Graph::operator==(const Graph& other) const
{
    if (live_ != other.live_ || outputs_ != other.outputs_ || grad_targets_ != other.grad_targets_)
        return false;
    const auto bound = std::max(slots_.size(), other.slots_.size());
    for (std::size_t i = 0; i < bound; ++i) {
        const bool a = i < slots_.size() && slots_[i].has_value();
        const bool b = i < other.slots_.size() && other.slots_[i].has_value();
        if (a != b) return false;
        if (a && !(*slots_[i] == *other.slots_[i])) return false;
    }
    return true;
}

std::vector<NodeId> topo_order(const Graph& g)
{
    const auto bound = g.id_bound();
    std::vector<std::size_t> pending(bound, 0);
    std::vector<std::vector<NodeId>> consumers(bound);
    for (auto id : g.node_ids()) {
        std::vector<NodeId> producers;
        for (auto e : g.node(id).inputs) producers.push_back(e.node);
        std::sort(producers.begin(), producers.end());
        producers.erase(std::unique(producers.begin(), producers.end()), producers.end());
        pending[id] = producers.size();
        for (auto p : producers) consumers[p].push_back(id);
    }
    std::priority_queue<NodeId, std::vector<NodeId>, std::greater<>> ready;
    for (auto id : g.node_ids())
        if (pending[id] == 0) ready.push(id);
    std::vector<NodeId> order;
    order.reserve(g.size());
    while (!ready.empty()) {
        auto id = ready.top();
        ready.pop();
        order.push_back(id);
        for (auto c : consumers[id])
            if (--pending[c] == 0) ready.push(c);
    }
    if (order.size() != g.size()) throw GraphError("cycle detected in graph");
    return order;
}

std::vector<std::vector<NodeId>> consumer_lists(const Graph& g)
{
    std::vector<std::vector<NodeId>> out(g.id_bound());
    for (auto id : g.node_ids())
        for (auto e : g.node(id).inputs) {
            auto& v = out[e.node];
            if (v.empty() || v.back() != id) v.push_back(id);
        }
    for (auto& v : out) {
        std::sort(v.begin(), v.end());
        v.erase(std::unique(v.begin(), v.end()), v.end());
    }
    return out;
}

// ---------------------------------------------------------------------------
// JSON document

namespace {

constexpr std::string_view kind_key = "__kind";
constexpr std::string_view mirror_key = "__mirror_of";

json edge_json(EdgeRef e) { return json::array({e.node, e.index}); }

EdgeRef edge_from(const json& j)
{
    if (!j.is_array() || j.size() != 2) throw GraphError("edge must be a [node, output] pair");
    return {j.at(0).get<NodeId>(), j.at(1).get<std::uint32_t>()};
}

json attr_json(const AttrValue& v)
{
    return std::visit([](const auto& x) { return json(x); }, v);
}

AttrValue attr_from(const json& j)
{
    if (j.is_number_integer()) return j.get<std::int64_t>();
    if (j.is_number_float()) return j.get<double>();
    if (j.is_string()) return j.get<std::string>();
    if (j.is_array()) return j.get<IntList>();
    throw GraphError("unsupported attribute value");
}

}  // namespace

std::string serialize(const Graph& g)
{
    json doc;
    doc["version"] = 1;
    json phs = json::array();
    json nodes = json::array();
    for (auto id : topo_order(g)) {
        const Node& n = g.node(id);
        if (n.is_placeholder()) {
            const auto& p = *n.placeholder;
            phs.push_back({{"id", id},
                           {"name", p.name},
                           {"shape", p.type.shape.dims()},
                           {"dtype", to_string(p.type.dtype)},
                           {"trainable", p.trainable},
                           {"tag", n.tag}});
            continue;
        }
        json inputs = json::array();
        for (auto e : n.inputs) inputs.push_back(edge_json(e));
        json attrs = json::object();
        for (const auto& [k, v] : n.attrs) attrs[k] = attr_json(v);
        if (n.kind != NodeKind::forward) attrs[std::string(kind_key)] = to_string(n.kind);
        if (n.mirror_of) attrs[std::string(mirror_key)] = *n.mirror_of;
        nodes.push_back({{"id", id}, {"op", n.op}, {"inputs", inputs}, {"attrs", attrs}, {"tag", n.tag}});
    }
    doc["placeholders"] = phs;
    doc["nodes"] = nodes;
    json outs = json::array();
    for (auto e : g.outputs()) outs.push_back(edge_json(e));
    doc["outputs"] = outs;
    if (!g.grad_targets().empty()) {
        json grads = json::array();
        for (const auto& t : g.grad_targets())
            grads.push_back(json::array({t.placeholder, t.grad.node, t.grad.index}));
        doc["gradients"] = grads;
    }
    return doc.dump(1);
}

Graph deserialize(std::string_view text)
{
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::exception& e) {
        throw GraphError(std::string("malformed graph document: ") + e.what());
    }
    if (!doc.is_object()) throw GraphError("graph document must be an object");
    for (auto key : {"version", "placeholders", "nodes", "outputs"})
        if (!doc.contains(key)) throw GraphError(std::string("graph document missing '") + key + "'");
    if (doc["version"] != 1) throw GraphError("unsupported graph document version");

    Graph g;
    try {
        for (const auto& p : doc["placeholders"]) {
            Node n;
            n.id = p.at("id").get<NodeId>();
            n.op = "placeholder";
            n.tag = p.value("tag", "");
            n.placeholder = PlaceholderInfo{
                p.at("name").get<std::string>(),
                TensorType{Shape(p.at("shape").get<std::vector<std::int64_t>>()),
                           dtype_from_string(p.value("dtype", "f32"))},
                p.value("trainable", false)};
            g.insert_node(std::move(n));
        }
        for (const auto& j : doc["nodes"]) {
            Node n;
            n.id = j.at("id").get<NodeId>();
            n.op = j.at("op").get<std::string>();
            if (!registry().contains(n.op) || n.op == "placeholder")
                throw GraphError("unknown op '" + n.op + "' at node " + std::to_string(n.id));
            for (const auto& e : j.at("inputs")) n.inputs.push_back(edge_from(e));
            n.tag = j.value("tag", "");
            if (j.contains("attrs"))
                for (const auto& [k, v] : j["attrs"].items()) {
                    if (k == kind_key) n.kind = node_kind_from_string(v.get<std::string>());
                    else if (k == mirror_key) n.mirror_of = v.get<NodeId>();
                    else n.attrs[k] = attr_from(v);
                }
            g.insert_node(std::move(n));
        }
        std::vector<EdgeRef> outs;
        for (const auto& e : doc["outputs"]) outs.push_back(edge_from(e));
        g.set_outputs(std::move(outs));
        if (doc.contains("gradients")) {
            std::vector<GradTarget> targets;
            for (const auto& t : doc["gradients"])
                targets.push_back({t.at(0).get<NodeId>(), {t.at(1).get<NodeId>(), t.at(2).get<std::uint32_t>()}});
            g.set_grad_targets(std::move(targets));
        }
    } catch (const json::exception& e) {
        throw GraphError(std::string("malformed graph document: ") + e.what());
    }
    g.validate();
    return g;
}

}  // namespace echo
